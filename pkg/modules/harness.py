"""
实验编排
场景配置（TOML）解析与校验、工作负载生成、单次运行、批量 sweep 与 CSV 输出
"""

import itertools
import logging
import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from config.protocol_config import ALGORITHM_TABLE, PUBLIC_ALGORITHMS, QUORUM_KINDS, SCHEMES, SWMR
from config.settings import (
    CAP_SECONDS, COMPUTE_COLUMN, EXIT_ATOMICITY_VIOLATION, EXIT_LIVENESS_CAP, EXIT_OK,
    JITTER_MAX, MIN_VALUE_SIZE, OPS_PER_CLIENT, READ_INTERVAL, RESULT_COLUMNS,
    SEEDS_PER_CELL, VALUE_SIZE, WRITE_INTERVAL,
)
from config.topology_config import TOPOLOGY_KINDS
from modules.checker import check_atomicity_tagged, extract_history, format_verdict
from modules.core_types import OpKind, ProcessId, ProcessKind, make_value, reader, writer
from modules.errors import ConfigError, EratoError, InvalidParameterError, SweepError
from modules.metrics import check_complexity_bounds, collect_op_stats, summarize_frame
from modules.netsim import InvokeOperation, build_topology, run, topology_spec
from modules.protocols import PROTOCOLS, get_protocol
from modules.quorum import build_quorum_system, has_live_quorum
from modules.trace_log import dump_trace

logger = logging.getLogger(__name__)

# 工作负载随机流与网络抖动随机流分开
WORKLOAD_STREAM = 1

CELL_KEYS = ["algorithm", "topology", "n_servers", "n_readers", "n_writers", "scheme"]


@dataclass(frozen=True)
class ScenarioConfig:
    algorithm: str = "erato"
    seed: int = 0
    record_compute: bool = False
    topology: str = "star"
    n_servers: int = 9
    routers: Optional[int] = None
    quorum: str = "matrix"
    n_readers: int = 10
    n_writers: int = 1
    scheme: str = "fixed"
    read_interval: float = READ_INTERVAL
    write_interval: float = WRITE_INTERVAL
    ops_per_client: int = OPS_PER_CLIENT
    value_size: int = VALUE_SIZE
    jitter_max: float = JITTER_MAX
    cap_seconds: float = CAP_SECONDS
    crashes: tuple = ()

    @property
    def crash_schedule(self):
        return dict(self.crashes)


# 配置文件结构：section → {key: (字段名, 类型)}
_SCHEMA = {
    "scenario": {
        "algorithm": ("algorithm", str),
        "seed": ("seed", int),
        "record_compute": ("record_compute", bool),
    },
    "topology": {
        "kind": ("topology", str),
        "n_servers": ("n_servers", int),
        "routers": ("routers", int),
        "quorum": ("quorum", str),
    },
    "clients": {
        "readers": ("n_readers", int),
        "writers": ("n_writers", int),
    },
    "workload": {
        "scheme": ("scheme", str),
        "read_interval": ("read_interval", float),
        "write_interval": ("write_interval", float),
        "ops_per_client": ("ops_per_client", int),
        "value_size": ("value_size", int),
    },
    "network": {
        "jitter_max": ("jitter_max", float),
        "cap_seconds": ("cap_seconds", float),
    },
    "faults": {
        "crashes": ("crashes", list),
    },
}

_FIELD_PATH = {name: f"{section}.{key}" for section, keys in _SCHEMA.items() for key, (name, _) in keys.items()}


def _type_ok(value, kind):
    if kind is bool:
        return isinstance(value, bool)
    if kind is int:
        return isinstance(value, int) and not isinstance(value, bool)
    if kind is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    return isinstance(value, kind)


def parse_crash(text):
    """'s3@0.5' → (server(3), 0.5)"""
    node, sep, at = str(text).partition("@")
    if not sep:
        raise InvalidParameterError(f"崩溃项应写作 节点@时间，收到 {text!r}")
    try:
        return ProcessId.parse(node), float(at)
    except ValueError as e:
        raise InvalidParameterError(f"无法解析崩溃项 {text!r}: {e}") from e


def _collect_fields(doc, problems):
    values = {}
    for section, body in doc.items():
        if section not in _SCHEMA:
            problems.append(f"{section}: 未知的配置段")
            continue
        if not isinstance(body, dict):
            problems.append(f"{section}: 应为配置段")
            continue
        for key, value in body.items():
            if key not in _SCHEMA[section]:
                problems.append(f"{section}.{key}: 未知的配置项")
                continue
            name, kind = _SCHEMA[section][key]
            if not _type_ok(value, kind):
                problems.append(f"{section}.{key}: 类型应为 {kind.__name__}，收到 {value!r}")
                continue
            values[name] = float(value) if kind is float else value
    return values


def config_from_mapping(doc, allow_internal=False):
    """由已解析的 TOML 文档构造并校验 ScenarioConfig"""
    problems = []
    values = _collect_fields(doc, problems)
    crashes = []
    for item in values.pop("crashes", []):
        try:
            crashes.append(parse_crash(item))
        except InvalidParameterError as e:
            problems.append(f"faults.crashes: {e}")
    config = ScenarioConfig(**values, crashes=tuple(sorted(crashes)))
    problems.extend(config_problems(config, allow_internal=allow_internal))
    if problems:
        raise ConfigError(problems)
    return config


def parse_config(text, allow_internal=False):
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError([f"toml: {e}"]) from e
    return config_from_mapping(doc, allow_internal=allow_internal)


def load_config(path, allow_internal=False):
    with open(Path(path), "r", encoding="utf-8") as f:
        return parse_config(f.read(), allow_internal=allow_internal)


def config_problems(config, allow_internal=False):
    """返回全部约束违反，格式为 section.key: 描述"""
    problems = []

    def flag(name, message):
        problems.append(f"{_FIELD_PATH[name]}: {message}")

    names = PROTOCOLS if allow_internal else PUBLIC_ALGORITHMS
    if config.algorithm not in names:
        flag("algorithm", f"未知算法 {config.algorithm!r}，可选 {sorted(names)}")
    if config.topology not in TOPOLOGY_KINDS:
        flag("topology", f"未知拓扑 {config.topology!r}")
    if config.quorum not in QUORUM_KINDS:
        flag("quorum", f"未知 quorum 类型 {config.quorum!r}")
    if config.scheme not in SCHEMES:
        flag("scheme", f"未知调度方式 {config.scheme!r}")

    if config.n_servers < 1:
        flag("n_servers", "至少需要 1 台服务器")
    elif config.quorum == "matrix" and math.isqrt(config.n_servers) ** 2 != config.n_servers:
        flag("n_servers", f"square required: 矩阵 quorum 的服务器数 {config.n_servers} 不是完全平方数")
    if config.routers is not None:
        if config.routers < 1:
            flag("routers", "至少需要 1 个路由器")
        elif config.topology == "series" and config.routers != config.n_servers:
            flag("routers", "Series 拓扑要求路由器数等于服务器数")
    if config.n_readers < 0:
        flag("n_readers", "不能为负")
    if config.n_writers < 0:
        flag("n_writers", "不能为负")
    if config.algorithm in PROTOCOLS and PROTOCOLS[config.algorithm].model == SWMR and config.n_writers != 1:
        flag("n_writers", f"SWMR requires one writer，收到 {config.n_writers}")

    if config.read_interval <= 0:
        flag("read_interval", "必须为正")
    if config.write_interval <= 0:
        flag("write_interval", "必须为正")
    if config.ops_per_client < 0:
        flag("ops_per_client", "不能为负")
    if config.value_size < MIN_VALUE_SIZE:
        flag("value_size", f"至少 {MIN_VALUE_SIZE} 字节")
    if config.jitter_max < 0:
        flag("jitter_max", "不能为负")
    if config.cap_seconds <= 0:
        flag("cap_seconds", "必须为正")

    problems.extend(_crash_problems(config))
    return problems


def _crash_problems(config):
    problems = []
    crashed_servers = set()
    for node, at in config.crashes:
        limit = {
            ProcessKind.SERVER: (0, config.n_servers),
            ProcessKind.READER: (1, config.n_readers + 1),
            ProcessKind.WRITER: (1, config.n_writers + 1),
        }[node.kind]
        if not limit[0] <= node.index < limit[1]:
            problems.append(f"faults.crashes: 节点 {node} 不存在")
        if at < 0:
            problems.append(f"faults.crashes: {node} 的崩溃时间为负")
        if node.kind is ProcessKind.SERVER:
            crashed_servers.add(node.index)
    if crashed_servers and not problems and config.quorum in QUORUM_KINDS and config.n_servers >= 1:
        try:
            qs = build_quorum_system(config.quorum, config.n_servers)
        except EratoError:
            return problems
        if not has_live_quorum(qs, frozenset(crashed_servers)):
            problems.append(f"faults.crashes: 崩溃服务器 {sorted(crashed_servers)} 之外没有完整存活的 quorum")
    return problems


def apply_overrides(config, seed=None, jitter_max=None, cap_seconds=None):
    """命令行参数覆盖配置文件中的值"""
    changes = {
        name: value
        for name, value in (("seed", seed), ("jitter_max", jitter_max), ("cap_seconds", cap_seconds))
        if value is not None
    }
    if not changes:
        return config
    updated = replace(config, **changes)
    problems = config_problems(updated, allow_internal=True)
    if problems:
        raise ConfigError(problems)
    return updated


# ---------------------------------------------------------------------------
# 工作负载
# ---------------------------------------------------------------------------

def _offsets(scheme, interval, count, rng):
    if scheme == "fixed":
        return [i * interval for i in range(1, count + 1)]
    ticks = max(1, int(round(interval * 1000)))
    return [(i - 1) * interval + int(rng.integers(1, ticks + 1)) / 1000 for i in range(1, count + 1)]


def build_workload(config, rng):
    """
    生成所有客户端的调用事件
    先写者后读者依次抽取随机数；操作编号按同一顺序从 1 开始分配

    Returns:
        按 (时间, 操作编号) 排序的 InvokeOperation 列表
    """
    workload = []
    op_id = itertools.count(1)
    for i in range(1, config.n_writers + 1):
        pid = writer(i)
        times = _offsets(config.scheme, config.write_interval, config.ops_per_client, rng)
        for seq, at in enumerate(times, start=1):
            workload.append(InvokeOperation(at, pid, OpKind.WRITE, next(op_id), make_value(pid, seq, config.value_size)))
    for i in range(1, config.n_readers + 1):
        pid = reader(i)
        times = _offsets(config.scheme, config.read_interval, config.ops_per_client, rng)
        for at in times:
            workload.append(InvokeOperation(at, pid, OpKind.READ, next(op_id)))
    workload.sort(key=lambda inv: (inv.time, inv.op_id))
    return workload


# ---------------------------------------------------------------------------
# 单次运行
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResultRow:
    algorithm: str
    topology: str
    n_servers: int
    n_readers: int
    n_writers: int
    scheme: str
    seed: int
    op_id: int
    process: str
    op_kind: str
    invoked_at: float
    latency_s: float
    exchanges: int
    messages: int
    compute_s: float = 0.0

    def as_dict(self, include_compute=False):
        row = asdict(self)
        if not include_compute:
            row.pop(COMPUTE_COLUMN)
        return row


assert [f.name for f in fields(ResultRow)][:len(RESULT_COLUMNS)] == RESULT_COLUMNS


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    trace: object
    history: object
    verdict: object
    rows: list
    bound_violations: list

    @property
    def exit_code(self):
        if not self.verdict.ok:
            return EXIT_ATOMICITY_VIOLATION
        if self.trace.incomplete:
            return EXIT_LIVENESS_CAP
        return EXIT_OK


def run_scenario(config):
    """拓扑 + quorum + 协议 → 模拟 → 原子性检查 → 统计"""
    qs = build_quorum_system(config.quorum, config.n_servers)
    spec = topology_spec(config.topology, config.n_servers, config.routers)
    network = build_topology(spec, config.n_servers, config.n_readers, config.n_writers)
    protocol = get_protocol(config.algorithm)
    workload = build_workload(config, np.random.default_rng([config.seed, WORKLOAD_STREAM]))

    trace = run(
        network, protocol, qs, workload, config.crash_schedule, config.seed,
        jitter_max=config.jitter_max, cap_seconds=config.cap_seconds,
    )
    trace.meta.update(topology=config.topology, quorum=config.quorum)
    history = extract_history(trace)
    verdict = check_atomicity_tagged(history)
    stats = collect_op_stats(trace, config.algorithm)

    violations = []
    if config.algorithm in ALGORITHM_TABLE:
        violations = check_complexity_bounds(config.algorithm, config.n_servers, stats, bool(config.crashes))

    rows = [
        ResultRow(
            algorithm=config.algorithm, topology=config.topology, n_servers=config.n_servers,
            n_readers=config.n_readers, n_writers=config.n_writers, scheme=config.scheme,
            seed=config.seed, op_id=s.op_id, process=s.process, op_kind=s.op_kind,
            invoked_at=s.invoked_at, latency_s=s.latency, exchanges=s.exchanges,
            messages=s.messages_sent_total, compute_s=s.compute_s,
        )
        for s in stats
    ]
    result = ScenarioResult(config, trace, history, verdict, rows, violations)
    if not verdict.ok:
        logger.warning("[实验运行] %s seed=%s 原子性检查失败: %s", config.algorithm, config.seed, verdict.detail)
    return result


def rows_frame(rows, include_compute=False):
    columns = RESULT_COLUMNS + ([COMPUTE_COLUMN] if include_compute else [])
    return pd.DataFrame([r.as_dict(include_compute) for r in rows], columns=columns)


def write_rows_csv(rows, path, include_compute=False):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows_frame(rows, include_compute).to_csv(path, index=False, float_format="%.9f", lineterminator="\n")
    return path


def write_run_outputs(result, out_dir):
    """写出 trace.tsv / results.csv / verdict.txt"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dump_trace(result.trace, out_dir / "trace.tsv")
    write_rows_csv(result.rows, out_dir / "results.csv", result.config.record_compute)
    with open(out_dir / "verdict.txt", "w", encoding="utf-8", newline="\n") as f:
        f.write(format_verdict(result.verdict, result.history))
    return out_dir


# ---------------------------------------------------------------------------
# 批量实验
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    base: dict
    axes: dict
    seeds: int = SEEDS_PER_CELL


def load_grid(path):
    with open(Path(path), "r", encoding="utf-8") as f:
        return parse_grid(f.read())


def parse_grid(text):
    """
    网格文件：普通场景配置段作为基线，[grid] 中同结构的列表逐项展开，[sweep] seeds 为每个单元的种子数
    """
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError([f"toml: {e}"]) from e
    grid = doc.pop("grid", {})
    sweep_section = doc.pop("sweep", {})
    problems = []
    axes = {}
    for section, body in grid.items():
        if not isinstance(body, dict):
            problems.append(f"grid.{section}: 应写作 {section}.key = [...]")
            continue
        for key, values in body.items():
            if not isinstance(values, list):
                problems.append(f"grid.{section}.{key}: 应为列表")
                continue
            axes[(section, key)] = values
    seeds = sweep_section.get("seeds", SEEDS_PER_CELL)
    if not _type_ok(seeds, int) or seeds < 1:
        problems.append(f"sweep.seeds: 应为正整数，收到 {seeds!r}")
    if problems:
        raise ConfigError(problems)
    return GridSpec(base=doc, axes=axes, seeds=seeds)


def expand_grid(grid):
    """按轴的笛卡尔积展开；没有轴或任何一条轴为空时返回空列表"""
    if not grid.axes:
        return []
    keys = list(grid.axes)
    configs = []
    for combo in itertools.product(*(grid.axes[k] for k in keys)):
        doc = {section: dict(body) for section, body in grid.base.items()}
        for (section, key), value in zip(keys, combo):
            doc.setdefault(section, {})[key] = value
        configs.append(config_from_mapping(doc))
    return configs


def cell_name(index, config):
    return (
        f"cell{index:03d}_{config.algorithm}_{config.topology}_s{config.n_servers}"
        f"_r{config.n_readers}_w{config.n_writers}_{config.scheme}"
    )


def _run_cell(index, config, seeds, out_dir):
    """在独立进程中运行一个单元的所有种子，写出该单元自己的 CSV"""
    rows = []
    failures = []
    name = cell_name(index, config)
    for k in range(seeds):
        result = run_scenario(replace(config, seed=config.seed + k))
        rows.extend(result.rows)
        if result.exit_code != EXIT_OK:
            reason = "atomicity violation" if result.exit_code == EXIT_ATOMICITY_VIOLATION else "liveness cap"
            failures.append(f"{name} seed={config.seed + k}: {reason}")
    path = write_rows_csv(rows, Path(out_dir) / f"{name}.csv", config.record_compute)
    return index, str(path), failures


def sweep(grid, out_dir, parallelism=1):
    """
    运行网格中的所有单元

    Returns:
        每个单元的 CSV 路径列表，另写出 summary.csv

    Raises:
        SweepError: 任一单元出现原子性违反或超时
    """
    configs = expand_grid(grid)
    if not configs:
        logger.info("[批量实验] 网格为空，无需运行")
        return []
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    logger.info("[批量实验] 共 %d 个单元，每个单元 %d 个种子，并行度 %d", len(configs), grid.seeds, parallelism)

    jobs = [(i, c, grid.seeds, str(out_dir)) for i, c in enumerate(configs)]
    if parallelism > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(_run_cell, *zip(*jobs)))
    else:
        results = [_run_cell(*job) for job in jobs]
    results.sort()

    paths = [Path(path) for _, path, _ in results]
    frames = [pd.read_csv(p) for p in paths]
    merged = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=RESULT_COLUMNS)
    summary = summarize_frame(merged, by=CELL_KEYS)
    summary.to_csv(out_dir / "summary.csv", index=False, float_format="%.9f", lineterminator="\n")

    failed = [failure for _, _, failures in results for failure in failures]
    if failed:
        raise SweepError(failed)
    return paths


def report(csv_paths, by=CELL_KEYS):
    """汇总一个或多个逐操作 CSV"""
    frames = [pd.read_csv(p) for p in csv_paths]
    if not frames:
        return summarize_frame(pd.DataFrame(columns=RESULT_COLUMNS), by=by)
    return summarize_frame(pd.concat(frames, ignore_index=True), by=by)
