"""
统计与复杂度校验
逐操作的时延 / 轮次 / 消息数，按 (算法, 操作类型) 汇总，以及对照复杂度上限表检查
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from config.protocol_config import ALGORITHM_TABLE
from modules.errors import AccountingError, InvalidParameterError

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = ["count", "mean", "median", "p95", "max", "fast_ratio"]


@dataclass(frozen=True)
class OpStats:
    algorithm: str
    op_id: int
    process: str
    op_kind: str
    invoked_at: float
    latency: float
    exchanges: int
    messages_sent_total: int
    compute_s: float = 0.0

    def __post_init__(self):
        if self.latency < 0:
            raise InvalidParameterError(f"操作 {self.op_id} 的时延为负")


@dataclass
class Summary:
    table: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=["algorithm", "op_kind"] + SUMMARY_COLUMNS))
    exchange_histogram: dict = field(default_factory=dict)
    fast_read_ratio: dict = field(default_factory=dict)

    @property
    def empty(self):
        return self.table.empty


def attribute_messages(trace):
    """
    把每条发送归到发起它的操作上

    Returns:
        {op_id: 消息数}，没有发送任何消息的操作计为 0

    Raises:
        AccountingError: 某条发送没有操作编号或编号不存在
    """
    known = {op.op_id for op in trace.operations}
    counts = dict.fromkeys(known, 0)
    for send in trace.sends:
        if send.op_id is None or send.op_id not in known:
            raise AccountingError(
                f"t={send.time!r} {send.src}→{send.dst} 的 {send.message.kind.value} 无法归属到任何操作"
            )
        counts[send.op_id] += 1
    return counts


def collect_op_stats(trace, algorithm=None):
    """已完成操作的统计；algorithm 缺省时取 trace 元信息中的算法名"""
    algorithm = algorithm or trace.meta.get("algorithm", "")
    counts = attribute_messages(trace)
    stats = []
    for op in trace.operations:
        if not op.complete:
            continue
        stats.append(OpStats(
            algorithm=algorithm,
            op_id=op.op_id,
            process=str(op.process),
            op_kind=op.kind.value,
            invoked_at=op.invoked_at,
            latency=op.latency,
            exchanges=op.exchanges_used,
            messages_sent_total=counts.get(op.op_id, 0),
            compute_s=trace.compute_seconds.get(op.op_id, 0.0),
        ))
    return stats


def _fast_ratio(group):
    reads = group[group["op_kind"] == "read"]
    if reads.empty:
        return np.nan
    return float((reads["exchanges"] == 2).mean())


def summarize_frame(df, by=("algorithm",)):
    """
    对逐操作数据表按 by + op_kind 分组汇总时延

    Args:
        df: 至少包含 op_kind / latency_s / exchanges 列
        by: 额外的分组列，如 ("algorithm", "n_readers")

    Returns:
        DataFrame，列为 by + op_kind + count/mean/median/p95/max/fast_ratio
    """
    keys = list(by) + ["op_kind"]
    if df.empty:
        return pd.DataFrame(columns=keys + SUMMARY_COLUMNS)
    df = df.assign(fast=np.where(df["op_kind"] == "read", (df["exchanges"] == 2).astype(float), np.nan))
    grouped = df.groupby(keys, sort=True)
    table = grouped["latency_s"].agg(
        count="count",
        mean="mean",
        median="median",
        p95=lambda s: float(np.percentile(s, 95)),
        max="max",
    )
    table["fast_ratio"] = grouped["fast"].mean()
    return table.reset_index()


def stats_frame(stats):
    return pd.DataFrame([
        {
            "algorithm": s.algorithm,
            "op_kind": s.op_kind,
            "latency_s": s.latency,
            "exchanges": s.exchanges,
            "messages": s.messages_sent_total,
        }
        for s in stats
    ], columns=["algorithm", "op_kind", "latency_s", "exchanges", "messages"])


def summarize(stats):
    """每个 (算法, 操作类型) 的顺序统计量、轮次直方图与快速读比例"""
    if not stats:
        return Summary()
    df = stats_frame(stats)
    histogram = {}
    for (algorithm, kind), group in df.groupby(["algorithm", "op_kind"], sort=True):
        counts = group["exchanges"].value_counts().sort_index()
        histogram[(algorithm, kind)] = {int(k): int(v) for k, v in counts.items()}
    ratios = {}
    for algorithm, group in df.groupby("algorithm", sort=True):
        ratio = _fast_ratio(group)
        if not np.isnan(ratio):
            ratios[algorithm] = ratio
    return Summary(table=summarize_frame(df), exchange_histogram=histogram, fast_read_ratio=ratios)


def message_bound(algorithm, op_kind, n_servers):
    a, b = ALGORITHM_TABLE[algorithm][f"{op_kind}_messages"]
    return a * n_servers * n_servers + b * n_servers


def check_complexity_bounds(algorithm, n_servers, stats, crashes_present=False):
    """
    校验轮次集合与消息数上限；有崩溃时只校验轮次

    Returns:
        违规描述列表，空列表表示全部满足
    """
    if algorithm not in ALGORITHM_TABLE:
        raise InvalidParameterError(f"算法 {algorithm} 没有复杂度上限表")
    row = ALGORITHM_TABLE[algorithm]
    violations = []
    for s in stats:
        allowed = row[f"{s.op_kind}_exchanges"]
        if s.exchanges not in allowed:
            violations.append(f"{algorithm} {s.op_kind} op={s.op_id}: 轮次 {s.exchanges} 不在 {sorted(allowed)} 中")
        if crashes_present:
            continue
        bound = message_bound(algorithm, s.op_kind, n_servers)
        if s.messages_sent_total > bound:
            violations.append(f"{algorithm} {s.op_kind} op={s.op_id}: 消息数 {s.messages_sent_total} 超过上限 {bound}")
    if violations:
        logger.warning("[复杂度校验] %s 共 %d 处超出上限", algorithm, len(violations))
    return violations
