"""
原子寄存器协议模拟器 - 验收批处理
依次执行：原子性与活性 -> 检查器对照 -> 检查器自检 -> 轮次与消息上限 -> 快速读 -> 拓扑排序 -> 确定性
"""
import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

# 添加父目录到路径
sys.path.append(str(Path(__file__).parent.parent))

from config.settings import EXIT_LIVENESS_CAP  # noqa: E402
from modules.checker import (  # noqa: E402
    brute_force_linearizable, check_atomicity_tagged, property_violations,
)
from modules.core_types import OpKind, make_value, reader, server, writer  # noqa: E402
from modules.harness import ScenarioConfig, rows_frame, run_scenario  # noqa: E402
from modules.netsim import InvokeOperation, build_topology, run, topology_spec  # noqa: E402
from modules.protocols import get_protocol  # noqa: E402
from modules.quorum import build_quorum_system  # noqa: E402
from modules.trace_log import dumps_trace  # noqa: E402

ALGORITHMS = ["erato", "erato_mw", "abd", "abd_mw", "ohsam", "ohmam"]
QUORUMS = [("majority", 3), ("majority", 4), ("majority", 5), ("matrix", 9)]
JITTERS = [0.0, 0.001, 0.005]


def random_config(algorithm, rng, seed, faults=True):
    """小规模、高并发的随机场景"""
    kind, n = QUORUMS[rng.integers(len(QUORUMS))]
    multi = get_protocol(algorithm).multi_writer
    crashes = []
    if faults and rng.random() < 0.5:
        crashes.append((server(int(rng.integers(n))), float(rng.uniform(0, 0.2))))
    if faults and rng.random() < 0.3:
        crashes.append((reader(1), float(rng.uniform(0, 0.2))))
    return ScenarioConfig(
        algorithm=algorithm,
        seed=seed,
        topology="star",
        n_servers=n,
        quorum=kind,
        n_readers=3,
        n_writers=2 if multi else 1,
        scheme="stochastic",
        read_interval=0.05,
        write_interval=0.08,
        ops_per_client=3,
        jitter_max=JITTERS[rng.integers(len(JITTERS))],
        crashes=tuple(sorted(crashes)),
    )


def step_atomicity(runs):
    """准则 1/4/5/7/8：原子性、轮次与消息上限、活性、运行性质"""
    failures = []
    relay_read_seen = False
    for algorithm in ALGORITHMS:
        rng = np.random.default_rng(ALGORITHMS.index(algorithm))
        for seed in range(runs):
            config = random_config(algorithm, rng, seed)
            result = run_scenario(config)
            tag = f"{algorithm} seed={seed}"
            if not result.verdict.ok:
                failures.append(f"{tag}: 原子性 {result.verdict.detail}")
            if result.exit_code == EXIT_LIVENESS_CAP:
                failures.append(f"{tag}: 达到时间上限")
            failures.extend(f"{tag}: {v}" for v in result.bound_violations)
            failures.extend(f"{tag}: {v}" for v in property_violations(result.trace))
            if algorithm == "erato" and not config.crashes:
                n = config.n_servers
                if any(r.op_kind == "read" and r.messages >= n * n + n for r in result.rows):
                    relay_read_seen = True
        print(f"  {algorithm}: {runs} 次运行完成")
    if not relay_read_seen:
        failures.append("erato: 没有任何读操作达到 |S|²+|S| 条消息")
    return failures


def step_oracle(runs):
    """准则 2：小规模历史上标签检查与穷举检查一致；错误读协议的历史也要参与对照"""
    disagreements = []
    rng = np.random.default_rng(2024)
    mutant_failures = 0
    for seed in range(runs):
        algorithm = ["erato", "erato_mw", "abd_mw", "ohsam", "erato_mutant"][seed % 5]
        multi = get_protocol(algorithm).multi_writer
        if algorithm == "erato_mutant":
            config = ScenarioConfig(
                algorithm=algorithm, seed=seed, topology="series", n_servers=9, quorum="matrix",
                n_readers=8, n_writers=1, scheme="stochastic", read_interval=0.05, write_interval=0.01,
                ops_per_client=1, jitter_max=0.002,
            )
        else:
            config = replace(
                random_config(algorithm, rng, seed, faults=False),
                n_readers=2, n_writers=2 if multi else 1, ops_per_client=2,
            )
        history = run_scenario(config).history
        tagged = check_atomicity_tagged(history).ok
        if tagged != brute_force_linearizable(history):
            disagreements.append(f"{algorithm} seed={seed}: tagged={tagged}")
        if algorithm == "erato_mutant" and not tagged:
            mutant_failures += 1
    if runs >= 5 and mutant_failures == 0:
        disagreements.append("erato_mutant: 没有任何违反原子性的历史参与对照")
    return disagreements


def step_mutant(runs):
    """准则 3：故意出错的读协议必须被检查器发现"""
    for seed in range(runs):
        config = ScenarioConfig(
            algorithm="erato_mutant", seed=seed, topology="series", n_servers=9, quorum="matrix",
            n_readers=8, n_writers=1, scheme="stochastic", read_interval=0.03, write_interval=0.03,
            ops_per_client=6, jitter_max=0.002,
        )
        if not run_scenario(config).verdict.ok:
            return seed
    return None


def step_fast_reads(runs):
    """准则 6：单读者、无并发写时读操作全部 2 轮完成"""
    slow = []
    for algorithm in ("erato", "erato_mw"):
        for seed in range(runs):
            kind, n = QUORUMS[seed % len(QUORUMS)]
            qs = build_quorum_system(kind, n)
            network = build_topology(topology_spec("star", n), n, 1, 1)
            w = writer(1)
            workload = [InvokeOperation(0.5, w, OpKind.WRITE, 1, make_value(w, 1, 64))]
            workload += [InvokeOperation(2.0 + i, reader(1), OpKind.READ, 2 + i) for i in range(5)]
            trace = run(network, get_protocol(algorithm), qs, workload, seed=seed, jitter_max=0.001)
            slow += [
                f"{algorithm} seed={seed} op={op.op_id}"
                for op in trace.operations if op.kind is OpKind.READ and op.exchanges_used != 2
            ]
    return slow


def step_topology(seeds, ops):
    """准则 9：Star 拓扑下 ERATO ≤ OhSam ≤ ABD（读时延均值）"""
    means = {}
    for algorithm in ("erato", "ohsam", "abd"):
        latencies = []
        for seed in range(seeds):
            config = ScenarioConfig(
                algorithm=algorithm, seed=seed, topology="star", n_servers=9, quorum="matrix",
                n_readers=20, n_writers=1, scheme="stochastic", ops_per_client=ops,
            )
            result = run_scenario(config)
            latencies += [r.latency_s for r in result.rows if r.op_kind == "read"]
        means[algorithm] = float(np.mean(latencies))
        print(f"  {algorithm}: 平均读时延 {means[algorithm] * 1000:.3f} ms")
    ok = means["erato"] <= means["ohsam"] <= means["abd"] and means["erato"] <= 0.9 * means["abd"]
    return ok, means


def step_determinism(runs):
    """准则 10：同种子两次运行 trace 与 CSV 逐字节一致"""
    rng = np.random.default_rng(10)
    mismatches = []
    for seed in range(runs):
        algorithm = ALGORITHMS[seed % len(ALGORITHMS)]
        config = random_config(algorithm, rng, seed)
        first, second = run_scenario(config), run_scenario(config)
        if dumps_trace(first.trace) != dumps_trace(second.trace):
            mismatches.append(f"{algorithm} seed={seed}: trace 不一致")
        if rows_frame(first.rows).to_csv(index=False) != rows_frame(second.rows).to_csv(index=False):
            mismatches.append(f"{algorithm} seed={seed}: CSV 不一致")
    return mismatches


def _report(title, problems):
    if problems:
        print(f"\n✗ {title}: {len(problems)} 处问题")
        for line in problems[:20]:
            print(f"  - {line}")
        return False
    print(f"\n✓ {title}")
    return True


def main():
    parser = argparse.ArgumentParser(description="验收批处理")
    parser.add_argument("--runs", type=int, default=2000, help="每个算法的随机运行次数")
    parser.add_argument("--oracle-runs", type=int, default=10000)
    parser.add_argument("--mutant-runs", type=int, default=1000)
    parser.add_argument("--seeds", type=int, default=10, help="拓扑对比的种子数")
    parser.add_argument("--ops", type=int, default=10, help="拓扑对比中每个客户端的操作数")
    args = parser.parse_args()

    print("=" * 70)
    print(" " * 15 + "原子寄存器协议模拟器 - 验收批处理")
    print("=" * 70)
    passed = []

    print("\n【步骤 1/6】 原子性、活性、复杂度上限与运行性质...")
    print("-" * 70)
    passed.append(_report("原子性与复杂度", step_atomicity(args.runs)))

    print("\n【步骤 2/6】 标签检查与穷举检查对照...")
    print("-" * 70)
    passed.append(_report("检查器对照", step_oracle(args.oracle_runs)))

    print("\n【步骤 3/6】 检查器自检（错误变体）...")
    print("-" * 70)
    caught = step_mutant(args.mutant_runs)
    passed.append(_report("检查器自检", [] if caught is not None else ["错误变体未被发现"]))
    if caught is not None:
        print(f"  第一次发现于 seed={caught}")

    print("\n【步骤 4/6】 快速读...")
    print("-" * 70)
    passed.append(_report("快速读", step_fast_reads(max(1, args.runs // 100))))

    print("\n【步骤 5/6】 Star 拓扑读时延排序...")
    print("-" * 70)
    ok, _ = step_topology(args.seeds, args.ops)
    passed.append(_report("拓扑排序", [] if ok else ["读时延排序不满足 ERATO ≤ OhSam ≤ ABD"]))

    print("\n【步骤 6/6】 确定性...")
    print("-" * 70)
    passed.append(_report("确定性", step_determinism(max(1, args.runs // 100))))

    print("\n" + "=" * 70)
    print(f"通过 {sum(passed)}/{len(passed)} 项")
    print("=" * 70)
    return 0 if all(passed) else 1


if __name__ == "__main__":
    sys.exit(main())
