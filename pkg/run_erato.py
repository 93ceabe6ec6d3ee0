"""
原子寄存器协议模拟器 - 命令行入口
  run <config>      运行一个场景，写出 trace.tsv / results.csv / verdict.txt
  sweep <grid>      批量运行网格，每个单元一个 CSV，另加 summary.csv
  check <trace>     对 trace 日志做原子性检查
  report <csv...>   汇总逐操作 CSV
"""

import argparse
import logging
import sys
from pathlib import Path

from config.settings import (
    EXIT_ATOMICITY_VIOLATION, EXIT_CONFIG_ERROR, EXIT_FAILURE, EXIT_LIVENESS_CAP, EXIT_OK,
    LOG_FORMAT, LOG_LEVEL, OUT_DIR,
)
from modules.checker import brute_force_linearizable, check_atomicity_tagged, extract_history, format_verdict
from modules.errors import (
    ConfigError, EratoError, HistoryTooLargeError, InvalidConfigError, SweepError,
)
from modules.harness import (
    CELL_KEYS, apply_overrides, load_config, load_grid, report, run_scenario, sweep, write_run_outputs,
)
from modules.trace_log import load_trace

logger = logging.getLogger(__name__)


def configure_logging(level=LOG_LEVEL):
    logging.basicConfig(level=getattr(logging, str(level).upper(), logging.INFO), format=LOG_FORMAT)


def _banner(title):
    print("=" * 70)
    print(" " * 4 + title)
    print("=" * 70)


def cmd_run(args):
    config = apply_overrides(load_config(args.config), args.seed, args.jitter_max, args.cap_seconds)
    _banner(f"运行场景: {config.algorithm} / {config.topology} / |S|={config.n_servers} / seed={config.seed}")
    result = run_scenario(config)
    out_dir = write_run_outputs(result, Path(args.out_dir or OUT_DIR))

    print(f"操作数: {len(result.history)}（完成 {len(result.history.completed)}）")
    print(f"消息数: {len(result.trace.sends)}，过期消息: {result.trace.stale_messages}")
    print(f"原子性: {'✓ 通过' if result.verdict.ok else '✗ ' + result.verdict.detail}")
    if result.trace.incomplete:
        print("✗ 达到模拟时间上限，仍有操作未完成")
    for violation in result.bound_violations:
        print(f"  ! {violation}")
    print(f"\n输出目录: {out_dir}")
    return result.exit_code


def cmd_sweep(args):
    grid = load_grid(args.grid)
    for section, key, value in (
        ("scenario", "seed", args.seed),
        ("network", "jitter_max", args.jitter_max),
        ("network", "cap_seconds", args.cap_seconds),
    ):
        if value is not None:
            grid.base.setdefault(section, {})[key] = value

    _banner(f"批量实验: {args.grid}")
    try:
        paths = sweep(grid, Path(args.out_dir or OUT_DIR), parallelism=args.parallelism)
    except SweepError as e:
        print(f"\n✗ {len(e.report)} 个运行失败:")
        for line in e.report:
            print(f"  - {line}")
        if any("atomicity" in line for line in e.report):
            return EXIT_ATOMICITY_VIOLATION
        return EXIT_LIVENESS_CAP
    print(f"\n✓ 完成 {len(paths)} 个单元")
    return EXIT_OK


def cmd_check(args):
    trace = load_trace(args.trace)
    history = extract_history(trace)
    verdict = check_atomicity_tagged(history, strict=args.strict)
    sys.stdout.write(format_verdict(verdict, history))
    if args.brute_force:
        try:
            agrees = brute_force_linearizable(history) == verdict.ok
            print(f"brute_force\t{'agree' if agrees else 'disagree'}")
        except HistoryTooLargeError as e:
            print(f"brute_force\tskipped ({e})")
    if not verdict.ok:
        return EXIT_ATOMICITY_VIOLATION
    if trace.incomplete:
        return EXIT_LIVENESS_CAP
    return EXIT_OK


def cmd_report(args):
    by = args.by.split(",") if args.by else CELL_KEYS
    table = report(args.csv, by=by)
    print(table.to_string(index=False))
    if args.output:
        table.to_csv(args.output, index=False, float_format="%.9f", lineterminator="\n")
        print(f"\n已写出: {args.output}")
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="覆盖配置中的随机种子")
    common.add_argument("--out-dir", help=f"输出目录（默认 {OUT_DIR}）")
    common.add_argument("--jitter-max", type=float, help="最大抖动（秒）")
    common.add_argument("--cap-seconds", type=float, help="模拟时间上限（秒）")

    parser = argparse.ArgumentParser(prog="run_erato", description="原子寄存器协议模拟与检查")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="运行一个场景")
    p.add_argument("config")
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser("sweep", parents=[common], help="批量运行网格")
    p.add_argument("grid")
    p.add_argument("--parallelism", type=int, default=1)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("check", parents=[common], help="检查 trace 日志")
    p.add_argument("trace")
    p.add_argument("--strict", action="store_true", help="未完成的写以 +∞ 完成后参与检查")
    p.add_argument("--brute-force", action="store_true", help="小规模历史上同时运行穷举检查")
    p.set_defaults(handler=cmd_check)

    p = sub.add_parser("report", parents=[common], help="汇总 CSV")
    p.add_argument("csv", nargs="+")
    p.add_argument("--by", help="分组列，逗号分隔")
    p.add_argument("--output", help="汇总表写出路径")
    p.set_defaults(handler=cmd_report)
    return parser


def main(argv=None):
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as e:
        print("✗ 配置错误:")
        for problem in e.problems:
            print(f"  - {problem}")
        return EXIT_CONFIG_ERROR
    except InvalidConfigError as e:
        print(f"✗ 配置错误: {e}")
        return EXIT_CONFIG_ERROR
    except (EratoError, OSError) as e:
        logger.error("[命令行] %s", e)
        print(f"✗ 运行失败: {e}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
