"""
原子寄存器协议模拟器 - 读时延示例图
读取 sweep 输出的逐操作 CSV，画出 平均读时延 vs 读者数（每个算法一条线，按拓扑分面）
"""
import argparse
import sys
from pathlib import Path

import pandas as pd
import plotly.express as px

# 添加父目录到路径
sys.path.append(str(Path(__file__).parent.parent))

from modules.metrics import summarize_frame  # noqa: E402


def main():
    parser = argparse.ArgumentParser(description="读时延 vs 读者数")
    parser.add_argument("csv", nargs="+", help="sweep 生成的单元 CSV")
    parser.add_argument("--output", default="latency.html", help="输出 HTML 文件")
    args = parser.parse_args()

    try:
        df = pd.concat([pd.read_csv(p) for p in args.csv], ignore_index=True)
    except (OSError, ValueError) as e:
        print(f"✗ 读取 CSV 失败: {e}")
        return 1

    table = summarize_frame(df, by=("algorithm", "topology", "n_servers", "n_readers"))
    reads = table[table["op_kind"] == "read"].copy()
    if reads.empty:
        print("✗ 数据中没有读操作")
        return 1
    reads["mean_ms"] = reads["mean"] * 1000

    fig = px.line(
        reads, x="n_readers", y="mean_ms", color="algorithm", facet_col="topology",
        line_dash="n_servers", markers=True, title="平均读时延",
        labels={"n_readers": "读者数", "mean_ms": "时延 (ms)"},
    )
    fig.update_layout(paper_bgcolor="rgba(0,0,0,0)", plot_bgcolor="rgba(0,0,0,0)")
    fig.write_html(args.output)
    print(f"✓ 已写出 {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
