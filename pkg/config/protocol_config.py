"""
协议配置
各算法的模型（SWMR/MWMR）以及通信轮次、消息复杂度上限
消息上限写作 (a, b)，表示 a·|S|² + b·|S|
"""

SWMR = "swmr"
MWMR = "mwmr"

ALGORITHM_TABLE = {
    "erato": {
        "model": SWMR,
        "read_exchanges": {2, 3},
        "write_exchanges": {2},
        "read_messages": (1, 3),
        "write_messages": (0, 2),
    },
    "erato_mw": {
        "model": MWMR,
        "read_exchanges": {2, 3},
        "write_exchanges": {4},
        "read_messages": (1, 3),
        "write_messages": (0, 4),
    },
    "abd": {
        "model": SWMR,
        "read_exchanges": {4},
        "write_exchanges": {2},
        "read_messages": (0, 4),
        "write_messages": (0, 2),
    },
    "abd_mw": {
        "model": MWMR,
        "read_exchanges": {4},
        "write_exchanges": {4},
        "read_messages": (0, 4),
        "write_messages": (0, 4),
    },
    "ohsam": {
        "model": SWMR,
        "read_exchanges": {3},
        "write_exchanges": {2},
        "read_messages": (1, 2),
        "write_messages": (0, 2),
    },
    "ohmam": {
        "model": MWMR,
        "read_exchanges": {3},
        "write_exchanges": {4},
        "read_messages": (1, 2),
        "write_messages": (0, 4),
    },
}

# 对外开放的算法名（配置文件可选），erato_mutant 仅供检查器自检使用
PUBLIC_ALGORITHMS = tuple(ALGORITHM_TABLE.keys())

QUORUM_KINDS = ("matrix", "majority")
SCHEMES = ("fixed", "stochastic")
