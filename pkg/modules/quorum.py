"""
法定人数系统（Quorum System）
多数派与矩阵（行∪列）两种构造，以及读者/服务器协议用到的查询
服务器编号统一为 0..n-1
"""

import json
import math
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

from modules.errors import InvalidInputError, InvalidParameterError


@dataclass(frozen=True)
class QuorumSystem:
    """quorums 的列表顺序即全局确定的遍历顺序"""
    quorums: tuple
    universe: frozenset

    def __len__(self):
        return len(self.quorums)

    def __getitem__(self, index):
        return self.quorums[index]


def _make(quorums, universe=None):
    quorums = tuple(frozenset(q) for q in quorums)
    if universe is None:
        universe = frozenset().union(*quorums) if quorums else frozenset()
    return QuorumSystem(quorums=quorums, universe=frozenset(universe))


def build_majority(n):
    """所有大小为 ⌊n/2⌋+1 的子集，按成员编号字典序排列"""
    if n < 1:
        raise InvalidParameterError(f"多数派系统至少需要 1 台服务器，收到 {n}")
    size = n // 2 + 1
    return _make(combinations(range(n), size), universe=range(n))


def build_matrix(rows, cols):
    """
    矩阵法定人数：服务器按行优先排布，每个 (行 r, 列 c) 组合对应一个 quorum = 第 r 行 ∪ 第 c 列

    Args:
        rows: 行数
        cols: 列数

    Returns:
        QuorumSystem，共 rows·cols 个 quorum，每个大小 rows+cols-1
    """
    if rows < 1 or cols < 1:
        raise InvalidParameterError(f"矩阵维度必须为正，收到 {rows}x{cols}")
    quorums = []
    for r in range(rows):
        row = {r * cols + c for c in range(cols)}
        for c in range(cols):
            column = {i * cols + c for i in range(rows)}
            quorums.append(row | column)
    return _make(quorums, universe=range(rows * cols))


def build_square_matrix(n):
    side = math.isqrt(n)
    if side * side != n:
        raise InvalidParameterError(f"矩阵法定人数要求服务器数为完全平方数，收到 {n}")
    return build_matrix(side, side)


def from_lists(lists, universe=None):
    """由显式列表构造并校验"""
    qs = _make(lists, universe)
    if not validate(qs):
        raise InvalidParameterError("quorum 列表不满足两两相交或存在空集")
    return qs


def load_quorum_file(path):
    """读取 JSON 格式的 quorum 列表，如 [[0,1],[0,2],[1,2]]"""
    with open(Path(path), "r", encoding="utf-8") as f:
        lists = json.load(f)
    return from_lists(lists)


def validate(qs):
    """两两相交、无空 quorum、均为全集子集时返回 True"""
    if not qs.quorums:
        return False
    for q in qs.quorums:
        if not q or not q <= qs.universe:
            return False
    for a, b in combinations(qs.quorums, 2):
        if not a & b:
            return False
    return True


def first_contained_quorum(qs, responders):
    """按列表顺序返回第一个被 responders 完整包含的 quorum 下标，不存在时返回 None"""
    for index, q in enumerate(qs.quorums):
        if q <= responders:
            return index
    return None


def contains_quorum(qs, responders):
    return first_contained_quorum(qs, responders) is not None


def relay_destinations(qs, s):
    """包含 s 的所有 quorum 的并集（服务器转发集合 D）"""
    if s not in qs.universe:
        raise InvalidInputError(f"服务器 {s} 不在全集中")
    result = set()
    for q in qs.quorums:
        if s in q:
            result |= q
    return frozenset(result)


def has_live_quorum(qs, crashed):
    """crashed 为崩溃服务器编号集合；至少一个 quorum 全部存活时返回 True"""
    return any(not (q & crashed) for q in qs.quorums)


def build_quorum_system(kind, n_servers):
    if kind == "majority":
        return build_majority(n_servers)
    if kind == "matrix":
        return build_square_matrix(n_servers)
    raise InvalidParameterError(f"未知的 quorum 类型: {kind}")
