"""
Quorum View 分析
根据一个 quorum 内最大标签的分布判断最新写操作的状态：
  VIEW1：全部为同一标签，写已完成
  VIEW2：任何交集都没有被最大标签持有者覆盖，写未完成
  VIEW3：某个交集被完全覆盖，无法判断
以及多写者场景下的迭代分析
"""

from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType

from modules.core_types import EMPTY_VALUE
from modules.errors import InvalidInputError


class ViewClass(Enum):
    VIEW1 = 1
    VIEW2 = 2
    VIEW3 = 3


@dataclass(frozen=True)
class TagView:
    """某个 quorum 中每台服务器报告的标签（以及可选的值）"""
    quorum_index: int
    tag_by_server: MappingProxyType
    value_by_server: MappingProxyType = field(default_factory=lambda: MappingProxyType({}))

    @classmethod
    def of(cls, quorum_index, tags, values=None):
        return cls(quorum_index, MappingProxyType(dict(tags)), MappingProxyType(dict(values or {})))


@dataclass(frozen=True)
class ReturnTag:
    tag: object
    value: object


@dataclass(frozen=True)
class AwaitAcks:
    pass


def _checked_quorum(qs, view):
    if not 0 <= view.quorum_index < len(qs.quorums):
        raise InvalidInputError(f"quorum 下标越界: {view.quorum_index}")
    quorum = qs.quorums[view.quorum_index]
    if set(view.tag_by_server) != quorum:
        missing = sorted(quorum - set(view.tag_by_server))
        extra = sorted(set(view.tag_by_server) - quorum)
        raise InvalidInputError(f"视图与 quorum 成员不一致: 缺少 {missing}, 多余 {extra}")
    return quorum


def _max_holders(members, tags):
    max_tag = max(tags[s] for s in members)
    return max_tag, {s for s in members if tags[s] == max_tag}


def _covers_intersection(qs, quorum, members, holders):
    # 列表顺序短路，顺序不影响布尔结果
    for other in qs.quorums:
        if other != quorum and (other & members) <= holders:
            return True
    return False


def classify(qs, view):
    quorum = _checked_quorum(qs, view)
    tags = view.tag_by_server
    _, holders = _max_holders(quorum, tags)
    if quorum <= holders:
        return ViewClass.VIEW1
    if _covers_intersection(qs, quorum, quorum, holders):
        return ViewClass.VIEW3
    return ViewClass.VIEW2


@dataclass(frozen=True)
class UnravelStep:
    remaining: frozenset
    max_tag: object
    holders: frozenset
    view: ViewClass


def unravel(qs, view):
    """逐轮产出迭代分析的中间结果；VIEW2 时剔除最大标签持有者，交集始终与剩余成员求交"""
    quorum = _checked_quorum(qs, view)
    tags = view.tag_by_server
    remaining = frozenset(quorum)
    while remaining:
        max_tag, holders = _max_holders(remaining, tags)
        if remaining <= holders:
            yield UnravelStep(remaining, max_tag, frozenset(holders), ViewClass.VIEW1)
            return
        if _covers_intersection(qs, quorum, remaining, holders):
            yield UnravelStep(remaining, max_tag, frozenset(holders), ViewClass.VIEW3)
            return
        yield UnravelStep(remaining, max_tag, frozenset(holders), ViewClass.VIEW2)
        remaining = remaining - holders


def iterative_analyze(qs, view):
    """
    多写者迭代分析：VIEW2 时剔除最大标签持有者后在剩余服务器上重复判断

    Returns:
        ReturnTag(tag, value)：某轮检测到 VIEW1
        AwaitAcks()：某轮检测到 VIEW3，需等待 readAck
    """
    for step in unravel(qs, view):
        if step.view is ViewClass.VIEW1:
            holder = min(step.holders)
            return ReturnTag(step.max_tag, view.value_by_server.get(holder, EMPTY_VALUE))
        if step.view is ViewClass.VIEW3:
            return AwaitAcks()
    return AwaitAcks()
