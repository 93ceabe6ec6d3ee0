"""
原子性检查
基于标签的 A1-A3 快速判定（O(n log n)），以及小规模历史上的穷举线性化检查
"""

import logging
from bisect import bisect_left
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Optional

from config.settings import BRUTE_FORCE_MAX_OPS
from modules.core_types import EMPTY_VALUE, INITIAL_TAG, OpKind
from modules.errors import HistoryTooLargeError, InvalidHistoryError

logger = logging.getLogger(__name__)

INFINITY = float("inf")


class Property(Enum):
    A1 = "A1"  # 实时顺序不可被 ≺ 倒置
    A2 = "A2"  # 写标签唯一
    A3 = "A3"  # 读返回前序最新写的值


@dataclass(frozen=True)
class History:
    operations: tuple

    @property
    def completed(self):
        return [op for op in self.operations if op.complete]

    @property
    def incomplete(self):
        return [op for op in self.operations if not op.complete]

    def __len__(self):
        return len(self.operations)


@dataclass(frozen=True)
class Verdict:
    ok: bool
    violated: Optional[Property] = None
    witness: Optional[tuple] = None
    detail: str = ""

    def __post_init__(self):
        if self.ok != (self.witness is None):
            raise ValueError("Verdict 的 witness 必须且仅在失败时给出")


OK = Verdict(ok=True)


def extract_history(trace):
    return History(tuple(trace.operations))


def validate_history(history):
    """同一进程的操作区间不得重叠，未完成操作只能是该进程最后一个；已完成操作必须带标签"""
    by_process = {}
    for op in history.operations:
        by_process.setdefault(op.process, []).append(op)
        if op.complete and op.tag is None:
            raise InvalidHistoryError(f"操作 {op.op_id} 已完成但没有标签")
    for process, ops in by_process.items():
        ops.sort(key=lambda o: (o.invoked_at, o.op_id))
        for prev, nxt in zip(ops, ops[1:]):
            if not prev.complete or prev.responded_at > nxt.invoked_at:
                raise InvalidHistoryError(
                    f"{process} 的操作 {prev.op_id} 与 {nxt.op_id} 区间重叠"
                )


def _tagged_writes(history):
    return [op for op in history.operations if op.kind is OpKind.WRITE and op.tag is not None]


def _check_unique_tags(writes):
    seen = {}
    for w in writes:
        if w.tag == INITIAL_TAG:
            return Verdict(False, Property.A2, (w, w), f"写操作 {w.op_id} 使用了初始标签")
        if w.tag in seen:
            return Verdict(False, Property.A2, (seen[w.tag], w), f"写标签 {w.tag} 重复")
        seen[w.tag] = w
    return OK


def _check_read_legality(reads, writes):
    by_tag = {w.tag: w for w in writes}
    for r in reads:
        if r.tag == INITIAL_TAG:
            if r.value is not None and r.value != EMPTY_VALUE:
                return Verdict(False, Property.A3, (r, r), f"读 {r.op_id} 以初始标签返回了非初始值")
            continue
        w = by_tag.get(r.tag)
        if w is None:
            return Verdict(False, Property.A3, (r, r), f"读 {r.op_id} 返回的标签 {r.tag} 没有对应的写")
        if r.value is not None and w.value is not None and r.value != w.value:
            return Verdict(False, Property.A3, (w, r), f"读 {r.op_id} 的值与写 {w.op_id} 不一致")
    return OK


class _PrefixMax:
    """按响应时间排序后的前缀最大标签，用于查询“在 t 之前已完成的操作中标签最大者”"""

    def __init__(self, ops):
        ordered = sorted(ops, key=lambda o: (o.responded_at, o.op_id))
        self.times = [o.responded_at for o in ordered]
        self.best = []
        current = None
        for o in ordered:
            if current is None or current.tag < o.tag:
                current = o
            self.best.append(current)

    def before(self, time):
        k = bisect_left(self.times, time)
        return self.best[k - 1] if k else None


def _check_stale_reads(reads, completed_writes):
    prefix = _PrefixMax(completed_writes)
    for r in sorted(reads, key=lambda o: o.op_id):
        w = prefix.before(r.invoked_at)
        if w is not None and r.tag < w.tag:
            return Verdict(False, Property.A3, (w, r), f"读 {r.op_id} 在写 {w.op_id} 完成后返回了更旧的标签")
    return OK


def _check_real_time(ops, candidates):
    prefix = _PrefixMax([o for o in ops if o.responded_at != INFINITY])
    for b in sorted(candidates, key=lambda o: o.op_id):
        a = prefix.before(b.invoked_at)
        if a is None:
            continue
        if b.tag < a.tag or (b.kind is OpKind.WRITE and b.tag == a.tag):
            return Verdict(False, Property.A1, (a, b), f"操作 {a.op_id} 先于 {b.op_id} 完成，但标签顺序倒置")
    return OK


def check_atomicity_tagged(history, strict=False):
    """
    按标签构造偏序并检查 A2 → A3 → A1

    Args:
        history: History
        strict: 为 True 时未完成但已选定标签的写以 +∞ 为响应时间加入检查

    Returns:
        Verdict
    """
    validate_history(history)
    tagged = _tagged_writes(history)
    completed = history.completed
    reads = [op for op in completed if op.kind is OpKind.READ]
    completed_writes = [op for op in completed if op.kind is OpKind.WRITE]

    participants = list(completed)
    if strict:
        participants += [w for w in tagged if not w.complete]
        participants = [
            p if p.complete else p.responded(INFINITY, p.tag, p.value, p.exchanges_used)
            for p in participants
        ]

    for verdict in (
        _check_unique_tags(tagged),
        _check_read_legality(reads, tagged),
        _check_stale_reads(reads, completed_writes),
        _check_real_time(participants, participants),
    ):
        if not verdict.ok:
            logger.debug("[原子性检查] %s 违反: %s", verdict.violated.value, verdict.detail)
            return verdict
    return OK


def brute_force_linearizable(history):
    """
    穷举所有与实时顺序相容的全序，判断是否存在合法的顺序寄存器历史
    未完成的写可以选择生效（插入任意合法位置）或不生效

    Raises:
        HistoryTooLargeError: 操作数超过上限
    """
    validate_history(history)
    ops = history.completed + [
        op for op in history.incomplete if op.kind is OpKind.WRITE
    ]
    if len(ops) > BRUTE_FORCE_MAX_OPS:
        raise HistoryTooLargeError(f"穷举检查最多支持 {BRUTE_FORCE_MAX_OPS} 个操作，收到 {len(ops)}")

    n = len(ops)
    required = 0
    for i, op in enumerate(ops):
        if op.complete:
            required |= 1 << i
    # preds[i]: 实时上必须排在 i 之前的操作集合
    preds = []
    for b in ops:
        mask = 0
        for j, a in enumerate(ops):
            if a.complete and a.responded_at < b.invoked_at:
                mask |= 1 << j
        preds.append(mask)

    values = [op.value if op.value is not None else EMPTY_VALUE for op in ops]

    @lru_cache(maxsize=None)
    def linearize(placed, value):
        if placed & required == required:
            return True
        for i in range(n):
            bit = 1 << i
            if placed & bit or preds[i] & ~placed:
                continue
            if ops[i].kind is OpKind.WRITE:
                if linearize(placed | bit, values[i]):
                    return True
            elif values[i] == value and linearize(placed | bit, value):
                return True
        return False

    return linearize(0, EMPTY_VALUE)


def format_verdict(verdict, history=None):
    """生成结构化文本的检查报告"""
    lines = [f"verdict\t{'ok' if verdict.ok else 'violation'}"]
    if history is not None:
        lines.append(f"operations\t{len(history)}")
        lines.append(f"completed\t{len(history.completed)}")
        lines.append(f"incomplete\t{len(history.incomplete)}")
    if not verdict.ok:
        lines.append(f"property\t{verdict.violated.value}")
        for label, op in zip(("first", "second"), verdict.witness):
            lines.append(
                f"{label}\top={op.op_id}\t{op.process}\t{op.kind.value}\t"
                f"[{op.invoked_at!r}, {op.responded_at!r}]\ttag={op.tag}"
            )
        lines.append(f"detail\t{verdict.detail}")
    return "\n".join(lines) + "\n"


def property_violations(trace):
    """
    逐条检查执行中的运行性质：
      服务器标签单调不减；写→读 标签不减；写→写 标签严格增大；读→读 标签不减

    Returns:
        违规描述列表
    """
    problems = []
    last = {}
    for at, node, tag in trace.server_tags:
        if node in last and tag < last[node]:
            problems.append(f"t={at!r} {node} 的标签从 {last[node]} 回退到 {tag}")
        last[node] = tag

    completed = [op for op in trace.operations if op.complete]
    writes = _PrefixMax([op for op in completed if op.kind is OpKind.WRITE])
    reads = _PrefixMax([op for op in completed if op.kind is OpKind.READ])
    for b in completed:
        w = writes.before(b.invoked_at)
        if w is not None:
            if b.kind is OpKind.WRITE and not w.tag < b.tag:
                problems.append(f"写 {w.op_id} → 写 {b.op_id}: 标签 {w.tag} 未严格小于 {b.tag}")
            if b.kind is OpKind.READ and b.tag < w.tag:
                problems.append(f"写 {w.op_id} → 读 {b.op_id}: 读到更旧的标签 {b.tag}")
        r = reads.before(b.invoked_at)
        if r is not None and b.kind is OpKind.READ and b.tag < r.tag:
            problems.append(f"读 {r.op_id} → 读 {b.op_id}: 标签 {b.tag} 小于 {r.tag}")
    return problems
