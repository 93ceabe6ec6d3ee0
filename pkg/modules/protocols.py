"""
协议状态机
ERATO（单写者）、ERATO-MW（多写者）以及对照算法 ABD / ABD-MW / OhSam / OhMam
每个 step 函数接收 (状态, 事件, quorum 系统)，原地更新状态并返回 StepOutput：
待发送消息、可选的操作响应、写者新选定的标签、丢弃的过期消息数
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import partial
from typing import Callable, Optional

from config.protocol_config import ALGORITHM_TABLE, MWMR, SWMR
from modules.core_types import (
    EMPTY_VALUE, INITIAL_TAG, Message, MessageKind, OpKind, ProcessKind, Tag,
    server,
)
from modules.errors import InvalidInputError, InvalidParameterError
from modules.quorum import contains_quorum, first_contained_quorum, relay_destinations
from modules.quorum_views import TagView, ViewClass, classify, unravel

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# 事件与输出
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Invoke:
    op_id: int
    kind: OpKind
    value: Optional[object] = None


@dataclass(frozen=True)
class Deliver:
    message: Message


@dataclass(frozen=True)
class OperationResult:
    tag: Tag
    value: object
    exchanges_used: int


@dataclass
class StepOutput:
    sends: list = field(default_factory=list)
    response: Optional[OperationResult] = None
    assigned_tag: Optional[Tag] = None
    dropped: int = 0


# ---------------------------------------------------------------------------
# 状态
# ---------------------------------------------------------------------------

class ReaderPhase(Enum):
    IDLE = "idle"
    COLLECT = "collect"          # 收集 readRelay / readAck
    AWAIT_ACKS = "await_acks"    # 已判定 VIEW3，只等 readAck
    QUERY = "query"              # ABD 第一轮
    WRITE_BACK = "write_back"    # ABD 第二轮


class WriterPhase(Enum):
    IDLE = "idle"
    DISCOVER = "discover"
    PUT = "put"


@dataclass
class ReaderState:
    """读者变量：rr / ra 以服务器编号为键，键集即 RRsrv / RAsrv"""
    pid: object
    read_op: int = 0
    rr: dict = field(default_factory=dict)
    ra: dict = field(default_factory=dict)
    max_ack: dict = field(default_factory=dict)
    max_tag: Tag = INITIAL_TAG
    min_tag: Tag = INITIAL_TAG
    phase: ReaderPhase = ReaderPhase.IDLE
    remaining: frozenset = frozenset()
    write_back_acks: dict = field(default_factory=dict)
    chosen: Optional[tuple] = None

    @property
    def pending(self):
        return self.phase is not ReaderPhase.IDLE

    @property
    def rr_srv(self):
        return frozenset(self.rr)

    @property
    def ra_srv(self):
        return frozenset(self.ra)


@dataclass
class WriterState:
    pid: object
    tag: Tag = INITIAL_TAG
    value: object = EMPTY_VALUE
    write_op: int = 0
    acks: dict = field(default_factory=dict)
    max_ts: int = 0
    phase: WriterPhase = WriterPhase.IDLE

    @property
    def acks_srv(self):
        return frozenset(self.acks)

    @property
    def pending(self):
        return self.phase is not WriterPhase.IDLE


@dataclass
class ServerState:
    pid: object
    destinations: frozenset
    tag: Tag = INITIAL_TAG
    value: object = EMPTY_VALUE
    operations: dict = field(default_factory=dict)
    write_ops: dict = field(default_factory=dict)
    relays: dict = field(default_factory=dict)
    acked: dict = field(default_factory=dict)


def new_reader_state(pid):
    return ReaderState(pid=pid)


def new_writer_state(pid):
    return WriterState(pid=pid)


def new_server_state(qs, index):
    return ServerState(pid=server(index), destinations=relay_destinations(qs, index))


# ---------------------------------------------------------------------------
# 公共工具
# ---------------------------------------------------------------------------

def _broadcast(qs, message):
    return [(server(i), message) for i in sorted(qs.universe)]


def _finish_read(state, tag, value, exchanges):
    state.phase = ReaderPhase.IDLE
    return StepOutput(response=OperationResult(tag, value, exchanges))


def _min_of(quorum, messages):
    """quorum 内标签最小的消息（同标签取编号最小的服务器）"""
    s = min(quorum, key=lambda i: (messages[i].tag, i))
    return messages[s]


def _max_of(quorum, messages):
    s = max(quorum, key=lambda i: (messages[i].tag, -i))
    return messages[s]


def _start_read(state, qs):
    if state.pending:
        raise InvalidInputError(f"{state.pid} 上一个读操作尚未完成")
    state.read_op += 1
    state.rr = {}
    state.ra = {}
    state.max_ack = {}
    state.remaining = frozenset()
    state.phase = ReaderPhase.COLLECT
    request = Message(MessageKind.READ_REQUEST, sender=state.pid, reader=state.pid, read_op=state.read_op)
    return StepOutput(sends=_broadcast(qs, request))


def _file_read_message(state, message):
    """按 read_op 过滤并归入 RR / RA；返回 False 表示丢弃"""
    if not state.pending or message.reader != state.pid or message.read_op != state.read_op:
        return False
    if message.kind is MessageKind.READ_RELAY:
        state.rr[message.sender.index] = message
    elif message.kind is MessageKind.READ_ACK:
        state.ra[message.sender.index] = message
    else:
        return False
    return True


def _relay_view(state, index, quorum):
    tags = {s: state.rr[s].tag for s in quorum}
    values = {s: state.rr[s].value for s in quorum}
    return TagView.of(index, tags, values)


# ---------------------------------------------------------------------------
# 读者：ERATO / ERATO-MW / OhSam 共用的 relay 读协议骨架
# ---------------------------------------------------------------------------

def _analyse_swmr(state, qs, index):
    quorum = qs[index]
    top = _max_of(quorum, state.rr)
    state.max_tag = top.tag
    state.max_ack = {s: state.rr[s] for s in quorum if state.rr[s].tag == top.tag}
    view = classify(qs, _relay_view(state, index, quorum))
    if view is ViewClass.VIEW1:
        return _finish_read(state, top.tag, top.value, 2)
    if view is ViewClass.VIEW2:
        # 单写者：maxTS 的写未完成，maxTS-1 的写已完成
        previous = [s for s in sorted(quorum) if state.rr[s].tag.ts == top.tag.ts - 1]
        if previous:
            state.max_ack = {s: state.rr[s] for s in previous}
            chosen = state.rr[previous[0]]
            return _finish_read(state, chosen.tag, chosen.value, 2)
        logger.debug("[读协议] %s 的 quorum 中没有 maxTS-1，转入等待 readAck", state.pid)
    state.phase = ReaderPhase.AWAIT_ACKS
    return None


def _analyse_mwmr(state, qs, index):
    quorum = qs[index]
    state.max_tag = _max_of(quorum, state.rr).tag
    for step in unravel(qs, _relay_view(state, index, quorum)):
        state.remaining = step.remaining
        if step.view is ViewClass.VIEW1:
            chosen = state.rr[min(step.holders)]
            return _finish_read(state, chosen.tag, chosen.value, 2)
    state.phase = ReaderPhase.AWAIT_ACKS
    return None


def _relay_reader_step(state, event, qs, analyse, pick_ack=_min_of):
    if isinstance(event, Invoke):
        return _start_read(state, qs)
    if not _file_read_message(state, event.message):
        return StepOutput(dropped=1)

    index = first_contained_quorum(qs, state.ra_srv)
    if index is not None:
        chosen = pick_ack(qs[index], state.ra)
        state.min_tag = chosen.tag
        return _finish_read(state, chosen.tag, chosen.value, 3)

    if analyse is None or state.phase is not ReaderPhase.COLLECT:
        return StepOutput()
    index = first_contained_quorum(qs, state.rr_srv)
    if index is None:
        return StepOutput()
    return analyse(state, qs, index) or StepOutput()


def erato_reader_step(state, event, qs):
    """ERATO 读者：RA quorum 优先（取最小标签，3 轮），否则按 RR quorum 的视图快速返回（2 轮）"""
    return _relay_reader_step(state, event, qs, _analyse_swmr)


def eratomw_reader_step(state, event, qs):
    return _relay_reader_step(state, event, qs, _analyse_mwmr)


def ohsam_reader_step(state, event, qs):
    """OhSam / OhMam 读者：总是等待 readAck quorum"""
    return _relay_reader_step(state, event, qs, None)


def mutant_reader_step(state, event, qs):
    """故意出错的变体：收到第一条 readRelay 就返回其中的标签，不等待任何 quorum"""
    if isinstance(event, Invoke):
        return _start_read(state, qs)
    message = event.message
    if not _file_read_message(state, message):
        return StepOutput(dropped=1)
    if message.kind is not MessageKind.READ_RELAY:
        return StepOutput()
    return _finish_read(state, message.tag, message.value, 2)


# ---------------------------------------------------------------------------
# 读者：ABD 两轮读（查询 + 回写）
# ---------------------------------------------------------------------------

def abd_reader_step(state, event, qs):
    if isinstance(event, Invoke):
        output = _start_read(state, qs)
        state.phase = ReaderPhase.QUERY
        state.write_back_acks = {}
        state.chosen = None
        return output

    message = event.message
    if not state.pending:
        return StepOutput(dropped=1)

    if state.phase is ReaderPhase.QUERY and message.kind is MessageKind.READ_ACK:
        if message.reader != state.pid or message.read_op != state.read_op:
            return StepOutput(dropped=1)
        state.ra[message.sender.index] = message
        index = first_contained_quorum(qs, state.ra_srv)
        if index is None:
            return StepOutput()
        top = _max_of(qs[index], state.ra)
        state.max_tag = top.tag
        state.chosen = (top.tag, top.value)
        state.phase = ReaderPhase.WRITE_BACK
        write_back = Message(
            MessageKind.WRITE_REQUEST, sender=state.pid, tag=top.tag, value=top.value,
            writer=state.pid, write_op=state.read_op,
        )
        return StepOutput(sends=_broadcast(qs, write_back))

    if state.phase is ReaderPhase.WRITE_BACK and message.kind is MessageKind.WRITE_ACK:
        if message.writer != state.pid or message.write_op != state.read_op:
            return StepOutput(dropped=1)
        state.write_back_acks[message.sender.index] = message
        if not contains_quorum(qs, frozenset(state.write_back_acks)):
            return StepOutput()
        tag, value = state.chosen
        return _finish_read(state, tag, value, 4)

    return StepOutput(dropped=1)


# ---------------------------------------------------------------------------
# 写者
# ---------------------------------------------------------------------------

def _finish_write(state, exchanges):
    state.phase = WriterPhase.IDLE
    return StepOutput(response=OperationResult(state.tag, state.value, exchanges))


def _check_idle(state):
    if state.pending:
        raise InvalidInputError(f"{state.pid} 上一个写操作尚未完成")


def erato_writer_step(state, event, qs):
    """单写者：ts+1 后一轮 writeRequest/writeAck（2 轮）"""
    if isinstance(event, Invoke):
        _check_idle(state)
        state.tag = Tag(state.tag.ts + 1, state.pid)
        state.value = event.value if event.value is not None else EMPTY_VALUE
        state.write_op += 1
        state.acks = {}
        state.phase = WriterPhase.PUT
        request = Message(
            MessageKind.WRITE_REQUEST, sender=state.pid, tag=state.tag, value=state.value,
            writer=state.pid, write_op=state.write_op,
        )
        return StepOutput(sends=_broadcast(qs, request), assigned_tag=state.tag)

    message = event.message
    if (state.phase is not WriterPhase.PUT or message.kind is not MessageKind.WRITE_ACK
            or message.writer != state.pid or message.tag.ts != state.tag.ts):
        return StepOutput(dropped=1)
    state.acks[message.sender.index] = message
    if contains_quorum(qs, state.acks_srv):
        return _finish_write(state, 2)
    return StepOutput()


def eratomw_writer_step(state, event, qs):
    """多写者：writeDiscover 查询最大 ts，再以 (maxTS+1, 自身编号) 写入（4 轮）"""
    if isinstance(event, Invoke):
        _check_idle(state)
        state.value = event.value if event.value is not None else EMPTY_VALUE
        state.write_op += 1
        state.acks = {}
        state.phase = WriterPhase.DISCOVER
        discover = Message(MessageKind.WRITE_DISCOVER, sender=state.pid, writer=state.pid, write_op=state.write_op)
        return StepOutput(sends=_broadcast(qs, discover))

    message = event.message
    if message.writer != state.pid or message.write_op != state.write_op:
        return StepOutput(dropped=1)

    if state.phase is WriterPhase.DISCOVER and message.kind is MessageKind.DISCOVER_ACK:
        state.acks[message.sender.index] = message
        index = first_contained_quorum(qs, state.acks_srv)
        if index is None:
            return StepOutput()
        state.max_ts = max(state.acks[s].tag.ts for s in qs[index])
        state.tag = Tag(state.max_ts + 1, state.pid)
        state.write_op += 1
        state.acks = {}
        state.phase = WriterPhase.PUT
        request = Message(
            MessageKind.WRITE_REQUEST, sender=state.pid, tag=state.tag, value=state.value,
            writer=state.pid, write_op=state.write_op,
        )
        return StepOutput(sends=_broadcast(qs, request), assigned_tag=state.tag)

    if state.phase is WriterPhase.PUT and message.kind is MessageKind.WRITE_ACK:
        state.acks[message.sender.index] = message
        if contains_quorum(qs, state.acks_srv):
            return _finish_write(state, 4)
        return StepOutput()

    return StepOutput(dropped=1)


# ---------------------------------------------------------------------------
# 服务器
# ---------------------------------------------------------------------------

def _adopt(state, tag, value):
    if state.tag < tag:
        state.tag = tag
        state.value = value


def _on_read_relay(state, message, qs):
    _adopt(state, message.tag, message.value)
    r = message.reader
    if state.operations.get(r, 0) < message.read_op:
        state.operations[r] = message.read_op
        state.relays[r] = set()
    current = state.operations[r]
    if current == message.read_op:
        state.relays[r].add(message.sender.index)
    # 每个 (reader, read_op) 至多发送一次 readAck
    if state.acked.get(r, 0) < current and contains_quorum(qs, state.relays[r]):
        state.acked[r] = current
        ack = Message(
            MessageKind.READ_ACK, sender=state.pid, tag=state.tag, value=state.value,
            reader=r, read_op=current,
        )
        return StepOutput(sends=[(r, ack)])
    return StepOutput()


def _on_write_request(state, message, guard_write_ops):
    if guard_write_ops:
        if state.write_ops.get(message.writer, 0) < message.write_op:
            state.write_ops[message.writer] = message.write_op
            _adopt(state, message.tag, message.value)
    else:
        _adopt(state, message.tag, message.value)
    ack = Message(
        MessageKind.WRITE_ACK, sender=state.pid, tag=state.tag,
        writer=message.writer, write_op=message.write_op,
    )
    return StepOutput(sends=[(message.writer, ack)])


def _on_write_discover(state, message):
    ack = Message(
        MessageKind.DISCOVER_ACK, sender=state.pid, tag=state.tag,
        writer=message.writer, write_op=message.write_op,
    )
    return StepOutput(sends=[(message.writer, ack)])


def _relay_server_step(state, event, qs, relay_to_reader, guard_write_ops):
    message = event.message
    kind = message.kind
    if kind is MessageKind.READ_REQUEST:
        relay = Message(
            MessageKind.READ_RELAY, sender=state.pid, tag=state.tag, value=state.value,
            reader=message.reader, read_op=message.read_op,
        )
        sends = [(server(i), relay) for i in sorted(state.destinations)]
        if relay_to_reader:
            sends.append((message.reader, relay))
        return StepOutput(sends=sends)
    if kind is MessageKind.READ_RELAY:
        return _on_read_relay(state, message, qs)
    if kind is MessageKind.WRITE_REQUEST:
        return _on_write_request(state, message, guard_write_ops)
    if kind is MessageKind.WRITE_DISCOVER:
        return _on_write_discover(state, message)
    return StepOutput(dropped=1)


def erato_server_step(state, event, qs):
    """ERATO 服务器：readRequest 时向 D ∪ {r} 转发，收集 relay 达到 quorum 后回 readAck"""
    return _relay_server_step(state, event, qs, relay_to_reader=True, guard_write_ops=False)


def eratomw_server_step(state, event, qs):
    return _relay_server_step(state, event, qs, relay_to_reader=True, guard_write_ops=True)


def abd_server_step(state, event, qs):
    message = event.message
    kind = message.kind
    if kind is MessageKind.READ_REQUEST:
        ack = Message(
            MessageKind.READ_ACK, sender=state.pid, tag=state.tag, value=state.value,
            reader=message.reader, read_op=message.read_op,
        )
        return StepOutput(sends=[(message.reader, ack)])
    if kind is MessageKind.WRITE_REQUEST:
        return _on_write_request(state, message, guard_write_ops=True)
    if kind is MessageKind.WRITE_DISCOVER:
        return _on_write_discover(state, message)
    return StepOutput(dropped=1)


# ---------------------------------------------------------------------------
# 对照算法入口
# ---------------------------------------------------------------------------

def _writer_for(variant):
    return erato_writer_step if variant == SWMR else eratomw_writer_step


def baseline_abd_step(role, state, event, qs, variant):
    """ABD（SWMR）/ ABD-MW（MWMR）：读为查询+回写共 4 轮"""
    if role is ProcessKind.READER:
        return abd_reader_step(state, event, qs)
    if role is ProcessKind.WRITER:
        return _writer_for(variant)(state, event, qs)
    return abd_server_step(state, event, qs)


def baseline_ohsam_step(role, state, event, qs, variant):
    """OhSam（SWMR）/ OhMam（MWMR）：服务器间转发，读固定 3 轮；写与对应的 ABD 相同"""
    if role is ProcessKind.READER:
        return ohsam_reader_step(state, event, qs)
    if role is ProcessKind.WRITER:
        return _writer_for(variant)(state, event, qs)
    return _relay_server_step(state, event, qs, relay_to_reader=False, guard_write_ops=variant == MWMR)


# ---------------------------------------------------------------------------
# 注册表
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Protocol:
    name: str
    model: str
    reader_step: Callable
    writer_step: Callable
    server_step: Callable

    @property
    def multi_writer(self):
        return self.model == MWMR

    def new_state(self, pid, qs):
        if pid.kind is ProcessKind.READER:
            return new_reader_state(pid)
        if pid.kind is ProcessKind.WRITER:
            return new_writer_state(pid)
        return new_server_state(qs, pid.index)

    def step(self, pid, state, event, qs):
        if pid.kind is ProcessKind.READER:
            return self.reader_step(state, event, qs)
        if pid.kind is ProcessKind.WRITER:
            return self.writer_step(state, event, qs)
        return self.server_step(state, event, qs)


def _baseline(name, step, variant):
    return Protocol(
        name=name,
        model=variant,
        reader_step=partial(step, ProcessKind.READER, variant=variant),
        writer_step=partial(step, ProcessKind.WRITER, variant=variant),
        server_step=partial(step, ProcessKind.SERVER, variant=variant),
    )


PROTOCOLS = {
    "erato": Protocol("erato", SWMR, erato_reader_step, erato_writer_step, erato_server_step),
    "erato_mw": Protocol("erato_mw", MWMR, eratomw_reader_step, eratomw_writer_step, eratomw_server_step),
    "abd": _baseline("abd", baseline_abd_step, SWMR),
    "abd_mw": _baseline("abd_mw", baseline_abd_step, MWMR),
    "ohsam": _baseline("ohsam", baseline_ohsam_step, SWMR),
    "ohmam": _baseline("ohmam", baseline_ohsam_step, MWMR),
    "erato_mutant": Protocol("erato_mutant", SWMR, mutant_reader_step, erato_writer_step, erato_server_step),
}

assert set(ALGORITHM_TABLE) <= set(PROTOCOLS)


def get_protocol(name):
    try:
        return PROTOCOLS[name]
    except KeyError:
        raise InvalidParameterError(f"未知算法: {name}") from None
