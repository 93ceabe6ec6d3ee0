"""
领域基础类型
进程标识、标签、值、消息与操作记录，全部为不可变值类型
"""

from dataclasses import dataclass, replace
from enum import Enum, IntEnum
from typing import Optional

from config.settings import HEADER_OCTETS
from modules.errors import InvalidMessageError, InvalidParameterError


class ProcessKind(IntEnum):
    READER = 0
    WRITER = 1
    SERVER = 2


_KIND_PREFIX = {ProcessKind.READER: "r", ProcessKind.WRITER: "w", ProcessKind.SERVER: "s"}
_PREFIX_KIND = {v: k for k, v in _KIND_PREFIX.items()}


@dataclass(frozen=True, order=True)
class ProcessId:
    """进程标识，按 (kind, index) 全序"""
    kind: ProcessKind
    index: int

    def __str__(self):
        return f"{_KIND_PREFIX[self.kind]}{self.index}"

    @classmethod
    def parse(cls, text):
        """从 r3 / w1 / s0 形式解析"""
        text = text.strip()
        if len(text) < 2 or text[0] not in _PREFIX_KIND or not text[1:].isdigit():
            raise InvalidParameterError(f"无法解析进程标识: {text!r}")
        return cls(_PREFIX_KIND[text[0]], int(text[1:]))


def reader(index):
    return ProcessId(ProcessKind.READER, index)


def writer(index):
    return ProcessId(ProcessKind.WRITER, index)


def server(index):
    return ProcessId(ProcessKind.SERVER, index)


# 初始标签中的 ⊥ 写者；真实写者从 1 开始编号
BOTTOM_WRITER = writer(0)


@dataclass(frozen=True, order=True)
class Tag:
    """逻辑版本号 (ts, wid)，按字典序比较"""
    ts: int
    wid: ProcessId

    def __str__(self):
        return f"{self.ts}:{self.wid}"

    @classmethod
    def parse(cls, text):
        ts, _, wid = text.partition(":")
        if not wid or not ts.isdigit():
            raise InvalidParameterError(f"无法解析标签: {text!r}")
        return cls(int(ts), ProcessId.parse(wid))


INITIAL_TAG = Tag(0, BOTTOM_WRITER)


class Ordering(Enum):
    LESS = -1
    EQUAL = 0
    GREATER = 1


def compare_tags(a, b):
    """字典序比较两个标签"""
    key_a = (a.ts, a.wid)
    key_b = (b.ts, b.wid)
    if key_a < key_b:
        return Ordering.LESS
    if key_a > key_b:
        return Ordering.GREATER
    return Ordering.EQUAL


@dataclass(frozen=True)
class Value:
    payload: bytes = b""

    def __str__(self):
        return self.payload.hex() if self.payload else "-"


EMPTY_VALUE = Value()


def make_value(writer_id, seq, size):
    """
    生成第 seq 次写入的确定性负载

    Args:
        writer_id: 写者标识
        seq: 该写者的写入序号（从 1 开始）
        size: 负载字节数，同一次运行内固定

    Returns:
        Value，不同 (writer_id, seq) 的负载互不相同
    """
    stem = f"{writer_id}#{seq}".encode()
    if size < len(stem):
        raise InvalidParameterError(f"值大小 {size} 不足以编码 {stem!r}")
    return Value(stem.ljust(size, b"."))


class MessageKind(Enum):
    READ_REQUEST = "readRequest"
    READ_RELAY = "readRelay"
    READ_ACK = "readAck"
    WRITE_REQUEST = "writeRequest"
    WRITE_ACK = "writeAck"
    WRITE_DISCOVER = "writeDiscover"
    DISCOVER_ACK = "discoverAck"


_READ_KINDS = {MessageKind.READ_REQUEST, MessageKind.READ_RELAY, MessageKind.READ_ACK}

# 每种消息携带的字段
_FIELDS = {
    MessageKind.READ_REQUEST: {"reader", "read_op"},
    MessageKind.READ_RELAY: {"tag", "value", "reader", "read_op"},
    MessageKind.READ_ACK: {"tag", "value", "reader", "read_op"},
    MessageKind.WRITE_REQUEST: {"tag", "value", "writer", "write_op"},
    MessageKind.WRITE_ACK: {"tag", "writer", "write_op"},
    MessageKind.WRITE_DISCOVER: {"writer", "write_op"},
    MessageKind.DISCOVER_ACK: {"tag", "writer", "write_op"},
}
_OPTIONAL = ("tag", "value", "reader", "read_op", "writer", "write_op")


@dataclass(frozen=True)
class Message:
    kind: MessageKind
    sender: ProcessId
    tag: Optional[Tag] = None
    value: Optional[Value] = None
    reader: Optional[ProcessId] = None
    read_op: Optional[int] = None
    writer: Optional[ProcessId] = None
    write_op: Optional[int] = None

    def __post_init__(self):
        required = _FIELDS[self.kind]
        for name in _OPTIONAL:
            present = getattr(self, name) is not None
            if present and name not in required:
                raise InvalidMessageError(f"{self.kind.value} 不应携带字段 {name}")
            if not present and name in required:
                raise InvalidMessageError(f"{self.kind.value} 缺少字段 {name}")

    @property
    def is_read_message(self):
        return self.kind in _READ_KINDS

    @property
    def client(self):
        """消息所属操作的发起客户端"""
        return self.reader if self.is_read_message else self.writer

    @property
    def op_counter(self):
        return self.read_op if self.is_read_message else self.write_op

    def size_bits(self):
        payload = len(self.value.payload) if self.value is not None else 0
        return (HEADER_OCTETS + payload) * 8


class OpKind(Enum):
    READ = "read"
    WRITE = "write"


@dataclass(frozen=True)
class OperationRecord:
    """一次读/写操作的调用与响应记录（模拟时间，秒）"""
    op_id: int
    process: ProcessId
    kind: OpKind
    invoked_at: float
    responded_at: Optional[float] = None
    tag: Optional[Tag] = None
    value: Optional[Value] = None
    exchanges_used: int = 0
    messages_sent: int = 0

    def __post_init__(self):
        if self.responded_at is not None and self.responded_at < self.invoked_at:
            raise InvalidParameterError(f"操作 {self.op_id} 的响应早于调用")

    @property
    def complete(self):
        return self.responded_at is not None

    @property
    def latency(self):
        if self.responded_at is None:
            return None
        return self.responded_at - self.invoked_at

    @property
    def written_tag(self):
        return self.tag if self.kind is OpKind.WRITE else None

    @property
    def returned_tag(self):
        return self.tag if self.kind is OpKind.READ and self.complete else None

    def responded(self, time, tag, value, exchanges):
        return replace(self, responded_at=time, tag=tag, value=value, exchanges_used=exchanges)
