"""
Trace 日志读写
每行一个事件，字段以制表符分隔，首字段为行类型：
  M 元信息   E 节点事件   S 发送   O 操作记录   C 崩溃时间   T 服务器标签变化
浮点数以 repr 写出，读回后逐位相同；墙钟计算时间不写入，保证同种子输出逐字节一致
"""

from pathlib import Path

from modules.core_types import (
    Message, MessageKind, OperationRecord, OpKind, ProcessId, Tag, Value,
)
from modules.errors import InvalidInputError
from modules.netsim import SendRecord, Trace, TraceEntry

HEADER = "#erato-trace\t1"
NONE = "~"

_INT_META = {"seed", "n_servers"}
_COUNTERS = ("stale_messages", "lost_messages", "skipped_invocations")


def _opt(value, encode=str):
    return NONE if value is None else encode(value)


def _parse_opt(text, decode):
    return None if text == NONE else decode(text)


def _encode_value(value):
    return value.payload.hex()


def _decode_value(text):
    return Value(bytes.fromhex(text))


def encode_message(message):
    """消息编码为 8 个制表符分隔字段"""
    return "\t".join([
        message.kind.value,
        str(message.sender),
        _opt(message.tag),
        _opt(message.value, _encode_value),
        _opt(message.reader),
        _opt(message.read_op),
        _opt(message.writer),
        _opt(message.write_op),
    ])


def decode_message(fields):
    if isinstance(fields, str):
        fields = fields.split("\t")
    if len(fields) != 8:
        raise InvalidInputError(f"消息字段数应为 8，收到 {len(fields)}")
    kind, sender, tag, value, rdr, read_op, wtr, write_op = fields
    return Message(
        kind=MessageKind(kind),
        sender=ProcessId.parse(sender),
        tag=_parse_opt(tag, Tag.parse),
        value=_parse_opt(value, _decode_value),
        reader=_parse_opt(rdr, ProcessId.parse),
        read_op=_parse_opt(read_op, int),
        writer=_parse_opt(wtr, ProcessId.parse),
        write_op=_parse_opt(write_op, int),
    )


def dumps_trace(trace):
    lines = [HEADER]
    for key in sorted(trace.meta):
        lines.append(f"M\t{key}\t{trace.meta[key]}")
    for key in _COUNTERS:
        lines.append(f"M\t{key}\t{getattr(trace, key)}")
    lines.append(f"M\tincomplete\t{int(trace.incomplete)}")
    lines.append(f"M\tend_time\t{trace.end_time!r}")

    for node, at in sorted(trace.crash_times.items()):
        lines.append(f"C\t{node}\t{at!r}")
    for op in trace.operations:
        lines.append("\t".join([
            "O", str(op.op_id), str(op.process), op.kind.value, repr(op.invoked_at),
            _opt(op.responded_at, repr), _opt(op.tag), _opt(op.value, _encode_value),
            str(op.exchanges_used), str(op.messages_sent),
        ]))
    for entry in trace.entries:
        lines.append(f"E\t{entry.time!r}\t{entry.node}\t{entry.event}\t{entry.summary}")
    for send in trace.sends:
        lines.append("\t".join([
            "S", repr(send.time), str(send.src), str(send.dst), _opt(send.op_id),
            repr(send.deliver_at), encode_message(send.message),
        ]))
    for at, node, tag in trace.server_tags:
        lines.append(f"T\t{at!r}\t{node}\t{tag}")
    return "\n".join(lines) + "\n"


def dump_trace(trace, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dumps_trace(trace))
    return path


def _load_line(trace, fields):
    kind = fields[0]
    if kind == "M":
        key, value = fields[1], fields[2]
        if key in _COUNTERS:
            setattr(trace, key, int(value))
        elif key == "incomplete":
            trace.incomplete = value == "1"
        elif key == "end_time":
            trace.end_time = float(value)
        else:
            trace.meta[key] = int(value) if key in _INT_META else value
    elif kind == "C":
        trace.crash_times[ProcessId.parse(fields[1])] = float(fields[2])
    elif kind == "O":
        (_, op_id, process, op_kind, invoked, responded, tag, value, exchanges, messages) = fields
        trace.operations.append(OperationRecord(
            op_id=int(op_id),
            process=ProcessId.parse(process),
            kind=OpKind(op_kind),
            invoked_at=float(invoked),
            responded_at=_parse_opt(responded, float),
            tag=_parse_opt(tag, Tag.parse),
            value=_parse_opt(value, _decode_value),
            exchanges_used=int(exchanges),
            messages_sent=int(messages),
        ))
    elif kind == "E":
        trace.entries.append(TraceEntry(float(fields[1]), ProcessId.parse(fields[2]), fields[3], fields[4]))
    elif kind == "S":
        trace.sends.append(SendRecord(
            time=float(fields[1]),
            src=ProcessId.parse(fields[2]),
            dst=ProcessId.parse(fields[3]),
            op_id=_parse_opt(fields[4], int),
            deliver_at=float(fields[5]),
            message=decode_message(fields[6:]),
        ))
    elif kind == "T":
        trace.server_tags.append((float(fields[1]), ProcessId.parse(fields[2]), Tag.parse(fields[3])))
    else:
        raise InvalidInputError(f"未知的行类型 {kind!r}")


def loads_trace(text):
    lines = text.splitlines()
    if not lines or lines[0] != HEADER:
        raise InvalidInputError("缺少 trace 文件头")
    trace = Trace()
    for number, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        try:
            _load_line(trace, line.split("\t"))
        except (ValueError, IndexError) as e:
            raise InvalidInputError(f"第 {number} 行无法解析: {e}") from e
    return trace


def load_trace(path):
    with open(Path(path), "r", encoding="utf-8") as f:
        return loads_trace(f.read())
