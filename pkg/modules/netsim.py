"""
离散事件网络模拟器
Series / Star 拓扑、链路时延模型、带乱序的可靠消息传输、崩溃注入，以及产生 Trace 的全局事件循环
同一 (配置, 种子) 必然得到逐字节相同的 Trace
"""

import heapq
import logging
import time as wallclock
from dataclasses import dataclass, field, replace
from enum import Enum
from itertools import count
from typing import Optional

import numpy as np

from config.settings import CAP_SECONDS, JITTER_MAX, LOOPBACK_DELAY
from config.topology_config import CLIENT_LINK, ROUTER_LINK, SERVER_LINKS, STAR_HUB_ROUTER
from modules.core_types import (
    OperationRecord, OpKind, ProcessKind, reader, server, writer,
)
from modules.errors import InvalidConfigError, UnreachableError
from modules.protocols import Deliver, Invoke
from modules.quorum import has_live_quorum

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# 拓扑
# ---------------------------------------------------------------------------

class TopologyKind(Enum):
    SERIES = "series"
    STAR = "star"


@dataclass(frozen=True)
class LinkParams:
    bandwidth: float  # bit/s
    delay: float      # 秒

    @classmethod
    def of(cls, table):
        return cls(bandwidth=float(table["bandwidth"]), delay=float(table["delay"]))


@dataclass(frozen=True)
class TopologySpec:
    kind: TopologyKind
    routers: int
    router_link: LinkParams
    server_link: LinkParams
    client_link: LinkParams


def topology_spec(kind, n_servers, routers=None):
    """按拓扑类型填入默认链路参数；routers 缺省时等于服务器数"""
    kind = TopologyKind(kind)
    return TopologySpec(
        kind=kind,
        routers=n_servers if routers is None else routers,
        router_link=LinkParams.of(ROUTER_LINK),
        server_link=LinkParams.of(SERVER_LINKS[kind.value]),
        client_link=LinkParams.of(CLIENT_LINK),
    )


@dataclass(frozen=True)
class Network:
    """节点到路由器的接入关系；路由器排成一条链"""
    spec: TopologySpec
    attachment: dict
    access_link: dict
    router_hops: np.ndarray

    @property
    def nodes(self):
        return sorted(self.attachment)

    @property
    def servers(self):
        return [p for p in self.nodes if p.kind is ProcessKind.SERVER]

    @property
    def clients(self):
        return [p for p in self.nodes if p.kind is not ProcessKind.SERVER]

    def path(self, src, dst):
        """src 到 dst 依次经过的链路"""
        if src not in self.attachment or dst not in self.attachment:
            raise UnreachableError(f"{src} 与 {dst} 之间没有路径")
        hops = int(self.router_hops[self.attachment[src], self.attachment[dst]])
        return [self.access_link[src]] + [self.spec.router_link] * hops + [self.access_link[dst]]


def build_topology(spec, n_servers, n_readers, n_writers):
    """
    构建网络：服务器按拓扑接入，客户端（先写者后读者）轮转均匀分布到各路由器

    Raises:
        InvalidConfigError: 数量为负、路由器数非法或 Series 中路由器数与服务器数不一致
    """
    problems = []
    if min(n_servers, n_readers, n_writers) < 0:
        problems.append(f"数量不能为负: servers={n_servers}, readers={n_readers}, writers={n_writers}")
    if spec.routers < 1:
        problems.append(f"至少需要 1 个路由器，收到 {spec.routers}")
    if spec.kind is TopologyKind.SERIES and spec.routers != n_servers:
        problems.append(f"Series 拓扑要求路由器数等于服务器数: {spec.routers} != {n_servers}")
    if spec.kind is TopologyKind.STAR and STAR_HUB_ROUTER >= spec.routers:
        problems.append(f"Star 拓扑的中心路由器 {STAR_HUB_ROUTER} 不存在")
    if problems:
        raise InvalidConfigError("; ".join(problems))

    attachment = {}
    access_link = {}
    for i in range(n_servers):
        pid = server(i)
        attachment[pid] = i if spec.kind is TopologyKind.SERIES else STAR_HUB_ROUTER
        access_link[pid] = spec.server_link

    clients = [writer(i) for i in range(1, n_writers + 1)] + [reader(i) for i in range(1, n_readers + 1)]
    for k, pid in enumerate(clients):
        attachment[pid] = k % spec.routers
        access_link[pid] = spec.client_link

    routers = np.arange(spec.routers)
    router_hops = np.abs(routers[:, None] - routers[None, :])
    return Network(spec=spec, attachment=attachment, access_link=access_link, router_hops=router_hops)


def message_delay(network, src, dst, size_bits, rng, jitter_max=JITTER_MAX):
    """各段链路 (传播时延 + 发送时延) 之和，再加 [0, jitter_max] 上的均匀抖动"""
    if src == dst:
        return LOOPBACK_DELAY
    links = network.path(src, dst)
    base = sum(link.delay for link in links) + size_bits * sum(1.0 / link.bandwidth for link in links)
    return base + float(rng.uniform(0.0, jitter_max))


# ---------------------------------------------------------------------------
# 事件与 Trace
# ---------------------------------------------------------------------------

class EventKind(Enum):
    INVOKE = "invoke"
    DELIVER = "deliver"
    CRASH = "crash"


@dataclass(order=True)
class SimEvent:
    time: float
    seq: int
    kind: EventKind = field(compare=False)
    payload: object = field(compare=False, default=None)


@dataclass(frozen=True)
class InvokeOperation:
    time: float
    process: object
    kind: OpKind
    op_id: int
    value: Optional[object] = None


@dataclass(frozen=True)
class SendRecord:
    time: float
    src: object
    dst: object
    message: object
    op_id: int
    deliver_at: float


@dataclass(frozen=True)
class TraceEntry:
    time: float
    node: object
    event: str
    summary: str = ""


@dataclass
class Trace:
    entries: list = field(default_factory=list)
    sends: list = field(default_factory=list)
    operations: list = field(default_factory=list)
    crash_times: dict = field(default_factory=dict)
    server_tags: list = field(default_factory=list)
    stale_messages: int = 0
    # 崩溃节点之后不再记事件，丢弃只计数
    lost_messages: int = 0
    skipped_invocations: int = 0
    incomplete: bool = False
    end_time: float = 0.0
    compute_seconds: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def operation(self, op_id):
        for op in self.operations:
            if op.op_id == op_id:
                return op
        return None


@dataclass(frozen=True)
class _InFlight:
    src: object
    dst: object
    message: object
    op_id: int


# ---------------------------------------------------------------------------
# 模拟器
# ---------------------------------------------------------------------------

class Simulator:
    """单次运行的事件循环，单线程；多次运行之间互不共享状态"""

    def __init__(self, network, protocol, qs, seed, jitter_max=JITTER_MAX, cap_seconds=CAP_SECONDS):
        self.network = network
        self.protocol = protocol
        self.qs = qs
        self.seed = seed
        self.jitter_max = jitter_max
        self.cap_seconds = cap_seconds
        self.rng = np.random.default_rng(seed)

        self.states = {pid: protocol.new_state(pid, qs) for pid in network.nodes}
        self.crash_times = {}
        self.trace = Trace(meta={"algorithm": protocol.name, "seed": seed, "n_servers": len(network.servers)})

        self._queue = []
        self._seq = count()
        self._records = {}
        self._order = []
        self._current_op = {}
        self._deferred = {pid: [] for pid in network.clients}

    # -- 调度 ---------------------------------------------------------------

    def _push(self, time, kind, payload=None):
        heapq.heappush(self._queue, SimEvent(time, next(self._seq), kind, payload))

    def schedule(self, workload):
        for invocation in workload:
            if invocation.process not in self.states:
                raise InvalidConfigError(f"工作负载引用了不存在的进程 {invocation.process}")
            self._push(invocation.time, EventKind.INVOKE, invocation)

    def inject_crash(self, node, time):
        if node not in self.states:
            raise InvalidConfigError(f"崩溃计划引用了不存在的节点 {node}")
        self.crash_times[node] = time
        self._push(time, EventKind.CRASH, node)

    def _crashed(self, node, time):
        crash = self.crash_times.get(node)
        return crash is not None and time >= crash

    def _validate_crashes(self):
        crashed = {p.index for p in self.crash_times if p.kind is ProcessKind.SERVER}
        if not has_live_quorum(self.qs, frozenset(crashed)):
            raise InvalidConfigError(f"崩溃计划 {sorted(crashed)} 没有留下任何完整存活的 quorum")

    # -- 单步 ---------------------------------------------------------------

    def _step(self, node, event, op_id, now):
        started = wallclock.perf_counter()
        state = self.states[node]
        before = getattr(state, "tag", None) if node.kind is ProcessKind.SERVER else None
        output = self.protocol.step(node, state, event, self.qs)
        if op_id is not None:
            self.trace.compute_seconds[op_id] = (
                self.trace.compute_seconds.get(op_id, 0.0) + wallclock.perf_counter() - started
            )

        self.trace.stale_messages += output.dropped
        if node.kind is ProcessKind.SERVER and state.tag != before:
            self.trace.server_tags.append((now, node, state.tag))

        for dst, message in output.sends:
            delay = message_delay(self.network, node, dst, message.size_bits(), self.rng, self.jitter_max)
            deliver_at = now + delay
            self.trace.sends.append(SendRecord(now, node, dst, message, op_id, deliver_at))
            self._push(deliver_at, EventKind.DELIVER, _InFlight(node, dst, message, op_id))

        if node.kind is not ProcessKind.SERVER:
            current = self._current_op.get(node)
            if output.assigned_tag is not None and current is not None:
                record = self._records[current]
                self._records[current] = replace(record, tag=output.assigned_tag)
            if output.response is not None and current is not None:
                result = output.response
                self._records[current] = self._records[current].responded(
                    now, result.tag, result.value, result.exchanges_used,
                )
                self.trace.entries.append(TraceEntry(now, node, "respond", f"op={current} tag={result.tag}"))
                del self._current_op[node]
                if self._deferred[node]:
                    self._push(now, EventKind.INVOKE, self._deferred[node].pop(0))

    def _invoke(self, invocation, now):
        node = invocation.process
        if self._crashed(node, now):
            self.trace.skipped_invocations += 1
            return
        if node in self._current_op:
            self._deferred[node].append(invocation)
            self.trace.entries.append(TraceEntry(now, node, "defer", f"op={invocation.op_id}"))
            return
        self._current_op[node] = invocation.op_id
        self._records[invocation.op_id] = OperationRecord(
            op_id=invocation.op_id, process=node, kind=invocation.kind, invoked_at=now,
            value=invocation.value if invocation.kind is OpKind.WRITE else None,
        )
        self._order.append(invocation.op_id)
        self.trace.entries.append(TraceEntry(now, node, "invoke", f"op={invocation.op_id} {invocation.kind.value}"))
        self._step(node, Invoke(invocation.op_id, invocation.kind, invocation.value), invocation.op_id, now)

    def _deliver(self, flight, now):
        if self._crashed(flight.dst, now):
            self.trace.lost_messages += 1
            return
        self.trace.entries.append(TraceEntry(now, flight.dst, "deliver", f"{flight.message.kind.value} from {flight.src}"))
        op_id = flight.op_id
        if flight.dst.kind is not ProcessKind.SERVER:
            op_id = self._current_op.get(flight.dst, flight.op_id)
        self._step(flight.dst, Deliver(flight.message), op_id, now)

    # -- 主循环 -------------------------------------------------------------

    def run(self):
        self._validate_crashes()
        self.trace.crash_times = dict(self.crash_times)
        now = 0.0
        while self._queue:
            if self._queue[0].time > self.cap_seconds:
                break
            event = heapq.heappop(self._queue)
            now = event.time
            if event.kind is EventKind.INVOKE:
                self._invoke(event.payload, now)
            elif event.kind is EventKind.DELIVER:
                self._deliver(event.payload, now)
            else:
                self.trace.entries.append(TraceEntry(now, event.payload, "crash"))

        sent = {}
        for record in self.trace.sends:
            sent[record.op_id] = sent.get(record.op_id, 0) + 1
        self.trace.operations = [
            replace(self._records[i], messages_sent=sent.get(i, 0))
            for i in self._order
        ]
        self.trace.end_time = now

        live_pending = [
            op for op in self.trace.operations
            if not op.complete and not self._crashed(op.process, now)
        ]
        waiting = [
            e for e in self._queue
            if e.kind is EventKind.INVOKE and not self._crashed(e.payload.process, e.time)
        ]
        waiting += [
            inv for node, queue in self._deferred.items() for inv in queue
            if not self._crashed(node, now)
        ]
        self.trace.incomplete = bool(live_pending or waiting)
        if self.trace.incomplete:
            logger.warning(
                "[网络模拟] 达到 %.1f 秒上限，仍有 %d 个操作未完成、%d 个调用未开始",
                self.cap_seconds, len(live_pending), len(waiting),
            )
        logger.info(
            "[网络模拟] %s seed=%s 结束于 t=%.6f：%d 个操作，%d 条消息，%d 条过期",
            self.protocol.name, self.seed, now, len(self.trace.operations),
            len(self.trace.sends), self.trace.stale_messages,
        )
        return self.trace


def inject_crash(sim, node, time):
    sim.inject_crash(node, time)


def run(network, protocol, qs, workload, crash_schedule=None, seed=0,
        jitter_max=JITTER_MAX, cap_seconds=CAP_SECONDS):
    """
    运行一次模拟

    Args:
        network: build_topology 的结果
        protocol: protocols.Protocol
        qs: QuorumSystem
        workload: InvokeOperation 列表
        crash_schedule: {ProcessId: 崩溃时间}
        seed: 随机种子（抖动）

    Returns:
        Trace
    """
    sim = Simulator(network, protocol, qs, seed, jitter_max=jitter_max, cap_seconds=cap_seconds)
    for node, at in sorted((crash_schedule or {}).items()):
        sim.inject_crash(node, at)
    sim.schedule(workload)
    return sim.run()
