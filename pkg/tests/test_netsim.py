import numpy as np
import pytest

from config.settings import LOOPBACK_DELAY
from modules.core_types import Message, MessageKind, OpKind, Tag, make_value, reader, server, writer
from modules.errors import InvalidConfigError, UnreachableError
from modules.netsim import (
    InvokeOperation, Simulator, TopologyKind, build_topology, inject_crash, message_delay, run, topology_spec,
)
from modules.protocols import get_protocol

W1 = writer(1)
R1 = reader(1)


def star(n, readers=1, writers=1):
    return build_topology(topology_spec("star", n), n, readers, writers)


def write_at(time, op_id, w=W1, seq=1):
    return InvokeOperation(time, w, OpKind.WRITE, op_id, make_value(w, seq, 64))


def read_at(time, op_id, r=R1):
    return InvokeOperation(time, r, OpKind.READ, op_id)


class TestTopology:
    def test_star_server_to_server_delay(self):
        network = star(9)
        rng = np.random.default_rng(0)
        delay = message_delay(network, server(0), server(5), 1024, rng, jitter_max=0.0)
        assert delay == pytest.approx(0.00404096)

    def test_loopback(self):
        network = star(3)
        rng = np.random.default_rng(0)
        assert message_delay(network, server(1), server(1), 1024, rng) == LOOPBACK_DELAY

    def test_series_router_hops(self):
        network = build_topology(topology_spec("series", 3), 3, 0, 1)
        assert network.spec.kind is TopologyKind.SERIES
        assert len(network.path(server(0), server(2))) == 4
        assert len(network.path(server(1), server(1))) == 2

    def test_clients_round_robin(self):
        network = build_topology(topology_spec("series", 3), 3, 3, 1)
        attached = [network.attachment[p] for p in (W1, reader(1), reader(2), reader(3))]
        assert attached == [0, 1, 2, 0]

    def test_star_servers_share_hub(self):
        network = star(5, readers=4)
        assert {network.attachment[s] for s in network.servers} == {0}
        assert len(network.clients) == 5

    def test_series_router_mismatch(self):
        with pytest.raises(InvalidConfigError):
            build_topology(topology_spec("series", 3, routers=2), 3, 1, 1)

    def test_zero_readers(self):
        network = star(3, readers=0)
        assert network.clients == [W1]

    def test_unknown_node(self):
        with pytest.raises(UnreachableError):
            star(3).path(server(0), reader(9))

    def test_jitter_bounded(self):
        network = star(3)
        rng = np.random.default_rng(3)
        base = message_delay(network, W1, server(0), 512, rng, jitter_max=0.0)
        for _ in range(50):
            d = message_delay(network, W1, server(0), 512, rng, jitter_max=0.002)
            assert base <= d <= base + 0.002


class TestSimulation:
    def test_empty_workload(self, majority3):
        trace = run(star(3), get_protocol("erato"), majority3, [])
        assert trace.operations == []
        assert trace.end_time == 0.0

    def test_single_write(self, majority3):
        trace = run(star(3, readers=0), get_protocol("erato"), majority3, [write_at(0.0, 1)], jitter_max=0.0)
        op = trace.operation(1)
        assert op.complete
        assert op.tag == Tag(1, W1)
        assert op.exchanges_used == 2
        assert op.messages_sent == 6
        requests = [s for s in trace.sends if s.message.kind is MessageKind.WRITE_REQUEST]
        assert len(requests) == 3
        assert sorted(node.index for _, node, _ in trace.server_tags) == [0, 1, 2]

    def test_read_after_write_is_fast(self, majority3):
        workload = [write_at(0.0, 1), read_at(1.0, 2)]
        trace = run(star(3), get_protocol("erato"), majority3, workload, jitter_max=0.0)
        read = trace.operation(2)
        assert read.tag == Tag(1, W1)
        assert read.value == make_value(W1, 1, 64)
        assert read.exchanges_used == 2

    def test_sends_carry_op_id(self, majority3):
        trace = run(star(3), get_protocol("erato"), majority3, [write_at(0.0, 1), read_at(1.0, 2)])
        assert {s.op_id for s in trace.sends} == {1, 2}

    def test_busy_client_defers(self, majority3):
        workload = [read_at(0.0, 1), read_at(0.0, 2)]
        trace = run(star(3), get_protocol("erato"), majority3, workload)
        first, second = trace.operation(1), trace.operation(2)
        assert first.complete and second.complete
        assert second.invoked_at >= first.responded_at
        assert any(e.event == "defer" for e in trace.entries)

    def test_server_crash_tolerated(self, majority3):
        workload = [write_at(0.0, 1), read_at(0.5, 2)]
        trace = run(star(3), get_protocol("erato"), majority3, workload, crash_schedule={server(2): 0.0})
        assert all(op.complete for op in trace.operations)
        assert trace.lost_messages > 0
        assert [e.event for e in trace.entries if e.node == server(2)] == ["crash"]
        assert trace.crash_times == {server(2): 0.0}

    def test_crash_without_live_quorum(self, majority3):
        with pytest.raises(InvalidConfigError):
            run(star(3), get_protocol("erato"), majority3, [], crash_schedule={server(0): 0.0, server(1): 1.0})

    def test_crashed_client_skipped(self, majority3):
        trace = run(star(3), get_protocol("erato"), majority3, [read_at(1.0, 1)], crash_schedule={R1: 0.5})
        assert trace.operations == []
        assert trace.skipped_invocations == 1
        assert not trace.incomplete
        assert [e.event for e in trace.entries if e.node == R1] == ["crash"]

    def test_no_events_after_crash(self, majority5):
        network = star(5, readers=2)
        workload = [write_at(0.01 * i, 1 + i, seq=1 + i) for i in range(4)]
        workload += [read_at(0.01 * i, 10 + i, reader(1 + i % 2)) for i in range(6)]
        crashes = {server(4): 0.012, reader(2): 0.02}
        trace = run(network, get_protocol("erato"), majority5, workload, crash_schedule=crashes, seed=3, jitter_max=0.003)
        for entry in trace.entries:
            if entry.node in crashes:
                assert entry.time <= crashes[entry.node]
        assert trace.lost_messages > 0
        assert not trace.incomplete

    def test_time_cap(self, majority3):
        trace = run(star(3), get_protocol("abd"), majority3, [read_at(0.0, 1)], cap_seconds=0.001)
        assert trace.incomplete
        assert not trace.operation(1).complete

    def test_unknown_process(self, majority3):
        with pytest.raises(InvalidConfigError):
            run(star(3), get_protocol("erato"), majority3, [read_at(0.0, 1, reader(7))])

    def test_same_seed_same_trace(self, majority5):
        network = star(5, readers=3)
        workload = [write_at(0.0, 1), write_at(0.01, 2, seq=2)] + [read_at(0.005 * i, 3 + i, reader(1 + i)) for i in range(3)]
        first = run(network, get_protocol("erato"), majority5, workload, seed=4, jitter_max=0.003)
        second = run(network, get_protocol("erato"), majority5, workload, seed=4, jitter_max=0.003)
        assert first.sends == second.sends
        assert first.operations == second.operations

    def test_seed_changes_jitter(self, majority3):
        workload = [write_at(0.0, 1)]
        a = run(star(3), get_protocol("erato"), majority3, workload, seed=1, jitter_max=0.003)
        b = run(star(3), get_protocol("erato"), majority3, workload, seed=2, jitter_max=0.003)
        assert [s.deliver_at for s in a.sends] != [s.deliver_at for s in b.sends]

    def test_meta(self, majority3):
        trace = run(star(3), get_protocol("ohsam"), majority3, [], seed=9)
        assert trace.meta == {"algorithm": "ohsam", "seed": 9, "n_servers": 3}

    def test_message_size(self):
        relay = Message(MessageKind.READ_RELAY, sender=server(0), tag=Tag(1, W1), value=make_value(W1, 1, 64), reader=R1, read_op=1)
        assert relay.size_bits() == 1024

    def test_reader_crash_mid_operation(self, majority3):
        trace = run(star(3), get_protocol("erato"), majority3, [read_at(0.0, 1)], crash_schedule={R1: 0.003})
        assert not trace.operation(1).complete
        assert not trace.incomplete

    def test_inject_crash_on_simulator(self, majority3):
        sim = Simulator(star(3), get_protocol("erato"), majority3, seed=0)
        inject_crash(sim, server(1), 0.0)
        sim.schedule([write_at(0.0, 1)])
        trace = sim.run()
        assert trace.operation(1).complete
        assert not any(s.src == server(1) for s in trace.sends)

    def test_inject_crash_unknown_node(self, majority3):
        sim = Simulator(star(3), get_protocol("erato"), majority3, seed=0)
        with pytest.raises(InvalidConfigError):
            inject_crash(sim, server(5), 0.0)
