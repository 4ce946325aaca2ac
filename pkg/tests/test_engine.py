import pytest
from hypothesis import given
from hypothesis import strategies as st

from qma.engine import (ACK, BROADCAST, DATA, PRIO_MAC, PRIO_MEDIUM, Clock, EventQueue, Frame,
                        Kernel, Medium, RadioTiming, Topology)

T = RadioTiming()


def hidden_medium():
    k = Kernel()
    topo = Topology([(-10, 0), (0, 0), (10, 0)], comm_range=12, names=["A", "B", "C"])
    return k, Medium(k, topo, T)


def collect(medium, node):
    got = []
    medium.listeners[node] = lambda frame, tx: got.append((frame.kind, frame.src, tx.end))
    return got


def test_default_timing_fits_three_subslots():
    assert T.data_ticks == 2 * T.subslot_ticks
    assert T.data_ticks + T.turnaround_ticks + T.ack_ticks <= 3 * T.subslot_ticks
    assert T.ack_ticks < T.subslot_ticks
    with pytest.raises(ValueError):
        RadioTiming(ack_wait_ticks=10)
    with pytest.raises(ValueError):
        RadioTiming(data_ticks=0)


def test_clock_subslots_and_dead_time():
    c = Clock(4, 10, dead_ticks=20)
    assert c.period == 60
    assert [c.subslot_of(t) for t in (0, 9, 10, 39, 40, 59, 60)] == [0, 0, 1, 3, None, None, 0]
    assert c.frame_of(59) == 0 and c.frame_of(60) == 1
    assert c.boundary_at_or_after(0) == 0
    assert c.boundary_at_or_after(1) == 10
    assert c.boundary_at_or_after(31) == 60
    assert c.boundary_at_or_after(45) == 60
    # 15 ticks of CAP time from tick 35 skip the dead time
    assert c.cap_advance(35, 15) == 70
    assert c.cap_advance(45, 5) == 65


def test_cfp_fraction_dead_time():
    c = Clock.with_cfp_fraction(54, 133, 7 / 15)
    assert c.dead == round(54 * 133 * 7 / 8)
    assert Clock.with_cfp_fraction(54, 133, 0.0).dead == 0
    with pytest.raises(ValueError):
        Clock.with_cfp_fraction(54, 133, 1.0)


def test_topology_hidden_pair():
    topo = Topology([(-10, 0), (0, 0), (10, 0)], comm_range=12)
    assert topo.reach[0] == [1]
    assert topo.reach[1] == [0, 2]
    assert topo.reach[2] == [1]
    assert topo.sense == topo.reach
    wide = Topology([(-10, 0), (0, 0), (10, 0)], comm_range=12, cs_range=25)
    assert wide.sense[0] == [1, 2]


def test_kernel_order_is_tick_prio_seq():
    k = Kernel()
    seen = []
    k.at(5, seen.append, "mac-first", PRIO_MAC)
    k.at(5, seen.append, "medium", PRIO_MEDIUM)
    k.at(5, seen.append, "mac-second", PRIO_MAC)
    k.at(1, seen.append, "early")
    k.run()
    assert seen == ["early", "medium", "mac-first", "mac-second"]
    assert k.now == 5 and k.processed == 4


def test_kernel_rejects_the_past_and_stops_at_until():
    k = Kernel()
    k.at(10, lambda _: None)
    k.at(30, lambda _: None)
    k.run(until=20)
    assert k.now == 20 and len(k.queue) == 1
    with pytest.raises(ValueError):
        k.at(19, lambda _: None)


@given(st.lists(st.tuples(st.integers(0, 50), st.integers(0, 2)), max_size=60))
def test_event_queue_pops_sorted(entries):
    q = EventQueue()
    for i, (tick, prio) in enumerate(entries):
        q.push(tick, None, i, prio)
    out = [q.pop() for _ in range(len(entries))]
    keys = [(t, p, s) for t, p, s, _, _ in out]
    assert keys == sorted(keys)


def test_hidden_sender_is_not_sensed():
    k, m = hidden_medium()
    k.at(0, lambda _: m.transmit(0, Frame(DATA, 0, 1, 1), T.data_ticks))
    k.run(until=10)
    assert m.cca(1, 10) is False
    assert m.cca(2, 10) is True


def test_overlapping_frames_at_receiver_are_both_lost():
    k, m = hidden_medium()
    got = collect(m, 1)
    k.at(0, lambda _: m.transmit(0, Frame(DATA, 0, 1, 1), T.data_ticks))
    k.at(100, lambda _: m.transmit(2, Frame(DATA, 2, 1, 1), T.data_ticks))
    k.run()
    assert got == []


def test_back_to_back_frames_do_not_collide():
    k, m = hidden_medium()
    got = collect(m, 1)
    k.at(0, lambda _: m.transmit(0, Frame(DATA, 0, 1, 1), T.data_ticks))
    k.at(T.data_ticks, lambda _: m.transmit(2, Frame(DATA, 2, 1, 1), T.data_ticks))
    k.run()
    assert [src for _, src, _ in got] == [0, 2]


def test_half_duplex_receiver_loses_frame():
    k, m = hidden_medium()
    got = collect(m, 1)
    k.at(0, lambda _: m.transmit(0, Frame(DATA, 0, 1, 1), T.data_ticks))
    k.at(50, lambda _: m.transmit(1, Frame(DATA, 1, BROADCAST, 1), 20))
    k.run()
    assert got == []
    with pytest.raises(RuntimeError):
        k2, m2 = hidden_medium()
        k2.at(0, lambda _: [m2.transmit(0, Frame(DATA, 0, 1, 1), 10),
                            m2.transmit(0, Frame(DATA, 0, 1, 2), 10)])
        k2.run()


def test_ack_follows_after_turnaround():
    k, m = hidden_medium()
    at_a = collect(m, 0)

    def on_b(frame, tx):
        if frame.kind == DATA:
            assert m.send_ack(1, frame, tx.end)

    m.listeners[1] = on_b
    k.at(0, lambda _: m.transmit(0, Frame(DATA, 0, 1, 7), T.data_ticks))
    k.run()
    end = T.data_ticks + T.turnaround_ticks + T.ack_ticks
    assert at_a == [(ACK, 1, end)]
    # C overhears B's ACK although it never heard A
    assert m.overheard(2, end - 1, end)
    assert not m.overheard(2, end, end + 100)


def test_sensed_interval_is_half_open():
    k, m = hidden_medium()
    k.at(10, lambda _: m.transmit(1, Frame(DATA, 1, BROADCAST, 1), 20))
    k.run()
    assert m.sensed(0, 0, 11)
    assert not m.sensed(0, 0, 10)
    assert not m.sensed(0, 30, 40)
    assert m.sensed(0, 29, 40)
