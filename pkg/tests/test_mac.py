import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from qma.engine import BROADCAST, DATA, Clock, Frame, Kernel, Medium, RadioTiming, Topology
from qma.mac import QmaConfig, QmaMac
from qma.mac.base import DropReason
from qma.mac.csma import CsmaConstants, CsmaMac
from qma.mac.qma import (REWARD_SET, RHO_TABLE, Outcome, compute_reward, exploration_rate,
                         round_half_up)
from qma.qcore import Action
from qma.rng import Stream
from qma.traffic import Packet

T = RadioTiming()


class Recorder:
    def __init__(self, mac=None, refill=0):
        self.sent, self.dropped = [], []
        self.mac, self.refill, self.uid = mac, refill, 0

    def top_up(self):
        while self.refill and len(self.mac.queue) < 1:
            self.refill -= 1
            self.uid += 1
            self.mac.enqueue(Packet(self.uid, 0, self.mac.kernel.now, BROADCAST, BROADCAST))

    def packet_sent(self, node, packet, acked):
        self.sent.append(packet.uid)
        self.top_up()

    def packet_dropped(self, node, packet, reason):
        self.dropped.append((packet.uid, reason))
        self.top_up()


def pair(cfp_dead=0):
    k = Kernel()
    topo = Topology([(0, 0), (5, 0)], comm_range=10)
    return k, Medium(k, topo, T), Clock(54, T.subslot_ticks, cfp_dead)


def test_reward_table():
    assert compute_reward(Action.BACKOFF, Outcome.OVERHEARD) == 2
    assert compute_reward(Action.BACKOFF, Outcome.QUIET) == 0
    assert compute_reward(Action.CCA, Outcome.TX_SUCCESS) == 3
    assert compute_reward(Action.CCA, Outcome.TX_FAILED) == -2
    assert compute_reward(Action.CCA, Outcome.CCA_FAILED) == 1
    assert compute_reward(Action.SEND, Outcome.TX_SUCCESS) == 4
    assert compute_reward(Action.SEND, Outcome.TX_FAILED) == -3
    assert REWARD_SET == {2, 0, 3, -2, 1, 4, -3}


@pytest.mark.parametrize("action, outcome", [
    (Action.BACKOFF, Outcome.TX_SUCCESS),
    (Action.SEND, Outcome.CCA_FAILED),
    (Action.SEND, Outcome.QUIET),
    (Action.CCA, Outcome.OVERHEARD),
])
def test_impossible_outcomes_raise(action, outcome):
    with pytest.raises(AssertionError):
        compute_reward(action, outcome)


def test_rho_table_values():
    assert RHO_TABLE == (0.0, 0.006, 0.011, 0.019, 0.033, 0.058, 0.1, 0.173, 0.3)
    assert exploration_rate(8, 0.0) == 0.3
    assert exploration_rate(6, 0.0) == 0.1
    assert exploration_rate(3, 5.0) == 0.0
    assert exploration_rate(4, 1.5) == RHO_TABLE[2]
    assert exploration_rate(20, 0) == 0.3


def test_round_half_up():
    assert [round_half_up(x) for x in (0.5, 1.5, 2.5, 2.49, -0.5)] == [1, 2, 3, 2, 0]


@given(st.integers(0, 8), st.floats(0, 8))
def test_rho_is_monotone_in_local_queue(q, avg):
    assert exploration_rate(q, avg) <= exploration_rate(min(q + 1, 8), avg)
    assert 0.0 <= exploration_rate(q, avg) <= 0.3


def test_qma_config_validation():
    with pytest.raises(ValueError):
        QmaConfig(rho_table=(0.1,) * 3)
    with pytest.raises(ValueError):
        QmaConfig(rho_table=(2.0,) + (0.0,) * 8)
    with pytest.raises(ValueError):
        QmaConfig(startup_subslots=-1)


def test_startup_penalizes_busy_subslot():
    k, m, clock = pair()
    cfg = QmaConfig(startup_subslots=2, rho_table=(0.0,) * 9)
    mac = QmaMac(0, k, m, clock, T, cfg, rng=Stream(1, 0, "explore"))
    # the neighbour occupies subslot 0 only
    k.at(0, lambda _: m.transmit(1, Frame(DATA, 1, BROADCAST, 1), 50))
    k.at(0, lambda _: mac.enqueue(Packet(1, 0, 0, BROADCAST, BROADCAST)), prio=2)
    k.run(until=2 * T.subslot_ticks + 1)
    t = mac.table
    assert t.q(0, Action.CCA) < -10 and t.q(0, Action.SEND) < -10
    assert t.q(1, Action.CCA) == -10 and t.q(1, Action.SEND) == -10
    assert mac.startup_left == 0
    assert mac.decisions[0][Action.BACKOFF] == 1


def test_lone_qma_node_learns_to_send():
    k, m, clock = pair()
    mac = QmaMac(0, k, m, clock, T, QmaConfig(startup_subslots=0), rng=Stream(3, 0, "explore"))
    rec = Recorder(mac, refill=400)
    mac.listener = rec
    rec.top_up()
    k.run(until=40 * clock.period)
    assert len(rec.sent) > 50
    assert not rec.dropped
    assert Action.SEND in mac.table.policy or Action.CCA in mac.table.policy
    assert set(mac.reward_counts) <= REWARD_SET


def test_csma_constants_validation():
    with pytest.raises(ValueError):
        CsmaConstants(min_be=6, max_be=5)
    with pytest.raises(ValueError):
        CsmaConstants(contention_window=0)


@pytest.mark.parametrize("slotted", [False, True])
def test_first_backoff_is_uniform(slotted):
    k, m, clock = pair()
    mac = CsmaMac(0, k, m, clock, T, Stream(7, 0, "backoff"), slotted=slotted)
    mac.backoff_log = []
    rec = Recorder(mac, refill=10_000)
    mac.listener = rec
    rec.top_up()
    k.run()
    assert len(rec.sent) == 10_000
    counts = np.bincount(mac.backoff_log, minlength=8)
    assert len(counts) == 8     # idle channel: BE stays at macMinBE
    assert stats.chisquare(counts).pvalue > 0.001


def test_busy_channel_drops_after_five_ccas():
    k, m, clock = pair()
    mac = CsmaMac(0, k, m, clock, T, Stream(2, 0, "backoff"))
    mac.backoff_log = []
    rec = Recorder()
    mac.listener = rec
    k.at(0, lambda _: m.transmit(1, Frame(DATA, 1, BROADCAST, 1), 10**6))
    k.at(1, lambda _: mac.enqueue(Packet(9, 0, 1, BROADCAST, BROADCAST)))
    k.run()
    assert rec.dropped == [(9, DropReason.BACKOFF)]
    assert mac.cca_failures == 5
    # BE grows 3, 4, 5 and then saturates
    assert [b < (1 << be) for b, be in zip(mac.backoff_log, (3, 4, 5, 5, 5))] == [True] * 5


def test_unacked_frame_retried_then_dropped():
    k, m, clock = pair()
    mac = CsmaMac(0, k, m, clock, T, Stream(2, 0, "backoff"))
    rec = Recorder()
    mac.listener = rec
    k.at(0, lambda _: mac.enqueue(Packet(4, 0, 0, 1, 1)))
    k.run()
    assert mac.tx_attempts == 4
    assert rec.dropped == [(4, DropReason.RETRY)]


def test_slotted_transmissions_align_to_backoff_grid():
    k, m, clock = pair(cfp_dead=1000)
    mac = CsmaMac(0, k, m, clock, T, Stream(5, 0, "backoff"), slotted=True)
    starts = []
    m.listeners[1] = lambda frame, tx: starts.append(tx.start)
    rec = Recorder(mac, refill=200)
    mac.listener = rec
    rec.top_up()
    k.run()
    assert len(starts) == 200
    for s in starts:
        off = s % clock.period
        assert off < clock.cap and off % T.backoff_period_ticks == 0
