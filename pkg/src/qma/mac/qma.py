"""QMA channel access: one Q-learning decision per subslot while packets wait.

The node keeps its last (subslot, action) pair until the outcome is known
(one subslot for a backoff or failed CCA, until the ACK deadline for a
transmission) and only then updates its table, using the subslot in which the
next decision is taken as successor state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from ..engine import ACK, BROADCAST, Clock, Frame, Kernel, Medium, RadioTiming
from ..qcore import ACTIONS, Action, LearningParams, QTable
from .base import MacBase

RHO_MAX_DIFF = 8


def _rho(d: int) -> float:
    return 0.0 if d == 0 else round(0.3 * 3 ** ((d - RHO_MAX_DIFF) / 2), 3)


RHO_TABLE = tuple(_rho(d) for d in range(RHO_MAX_DIFF + 1))


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def exploration_rate(local_q: int, neighbor_avg: float, table=RHO_TABLE) -> float:
    """rho for the given local queue level and mean neighbour queue level."""
    d = round_half_up(local_q - round_half_up(neighbor_avg))
    d = min(max(d, 0), len(table) - 1)
    return table[d]


class Outcome(Enum):
    QUIET = "quiet"
    OVERHEARD = "overheard"
    CCA_FAILED = "cca_failed"
    TX_SUCCESS = "tx_success"
    TX_FAILED = "tx_failed"


_REWARDS = {
    (Action.BACKOFF, Outcome.OVERHEARD): 2,
    (Action.BACKOFF, Outcome.QUIET): 0,
    (Action.CCA, Outcome.TX_SUCCESS): 3,
    (Action.CCA, Outcome.TX_FAILED): -2,
    (Action.CCA, Outcome.CCA_FAILED): 1,
    (Action.SEND, Outcome.TX_SUCCESS): 4,
    (Action.SEND, Outcome.TX_FAILED): -3,
}
REWARD_SET = frozenset(_REWARDS.values())
STARTUP_CCA_PENALTY = -2
STARTUP_SEND_PENALTY = -3


def compute_reward(action: Action, outcome: Outcome) -> int:
    try:
        return _REWARDS[(Action(action), outcome)]
    except KeyError:
        raise AssertionError(f"outcome {outcome} cannot follow action {action!r}") from None


@dataclass
class QmaConfig:
    params: LearningParams = field(default_factory=LearningParams)
    fixed_point: bool = True
    startup_subslots: int | None = None      # None: one full frame
    rho_table: tuple = RHO_TABLE
    report_expiry_frames: int = 10
    queue_max: int = 8
    max_retries: int = 3

    def __post_init__(self):
        if len(self.rho_table) != RHO_MAX_DIFF + 1:
            raise ValueError("rho table needs one entry per queue difference 0..8")
        if any(not 0.0 <= r <= 1.0 for r in self.rho_table):
            raise ValueError("rho entries must be probabilities")
        if self.startup_subslots is not None and self.startup_subslots < 0:
            raise ValueError("startup length must be >= 0")


class PendingAction:
    __slots__ = ("subslot", "action", "started", "startup", "outcome", "explored")

    def __init__(self, subslot: int, action: Action, started: int, startup: bool, explored: bool):
        self.subslot = subslot
        self.action = action
        self.started = started
        self.startup = startup
        self.explored = explored
        self.outcome: Outcome | None = None


ScriptFn = Callable[[int, int, int], "Action | None"]


class QmaMac(MacBase):
    def __init__(self, node: int, kernel: Kernel, medium: Medium, clock: Clock,
                 timing: RadioTiming, config: QmaConfig, rng, script: ScriptFn | None = None):
        super().__init__(node, kernel, medium, clock, timing, config.queue_max, config.max_retries)
        self.config = config
        self.rng = rng
        self.script = script
        self.table = QTable(clock.M, config.params, config.fixed_point)
        self.startup_left = clock.M if config.startup_subslots is None else config.startup_subslots
        self.pending: PendingAction | None = None
        self._wake_tick: int | None = None
        self.neighbors: dict[int, tuple[int, int]] = {}
        self.decisions = [[0, 0, 0] for _ in range(clock.M)]
        self.explored = 0
        self.last_policy_change: int | None = None
        self.reward_counts: dict[int, int] = {}
        self.trace: list | None = None

    # --- scheduling ----------------------------------------------------

    def busy(self) -> bool:
        return bool(self.queue) or self.pending is not None

    def _wake(self) -> None:
        if self._wake_tick is None and self.pending is None:
            self._schedule(self.clock.boundary_at_or_after(self.kernel.now))

    def _schedule(self, tick: int) -> None:
        self._wake_tick = tick
        self.kernel.at(tick, self._on_boundary)

    def _next_boundary(self, tick: int) -> int:
        return self.clock.boundary_at_or_after(tick)

    def _on_boundary(self, _=None) -> None:
        now = self.kernel.now
        m = self.clock.subslot_of(now)
        if self.pending is not None:
            # a refill triggered by the outcome must not start a second chain
            self._resolve(m)
        self._wake_tick = None
        if not self.queue:
            return
        if self.medium.transmitting(self.node, now):
            # still sending an ACK for someone else
            self._schedule(self._next_boundary(now + 1))
            return
        self._decide(m, now)

    # --- exploration ---------------------------------------------------

    def neighbor_average(self) -> float:
        frame = self.clock.frame_of(self.kernel.now)
        expiry = self.config.report_expiry_frames
        levels = [lvl for lvl, f in self.neighbors.values() if frame - f < expiry]
        return sum(levels) / len(levels) if levels else 0.0

    def exploration_rate(self) -> float:
        return exploration_rate(len(self.queue), self.neighbor_average(), self.config.rho_table)

    def on_overheard(self, frame: Frame) -> None:
        if frame.kind != ACK and frame.queue_level is not None:
            self.neighbors[frame.src] = (frame.queue_level, self.clock.frame_of(self.kernel.now))

    # --- decision and execution ---------------------------------------

    def _decide(self, m: int, now: int) -> None:
        startup = self.startup_left > 0
        explored = False
        if startup:
            action = Action.BACKOFF
        else:
            action = None
            if self.script is not None:
                action = self.script(self.node, self.clock.frame_of(now), m)
                if action is not None:
                    explored = action != self.table.policy[m]
            if action is None:
                rho = self.exploration_rate()
                if rho > 0.0 and self.rng.random() < rho:
                    action = ACTIONS[self.rng.below(3)]
                    explored = True
                else:
                    action = self.table.policy[m]
        if explored:
            self.explored += 1
        self.decisions[m][action] += 1
        self.pending = PendingAction(m, action, now, startup, explored)
        if action == Action.BACKOFF:
            self._schedule(self._next_boundary(now + 1))
        elif action == Action.SEND:
            self._transmit()
        else:
            self.kernel.at(now + self.timing.cca_ticks, self._cca_done, now)

    def _transmit(self) -> None:
        frame = self._start_tx(self.queue[0])
        done = self.kernel.now + self.timing.data_ticks
        if frame.dst != BROADCAST:
            done += self.timing.ack_wait_ticks
        self._schedule(self._next_boundary(done))

    def _cca_done(self, started: int) -> None:
        if self.medium.sensed(self.node, started, self.kernel.now):
            self.pending.outcome = Outcome.CCA_FAILED
            self._schedule(self._next_boundary(started + 1))
        else:
            self.kernel.at(self.kernel.now + self.timing.turnaround_ticks, self._cca_tx, started)

    def _cca_tx(self, started: int) -> None:
        if self.medium.transmitting(self.node, self.kernel.now):
            self.pending.outcome = Outcome.CCA_FAILED
            self._schedule(self._next_boundary(self.kernel.now))
            return
        self._transmit()

    # --- evaluation ----------------------------------------------------

    def _resolve(self, m_next: int) -> None:
        p = self.pending
        self.pending = None
        now = self.kernel.now
        a = p.action
        if a == Action.BACKOFF:
            heard = self.medium.overheard(self.node, p.started, now)
            outcome = Outcome.OVERHEARD if heard else Outcome.QUIET
        elif p.outcome is Outcome.CCA_FAILED:
            outcome = Outcome.CCA_FAILED
        else:
            head = self.queue[0]
            ok = head.dst == BROADCAST or self._acked
            outcome = Outcome.TX_SUCCESS if ok else Outcome.TX_FAILED
        r = compute_reward(a, outcome)
        self.reward_counts[r] = self.reward_counts.get(r, 0) + 1
        changed = self.table.update(p.subslot, a, r, m_next)
        if p.startup:
            if self.medium.sensed(self.node, p.started, p.started + self.clock.S):
                changed |= self.table.update(p.subslot, Action.CCA, STARTUP_CCA_PENALTY, m_next)
                changed |= self.table.update(p.subslot, Action.SEND, STARTUP_SEND_PENALTY, m_next)
            self.startup_left -= 1
        if changed:
            self.last_policy_change = self.clock.frame_of(now)
        if self.trace is not None:
            self.trace.append((self.clock.frame_of(p.started), p.subslot, a, p.explored, r))
        if outcome in (Outcome.TX_SUCCESS, Outcome.TX_FAILED):
            self._tx_done(outcome is Outcome.TX_SUCCESS)
