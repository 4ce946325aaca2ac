"""Tabular Q-learning primitives used by the QMA agents.

Everything here is radio-agnostic: the update rules, the penalty for
stochastic environments, the separately maintained policy table and an
8-bit fractional fixed-point representation for FPU-less targets.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

R_MAX = 4  # largest local reward (successful QSend)


class Action(IntEnum):
    """QMA action set; the integer order is also the argmax tie-break order."""

    BACKOFF = 0
    CCA = 1
    SEND = 2

    @property
    def short(self) -> str:
        return "BCS"[self]


ACTIONS = (Action.BACKOFF, Action.CCA, Action.SEND)


@dataclass(frozen=True)
class LearningParams:
    alpha: float = 0.5
    gamma: float = 0.9
    xi: float = 2.0
    q_init: float = -10.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.xi < 0:
            raise ValueError(f"xi must be >= 0, got {self.xi}")

    @property
    def q_ceiling(self) -> float:
        if self.gamma >= 1.0:
            return float("inf")
        return R_MAX / (1.0 - self.gamma)


def bellman_update(q: float, r: float, max_next: float, p: LearningParams) -> float:
    """(1 - alpha) * q + alpha * (r + gamma * max_next)."""
    return (1.0 - p.alpha) * q + p.alpha * (r + p.gamma * max_next)


def penalized_update(q: float, r: float, max_next: float, p: LearningParams) -> float:
    """Bellman update that may lower a stored value by at most ``xi`` per step."""
    return max(q - p.xi, bellman_update(q, r, max_next, p))


class FloatArith:
    """Q-value arithmetic on Python floats."""

    fixed_point = False

    def __init__(self, params: LearningParams):
        self.params = params

    def encode(self, value: float) -> float:
        return float(value)

    def decode(self, raw: float) -> float:
        return raw

    def bellman(self, q: float, r: int, max_next: float) -> float:
        return bellman_update(q, r, max_next, self.params)

    def penalize(self, q: float) -> float:
        return q - self.params.xi


class FixedArith:
    """Signed fixed-point Q arithmetic with ``frac_bits`` fractional bits.

    Multiplications by alpha and gamma are integer multiply + arithmetic shift,
    so alpha=0.5 reduces to a right shift by one. Rounding is toward -inf,
    which keeps every stored value at or below its real-valued counterpart.
    """

    fixed_point = True

    def __init__(self, params: LearningParams, frac_bits: int = 8):
        self.params = params
        self.frac_bits = frac_bits
        self.one = 1 << frac_bits
        self.alpha_fx = round(params.alpha * self.one)
        self.gamma_fx = round(params.gamma * self.one)
        self.xi_fx = round(params.xi * self.one)

    def encode(self, value: float) -> int:
        return int(round(value * self.one))

    def decode(self, raw: int) -> float:
        return raw / self.one

    def bellman(self, q: int, r: int, max_next: int) -> int:
        fb = self.frac_bits
        target = (r << fb) + ((self.gamma_fx * max_next) >> fb)
        return q + ((self.alpha_fx * (target - q)) >> fb)

    def penalize(self, q: int) -> int:
        return q - self.xi_fx


class QTable:
    """Per-node Q-values indexed by (subslot, action) plus the policy table."""

    def __init__(self, subslots: int, params: LearningParams | None = None,
                 fixed_point: bool = True, frac_bits: int = 8):
        if subslots < 1:
            raise ValueError("a Q-table needs at least one subslot")
        self.params = params or LearningParams()
        self.arith = FixedArith(self.params, frac_bits) if fixed_point else FloatArith(self.params)
        init = self.arith.encode(self.params.q_init)
        self.values = [[init, init, init] for _ in range(subslots)]
        self.policy = [Action.BACKOFF] * subslots

    @property
    def subslots(self) -> int:
        return len(self.values)

    def q(self, m: int, a: int) -> float:
        return self.arith.decode(self.values[m][a])

    def row(self, m: int) -> tuple[float, float, float]:
        dec = self.arith.decode
        return tuple(dec(v) for v in self.values[m])

    def max_raw(self, m: int):
        return max(self.values[m])

    def update(self, m: int, a: int, reward: int, next_m: int) -> bool:
        """Apply one learning step for action ``a`` taken in subslot ``m``.

        ``next_m`` is the subslot in which the next decision is made. Returns
        True when the policy entry for ``m`` changed.
        """
        row = self.values[m]
        current = row[a]
        candidate = self.arith.bellman(current, reward, max(self.values[next_m]))
        penalized = self.arith.penalize(current)
        row[a] = candidate if candidate > penalized else penalized
        before = self.policy[m]
        maybe_update_policy(self, m, candidate, current)
        return self.policy[m] != before

    def cumulative(self) -> float:
        dec = self.arith.decode
        return sum(dec(self.values[m][self.policy[m]]) for m in range(len(self.values)))

    def as_floats(self) -> list[list[float]]:
        dec = self.arith.decode
        return [[dec(v) for v in row] for row in self.values]


def argmax_action(table: QTable, m: int) -> Action:
    """Best action in subslot ``m``; ties go to the safest action."""
    row = table.values[m]
    best = 0
    for a in (1, 2):
        if row[a] > row[best]:
            best = a
    return ACTIONS[best]


def maybe_update_policy(table: QTable, m: int, candidate_q, current_q) -> QTable:
    """Re-derive policy[m] only if the update strictly improved the taken action.

    Must be called after the new Q-value has been written. The current policy
    is kept whenever it is still among the maxima, so duplicate optima never
    cause a switch.
    """
    if candidate_q > current_q:
        row = table.values[m]
        keep = table.policy[m]
        if row[keep] < max(row):
            table.policy[m] = argmax_action(table, m)
    return table

