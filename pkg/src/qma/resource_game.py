"""Two-agent shared-resource game for the cooperative update rule.

Each frame the agents step through ``states`` decision points. Per state an
agent either acquires the resource or waits. Global reward, shared by both
agents: +1 if exactly one acquires, -1 if both do, 0 if none does. With
probability ``p_idle`` an agent that chose to acquire has nothing to do in that
state and effectively waits, which is the source of stochastic rewards.

Convergence means that no state has both policies on acquire for
``STABLE_FRAMES`` consecutive frames. Short relapses afterwards, caused by a
lucky acquisition while the owner is idle, are counted in ``locked_frames``.

The agents learn with the same cooperative max-update, penalty and policy
table the MAC uses, so this doubles as a brute-force check of those rules.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qcore import LearningParams, QTable

WAIT = 0
ACQUIRE = 1


STABLE_FRAMES = 50


@dataclass
class GameResult:
    lock_in_states: int          # states in mutual acquisition after the last frame
    converged_at: int | None     # first frame of a lock-free stretch of STABLE_FRAMES
    locked_frames: int           # frames that ended with some state in mutual acquisition
    policies: list[list[int]]

    @property
    def converged(self) -> bool:
        return self.converged_at is not None


def _reward(acquired0: bool, acquired1: bool) -> int:
    if acquired0 and acquired1:
        return -1
    if acquired0 or acquired1:
        return 1
    return 0


def solo_table(states: int, params: LearningParams) -> QTable:
    """Table of an agent that has only ever used the resource on its own."""
    t = QTable(states, params, fixed_point=False)
    for s in range(states):
        t.values[s][WAIT] = 0.0
        t.values[s][ACQUIRE] = 1.0
        t.policy[s] = ACQUIRE
    return t


def play(xi: float, seed: int, frames: int = 500, states: int = 4,
         epsilon: float = 0.1, p_idle: float = 0.1, q_init: float = -10.0,
         start: str = "solo") -> GameResult:
    """Run one seeded episode and report mutual-acquire lock-in at the end.

    ``start="solo"`` lets two agents meet that each learned to acquire while
    alone, so every state begins in mutual acquisition; ``start="fresh"``
    starts both from the initial table.
    """
    params = LearningParams(alpha=1.0, gamma=0.0, xi=xi, q_init=q_init)
    rng = np.random.default_rng(seed)
    if start == "solo":
        tables = [solo_table(states, params) for _ in range(2)]
    elif start == "fresh":
        # action index 0 (wait) doubles as the safe default policy
        tables = [QTable(states, params, fixed_point=False) for _ in range(2)]
    else:
        raise ValueError(f"unknown start {start!r}")
    converged_at = None
    streak = 0
    locked_frames = 0
    for frame in range(frames):
        for s in range(states):
            explore = rng.random(2) < epsilon
            random_pick = rng.integers(0, 2, size=2)
            idle = rng.random(2) < p_idle
            chosen = [int(random_pick[k]) if explore[k] else int(tables[k].policy[s])
                      for k in range(2)]
            acquired = [chosen[k] == ACQUIRE and not idle[k] for k in range(2)]
            r = _reward(*acquired)
            nxt = (s + 1) % states
            for k in range(2):
                tables[k].update(s, chosen[k], r, nxt)
        if _lock_count(tables):
            locked_frames += 1
            streak = 0
        else:
            streak += 1
            if streak == STABLE_FRAMES and converged_at is None:
                converged_at = frame + 1 - STABLE_FRAMES
    policies = [[int(a) for a in t.policy] for t in tables]
    return GameResult(lock_in_states=_lock_count(tables), converged_at=converged_at,
                      locked_frames=locked_frames, policies=policies)


def _lock_count(tables: list[QTable]) -> int:
    p0, p1 = tables[0].policy, tables[1].policy
    return sum(1 for s in range(len(p0)) if p0[s] == ACQUIRE and p1[s] == ACQUIRE)


def convergence_rate(xi: float, seeds: range | list[int], **kw) -> float:
    """Fraction of seeds that settle into a lock-free joint policy."""
    results = [play(xi, s, **kw) for s in seeds]
    return sum(r.converged for r in results) / len(results)


def lock_in_rate(xi: float, seeds: range | list[int], **kw) -> float:
    """Fraction of seeds still in mutual acquisition after the last frame."""
    results = [play(xi, s, **kw) for s in seeds]
    return sum(r.lock_in_states > 0 for r in results) / len(results)
