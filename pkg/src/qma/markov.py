"""Absorbing Markov chain of the DSME 3-way GTS handshake.

States 0/3/4/5 are the GTS-request attempts, 1/6/7/8 the GTS-response
attempts and 2/9/10/11 the GTS-notify attempts. A success moves on to the next
message; a failure moves to the next retry, and the last retry of a message
falls back to a fresh request (rollback).

Two variants are provided:

``"published"``
    reproduces the tabulated expected message counts (41.788... at p=0.1).
    In this chain the third GTS-notify attempt (state 10) terminates the
    handshake whatever its outcome, i.e. entry Q[10][11] is absent.
``"displayed"``
    the 12x12 matrix exactly as typeset, where the notify has four attempts
    and a final failure rolls back to the request.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VARIANTS = ("published", "displayed")

# (row, column, "p" | "q") where q stands for 1 - p
_DISPLAYED_ENTRIES = (
    (0, 1, "p"), (0, 3, "q"),
    (1, 2, "p"), (1, 6, "q"),
    (2, 9, "q"),
    (3, 1, "p"), (3, 4, "q"),
    (4, 1, "p"), (4, 5, "q"),
    (5, 0, "q"), (5, 1, "p"),
    (6, 2, "p"), (6, 7, "q"),
    (7, 2, "p"), (7, 8, "q"),
    (8, 0, "q"), (8, 2, "p"),
    (9, 10, "q"),
    (10, 11, "q"),
    (11, 0, "q"),
)

TRANSIENT_STATES = 12
START_STATE = 0


@dataclass
class AbsorbingChain:
    Q: np.ndarray
    R: np.ndarray
    p: float
    variant: str = "published"

    @property
    def t(self) -> int:
        return self.Q.shape[0]


def _check_p(p: float) -> float:
    p = float(p)
    if not 0.0 < p <= 1.0:
        raise ValueError(f"success probability must lie in (0, 1], got {p}")
    return p


def build_chain(p: float, variant: str = "published") -> AbsorbingChain:
    p = _check_p(p)
    if variant not in VARIANTS:
        raise ValueError(f"unknown chain variant {variant!r}; expected one of {VARIANTS}")
    Q = np.zeros((TRANSIENT_STATES, TRANSIENT_STATES))
    for i, j, kind in _DISPLAYED_ENTRIES:
        if variant == "published" and (i, j) == (10, 11):
            continue
        Q[i, j] += p if kind == "p" else 1.0 - p
    R = 1.0 - Q.sum(axis=1, keepdims=True)
    R[np.abs(R) < 1e-15] = 0.0
    return AbsorbingChain(Q=Q, R=R, p=p, variant=variant)


def solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Gaussian elimination with partial pivoting for a small dense system."""
    a = np.array(a, dtype=float)
    x = np.array(b, dtype=float)
    n = a.shape[0]
    scale = np.abs(a).max() or 1.0
    for k in range(n):
        piv = k + int(np.argmax(np.abs(a[k:, k])))
        if abs(a[piv, k]) <= 1e-14 * scale:
            raise ValueError("singular system: the chain has no reachable absorbing state")
        if piv != k:
            a[[k, piv]] = a[[piv, k]]
            x[[k, piv]] = x[[piv, k]]
        for i in range(k + 1, n):
            f = a[i, k] / a[k, k]
            if f:
                a[i, k:] -= f * a[k, k:]
                x[i] -= f * x[k]
    for k in range(n - 1, -1, -1):
        x[k] = (x[k] - a[k, k + 1:] @ x[k + 1:]) / a[k, k]
    return x


def expected_steps(chain: AbsorbingChain) -> np.ndarray:
    """Expected number of steps until absorption from every transient state."""
    t = chain.t
    return solve(np.eye(t) - chain.Q, np.ones(t))


def expected_messages(p: float, variant: str = "published") -> float:
    """Expected messages sent until one GTS is allocated."""
    return float(expected_steps(build_chain(p, variant))[START_STATE])


def expected_table(ps, variant: str = "published") -> list[tuple[float, float]]:
    return [(float(p), expected_messages(p, variant)) for p in ps]


def _attempts(rng: np.random.Generator, p: float, n: int, limit: int) -> tuple[np.ndarray, np.ndarray]:
    """Attempts spent on one message with at most ``limit`` tries, and success flags."""
    first_success = rng.geometric(p, size=n)
    ok = first_success <= limit
    return np.where(ok, first_success, limit), ok


def _handshake_totals(p: float, episodes: int, rng: np.random.Generator,
                      variant: str) -> np.ndarray:
    p = _check_p(p)
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    if variant not in VARIANTS:
        raise ValueError(f"unknown chain variant {variant!r}")
    notify_limit = 3 if variant == "published" else 4
    notify_terminal = variant == "published"

    total = np.zeros(episodes, dtype=np.int64)
    active = np.arange(episodes)
    while active.size:
        n = active.size
        # a dropped request rolls back to a new request, so requests are simply
        # repeated until one gets through
        total[active] += rng.geometric(p, size=n)

        used, ok = _attempts(rng, p, n, 4)
        total[active] += used
        rolled_back = active[~ok]
        at_notify = active[ok]

        used, ok = _attempts(rng, p, at_notify.size, notify_limit)
        total[at_notify] += used
        if notify_terminal:
            active = rolled_back
        else:
            active = np.concatenate([rolled_back, at_notify[~ok]])
    return total


def simulate_handshake_oracle(p: float, episodes: int, rng: np.random.Generator,
                              variant: str = "published") -> float:
    """Monte-Carlo estimate of the mean messages per completed handshake.

    Plays the retry/rollback automaton directly (request, response, notify
    with four tries each, rollback to a fresh request on a dropped message)
    without going through the transition matrix.
    """
    return float(_handshake_totals(p, episodes, rng, variant).mean())


def simulate_handshake_stats(p: float, episodes: int, rng: np.random.Generator,
                             variant: str = "published") -> tuple[float, float]:
    """Monte-Carlo mean and its standard error."""
    totals = _handshake_totals(p, episodes, rng, variant)
    if episodes < 2:
        return float(totals.mean()), float("nan")
    return float(totals.mean()), float(totals.std(ddof=1) / np.sqrt(episodes))
