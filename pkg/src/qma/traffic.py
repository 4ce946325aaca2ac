"""Traffic sources, static routing and the simplified GTS handshake workload."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Callable, Sequence

from .engine import BROADCAST, Topology

REQUEST = "request"
RESPONSE = "response"
NOTIFY = "notify"
ROLES = (REQUEST, RESPONSE, NOTIFY)


class Packet:
    """One MAC service data unit; forwarded copies share ``uid``."""

    __slots__ = ("uid", "origin", "created", "dst", "final", "role", "session")

    def __init__(self, uid: int, origin: int, created: int, dst: int, final: int,
                 role: str | None = None, session=None):
        self.uid = uid
        self.origin = origin
        self.created = created
        self.dst = dst
        self.final = final
        self.role = role
        self.session = session

    def hop(self, dst: int) -> "Packet":
        return Packet(self.uid, self.origin, self.created, dst, self.final, self.role, self.session)

    def __repr__(self) -> str:
        return f"Packet(uid={self.uid}, {self.origin}->{self.final}, role={self.role})"


# --- arrival processes ---------------------------------------------------

def poisson_arrivals(rate: float, budget: int, start: float, rng) -> list[float]:
    """Generation times (seconds) of ``budget`` Poisson arrivals after ``start``."""
    if rate <= 0:
        raise ValueError("rate must be > 0")
    if budget < 0:
        raise ValueError("budget must be >= 0")
    t = start
    out = []
    mean = 1.0 / rate
    for _ in range(budget):
        t += rng.exponential(mean)
        out.append(t)
    return out


def alternating_arrivals(rates: Sequence[float], phase: float, budget: int, start: float,
                         rng) -> list[float]:
    """Poisson arrivals whose rate cycles through ``rates`` every ``phase`` seconds.

    Thanks to memorylessness the gap drawn across a phase boundary is simply
    redrawn from the boundary with the new rate.
    """
    if not rates or any(r <= 0 for r in rates):
        raise ValueError("rates must be > 0")
    if phase <= 0:
        raise ValueError("phase length must be > 0")
    out: list[float] = []
    t = start
    k = 0
    while len(out) < budget:
        boundary = start + (k + 1) * phase
        nxt = t + rng.exponential(1.0 / rates[k % len(rates)])
        if nxt < boundary:
            out.append(nxt)
            t = nxt
        else:
            t = boundary
            k += 1
    return out


def rate_at(rates: Sequence[float], phase: float, start: float, t: float) -> float:
    if t < start:
        return 0.0
    return rates[int((t - start) // phase) % len(rates)]


# --- geometry and routing -------------------------------------------------

def ring_sizes(rings: int) -> list[int]:
    return [6 * 2 ** (k - 1) for k in range(1, rings + 1)]


def concentric_positions(rings: int, spacing: float = 10.0) -> list[tuple[float, float]]:
    """Centre node plus ``rings`` rings; ring k holds 6*2^(k-1) evenly spaced nodes."""
    if rings < 0:
        raise ValueError("rings must be >= 0")
    pos = [(0.0, 0.0)]
    for k, n in enumerate(ring_sizes(rings), start=1):
        r = k * spacing
        for j in range(n):
            a = 2 * math.pi * j / n
            pos.append((round(r * math.cos(a), 9), round(r * math.sin(a), 9)))
    return pos


def routing_tree(topology: Topology, sink: int) -> list[int | None]:
    """Shortest-hop parent of every node toward ``sink``.

    Among equally short parents the geometrically closest wins, then the lower
    id, so the tree is a pure function of the geometry.
    """
    n = len(topology)
    if not 0 <= sink < n:
        raise ValueError(f"sink {sink} is not a node")
    hops = [None] * n
    hops[sink] = 0
    frontier = deque([sink])
    while frontier:
        u = frontier.popleft()
        for v in topology.reach[u]:
            if hops[v] is None:
                hops[v] = hops[u] + 1
                frontier.append(v)
    missing = [i for i in range(n) if hops[i] is None]
    if missing:
        raise ValueError(f"topology is disconnected: nodes {missing} cannot reach sink {sink}")
    parents: list[int | None] = [None] * n
    for v in range(n):
        if v == sink:
            continue
        cands = [u for u in topology.reach[v] if hops[u] == hops[v] - 1]
        parents[v] = min(cands, key=lambda u: (topology.distance(u, v), u))
    return parents


# --- GTS handshake -------------------------------------------------------

@dataclass
class Session:
    sid: int
    initiator: int
    responder: int
    kind: str            # "alloc", "dealloc" or "rollback"
    stage: str = REQUEST
    started: int = 0
    done: bool = False


@dataclass
class HandshakeStats:
    started: int = 0
    completed: int = 0
    aborted: int = 0
    rollbacks: int = 0
    allocations: int = 0
    deallocations: int = 0


class HandshakeWorkload:
    """Three-way (de)allocation sessions driven by fluctuating GTS demand.

    Each non-sink node wants one GTS per packet/s of its current primary rate
    toward its parent. A rate switch queues the difference as allocation or
    deallocation sessions; a node runs one session at a time as initiator.
    ``emit(node, packet)`` hands a message to the node's MAC.
    """

    def __init__(self, parents: list[int | None], rates: Sequence[float], phase_ticks: int,
                 emit: Callable[[int, Packet], None], schedule: Callable, now: Callable[[], int],
                 rngs, new_uid: Callable[[], int], timeout_ticks: int, retry_ticks: int):
        self.parents = parents
        self.rates = list(rates)
        self.phase_ticks = phase_ticks
        self.emit = emit
        self.schedule = schedule
        self.now = now
        self.rngs = rngs
        self.new_uid = new_uid
        self.timeout = timeout_ticks
        self.retry = retry_ticks
        n = len(parents)
        self.backlog: list[deque] = [deque() for _ in range(n)]
        self.active: list[Session | None] = [None] * n
        self.granted = [0] * n
        self.target = [0] * n
        self.awaiting_notify: dict[int, Session] = {}
        self.seen: set[tuple[int, str]] = set()
        self.stats = HandshakeStats()
        self._sid = 0
        self._phase = 0
        self.stopped = False

    # --- demand ----------------------------------------------------------

    def start(self, at: int) -> None:
        self.schedule(at, self._switch)

    def _switch(self, _=None) -> None:
        if self.stopped:
            return
        rate = self.rates[self._phase % len(self.rates)]
        self._phase += 1
        want = int(round(rate))
        for node, parent in enumerate(self.parents):
            if parent is None:
                continue
            delta = want - self.target[node]
            self.target[node] = want
            kind = "alloc" if delta > 0 else "dealloc"
            for _ in range(abs(delta)):
                self.backlog[node].append(kind)
            self._try_start(node)
        self.schedule(self.now() + self.phase_ticks, self._switch)

    def _try_start(self, node: int, _=None) -> None:
        if self.stopped or self.active[node] is not None or not self.backlog[node]:
            return
        kind = self.backlog[node].popleft()
        partner = self.parents[node]
        if isinstance(kind, tuple):
            kind, partner = kind
        self._sid += 1
        s = Session(self._sid, node, partner, kind, REQUEST, self.now())
        self.active[node] = s
        self.stats.started += 1
        if kind == "rollback":
            self.stats.rollbacks += 1
        self._send(node, s, REQUEST, partner, partner)

    def _send(self, node: int, s: Session, role: str, dst: int, final: int) -> None:
        pkt = Packet(self.new_uid(), node, self.now(), dst, final, role, s)
        self.emit(node, pkt)

    def _end(self, node: int, s: Session, completed: bool) -> None:
        if self.active[node] is s:
            self.active[node] = None
        if s.done:
            return
        s.done = True
        if completed:
            self.stats.completed += 1
        else:
            self.stats.aborted += 1
        self.schedule(self.now(), lambda _: self._try_start(node))

    def _rollback(self, node: int, s: Session, partner: int) -> None:
        """Undo a half-finished allocation, then retry the original request."""
        if s.kind != "rollback":
            self.backlog[node].appendleft(s.kind)
            self.backlog[node].appendleft(("rollback", partner))

    # --- MAC callbacks --------------------------------------------------------

    def on_receive(self, node: int, pkt: Packet) -> None:
        s: Session = pkt.session
        key = (s.sid, pkt.role)
        if pkt.final != node or key in self.seen:
            return
        self.seen.add(key)
        if pkt.role == REQUEST:
            s.stage = RESPONSE
            self._send(node, s, RESPONSE, BROADCAST, s.initiator)
            self.awaiting_notify[s.sid] = s
            self.schedule(self.now() + self.timeout, lambda _: self._notify_timeout(s))
        elif pkt.role == RESPONSE:
            if self.active[s.initiator] is s and s.stage == RESPONSE:
                s.stage = NOTIFY
                self._send(node, s, NOTIFY, BROADCAST, s.responder)
        elif pkt.role == NOTIFY:
            if self.awaiting_notify.pop(s.sid, None) is not None:
                if s.kind == "alloc":
                    self.stats.allocations += 1
                elif s.kind == "dealloc":
                    self.stats.deallocations += 1

    def on_sent(self, node: int, pkt: Packet) -> None:
        s: Session = pkt.session
        if pkt.role == REQUEST and self.active[node] is s:
            self.schedule(self.now() + self.timeout, lambda _: self._response_timeout(s))
        elif pkt.role == NOTIFY and self.active[node] is s:
            self._end(node, s, completed=True)

    def on_dropped(self, node: int, pkt: Packet) -> None:
        s: Session = pkt.session
        if pkt.role == REQUEST and self.active[node] is s:
            # nothing was allocated yet: just try again later
            self.backlog[node].appendleft(s.kind if s.kind != "rollback" else ("rollback", s.responder))
            self.active[node] = None
            if not s.done:
                s.done = True
                self.stats.aborted += 1
            delay = int(self.rngs(node).random() * self.retry)
            self.schedule(self.now() + delay, lambda _: self._try_start(node))
        elif pkt.role == NOTIFY and self.active[node] is s:
            self._rollback(node, s, s.responder)
            self._end(node, s, completed=False)

    def _response_timeout(self, s: Session) -> None:
        node = s.initiator
        if self.active[node] is s and s.stage != NOTIFY:
            self._rollback(node, s, s.responder)
            self._end(node, s, completed=False)

    def _notify_timeout(self, s: Session) -> None:
        if self.awaiting_notify.pop(s.sid, None) is not None and s.kind != "rollback":
            # the responder reserved a slot that was never confirmed
            self.backlog[s.responder].append(("rollback", s.initiator))
            self._try_start(s.responder)
