"""Discrete-event kernel and unit-disk radio medium.

Time is an integer tick of one symbol (62.5 ksymbol/s on the 2.4 GHz O-QPSK
PHY). Frames are CAPs of ``M`` subslots, optionally followed by dead time
standing in for the contention-free period.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass
from itertools import count
from typing import Callable

SYMBOL_RATE = 62_500
BROADCAST = -1

DATA = 0
ACK = 1

# event priorities at equal ticks: finished transmissions are settled first
PRIO_MEDIUM = 0
PRIO_MAC = 1
PRIO_SAMPLE = 2


@dataclass(frozen=True)
class RadioTiming:
    """Tick-level radio constants, all in symbols.

    The defaults size a subslot so that a maximum-length frame (133 bytes on
    air, 266 symbols) takes exactly two subslots and frame + turnaround + ACK
    fit in three.
    """

    subslot_ticks: int = 133
    data_ticks: int = 266
    ack_ticks: int = 22
    turnaround_ticks: int = 12
    cca_ticks: int = 8
    ack_wait_ticks: int = 54
    backoff_period_ticks: int = 20

    def __post_init__(self):
        for name in ("subslot_ticks", "data_ticks", "ack_ticks", "cca_ticks",
                     "backoff_period_ticks"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.turnaround_ticks < 0 or self.ack_wait_ticks < 0:
            raise ValueError("turnaround and ACK wait must be >= 0")
        if self.ack_wait_ticks < self.turnaround_ticks + self.ack_ticks:
            raise ValueError("ACK wait must cover turnaround plus ACK airtime")


class Clock:
    """Maps ticks to frames and subslots, skipping CFP dead time."""

    def __init__(self, subslots: int = 54, subslot_ticks: int = 133, dead_ticks: int = 0):
        if subslots < 1 or subslot_ticks < 1 or dead_ticks < 0:
            raise ValueError("invalid clock geometry")
        self.M = subslots
        self.S = subslot_ticks
        self.cap = subslots * subslot_ticks
        self.dead = dead_ticks
        self.period = self.cap + dead_ticks

    @classmethod
    def with_cfp_fraction(cls, subslots: int, subslot_ticks: int, fraction: float) -> "Clock":
        """Dead time such that it makes up ``fraction`` of every period."""
        if not 0.0 <= fraction < 1.0:
            raise ValueError("CFP fraction must lie in [0, 1)")
        cap = subslots * subslot_ticks
        return cls(subslots, subslot_ticks, round(cap * fraction / (1.0 - fraction)))

    def frame_of(self, t: int) -> int:
        return t // self.period

    def subslot_of(self, t: int) -> int | None:
        off = t % self.period
        return off // self.S if off < self.cap else None

    def in_cap(self, t: int) -> bool:
        return t % self.period < self.cap

    def boundary_at_or_after(self, t: int) -> int:
        f, off = divmod(t, self.period)
        if off >= self.cap:
            return (f + 1) * self.period
        k = -(-off // self.S)
        if k >= self.M:
            return (f + 1) * self.period
        return f * self.period + k * self.S

    def cap_advance(self, t: int, delta: int) -> int:
        """Tick reached after ``delta`` ticks of CAP time starting at ``t``."""
        f, off = divmod(t, self.period)
        if off >= self.cap:
            f, off = f + 1, 0
        off += delta
        f += off // self.cap
        off %= self.cap
        return f * self.period + off

    def seconds(self, t: int) -> float:
        return t / SYMBOL_RATE

    @staticmethod
    def ticks(seconds: float) -> int:
        return int(round(seconds * SYMBOL_RATE))


class Topology:
    def __init__(self, positions, comm_range: float, cs_range: float | None = None,
                 names: list[str] | None = None):
        if comm_range <= 0 or (cs_range is not None and cs_range <= 0):
            raise ValueError("ranges must be > 0")
        self.positions = [(float(x), float(y)) for x, y in positions]
        self.comm_range = float(comm_range)
        self.cs_range = float(cs_range if cs_range is not None else comm_range)
        self.names = names or [str(i) for i in range(len(self.positions))]
        n = len(self.positions)
        self.reach = [self._within(i, self.comm_range) for i in range(n)]
        self.sense = [self._within(i, self.cs_range) for i in range(n)]

    def __len__(self) -> int:
        return len(self.positions)

    def distance(self, i: int, j: int) -> float:
        (x1, y1), (x2, y2) = self.positions[i], self.positions[j]
        return math.hypot(x1 - x2, y1 - y2)

    def _within(self, i: int, r: float) -> list[int]:
        eps = 1e-9 * max(r, 1.0)
        return [j for j in range(len(self.positions))
                if j != i and self.distance(i, j) <= r + eps]

    def neighbors(self, i: int) -> list[int]:
        return self.reach[i]


class EventQueue:
    """Min-heap ordered by (tick, priority, insertion sequence)."""

    def __init__(self):
        self._heap: list = []
        self._seq = count()

    def push(self, tick: int, fn: Callable, arg=None, prio: int = PRIO_MAC) -> None:
        heapq.heappush(self._heap, (tick, prio, next(self._seq), fn, arg))

    def pop(self):
        return heapq.heappop(self._heap)

    def __len__(self) -> int:
        return len(self._heap)

    def peek_tick(self) -> int | None:
        return self._heap[0][0] if self._heap else None


class Kernel:
    def __init__(self):
        self.queue = EventQueue()
        self.now = 0
        self.processed = 0

    def at(self, tick: int, fn: Callable, arg=None, prio: int = PRIO_MAC) -> None:
        if tick < self.now:
            raise ValueError(f"cannot schedule into the past ({tick} < {self.now})")
        self.queue.push(tick, fn, arg, prio)

    def run(self, until: int | None = None) -> None:
        q = self.queue
        heap = q._heap
        pop = heapq.heappop
        while heap:
            if until is not None and heap[0][0] > until:
                break
            tick, _, _, fn, arg = pop(heap)
            self.now = tick
            self.processed += 1
            fn(arg)
        if until is not None and self.now < until:
            self.now = until


class Frame:
    __slots__ = ("kind", "src", "dst", "seq", "packet", "queue_level")

    def __init__(self, kind: int, src: int, dst: int, seq: int, packet=None,
                 queue_level: int | None = None):
        self.kind = kind
        self.src = src
        self.dst = dst
        self.seq = seq
        self.packet = packet
        self.queue_level = queue_level


class Transmission:
    __slots__ = ("sender", "frame", "start", "end", "lost")

    def __init__(self, sender: int, frame: Frame, start: int, end: int):
        self.sender = sender
        self.frame = frame
        self.start = start
        self.end = end
        self.lost: list[int] = []


_LOG_HORIZON = 4096


class Medium:
    """Unit-disk channel without capture: any overlap at a receiver loses every frame.

    ``listeners[i]`` is called as ``fn(frame, tx)`` for every frame node ``i``
    decodes.
    """

    def __init__(self, kernel: Kernel, topology: Topology, timing: RadioTiming):
        self.kernel = kernel
        self.topology = topology
        self.timing = timing
        n = len(topology)
        self.incoming: list[list[Transmission]] = [[] for _ in range(n)]
        self.busy_until = [0] * n
        self.sensed_log: list[deque] = [deque() for _ in range(n)]
        self.heard_log: list[deque] = [deque() for _ in range(n)]
        self.listeners: list[Callable | None] = [None] * n
        self.transmissions = 0

    # --- queries -------------------------------------------------------

    def transmitting(self, node: int, t: int) -> bool:
        return self.busy_until[node] > t

    def sensed(self, node: int, a: int, b: int) -> bool:
        """True if a foreign transmission in carrier-sense range overlapped [a, b)."""
        for s, e in self.sensed_log[node]:
            if s < b and e > a:
                return True
        return False

    def overheard(self, node: int, a: int, b: int) -> bool:
        """True if ``node`` decoded a DATA or ACK frame ending in (a, b]."""
        for e in self.heard_log[node]:
            if a < e <= b:
                return True
        return False

    def cca(self, node: int, tick: int) -> bool:
        """Clear-channel result for the CCA window starting at ``tick``."""
        return not self.sensed(node, tick, tick + self.timing.cca_ticks)

    # --- transmissions -------------------------------------------------

    def transmit(self, sender: int, frame: Frame, duration: int) -> Transmission:
        now = self.kernel.now
        if self.busy_until[sender] > now:
            raise RuntimeError(f"node {sender} is already transmitting")
        tx = Transmission(sender, frame, now, now + duration)
        self.transmissions += 1
        # half duplex: whatever the sender was receiving is gone
        for other in self.incoming[sender]:
            if sender not in other.lost:
                other.lost.append(sender)
        for n in self.topology.reach[sender]:
            inc = self.incoming[n]
            if inc:
                tx.lost.append(n)
                for other in inc:
                    if n not in other.lost:
                        other.lost.append(n)
            elif self.busy_until[n] > now:
                tx.lost.append(n)
            inc.append(tx)
        horizon = now - _LOG_HORIZON
        for n in self.topology.sense[sender]:
            log = self.sensed_log[n]
            log.append((now, tx.end))
            while log and log[0][1] < horizon:
                log.popleft()
        self.busy_until[sender] = tx.end
        self.kernel.at(tx.end, self._finish, tx, PRIO_MEDIUM)
        return tx

    def _finish(self, tx: Transmission) -> None:
        horizon = tx.end - _LOG_HORIZON
        for n in self.topology.reach[tx.sender]:
            self.incoming[n].remove(tx)
            if n in tx.lost:
                continue
            log = self.heard_log[n]
            log.append(tx.end)
            while log and log[0] < horizon:
                log.popleft()
            fn = self.listeners[n]
            if fn is not None:
                fn(tx.frame, tx)

    def send_ack(self, receiver: int, data: Frame, data_end: int) -> bool:
        """Schedule the ACK for a decoded unicast frame; False if the radio is busy."""
        start = data_end + self.timing.turnaround_ticks
        if self.busy_until[receiver] > start:
            return False
        ack = Frame(ACK, receiver, data.src, data.seq)
        self.kernel.at(start, self._send_ack, (receiver, ack))
        return True

    def _send_ack(self, arg) -> None:
        receiver, ack = arg
        if self.busy_until[receiver] > self.kernel.now:
            return
        self.transmit(receiver, ack, self.timing.ack_ticks)
