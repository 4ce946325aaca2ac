"""Run metrics, packet-fate accounting, statistics and file export."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from scipy import stats

from .qcore import QTable

SCHEMA_VERSION = 1
CONVERGENCE_FRAMES = 50
FATES = ("delivered", "retry_dropped", "backoff_dropped", "queue_dropped", "broadcast_lost",
         "in_flight")


def cumulative_q(table: QTable) -> float:
    """Sum of Q-values along the current policy."""
    return table.cumulative()


def confidence_interval(samples: Sequence[float], level: float = 0.95) -> tuple[float, float | None]:
    """Mean and Student-t half-width; the half-width is None for a single sample."""
    n = len(samples)
    if n == 0:
        raise ValueError("need at least one sample")
    mean = math.fsum(samples) / n
    if n == 1:
        return mean, None
    var = math.fsum((x - mean) ** 2 for x in samples) / (n - 1)
    q = stats.t.ppf(0.5 + level / 2, n - 1)
    return mean, float(q * math.sqrt(var / n))


def rolling_average(series: Sequence[float], window: int) -> list[float]:
    """Trailing mean over ``window`` points; the prefix uses what is available."""
    if window < 1:
        raise ValueError("window must be >= 1")
    # fsum per window: a running sum drifts once large and small values mix
    return [math.fsum(series[max(0, i + 1 - window):i + 1]) / min(i + 1, window)
            for i in range(len(series))]


# --- packet fates ---------------------------------------------------------

class PacketLedger:
    """Tracks every generated packet until it is delivered, dropped or lost.

    Delivery wins over any drop of a duplicate copy, e.g. when the ACK of a
    delivered frame was lost and the sender later gave up.
    """

    def __init__(self):
        self.origin: dict[int, int] = {}
        self.created: dict[int, int] = {}
        self.role: dict[int, str | None] = {}
        self.delivered_at: dict[int, int] = {}
        self.drop: dict[int, str] = {}
        self.copies: dict[int, int] = {}

    def generated(self, pkt) -> None:
        if pkt.uid in self.origin:
            raise ValueError(f"packet {pkt.uid} generated twice")
        self.origin[pkt.uid] = pkt.origin
        self.created[pkt.uid] = pkt.created
        self.role[pkt.uid] = pkt.role
        self.copies[pkt.uid] = 0

    def queued(self, pkt) -> None:
        self.copies[pkt.uid] += 1

    def left_queue(self, pkt) -> None:
        self.copies[pkt.uid] -= 1

    def delivered(self, pkt, tick: int) -> bool:
        if pkt.uid in self.delivered_at:
            return False
        self.delivered_at[pkt.uid] = tick
        return True

    def dropped(self, pkt, reason: str) -> None:
        self.drop.setdefault(pkt.uid, reason)

    def fate(self, uid: int) -> str:
        if uid in self.delivered_at:
            return "delivered"
        if self.copies[uid] > 0:
            return "in_flight"
        if uid in self.drop:
            return f"{self.drop[uid]}_dropped"
        return "broadcast_lost"

    def summary(self, uids: Iterable[int]) -> dict[str, int]:
        out = {f: 0 for f in FATES}
        n = 0
        for uid in uids:
            out[self.fate(uid)] += 1
            n += 1
        out["generated"] = n
        if sum(out[f] for f in FATES) != n:
            raise AssertionError("packet conservation violated")
        return out


# --- records --------------------------------------------------------------

@dataclass
class NodeMetrics:
    node: int
    name: str
    mac: str
    generated: int = 0
    delivered: int = 0
    fates: dict = field(default_factory=dict)
    pdr: float | None = None
    mean_delay_s: float | None = None
    delays_s: list = field(default_factory=list)
    mean_queue: float | None = None
    tx_attempts: int = 0
    explored: int = 0
    queue_series: list = field(default_factory=list)
    cumq_series: list = field(default_factory=list)
    rho_series: list = field(default_factory=list)
    utilization: list | None = None
    final_policy: list | None = None
    last_policy_change: int | None = None
    converged: bool | None = None


@dataclass
class MetricsRecord:
    scenario: str
    mac: str
    seed: int
    frames: int
    sim_seconds: float
    nodes: list
    aggregate: dict
    handshake: dict | None = None
    schema: int = SCHEMA_VERSION

    @property
    def pdr(self) -> float | None:
        return self.aggregate.get("pdr")

    def node(self, name: str) -> NodeMetrics:
        for n in self.nodes:
            if n.name == name:
                return n
        raise KeyError(name)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1, allow_nan=False)

    def series_csv(self) -> str:
        """Per-frame series of every node, one row per (frame, node)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["frame", "node", "queue_level", "cumulative_q", "rho"])
        for n in self.nodes:
            qs, cq, rho = n.queue_series, n.cumq_series, n.rho_series
            for f in range(len(qs)):
                w.writerow([f, n.name, qs[f],
                            _fmt(cq[f]) if f < len(cq) else "",
                            _fmt(rho[f]) if f < len(rho) else ""])
        return buf.getvalue()

    def basename(self) -> str:
        return f"{self.scenario}_{self.mac}_{self.seed}"

    def write(self, directory: str | Path, formats: Sequence[str] = ("json", "csv")) -> list[Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        written = []
        if "json" in formats:
            p = d / f"{self.basename()}.json"
            p.write_text(self.to_json() + "\n", encoding="utf-8")
            written.append(p)
        if "csv" in formats:
            p = d / f"{self.basename()}.csv"
            p.write_bytes(self.series_csv().encode("utf-8"))
            written.append(p)
        return written


def _fmt(x: float) -> str:
    return repr(float(x))


def is_converged(last_change: int | None, final_frame: int, window: int = CONVERGENCE_FRAMES) -> bool:
    """Policy unchanged for ``window`` frames at the end of the run."""
    start = 0 if last_change is None else last_change + 1
    return final_frame - start >= window


def policy_conflicts(policies: dict[int, Sequence[int]], pairs: Iterable[tuple[int, int]],
                     airtime_subslots: int = 2, wrap: bool = True) -> list[tuple[int, int, int, str]]:
    """Subslot clashes between interfering nodes' final policies.

    Returns (node_a, node_b, subslot, kind) tuples: ``same`` when both select a
    transmit action in one subslot, ``airtime`` when one node's QSend starts
    while the other's frame is still on the air. Set ``wrap=False`` when dead
    time separates consecutive CAPs, so nothing spills into the next frame.
    """
    out = []
    for a, b in pairs:
        pa, pb = policies[a], policies[b]
        M = len(pa)
        for m in range(M):
            if pa[m] != 0 and pb[m] != 0:
                out.append((a, b, m, "same"))
        for x, y, px, py in ((a, b, pa, pb), (b, a, pb, pa)):
            for m in range(M):
                if px[m] == 0:
                    continue
                for k in range(1, airtime_subslots):
                    j = m + k
                    if j >= M and not wrap:
                        break
                    if py[j % M] == 2:
                        out.append((x, y, j % M, "airtime"))
    return out
