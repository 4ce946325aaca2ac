"""Scripted three-node, four-subslot walkthrough run through the real engine.

Three mutually audible nodes n1..n3 always have a packet for their successor.
n3 starts with a four-subslot cautious startup. The exploratory actions below
are forced; every other decision follows the node's own policy with
exploration switched off. Subslots are short enough that every action is
resolved at the next subslot boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

from .engine import Clock, Kernel, Medium, RadioTiming, Topology
from .mac import QmaConfig, QmaMac
from .qcore import Action, LearningParams
from .traffic import Packet

B, C, S = Action.BACKOFF, Action.CCA, Action.SEND
NAMES = ("n1", "n2", "n3")
SUBSLOTS = 4
FRAMES = 3
PARAMS = LearningParams(alpha=1.0, gamma=1.0, xi=2.0, q_init=-10.0)
TIMING = RadioTiming(subslot_ticks=240, data_ticks=60, ack_ticks=22, turnaround_ticks=12,
                     cca_ticks=8, ack_wait_ticks=54, backoff_period_ticks=20)
STARTUP = (0, 0, SUBSLOTS)

# (node, frame, subslot) -> forced action; frames and subslots count from 0
FORCED = {
    (0, 0, 0): S, (0, 0, 1): B, (0, 0, 2): S, (0, 0, 3): B,
    (1, 0, 0): C, (1, 0, 1): B, (1, 0, 2): S, (1, 0, 3): S,
    (2, 1, 1): C,
}

# values read off the walkthrough: (frame, node, subslot, action) -> Q after that frame
CHECKPOINTS = {
    (0, 0, 0, S): -6, (0, 1, 0, C): -9, (0, 2, 0, B): -8, (0, 2, 0, C): -12, (0, 2, 0, S): -12,
    (0, 0, 2, S): -12, (0, 1, 2, S): -12, (0, 2, 2, C): -12, (0, 2, 2, S): -12,
    (0, 1, 3, S): -5, (0, 0, 3, B): -4, (0, 2, 3, B): -6,
    (1, 2, 1, C): -7, (1, 0, 1, B): -8, (1, 1, 1, B): -8,
    (1, 0, 2, B): -4, (1, 1, 2, B): -5, (1, 2, 2, B): -6,
    (2, 2, 0, B): -5, (2, 0, 1, B): -2, (2, 1, 1, B): -3, (2, 2, 1, C): -3, (2, 2, 3, B): -3,
}
FINAL_POLICY = (
    (S, B, B, B),
    (C, B, B, S),
    (B, C, B, B),
)


@dataclass
class ReplayResult:
    snapshots: list          # per frame: per node: M rows of 3 Q-values (floats)
    policies: list           # per frame: per node: M actions
    rewards: list            # (frame, node, subslot, action, reward) in resolution order
    fixed_point: bool

    def q(self, frame: int, node: int, m: int, a: int) -> float:
        return self.snapshots[frame][node][m][a]

    def mismatches(self) -> list[str]:
        out = []
        for (f, n, m, a), want in CHECKPOINTS.items():
            got = self.q(f, n, m, a)
            if got != want:
                out.append(f"frame {f + 1} {NAMES[n]} s{m + 1} {Action(a).short}: {got} != {want}")
        final = tuple(tuple(p) for p in self.policies[-1])
        if final != FINAL_POLICY:
            out.append(f"final policy {final} != {FINAL_POLICY}")
        return out


class _Backlog:
    """Keeps every queue non-empty."""

    def __init__(self, macs, kernel):
        self.macs = macs
        self.kernel = kernel
        self.uid = 0

    def refill(self, node: int) -> None:
        while len(self.macs[node].queue) < 1:
            self.uid += 1
            dst = (node + 1) % len(self.macs)
            self.macs[node].enqueue(Packet(self.uid, node, self.kernel.now, dst, dst))

    def packet_sent(self, node, packet, acked):
        self.refill(node)

    def packet_dropped(self, node, packet, reason):
        self.refill(node)


def _script(node: int, frame: int, m: int):
    return FORCED.get((node, frame, m))


def replay(fixed_point: bool = True) -> ReplayResult:
    kernel = Kernel()
    topo = Topology([(0, 0), (10, 0), (5, 8)], comm_range=20.0, names=list(NAMES))
    medium = Medium(kernel, topo, TIMING)
    clock = Clock(SUBSLOTS, TIMING.subslot_ticks)
    macs = []
    for i in range(3):
        cfg = QmaConfig(params=PARAMS, fixed_point=fixed_point, startup_subslots=STARTUP[i],
                        rho_table=(0.0,) * 9, max_retries=100)
        mac = QmaMac(i, kernel, medium, clock, TIMING, cfg, rng=None, script=_script)
        mac.trace = []
        macs.append(mac)

    def receiver(i):
        def on_frame(frame, tx):
            mac = macs[i]
            if frame.kind == 1:
                if frame.dst == i:
                    mac.on_ack(frame)
                return
            if frame.dst == i:
                medium.send_ack(i, frame, tx.end)
        return on_frame

    backlog = _Backlog(macs, kernel)
    for i, mac in enumerate(macs):
        mac.listener = backlog
        medium.listeners[i] = receiver(i)
    for i in range(3):
        backlog.refill(i)

    snapshots, policies = [], []

    def snap(_):
        snapshots.append([mac.table.as_floats() for mac in macs])
        policies.append([[Action(a) for a in mac.table.policy] for mac in macs])

    # decisions at a frame's first boundary resolve the previous frame's last
    # subslot, so snapshots are taken just after that boundary's MAC events
    for f in range(1, FRAMES + 1):
        kernel.at(f * clock.period, snap, prio=2)
    kernel.run(until=FRAMES * clock.period)
    rewards = [(f, mac.node, m, a, r) for mac in macs for (f, m, a, _, r) in mac.trace]
    rewards.sort(key=lambda x: (x[0], x[2], x[1]))
    return ReplayResult(snapshots, policies, rewards, fixed_point)


def format_tables(result: ReplayResult) -> str:
    lines = []
    for f, frame in enumerate(result.snapshots):
        lines.append(f"after frame {f + 1}")
        for n, rows in enumerate(frame):
            pol = result.policies[f][n]
            cells = []
            for m, row in enumerate(rows):
                vals = "/".join(f"{v:g}" for v in row)
                cells.append(f"s{m + 1} {vals} [{Action(pol[m]).short}]")
            lines.append(f"  {NAMES[n]}: " + "  ".join(cells))
    return "\n".join(lines)
