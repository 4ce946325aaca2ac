"""Wires topology, medium, MACs, traffic and metrics into one seeded run."""

from __future__ import annotations

from itertools import count
from typing import Callable

from .config import ScenarioConfig
from .engine import (ACK, BROADCAST, PRIO_SAMPLE, Clock, Frame, Kernel, Medium, RadioTiming,
                     Topology, Transmission)
from .mac import CsmaMac, QmaConfig, QmaMac
from .mac.base import DropReason
from .metrics import (CONVERGENCE_FRAMES, MetricsRecord, NodeMetrics, PacketLedger,
                      is_converged)
from .qcore import LearningParams
from .rng import StreamFactory
from .traffic import (HandshakeWorkload, Packet, alternating_arrivals, poisson_arrivals,
                      routing_tree)

HANDSHAKE_RETRY_S = 0.1


class Simulation:
    """One run of a scenario under one seed.

    Build, then ``run()``; the MAC objects stay inspectable afterwards.
    ``script(node, frame, subslot)`` may force QMA actions (used by replays).
    """

    def __init__(self, config: ScenarioConfig, seed: int, script: Callable | None = None,
                 trace: bool = False):
        self.config = config
        self.seed = seed
        tc = config.timing
        self.timing = RadioTiming(tc.subslot_ticks, tc.data_ticks, tc.ack_ticks,
                                  tc.turnaround_ticks, tc.cca_ticks, tc.ack_wait_ticks,
                                  tc.backoff_period_ticks)
        self.clock = Clock.with_cfp_fraction(tc.subslots, tc.subslot_ticks, tc.cfp_fraction)
        topo = config.topology
        self.topology = Topology(topo.positions, topo.comm_range, topo.cs_range, topo.names)
        self.sink = topo.sink
        self.parents = routing_tree(self.topology, self.sink)
        self.kernel = Kernel()
        self.medium = Medium(self.kernel, self.topology, self.timing)
        self.streams = StreamFactory(seed)
        self.ledger = PacketLedger()
        self._uid = count(1)
        n = len(self.topology)
        self.macs = [self._make_mac(i, script, trace) for i in range(n)]
        self.received: list[set[int]] = [set() for _ in range(n)]
        self.uids_by_origin: list[list[int]] = [[] for _ in range(n)]
        self.samples: list[dict] = [{"queue": [], "cumq": [], "rho": []} for _ in range(n)]
        self.pending_sources = 0
        self.last_arrival = 0
        self.handshake: HandshakeWorkload | None = None
        self.warmup = Clock.ticks(config.warmup_s)
        for i, mac in enumerate(self.macs):
            mac.listener = self
            self.medium.listeners[i] = self._receiver(i)

    # --- construction ------------------------------------------------------

    def _make_mac(self, i: int, script, trace: bool):
        kind = self.config.mac_of(i)
        if kind == "qma":
            lc = self.config.learning
            params = LearningParams(lc.alpha, lc.gamma, lc.xi, lc.q_init)
            qc = QmaConfig(params=params, fixed_point=lc.fixed_point,
                           startup_subslots=lc.startup_subslots)
            if lc.rho_table is not None:
                qc.rho_table = tuple(lc.rho_table)
            mac = QmaMac(i, self.kernel, self.medium, self.clock, self.timing, qc,
                         self.streams.get(i, "explore"), script)
            if trace:
                mac.trace = []
            return mac
        return CsmaMac(i, self.kernel, self.medium, self.clock, self.timing,
                       self.streams.get(i, "backoff"), slotted=(kind == "csma_slotted"))

    def _receiver(self, i: int):
        mac = self.macs[i]

        def on_frame(frame: Frame, tx: Transmission) -> None:
            if frame.kind == ACK:
                if frame.dst == i:
                    mac.on_ack(frame)
                return
            mac.on_overheard(frame)
            pkt: Packet = frame.packet
            if frame.dst == i:
                self.medium.send_ack(i, frame, tx.end)
                if pkt.uid in self.received[i]:
                    return
                self.received[i].add(pkt.uid)
                if pkt.final == i:
                    self.ledger.delivered(pkt, self.kernel.now)
                    if pkt.role is not None:
                        self.handshake.on_receive(i, pkt)
                else:
                    self._enqueue(i, pkt.hop(self.parents[i]))
            elif frame.dst == BROADCAST and pkt.final == i:
                if pkt.uid not in self.received[i]:
                    self.received[i].add(pkt.uid)
                    self.ledger.delivered(pkt, self.kernel.now)
                    self.handshake.on_receive(i, pkt)

        return on_frame

    # --- MAC listener --------------------------------------------------------

    def packet_sent(self, node: int, packet: Packet, acked: bool) -> None:
        self.ledger.left_queue(packet)
        if packet.role is not None:
            self.handshake.on_sent(node, packet)

    def packet_dropped(self, node: int, packet: Packet, reason: DropReason) -> None:
        if reason is not DropReason.QUEUE:
            self.ledger.left_queue(packet)
        self.ledger.dropped(packet, reason.value)
        if packet.role is not None:
            self.handshake.on_dropped(node, packet)

    # --- traffic ---------------------------------------------------------------

    def _enqueue(self, node: int, pkt: Packet) -> None:
        if self.macs[node].enqueue(pkt):
            self.ledger.queued(pkt)

    def _emit(self, node: int, pkt: Packet) -> None:
        self.ledger.generated(pkt)
        self.uids_by_origin[node].append(pkt.uid)
        self._enqueue(node, pkt)

    def _arrival(self, arg) -> None:
        node, times = arg
        now = self.kernel.now
        pkt = Packet(next(self._uid), node, now, self.parents[node], self.sink)
        self._emit(node, pkt)
        self._next_arrival(node, times)

    def _next_arrival(self, node: int, times) -> None:
        t = next(times, None)
        if t is None:
            self.pending_sources -= 1
            return
        self.kernel.at(Clock.ticks(t), self._arrival, (node, times))

    def _setup_traffic(self) -> None:
        cfg = self.config
        hs_nodes = []
        for i in range(len(self.macs)):
            spec = cfg.traffic_of(i)
            if spec is None or spec.kind == "none":
                continue
            rng = self.streams.get(i, "traffic")
            if spec.kind == "poisson":
                times = poisson_arrivals(spec.rate, spec.budget, spec.start_s, rng)
            elif spec.kind == "alternating":
                times = alternating_arrivals(spec.rates, spec.phase_s, spec.budget, spec.start_s, rng)
            else:
                hs_nodes.append((i, spec))
                continue
            if cfg.duration_s is not None:
                times = [t for t in times if t < cfg.duration_s]
            if times:
                self.last_arrival = max(self.last_arrival, Clock.ticks(times[-1]))
                self.pending_sources += 1
                self._next_arrival(i, iter(times))
        if hs_nodes:
            spec = hs_nodes[0][1]
            initiators = {i for i, _ in hs_nodes}
            parents = [p if i in initiators else None for i, p in enumerate(self.parents)]
            k = self.kernel
            self.handshake = HandshakeWorkload(
                parents, spec.rates, Clock.ticks(spec.phase_s), self._emit,
                lambda tick, fn: k.at(tick, fn), lambda: k.now,
                lambda node: self.streams.get(node, "handshake"), lambda: next(self._uid),
                Clock.ticks(cfg.handshake_timeout_s), Clock.ticks(HANDSHAKE_RETRY_S))
            self.handshake.start(Clock.ticks(spec.start_s))

    # --- sampling ---------------------------------------------------------------

    def _idle(self) -> bool:
        return (self.pending_sources == 0 and self.handshake is None
                and not any(m.busy() for m in self.macs))

    def _sample(self, frame: int) -> None:
        for mac, s in zip(self.macs, self.samples):
            s["queue"].append(mac.queue_level)
            if isinstance(mac, QmaMac):
                s["cumq"].append(mac.table.cumulative())
                s["rho"].append(mac.exploration_rate())
        if self._idle():
            return
        nxt = (frame + 1) * self.clock.period
        if self._limit is None or nxt <= self._limit:
            self.kernel.at(nxt, self._sample, frame + 1, PRIO_SAMPLE)

    # --- run ------------------------------------------------------------------

    def run(self) -> MetricsRecord:
        cfg = self.config
        self._setup_traffic()
        if cfg.duration_s is not None:
            self._limit = Clock.ticks(cfg.duration_s)
        else:
            self._limit = self.last_arrival + Clock.ticks(cfg.drain_s)
        self.kernel.at(0, self._sample, 0, PRIO_SAMPLE)
        if self.handshake is not None and cfg.duration_s is not None:
            self.kernel.at(self._limit, lambda _: setattr(self.handshake, "stopped", True))
        self.kernel.run(until=self._limit)
        return self._record()

    def _record(self) -> MetricsRecord:
        cfg = self.config
        led = self.ledger
        end_frame = self.clock.frame_of(self.kernel.now)
        # convergence is judged while traffic is still offered, not over the idle drain
        active_end = self.clock.frame_of(self.kernel.now if self.config.duration_s is not None
                                         else self.last_arrival)
        nodes = []
        all_uids: list[int] = []
        delays_all: list[float] = []
        for i, mac in enumerate(self.macs):
            uids = [u for u in self.uids_by_origin[i] if led.created[u] >= self.warmup]
            if self.handshake is None:
                all_uids += uids
            fates = led.summary(uids)
            delays = [self.clock.seconds(led.delivered_at[u] - led.created[u])
                      for u in uids if u in led.delivered_at]
            if self.handshake is None:
                delays_all += delays
            s = self.samples[i]
            nm = NodeMetrics(
                node=i, name=self.topology.names[i], mac=cfg.mac_of(i),
                generated=len(uids), delivered=fates["delivered"], fates=fates,
                pdr=fates["delivered"] / len(uids) if uids else None,
                mean_delay_s=sum(delays) / len(delays) if delays else None,
                delays_s=delays,
                mean_queue=sum(s["queue"]) / len(s["queue"]) if s["queue"] else None,
                tx_attempts=mac.tx_attempts, queue_series=s["queue"],
                cumq_series=s["cumq"], rho_series=s["rho"])
            if isinstance(mac, QmaMac):
                nm.explored = mac.explored
                nm.utilization = [list(d) for d in mac.decisions]
                nm.final_policy = [int(a) for a in mac.table.policy]
                nm.last_policy_change = mac.last_policy_change
                nm.converged = is_converged(mac.last_policy_change, active_end, CONVERGENCE_FRAMES)
            nodes.append(nm)

        aggregate: dict = {}
        handshake = None
        if self.handshake is None:
            fates = led.summary(all_uids)
            aggregate = {
                "generated": len(all_uids), "delivered": fates["delivered"], "fates": fates,
                "pdr": fates["delivered"] / len(all_uids) if all_uids else None,
                "mean_delay_s": sum(delays_all) / len(delays_all) if delays_all else None,
            }
        else:
            msgs = [u for us in self.uids_by_origin for u in us if led.created[u] >= self.warmup]
            fates = led.summary(msgs)
            by_role: dict = {}
            for u in msgs:
                r = by_role.setdefault(led.role[u], [0, 0])
                r[0] += 1
                r[1] += u in led.delivered_at
            st = self.handshake.stats
            handshake = {
                "messages": len(msgs), "delivered": fates["delivered"], "fates": fates,
                "by_role": {k: {"generated": v[0], "delivered": v[1]} for k, v in sorted(by_role.items())},
                "started": st.started, "completed": st.completed, "aborted": st.aborted,
                "rollbacks": st.rollbacks, "allocations": st.allocations,
                "deallocations": st.deallocations,
            }
            aggregate = {
                "generated": len(msgs), "delivered": fates["delivered"], "fates": fates,
                "pdr": fates["delivered"] / len(msgs) if msgs else None,
            }
        kinds = {cfg.mac_of(i) for i in range(len(self.macs))}
        return MetricsRecord(
            scenario=cfg.name, mac=kinds.pop() if len(kinds) == 1 else "mixed", seed=self.seed,
            frames=end_frame + 1, sim_seconds=self.clock.seconds(self.kernel.now),
            nodes=nodes, aggregate=aggregate, handshake=handshake)


def run(config: ScenarioConfig, seed: int, script: Callable | None = None) -> MetricsRecord:
    return Simulation(config, seed, script).run()
