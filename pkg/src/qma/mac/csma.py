"""IEEE 802.15.4 CSMA/CA, slotted and unslotted."""

from __future__ import annotations

from dataclasses import dataclass

from ..engine import BROADCAST, Clock, Kernel, Medium, RadioTiming
from .base import DropReason, MacBase


@dataclass(frozen=True)
class CsmaConstants:
    min_be: int = 3
    max_be: int = 5
    max_backoffs: int = 4       # macMaxCSMABackoffs
    max_retries: int = 3        # macMaxFrameRetries
    contention_window: int = 2  # slotted only
    queue_max: int = 8

    def __post_init__(self):
        if not 0 <= self.min_be <= self.max_be:
            raise ValueError("need 0 <= macMinBE <= macMaxBE")
        if self.max_backoffs < 0 or self.max_retries < 0 or self.contention_window < 1:
            raise ValueError("invalid CSMA/CA constants")


class CsmaMac(MacBase):
    def __init__(self, node: int, kernel: Kernel, medium: Medium, clock: Clock,
                 timing: RadioTiming, rng, slotted: bool = False,
                 constants: CsmaConstants | None = None):
        c = constants or CsmaConstants()
        super().__init__(node, kernel, medium, clock, timing, c.queue_max, c.max_retries)
        self.c = c
        self.rng = rng
        self.slotted = slotted
        self.nb = 0
        self.be = c.min_be
        self.cw = c.contention_window
        self.active = False
        self.backoff_log: list[int] | None = None
        self.cca_failures = 0

    def busy(self) -> bool:
        return self.active or bool(self.queue)

    def _wake(self) -> None:
        if not self.active:
            self._start_packet()

    # --- backoff grid --------------------------------------------------

    def _grid_at_or_after(self, t: int) -> int:
        """Next backoff-period boundary, counted from the start of the current CAP."""
        clk = self.clock
        unit = self.timing.backoff_period_ticks
        f, off = divmod(t, clk.period)
        if off >= clk.cap:
            return (f + 1) * clk.period
        k = -(-off // unit)
        if k * unit >= clk.cap:
            return (f + 1) * clk.period
        return f * clk.period + k * unit

    # --- algorithm -----------------------------------------------------

    def _start_packet(self) -> None:
        if not self.queue:
            self.active = False
            return
        self.active = True
        self.nb = 0
        self.be = self.c.min_be
        self.cw = self.c.contention_window
        self._backoff()

    def _backoff(self) -> None:
        periods = self.rng.below(1 << self.be)
        if self.backoff_log is not None:
            self.backoff_log.append(periods)
        delay = periods * self.timing.backoff_period_ticks
        now = self.kernel.now
        if self.slotted:
            t = self._grid_at_or_after(self.clock.cap_advance(self._grid_at_or_after(now), delay))
        else:
            t = self.clock.cap_advance(now, delay)
        self.kernel.at(t, self._cca)

    def _cca(self, _=None) -> None:
        now = self.kernel.now
        if self.medium.transmitting(self.node, now):
            self._channel_busy()
            return
        self.kernel.at(now + self.timing.cca_ticks, self._cca_done, now)

    def _cca_done(self, started: int) -> None:
        if self.medium.sensed(self.node, started, self.kernel.now):
            self._channel_busy()
            return
        if self.slotted:
            self.cw -= 1
            nxt = self._grid_at_or_after(self.kernel.now)
            if self.cw > 0:
                self.kernel.at(nxt, self._cca)
            else:
                self.kernel.at(nxt, self._transmit)
        else:
            self.kernel.at(self.kernel.now + self.timing.turnaround_ticks, self._transmit)

    def _channel_busy(self) -> None:
        self.cca_failures += 1
        self.nb += 1
        self.be = min(self.be + 1, self.c.max_be)
        self.cw = self.c.contention_window
        if self.nb > self.c.max_backoffs:
            head = self.queue.popleft()
            self.retries = 0
            self.listener.packet_dropped(self.node, head, DropReason.BACKOFF)
            self._start_packet()
        else:
            self._backoff()

    def _transmit(self, _=None) -> None:
        if self.medium.transmitting(self.node, self.kernel.now):
            self._channel_busy()
            return
        frame = self._start_tx(self.queue[0])
        end = self.kernel.now + self.timing.data_ticks
        if frame.dst == BROADCAST:
            self.kernel.at(end, self._complete, True)
        else:
            self.kernel.at(end + self.timing.ack_wait_ticks, self._complete, None)

    def _complete(self, success) -> None:
        if success is None:
            success = self._acked
        self._tx_done(success)
        self._start_packet()
