from __future__ import annotations

from collections import deque
from enum import Enum
from typing import Protocol

from ..engine import BROADCAST, DATA, Clock, Frame, Kernel, Medium, RadioTiming


class DropReason(str, Enum):
    RETRY = "retry"
    BACKOFF = "backoff"
    QUEUE = "queue"


class MacListener(Protocol):
    def packet_sent(self, node: int, packet, acked: bool) -> None: ...

    def packet_dropped(self, node: int, packet, reason: DropReason) -> None: ...


class _NullListener:
    def packet_sent(self, node, packet, acked):
        pass

    def packet_dropped(self, node, packet, reason):
        pass


class MacBase:
    """FIFO queue, retransmission counter and frame construction shared by all MACs."""

    def __init__(self, node: int, kernel: Kernel, medium: Medium, clock: Clock,
                 timing: RadioTiming, queue_max: int = 8, max_retries: int = 3):
        if queue_max < 1 or max_retries < 0:
            raise ValueError("queue_max must be >= 1 and max_retries >= 0")
        self.node = node
        self.kernel = kernel
        self.medium = medium
        self.clock = clock
        self.timing = timing
        self.queue_max = queue_max
        self.max_retries = max_retries
        self.queue: deque = deque()
        self.retries = 0
        self.listener: MacListener = _NullListener()
        self._seq = 0
        self._awaiting: int | None = None   # sequence number of the unacked frame
        self._acked = False
        self.tx_attempts = 0

    @property
    def queue_level(self) -> int:
        return len(self.queue)

    def enqueue(self, packet) -> bool:
        if len(self.queue) >= self.queue_max:
            self.listener.packet_dropped(self.node, packet, DropReason.QUEUE)
            return False
        self.queue.append(packet)
        self._wake()
        return True

    def _wake(self) -> None:
        raise NotImplementedError

    def busy(self) -> bool:
        """True while the MAC holds unfinished work."""
        raise NotImplementedError

    # --- transmission helpers -----------------------------------------

    def _frame_for(self, packet) -> Frame:
        self._seq = (self._seq + 1) & 0xFF
        return Frame(DATA, self.node, packet.dst, self._seq, packet, self.queue_level)

    def _start_tx(self, packet) -> Frame:
        frame = self._frame_for(packet)
        self.tx_attempts += 1
        self._acked = False
        self._awaiting = frame.seq if frame.dst != BROADCAST else None
        self.medium.transmit(self.node, frame, self.timing.data_ticks)
        return frame

    def on_ack(self, frame: Frame) -> None:
        if self._awaiting is not None and frame.seq == self._awaiting:
            self._acked = True

    def on_overheard(self, frame: Frame) -> None:
        """Hook for any decoded non-ACK frame (piggybacked state)."""

    def _tx_done(self, success: bool) -> None:
        """Finish the head packet's attempt: dequeue on success or after NR retries."""
        self._awaiting = None
        head = self.queue[0]
        if success:
            self.queue.popleft()
            self.retries = 0
            self.listener.packet_sent(self.node, head, head.dst != BROADCAST)
            return
        self.retries += 1
        if self.retries > self.max_retries:
            self.queue.popleft()
            self.retries = 0
            self.listener.packet_dropped(self.node, head, DropReason.RETRY)
