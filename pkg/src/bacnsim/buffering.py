"""FIFO relay buffers with deadline expiry, and the delivery ledger."""
from __future__ import annotations

import math
from collections import Counter, deque
from dataclasses import dataclass, field

from .errors import BufferEmpty, BufferFull

NO_DEADLINE = math.inf


@dataclass
class Packet:
    id: int
    born_slot: int
    secure_so_far: bool = True
    hops: int = 0


class RelayBuffer:
    """Bounded FIFO queue; ``capacity=None`` makes it unbounded (source queue)."""

    def __init__(self, capacity=None):
        if capacity is not None and capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.queue = deque()

    def __len__(self):
        return len(self.queue)

    def __iter__(self):
        return iter(self.queue)

    def __repr__(self):
        return f"RelayBuffer({len(self.queue)}/{self.capacity})"

    @property
    def full(self):
        return self.capacity is not None and len(self.queue) >= self.capacity

    @property
    def occupancy(self):
        """Fill level as a fraction of capacity."""
        return len(self.queue) / self.capacity if self.capacity else float(bool(self.queue))

    def head(self):
        return self.queue[0] if self.queue else None

    def enqueue(self, packet):
        if self.full:
            raise BufferFull(f"buffer at capacity {self.capacity}")
        self.queue.append(packet)
        return self

    def dequeue(self):
        if not self.queue:
            raise BufferEmpty("dequeue from empty buffer")
        return self.queue.popleft()

    def expire(self, now, deadline):
        """Drop and return every packet older than ``deadline`` slots."""
        if deadline == NO_DEADLINE or not self.queue:
            return []
        if deadline < 1:
            raise ValueError("deadline must be >= 1")
        # FIFO order is birth order, so expired packets form a prefix.
        dropped = []
        while self.queue and now - self.queue[0].born_slot > deadline:
            dropped.append(self.queue.popleft())
        return dropped


def enqueue(buffer, packet):
    return buffer.enqueue(packet)


def dequeue(buffer):
    return buffer.dequeue(), buffer


def expire(buffer, now, deadline):
    return buffer.expire(now, deadline), buffer


@dataclass
class DelayLedger:
    delivered: int = 0
    delivered_secure_in_time: int = 0
    delivered_insecure: int = 0
    expired: int = 0
    sum_delay: int = 0
    histogram: Counter = field(default_factory=Counter)

    def record_delivery(self, packet, now, deadline):
        """Account one packet reaching the Destination; returns its delay."""
        d = now - packet.born_slot
        self.delivered += 1
        self.sum_delay += d
        self.histogram[d] += 1
        if not packet.secure_so_far:
            self.delivered_insecure += 1
        elif d <= deadline:
            self.delivered_secure_in_time += 1
        return d

    def record_expiry(self, packets):
        self.expired += len(packets)

    @property
    def mean_delay(self):
        return self.sum_delay / self.delivered if self.delivered else math.nan

    def delay_quantile(self, q):
        if not self.delivered:
            return math.nan
        target = q * self.delivered
        acc = 0
        for d in sorted(self.histogram):
            acc += self.histogram[d]
            if acc >= target:
                return float(d)
        return float(max(self.histogram))

    def as_row(self):
        return {"delivered": self.delivered,
                "secure_in_time": self.delivered_secure_in_time,
                "expired": self.expired,
                "mean_delay": self.mean_delay,
                "p95_delay": self.delay_quantile(0.95)}


def record_delivery(ledger, packet, now, deadline):
    ledger.record_delivery(packet, now, deadline)
    return ledger
