"""Application traffic sources and per-flow queues.

Every UE runs one flow of each class: constant-rate video frames (H.264-like
440 Kbps as one 2200-byte frame per 40 ms), constant-rate voice packets
(G.711-like 64 Kbps as one 160-byte packet per 20 ms, no silence
suppression), and bursty web pages (truncated-Pareto page sizes separated by
exponential reading pauses).  Real-time flows drop head-of-line packets that
outlive their class delay budget; web traffic never expires.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class TrafficClass:
    name: str
    qci: int
    priority: int                      # lower value = served first
    delay_budget_ms: Optional[float]   # None: no expiry
    realtime: bool


# 3GPP QCI mapping: conversational voice, conversational video, best effort
VOIP = TrafficClass("voip", qci=1, priority=2, delay_budget_ms=100.0, realtime=True)
VIDEO = TrafficClass("video", qci=2, priority=4, delay_budget_ms=150.0, realtime=True)
WEB = TrafficClass("web", qci=9, priority=9, delay_budget_ms=None, realtime=False)

CLASSES = (VOIP, VIDEO, WEB)   # QCI priority order


@dataclass(frozen=True)
class TrafficConfig:
    video_rate_kbps: float = 440.0
    video_frame_interval_ms: int = 40     # 25 fps, constant frame size
    voip_rate_kbps: float = 64.0
    voip_packet_interval_ms: int = 20
    web_pareto_shape: float = 1.2
    web_mean_page_bytes: float = 100_000.0
    web_page_cap_bytes: int = 2_000_000
    web_reading_mean_s: float = 5.0
    web_mtu_bytes: int = 1500

    def __post_init__(self) -> None:
        if self.video_frame_interval_ms < 1 or self.voip_packet_interval_ms < 1:
            raise ValueError("packetization intervals must be >= 1 ms")
        if self.web_pareto_shape <= 1.0:
            raise ValueError("pareto shape must exceed 1 for a finite mean")
        if not 0 < self.web_mean_page_bytes < self.web_page_cap_bytes:
            raise ValueError("mean page size must lie below the cap")

    @property
    def video_frame_bytes(self) -> int:
        return round(self.video_rate_kbps * self.video_frame_interval_ms / 8.0)

    @property
    def voip_packet_bytes(self) -> int:
        return round(self.voip_rate_kbps * self.voip_packet_interval_ms / 8.0)


@dataclass(slots=True)
class Packet:
    size_bytes: int
    arrival_tti: int
    flow_id: int


class Flow:
    """One application stream: FIFO queue plus conservation counters.

    ``head_sent_bits`` tracks partial transmission of the head packet across
    TTIs.  At all times arrived == served + dropped + queued, in packets and
    in bytes.
    """

    __slots__ = ("flow_id", "ue", "traffic_class", "queue", "head_sent_bits",
                 "arrived_packets", "arrived_bytes", "served_packets", "served_bytes",
                 "dropped_packets", "dropped_bytes", "delays_ms")

    def __init__(self, flow_id: int, ue: int, traffic_class: TrafficClass):
        self.flow_id = flow_id
        self.ue = ue
        self.traffic_class = traffic_class
        self.queue: deque[Packet] = deque()
        self.head_sent_bits = 0
        self.arrived_packets = 0
        self.arrived_bytes = 0
        self.served_packets = 0
        self.served_bytes = 0
        self.dropped_packets = 0
        self.dropped_bytes = 0
        self.delays_ms: list[float] = []

    def push(self, packet: Packet) -> None:
        self.queue.append(packet)
        self.arrived_packets += 1
        self.arrived_bytes += packet.size_bytes

    @property
    def backlog_bits(self) -> int:
        return sum(p.size_bytes for p in self.queue) * 8 - self.head_sent_bits

    def conservation_ok(self) -> bool:
        return self.arrived_packets == self.served_packets + self.dropped_packets + len(self.queue)


def video_arrivals(tti: int, cfg: TrafficConfig = TrafficConfig()) -> list[int]:
    """Packet sizes arriving at this source-local TTI (one frame per interval)."""
    if tti % cfg.video_frame_interval_ms == 0:
        return [cfg.video_frame_bytes]
    return []


def voip_arrivals(tti: int, cfg: TrafficConfig = TrafficConfig()) -> list[int]:
    """Packet sizes arriving at this source-local TTI (always-on voice)."""
    if tti % cfg.voip_packet_interval_ms == 0:
        return [cfg.voip_packet_bytes]
    return []


def pareto_page_bytes(rng: np.random.Generator, cfg: TrafficConfig) -> int:
    """Draw one truncated-Pareto page size in bytes.

    Scale is set so the untruncated mean equals ``web_mean_page_bytes``; the
    draw inverts the CDF restricted to [scale, cap], so no page ever exceeds
    the cap.
    """
    shape = cfg.web_pareto_shape
    scale = cfg.web_mean_page_bytes * (shape - 1.0) / shape
    cap_mass = 1.0 - (scale / cfg.web_page_cap_bytes) ** shape
    u = rng.random() * cap_mass
    size = scale * (1.0 - u) ** (-1.0 / shape)
    return max(1, min(int(round(size)), cfg.web_page_cap_bytes))


def segment_page(size_bytes: int, mtu_bytes: int) -> list[int]:
    """Split one page into MTU-sized packets (last one carries the remainder)."""
    full, rem = divmod(size_bytes, mtu_bytes)
    sizes = [mtu_bytes] * full
    if rem:
        sizes.append(rem)
    return sizes


class WebSource:
    """Renewal web source: one page burst, then an exponential reading pause.

    The first page is delayed by one reading time so the population does not
    burst in lockstep at traffic start.
    """

    def __init__(self, cfg: TrafficConfig, rng: np.random.Generator):
        self.cfg = cfg
        self._rng = rng
        self.next_page_tti = self._reading_ttis()

    def _reading_ttis(self) -> int:
        return max(1, int(round(self._rng.exponential(self.cfg.web_reading_mean_s * 1000.0))))

    def arrivals(self, tti: int) -> list[int]:
        """Packet sizes arriving at this source-local TTI."""
        if tti != self.next_page_tti:
            return []
        page = pareto_page_bytes(self._rng, self.cfg)
        self.next_page_tti = tti + self._reading_ttis()
        return segment_page(page, self.cfg.web_mtu_bytes)


def expire(flow: Flow, now_tti: int) -> tuple[int, int]:
    """Drop head-of-line packets strictly older than the class delay budget.

    Returns (dropped packet count, dropped backlog bits).  A partially sent
    head packet is dropped whole; its stale bits are wasted.
    """
    budget = flow.traffic_class.delay_budget_ms
    if budget is None:
        return 0, 0
    dropped = 0
    freed_bits = 0
    q = flow.queue
    while q and now_tti - q[0].arrival_tti > budget:
        pkt = q.popleft()
        freed_bits += pkt.size_bytes * 8 - flow.head_sent_bits
        flow.head_sent_bits = 0
        flow.dropped_packets += 1
        flow.dropped_bytes += pkt.size_bytes
        dropped += 1
    return dropped, freed_bits


def transmit(flow: Flow, granted_bits: int, now_tti: int) -> tuple[int, int]:
    """Drain up to ``granted_bits`` from the queue, stamping departures.

    A packet departs (and its delay is recorded) when its last bit is sent.
    Returns (completed-packet bits, consumed backlog bits).
    """
    remaining = granted_bits
    completed_bits = 0
    consumed = 0
    q = flow.queue
    while remaining > 0 and q:
        head = q[0]
        need = head.size_bytes * 8 - flow.head_sent_bits
        if remaining >= need:
            q.popleft()
            flow.head_sent_bits = 0
            remaining -= need
            consumed += need
            completed_bits += head.size_bytes * 8
            flow.served_packets += 1
            flow.served_bytes += head.size_bytes
            flow.delays_ms.append(float(now_tti - head.arrival_tti))
        else:
            flow.head_sent_bits += remaining
            consumed += remaining
            remaining = 0
    return completed_bits, consumed
