"""Tests for traffic sources, queues, expiry, and transmission."""

from __future__ import annotations

import numpy as np
import pytest

from ltesched.traffic import (CLASSES, VIDEO, VOIP, WEB, Flow, Packet, TrafficConfig,
                              WebSource, expire, pareto_page_bytes, segment_page, transmit,
                              video_arrivals, voip_arrivals)

CFG = TrafficConfig()


# -- constant-rate sources ----------------------------------------------------

def test_video_frame_size_and_cadence():
    assert CFG.video_frame_bytes == 2200
    assert video_arrivals(40, CFG) == [2200]
    assert video_arrivals(41, CFG) == []
    assert video_arrivals(0, CFG) == [2200]


def test_video_window_total_is_exact():
    total_packets = 0
    total_bytes = 0
    for tti in range(54_000):
        for size in video_arrivals(tti, CFG):
            total_packets += 1
            total_bytes += size
    assert total_packets == 1350
    assert total_bytes == 2_970_000


def test_voip_packet_size_and_cadence():
    assert CFG.voip_packet_bytes == 160
    assert voip_arrivals(20, CFG) == [160]
    assert voip_arrivals(30, CFG) == []


def test_voip_one_second_of_traffic():
    packets = [size for tti in range(1000) for size in voip_arrivals(tti, CFG)]
    assert len(packets) == 50
    assert sum(packets) == 8000


def test_voip_window_total_is_exact():
    total = sum(size for tti in range(54_000) for size in voip_arrivals(tti, CFG))
    assert total == 432_000


# -- web source ---------------------------------------------------------------

def test_segment_page_exact_multiples():
    assert segment_page(3000, 1500) == [1500, 1500]


def test_segment_page_remainder():
    assert segment_page(3100, 1500) == [1500, 1500, 100]
    assert segment_page(700, 1500) == [700]


def test_page_sizes_never_exceed_cap():
    rng = np.random.default_rng(17)
    cap = CFG.web_page_cap_bytes
    scale = CFG.web_mean_page_bytes * (CFG.web_pareto_shape - 1.0) / CFG.web_pareto_shape
    sizes = np.array([pareto_page_bytes(rng, CFG) for _ in range(1_000_000)])
    assert sizes.max() <= cap
    assert sizes.min() >= int(scale)


def test_page_size_mean_matches_numeric_integration():
    # oracle: mean of the cap-truncated power-law density by quadrature
    shape = CFG.web_pareto_shape
    scale = CFG.web_mean_page_bytes * (shape - 1.0) / shape
    cap = float(CFG.web_page_cap_bytes)
    x = np.geomspace(scale, cap, 400_001)
    pdf = shape * scale ** shape / x ** (shape + 1.0)
    mass = np.trapezoid(pdf, x)
    expected_mean = np.trapezoid(x * pdf, x) / mass

    rng = np.random.default_rng(99)
    draws = np.array([pareto_page_bytes(rng, CFG) for _ in range(100_000)])
    assert abs(draws.mean() - expected_mean) / expected_mean < 0.05


def test_web_source_is_seed_reproducible():
    def burst_schedule(seed: int) -> list[tuple[int, int]]:
        source = WebSource(CFG, np.random.default_rng(seed))
        out = []
        for tti in range(60_000):
            sizes = source.arrivals(tti)
            if sizes:
                out.append((tti, sum(sizes)))
        return out

    schedule = burst_schedule(4)
    assert schedule == burst_schedule(4)
    assert len(schedule) >= 2          # several pages over a minute
    for _, page in schedule:
        assert page <= CFG.web_page_cap_bytes


def test_web_source_first_page_is_delayed():
    source = WebSource(CFG, np.random.default_rng(2))
    assert source.arrivals(0) == []
    assert source.next_page_tti >= 1


# -- expiry -------------------------------------------------------------------

def _flow(cls) -> Flow:
    return Flow(0, 0, cls)


def test_voip_packet_over_budget_is_dropped():
    flow = _flow(VOIP)
    flow.push(Packet(160, arrival_tti=0, flow_id=0))
    dropped, freed = expire(flow, now_tti=101)
    assert dropped == 1
    assert freed == 160 * 8
    assert flow.dropped_packets == 1
    assert not flow.queue


def test_video_packet_at_exact_budget_is_kept():
    flow = _flow(VIDEO)
    flow.push(Packet(2200, arrival_tti=0, flow_id=0))
    dropped, _ = expire(flow, now_tti=150)
    assert dropped == 0
    assert len(flow.queue) == 1
    dropped, _ = expire(flow, now_tti=151)
    assert dropped == 1


def test_web_never_expires():
    flow = _flow(WEB)
    flow.push(Packet(1500, arrival_tti=0, flow_id=0))
    dropped, freed = expire(flow, now_tti=10_000)
    assert (dropped, freed) == (0, 0)
    assert len(flow.queue) == 1


def test_expire_drops_partial_head_whole():
    flow = _flow(VOIP)
    flow.push(Packet(160, arrival_tti=0, flow_id=0))
    transmit(flow, 300, now_tti=50)        # 300 of 1280 bits sent
    assert flow.head_sent_bits == 300
    dropped, freed = expire(flow, now_tti=101)
    assert dropped == 1
    assert freed == 1280 - 300
    assert flow.head_sent_bits == 0


def test_expire_stops_at_first_young_packet():
    flow = _flow(VOIP)
    flow.push(Packet(160, arrival_tti=0, flow_id=0))
    flow.push(Packet(160, arrival_tti=60, flow_id=0))
    dropped, _ = expire(flow, now_tti=110)
    assert dropped == 1
    assert flow.queue[0].arrival_tti == 60


# -- transmission -------------------------------------------------------------

def test_transmit_completes_packets_and_stamps_delay():
    flow = _flow(VIDEO)
    flow.push(Packet(100, arrival_tti=5, flow_id=0))
    completed, consumed = transmit(flow, 800, now_tti=9)
    assert completed == 800
    assert consumed == 800
    assert flow.served_packets == 1
    assert flow.delays_ms == [4.0]


def test_transmit_partial_then_finish():
    flow = _flow(VIDEO)
    flow.push(Packet(100, arrival_tti=0, flow_id=0))
    completed, consumed = transmit(flow, 500, now_tti=1)
    assert (completed, consumed) == (0, 500)
    assert flow.head_sent_bits == 500
    completed, consumed = transmit(flow, 500, now_tti=2)
    assert (completed, consumed) == (800, 300)
    assert flow.delays_ms == [2.0]
    assert flow.backlog_bits == 0


def test_transmit_respects_grant_across_packets():
    flow = _flow(WEB)
    for i in range(3):
        flow.push(Packet(125, arrival_tti=i, flow_id=0))   # 1000 bits each
    completed, consumed = transmit(flow, 2500, now_tti=10)
    assert completed == 2000
    assert consumed == 2500
    assert flow.served_packets == 2
    assert flow.head_sent_bits == 500


def test_flow_conservation_under_random_operations():
    rng = np.random.default_rng(23)
    flow = _flow(VOIP)
    for t in range(4000):
        if t % 20 == 0:
            flow.push(Packet(160, arrival_tti=t, flow_id=0))
        if rng.random() < 0.4:
            transmit(flow, int(rng.integers(0, 2000)), t)
        expire(flow, t)
        assert flow.conservation_ok()
        queued_bytes = sum(p.size_bytes for p in flow.queue)
        assert flow.arrived_bytes == flow.served_bytes + flow.dropped_bytes + queued_bytes


def test_class_constants_follow_qci_priority_order():
    assert [cls.qci for cls in CLASSES] == [1, 2, 9]
    priorities = [cls.priority for cls in CLASSES]
    assert priorities == sorted(priorities)
    assert VOIP.delay_budget_ms == 100.0
    assert VIDEO.delay_budget_ms == 150.0
    assert WEB.delay_budget_ms is None


def test_traffic_config_validation():
    with pytest.raises(ValueError):
        TrafficConfig(web_pareto_shape=1.0)
    with pytest.raises(ValueError):
        TrafficConfig(web_mean_page_bytes=3_000_000.0)
    with pytest.raises(ValueError):
        TrafficConfig(video_frame_interval_ms=0)
