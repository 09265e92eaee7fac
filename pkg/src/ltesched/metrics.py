"""Run-level QoS metrics: throughput, delay, jitter, loss, fairness, CDFs.

Conventions: throughput is averaged over the traffic window (not the full
run); delay and jitter cover delivered packets only (expired packets show up
in the loss rate instead); fairness over an all-zero or empty vector is
reported as 1.0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .traffic import CLASSES, Flow


def jain_fairness(values: Sequence[float]) -> float:
    """Jain index (sum x)^2 / (n * sum x^2); 1.0 for equal shares."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("fairness needs at least one value")
    if (arr < 0).any():
        raise ValueError("fairness inputs must be non-negative")
    total = arr.sum()
    if total == 0.0:
        return 1.0   # degenerate all-zero input: equal (empty) shares
    return float(total * total / (arr.size * (arr * arr).sum()))


def flow_jitter(delays: Sequence[float]) -> Optional[float]:
    """Mean absolute difference of consecutive delivered-packet delays.

    Flows with fewer than two delivered packets carry no jitter sample and
    return None.
    """
    if len(delays) < 2:
        return None
    d = np.asarray(delays, dtype=float)
    return float(np.abs(np.diff(d)).mean())


def mean_jitter(per_flow_delays: Iterable[Sequence[float]]) -> float:
    """Average of per-flow jitter over flows with at least two deliveries."""
    samples = [j for j in (flow_jitter(d) for d in per_flow_delays) if j is not None]
    if not samples:
        return 0.0
    return float(np.mean(samples))


def plr(arrived_packets: int, dropped_packets: int) -> float:
    """Packet loss rate; zero when nothing arrived."""
    if arrived_packets <= 0:
        return 0.0
    return dropped_packets / arrived_packets


def cdf(values: Sequence[float], grid: Sequence[float]) -> np.ndarray:
    """Empirical CDF of ``values`` evaluated at each grid threshold."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("cdf needs at least one value")
    return np.searchsorted(v, np.asarray(grid, dtype=float), side="right") / v.size


def cdf_table(values: Sequence[float], num_points: int = 101) -> tuple[np.ndarray, np.ndarray]:
    """(thresholds, fractions) on a linear grid from 0 to the sample maximum."""
    arr = np.asarray(values, dtype=float)
    top = float(arr.max()) if arr.size else 0.0
    grid = np.linspace(0.0, top, num_points) if top > 0 else np.zeros(1)
    return grid, cdf(arr, grid)


@dataclass(frozen=True)
class ClassMetrics:
    thr_kbps: float
    delay_ms: float
    jitter_ms: float
    plr: float
    fairness: float
    max_delay_ms: float
    per_ue_thr_kbps: np.ndarray


@dataclass(frozen=True)
class RunMetrics:
    scheduler: str
    num_ues: int
    seed: int
    per_class: dict[str, ClassMetrics]

    @property
    def video_fairness(self) -> float:
        return self.per_class["video"].fairness


_EMPTY = ClassMetrics(0.0, 0.0, 0.0, 0.0, 1.0, 0.0, np.zeros(0))


def build_run_metrics(flows: Sequence[Flow], num_ues: int, window_ms: float,
                      scheduler: str, seed: int) -> RunMetrics:
    """Aggregate per-flow counters into per-class run metrics."""
    per_class: dict[str, ClassMetrics] = {}
    for cls in CLASSES:
        cls_flows = [f for f in flows if f.traffic_class is cls]
        if not cls_flows:
            per_class[cls.name] = _EMPTY
            continue
        by_ue = sorted(cls_flows, key=lambda f: f.ue)
        per_ue_thr = np.array([f.served_bytes * 8.0 / window_ms for f in by_ue])
        delays = np.concatenate([f.delays_ms for f in by_ue if f.delays_ms]) \
            if any(f.delays_ms for f in by_ue) else np.zeros(0)
        arrived = sum(f.arrived_packets for f in by_ue)
        dropped = sum(f.dropped_packets for f in by_ue)
        per_class[cls.name] = ClassMetrics(
            thr_kbps=float(per_ue_thr.mean()),
            delay_ms=float(delays.mean()) if delays.size else 0.0,
            jitter_ms=mean_jitter([f.delays_ms for f in by_ue]),
            plr=plr(arrived, dropped),
            fairness=jain_fairness(per_ue_thr),
            max_delay_ms=float(delays.max()) if delays.size else 0.0,
            per_ue_thr_kbps=per_ue_thr,
        )
    return RunMetrics(scheduler=scheduler, num_ues=num_ues, seed=seed, per_class=per_class)
