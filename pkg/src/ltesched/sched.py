"""Per-TTI resource-block allocators: RR, PF, FLS, and class-budgeted PF.

All allocators share one calling convention: ``bits`` is the per-UE per-RB
deliverable-bits matrix for this TTI, ``flow_ue`` maps flow index to owning
UE, and ``backlog_bits`` is the queue depth of every flow when allocation
starts.  They return an :class:`Allocation` and never assign an RB to a flow
without backlog.

The PF metric (deliverable bits on the RB divided by smoothed throughput) is
fixed within a TTI because the smoothed average updates only at TTI end, so
the per-RB argmax can be batched and lazily repaired when flows drain; the
result is identical to a naive per-RB scan.  RBs on which no candidate flow
can deliver a single bit stay unassigned, except under RR, which is
channel-blind by definition and spends its turn regardless.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .traffic import TrafficClass


@dataclass
class Allocation:
    """Result of one TTI: RB ownership and per-flow granted bits."""

    owner: np.ndarray         # (N,) flow index per RB, -1 when unassigned
    granted_bits: np.ndarray  # (F,)

    @property
    def assigned_rbs(self) -> int:
        return int((self.owner >= 0).sum())

    def rbs_of_flows(self, lo: int, hi: int) -> int:
        """Number of RBs held by flows with index in [lo, hi)."""
        o = self.owner
        return int(((o >= lo) & (o < hi)).sum())


class PfState:
    """Per-flow exponentially smoothed throughput (bits/TTI) for the PF metric."""

    def __init__(self, num_flows: int, time_constant: float = 1000.0,
                 initial_bits: float = 1.0):
        if time_constant < 1.0:
            raise ValueError(f"time_constant must be >= 1, got {time_constant}")
        if initial_bits <= 0.0:
            raise ValueError("initial average must be positive")
        self.time_constant = float(time_constant)
        self.avg_bits = np.full(num_flows, float(initial_bits))

    def update(self, granted_bits: np.ndarray) -> None:
        # avg <- (1 - 1/tc) * avg + (1/tc) * granted, for every flow
        self.avg_bits += (granted_bits - self.avg_bits) / self.time_constant


class RrState:
    """Cyclic pointer over the flow list, persisting across TTIs."""

    def __init__(self, pointer: int = 0):
        self.pointer = pointer


class FlsState:
    """Per-frame drain quotas of the real-time flows (bits)."""

    def __init__(self, num_flows: int, rt_flows: np.ndarray, frame_ttis: int = 10,
                 drain_coeff: float = 0.5):
        if frame_ttis < 1:
            raise ValueError("frame length must be >= 1 TTI")
        if drain_coeff <= 0.0:
            raise ValueError("drain coefficient must be positive")
        self.frame_ttis = frame_ttis
        self.drain_coeff = float(drain_coeff)
        self.rt_flows = np.asarray(rt_flows, dtype=np.intp)
        self.quota_bits = np.zeros(num_flows)

    def refresh(self, backlog_bits: np.ndarray) -> None:
        """Recompute quotas from current queue depth (frame boundary)."""
        self.quota_bits[:] = 0.0
        self.quota_bits[self.rt_flows] = self.drain_coeff * backlog_bits[self.rt_flows]


def _empty_allocation(num_rbs: int, num_flows: int) -> Allocation:
    return Allocation(np.full(num_rbs, -1, dtype=np.int32),
                      np.zeros(num_flows, dtype=np.int64))


def _pf_fill(bits: np.ndarray, flow_ue: np.ndarray, avg_bits: np.ndarray,
             need: np.ndarray, candidates: np.ndarray, rb_list: np.ndarray,
             cap: int, owner: np.ndarray, granted: np.ndarray) -> list[int]:
    """Assign RBs from ``rb_list`` (ascending) to candidate flows by PF metric.

    Spends at most ``cap`` RBs.  Mutates owner/granted/need; returns the
    assigned RB indices.  Equivalent to scanning RBs in order and giving each
    to the backlogged candidate maximizing bits/avg; the per-RB winners are
    precomputed and repaired only when a flow's queue drains.
    """
    candidates = np.asarray(candidates, dtype=np.intp)
    active = candidates[need[candidates] > 0]
    if active.size == 0 or rb_list.size == 0 or cap <= 0:
        return []
    fb = bits[np.ix_(flow_ue[active], rb_list)]                       # (Fa, R)
    metric_t = np.ascontiguousarray((fb / avg_bits[active, None]).T)  # (R, Fa)
    winners = metric_t.argmax(axis=1)
    assigned: list[int] = []
    alive = int(active.size)
    for i in range(rb_list.size):
        if len(assigned) >= cap:
            break
        f = int(winners[i])
        if need[active[f]] <= 0:
            while need[active[f]] <= 0:
                metric_t[:, f] = -1.0                 # flow drained: retire it
                alive -= 1
                if alive <= 0:
                    return assigned
                f = int(metric_t[i].argmax())
            winners[i + 1:] = metric_t[i + 1:].argmax(axis=1)
        if metric_t[i, f] <= 0.0:
            continue                                  # nobody can use this RB
        rb = int(rb_list[i])
        flow = int(active[f])
        b = int(fb[f, i])
        owner[rb] = flow
        granted[flow] += b
        need[flow] -= b
        assigned.append(rb)
    return assigned


def rr_allocate(bits: np.ndarray, flow_ue: np.ndarray, backlog_bits: np.ndarray,
                state: RrState, num_rbs: int) -> Allocation:
    """Round robin: RBs handed out one at a time in cyclic flow order.

    The rotation persists across TTIs via ``state.pointer``; a flow drops out
    of the rotation once its queue is covered by granted bits.  Channel-blind:
    an RB is spent on the flow whose turn it is, whatever it delivers.
    """
    num_flows = len(flow_ue)
    alloc = _empty_allocation(num_rbs, num_flows)
    if num_flows == 0:
        return alloc
    need = backlog_bits.copy()
    start = state.pointer % num_flows
    order = list(range(start, num_flows)) + list(range(start))
    rotation = deque(f for f in order if need[f] > 0)
    if not rotation:
        return alloc
    owner, granted = alloc.owner, alloc.granted_bits
    last = -1
    for rb in range(num_rbs):
        if not rotation:
            break
        f = rotation[0]
        b = int(bits[flow_ue[f], rb])
        owner[rb] = f
        granted[f] += b
        need[f] -= b
        last = f
        if need[f] <= 0:
            rotation.popleft()
        else:
            rotation.rotate(-1)
    if rotation:
        state.pointer = int(rotation[0])
    elif last >= 0:
        state.pointer = (last + 1) % num_flows
    return alloc


def pf_allocate(bits: np.ndarray, flow_ue: np.ndarray, backlog_bits: np.ndarray,
                pf_state: PfState, num_rbs: int) -> Allocation:
    """Proportional fair: each RB to the backlogged flow maximizing bits/avg."""
    alloc = _empty_allocation(num_rbs, len(flow_ue))
    need = backlog_bits.copy()
    _pf_fill(bits, flow_ue, pf_state.avg_bits, need, np.arange(len(flow_ue)),
             np.arange(num_rbs), num_rbs, alloc.owner, alloc.granted_bits)
    pf_state.update(alloc.granted_bits)
    return alloc


def fls_allocate(bits: np.ndarray, flow_ue: np.ndarray, backlog_bits: np.ndarray,
                 class_slices: list[tuple[TrafficClass, np.ndarray]], fls_state: FlsState,
                 pf_state: PfState, tti: int, num_rbs: int) -> Allocation:
    """Two-level frame scheduler.

    Upper level (once per frame): each real-time flow gets a drain quota
    proportional to its queued bits.  Lower level (every TTI): real-time
    flows with unmet quota are served first, best RB first, in QCI priority
    order; leftover RBs go to the non-real-time flows via PF.
    """
    alloc = _empty_allocation(num_rbs, len(flow_ue))
    if len(flow_ue) == 0:
        return alloc
    if tti % fls_state.frame_ttis == 0:
        fls_state.refresh(backlog_bits)
    need = backlog_bits.copy()
    owner, granted = alloc.owner, alloc.granted_bits
    rb_free = np.ones(num_rbs, dtype=bool)
    n_free = num_rbs
    quotas = fls_state.quota_bits
    for cls, flows in class_slices:
        if not cls.realtime:
            continue
        for f in flows:
            f = int(f)
            if n_free == 0:
                break
            if quotas[f] <= 0.0 or need[f] <= 0:
                continue
            row = bits[flow_ue[f]]
            while quotas[f] > 0.0 and need[f] > 0 and n_free > 0:
                masked = np.where(rb_free, row, -1)
                rb = int(masked.argmax())
                b = int(masked[rb])
                if b <= 0:
                    break                      # no usable RB left for this flow
                owner[rb] = f
                rb_free[rb] = False
                n_free -= 1
                granted[f] += b
                need[f] -= b
                quotas[f] -= b
    non_rt = np.concatenate([flows for cls, flows in class_slices if not cls.realtime]) \
        if any(not cls.realtime for cls, _ in class_slices) else np.zeros(0, dtype=np.intp)
    if n_free and non_rt.size:
        rb_list = np.flatnonzero(rb_free)
        _pf_fill(bits, flow_ue, pf_state.avg_bits, need, non_rt, rb_list,
                 rb_list.size, owner, granted)
    pf_state.update(granted)
    return alloc


def budgeted_allocate(bits: np.ndarray, flow_ue: np.ndarray, backlog_bits: np.ndarray,
                      class_slices: list[tuple[TrafficClass, np.ndarray]],
                      budgets: dict[int, int], pf_state: PfState,
                      num_rbs: int) -> Allocation:
    """Class-budgeted allocation: walk classes in QCI priority order.

    Each class may take at most its budgeted number of the still-free RBs,
    assigned within the class by the PF metric.  RBs a class cannot fill
    spill forward to later classes; caps are per-class maxima, not a
    partition, so their sum may exceed the grid.
    """
    alloc = _empty_allocation(num_rbs, len(flow_ue))
    if len(flow_ue) == 0:
        return alloc
    need = backlog_bits.copy()
    rb_free = np.ones(num_rbs, dtype=bool)
    remaining = num_rbs
    for cls, flows in class_slices:
        if remaining == 0:
            break
        cap = min(int(budgets[cls.qci]), remaining)
        if cap <= 0:
            continue
        rb_list = np.flatnonzero(rb_free)
        assigned = _pf_fill(bits, flow_ue, pf_state.avg_bits, need, flows, rb_list,
                            cap, alloc.owner, alloc.granted_bits)
        if assigned:
            rb_free[assigned] = False
            remaining -= len(assigned)
    pf_state.update(alloc.granted_bits)
    return alloc
