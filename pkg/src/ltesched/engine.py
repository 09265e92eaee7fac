"""Deterministic per-TTI downlink simulation loop.

Each TTI executes a fixed step order; reordering is a contract violation:

    1. advance the clock
    2. move UEs (random direction, reflect at the cell edge) and
       regenerate the channel snapshot
    3. generate traffic arrivals when inside the traffic window
    4. expire packets that outlived their delay budget
    5. mdp-ql only: compute the windowed QoS reward, feed it back to the
       agents for the previous epoch, then decide this epoch's budgets
    6. allocate resource blocks
    7. transmit: drain granted bits per flow, stamping departures
    8. validate invariants and record bookkeeping

One run is single-threaded and bit-reproducible: all randomness derives
from labeled streams of the master seed, and stream draw order per TTI is
fixed.  Independent runs share no mutable state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .budget import BudgetLevels, ClassAgent, RewardInputs, compute_reward, decide_budgets, \
    feedback, make_agent
from .metrics import RunMetrics, build_run_metrics
from .qlearn import LearnerConfig
from .radio import CellConfig, ChannelModel, ChannelSnapshot, trace_rows
from .rng import stream
from .sched import Allocation, FlsState, PfState, RrState, budgeted_allocate, fls_allocate, \
    pf_allocate, rr_allocate
from .traffic import CLASSES, Flow, Packet, TrafficConfig, WebSource, expire, transmit, \
    video_arrivals, voip_arrivals

SCHEDULERS = ("rr", "pf", "fls", "mdp-ql")

MAX_UES = 1000


class InvariantError(RuntimeError):
    """A per-TTI conservation or cap invariant was violated."""


@dataclass(frozen=True)
class RunConfig:
    """Everything one run needs; equal configs produce byte-identical output."""

    num_ues: int = 10
    seed: int = 1
    scheduler: str = "pf"
    duration_s: float = 60.0
    traffic_time_s: float = 54.0
    cell: CellConfig = field(default_factory=CellConfig)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    budget_levels: int = 20
    reward_window_ttis: int = 100
    pf_time_constant: float = 1000.0
    fls_frame_ttis: int = 10
    fls_drain_coeff: float = 0.5
    ue_speed_kmh: float = 30.0
    heading_interval_s: float = 5.0
    validate: bool = True
    channel_trace_path: Optional[str] = None

    def __post_init__(self) -> None:
        if self.scheduler not in SCHEDULERS:
            raise ValueError(f"unknown scheduler '{self.scheduler}', expected one of {SCHEDULERS}")
        if not 0 <= self.num_ues <= MAX_UES:
            raise ValueError(f"num_ues must be in [0, {MAX_UES}], got {self.num_ues}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.duration_s <= 0:
            raise ValueError("duration must be positive")
        if not 0 <= self.traffic_time_s <= self.duration_s:
            raise ValueError("traffic window must fit inside the run duration")
        if not 1 <= self.budget_levels < self.cell.num_rbs:
            raise ValueError(
                f"budget_levels must be in [1, {self.cell.num_rbs - 1}], got {self.budget_levels}")
        if self.reward_window_ttis < 1:
            raise ValueError("reward window must be >= 1 TTI")
        if self.ue_speed_kmh < 0:
            raise ValueError("UE speed must be non-negative")
        if self.heading_interval_s <= 0:
            raise ValueError("heading interval must be positive")

    @property
    def num_ttis(self) -> int:
        return round(self.duration_s * 1000)

    @property
    def window_start_tti(self) -> int:
        # traffic window centered inside the run
        return round((self.duration_s - self.traffic_time_s) * 1000 / 2)

    @property
    def window_end_tti(self) -> int:
        return self.window_start_tti + round(self.traffic_time_s * 1000)


@dataclass(frozen=True)
class UeState:
    x_km: float
    y_km: float
    heading_rad: float
    speed_kmh: float


def place_ues(num: int, radius_km: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform positions on the cell disc: r = R*sqrt(u), theta uniform."""
    if num < 0:
        raise ValueError("num must be >= 0")
    r = radius_km * np.sqrt(rng.random(num))
    theta = 2.0 * math.pi * rng.random(num)
    return np.column_stack((r * np.cos(theta), r * np.sin(theta)))


class _WindowCounter:
    """Fixed-length sliding sum over TTI slots."""

    __slots__ = ("slots", "total")

    def __init__(self, size: int):
        self.slots = [0.0] * size
        self.total = 0.0

    def evict(self, idx: int) -> None:
        self.total -= self.slots[idx]
        self.slots[idx] = 0.0

    def add(self, idx: int, x: float) -> None:
        self.slots[idx] += x
        self.total += x


class Simulation:
    """State of one run; ``step()`` executes one TTI, ``run()`` the whole horizon."""

    def __init__(self, config: RunConfig, record_trace: bool = False):
        self.config = config
        cell = config.cell
        u = config.num_ues
        seed = config.seed

        self.positions = place_ues(u, cell.radius_km, stream(seed, "placement"))
        self._mobility_rng = stream(seed, "mobility")
        self.headings = self._mobility_rng.uniform(0.0, 2.0 * math.pi, u)
        self.channel = ChannelModel(cell, u, stream(seed, "fading"), stream(seed, "shadowing"))
        self._exploration_rng = stream(seed, "exploration")
        self._step_km = config.ue_speed_kmh / 3.6e6          # km per 1 ms TTI
        self._heading_ttis = round(config.heading_interval_s * 1000)

        # flows in class-major, QCI-priority order: all voip, all video, all web
        self.flows: list[Flow] = []
        for cls in CLASSES:
            for ue in range(u):
                self.flows.append(Flow(len(self.flows), ue, cls))
        self.flow_ue = np.array([f.ue for f in self.flows], dtype=np.intp) \
            if self.flows else np.zeros(0, dtype=np.intp)
        self.class_slices = [
            (cls, np.arange(i * u, (i + 1) * u, dtype=np.intp))
            for i, cls in enumerate(CLASSES)
        ]
        self._rt_flows = [f for f in self.flows if f.traffic_class.realtime]
        self.web_sources = [WebSource(config.traffic, stream(seed, "web", ue))
                            for ue in range(u)]
        self.backlog_bits = np.zeros(len(self.flows), dtype=np.int64)

        num_flows = len(self.flows)
        self._pf = PfState(num_flows, config.pf_time_constant)
        self._rr = RrState()
        rt_idx = np.array([f.flow_id for f in self._rt_flows], dtype=np.intp)
        self._fls = FlsState(num_flows, rt_idx, config.fls_frame_ttis, config.fls_drain_coeff)

        self.agents: Optional[list[ClassAgent]] = None
        self.budget_space: Optional[BudgetLevels] = None
        self._budgets: Optional[dict[int, int]] = None
        if config.scheduler == "mdp-ql":
            self.budget_space = BudgetLevels(cell.num_rbs, config.budget_levels)
            self.agents = [make_agent(cls.qci, self.budget_space, config.learner)
                           for cls in CLASSES]

        w = config.reward_window_ttis
        self._win_arrived = _WindowCounter(w)
        self._win_dropped = _WindowCounter(w)
        self._win_served_bits = _WindowCounter(w)
        self._win_delay_sum = _WindowCounter(w)
        self._win_delivered = _WindowCounter(w)

        self.tti = -1
        self.last_snapshot: Optional[ChannelSnapshot] = None
        self.last_allocation: Optional[Allocation] = None
        self.trace: Optional[list[tuple]] = [] if record_trace else None

    # -- per-TTI pieces -------------------------------------------------

    def _move_ues(self, t: int) -> None:
        if self.config.num_ues == 0 or self._step_km == 0.0:
            return
        if t > 0 and t % self._heading_ttis == 0:
            self.headings = self._mobility_rng.uniform(0.0, 2.0 * math.pi, self.config.num_ues)
        pos = self.positions
        pos[:, 0] += self._step_km * np.cos(self.headings)
        pos[:, 1] += self._step_km * np.sin(self.headings)
        radius = self.config.cell.radius_km
        r = np.hypot(pos[:, 0], pos[:, 1])
        outside = r > radius
        if outside.any():
            # specular bounce off the cell edge; overshoot is sub-centimeter
            nx, ny = pos[outside, 0] / r[outside], pos[outside, 1] / r[outside]
            dx, dy = np.cos(self.headings[outside]), np.sin(self.headings[outside])
            dot = dx * nx + dy * ny
            self.headings[outside] = np.arctan2(dy - 2.0 * dot * ny, dx - 2.0 * dot * nx)
            scale = radius / r[outside]
            pos[outside, 0] *= scale
            pos[outside, 1] *= scale

    def _generate_arrivals(self, t: int, slot: int) -> None:
        cfg = self.config
        if not (cfg.window_start_tti <= t < cfg.window_end_tti) or cfg.num_ues == 0:
            return
        local = t - cfg.window_start_tti          # source-local clock
        u = cfg.num_ues
        voip_flows, video_flows, web_flows = (self.flows[:u], self.flows[u:2 * u],
                                              self.flows[2 * u:3 * u])
        for size in voip_arrivals(local, cfg.traffic):
            for flow in voip_flows:
                flow.push(Packet(size, t, flow.flow_id))
                self.backlog_bits[flow.flow_id] += size * 8
                self._win_arrived.add(slot, 1.0)
        for size in video_arrivals(local, cfg.traffic):
            for flow in video_flows:
                flow.push(Packet(size, t, flow.flow_id))
                self.backlog_bits[flow.flow_id] += size * 8
                self._win_arrived.add(slot, 1.0)
        for ue, source in enumerate(self.web_sources):
            sizes = source.arrivals(local)
            if sizes:
                flow = web_flows[ue]
                for size in sizes:
                    flow.push(Packet(size, t, flow.flow_id))
                    self.backlog_bits[flow.flow_id] += size * 8
                    self._win_arrived.add(slot, 1.0)

    def _expire_flows(self, t: int, slot: int) -> None:
        for flow in self._rt_flows:
            if flow.queue:
                dropped, freed = expire(flow, t)
                if dropped:
                    self.backlog_bits[flow.flow_id] -= freed
                    self._win_dropped.add(slot, float(dropped))

    def _reward_inputs(self) -> RewardInputs:
        w = self.config.reward_window_ttis
        thr_kbps = self._win_served_bits.total / w           # bits per ms == Kbps
        delivered = self._win_delivered.total
        delay_ms = self._win_delay_sum.total / delivered if delivered > 0 else 0.0
        arrived = self._win_arrived.total
        # drops of packets that arrived before the window opened can push the
        # windowed ratio past 1; clamp to keep it a rate
        loss = min(self._win_dropped.total / arrived, 1.0) if arrived > 0 else 0.0
        return RewardInputs(thr_kbps, delay_ms, loss)

    def _allocate(self, t: int, snap: ChannelSnapshot) -> Allocation:
        cfg = self.config
        n = cfg.cell.num_rbs
        token = cfg.scheduler
        if token == "rr":
            return rr_allocate(snap.bits, self.flow_ue, self.backlog_bits, self._rr, n)
        if token == "pf":
            return pf_allocate(snap.bits, self.flow_ue, self.backlog_bits, self._pf, n)
        if token == "fls":
            return fls_allocate(snap.bits, self.flow_ue, self.backlog_bits, self.class_slices,
                                self._fls, self._pf, t, n)
        assert self._budgets is not None
        return budgeted_allocate(snap.bits, self.flow_ue, self.backlog_bits, self.class_slices,
                                 self._budgets, self._pf, n)

    def _transmit(self, t: int, slot: int, alloc: Allocation) -> None:
        for fi in np.flatnonzero(alloc.granted_bits):
            flow = self.flows[fi]
            before = len(flow.delays_ms)
            completed, consumed = transmit(flow, int(alloc.granted_bits[fi]), t)
            self.backlog_bits[fi] -= consumed
            if completed:
                new = flow.delays_ms[before:]
                self._win_served_bits.add(slot, float(completed))
                self._win_delay_sum.add(slot, float(sum(new)))
                self._win_delivered.add(slot, float(len(new)))

    def _validate_tti(self, alloc: Allocation, pre_backlog: np.ndarray) -> None:
        owner = alloc.owner
        assigned = owner[owner >= 0]
        if assigned.size > self.config.cell.num_rbs:
            raise InvariantError(f"TTI {self.tti}: assigned {assigned.size} RBs")
        if assigned.size and pre_backlog[assigned].min() <= 0:
            raise InvariantError(f"TTI {self.tti}: RB assigned to a flow without backlog")
        if self._budgets is not None:
            for cls, flows in self.class_slices:
                if flows.size == 0:
                    continue
                used = alloc.rbs_of_flows(int(flows[0]), int(flows[-1]) + 1)
                if used > self._budgets[cls.qci]:
                    raise InvariantError(
                        f"TTI {self.tti}: class {cls.name} used {used} RBs over its "
                        f"cap {self._budgets[cls.qci]}")
        for f in self.flows:
            if f.arrived_packets != f.served_packets + f.dropped_packets + len(f.queue):
                raise InvariantError(f"TTI {self.tti}: packet conservation broken on "
                                     f"flow {f.flow_id}")

    # -- driving --------------------------------------------------------

    def step(self) -> None:
        """Execute one TTI in the fixed step order."""
        self.tti += 1
        t = self.tti
        slot = t % self.config.reward_window_ttis
        for win in (self._win_arrived, self._win_dropped, self._win_served_bits,
                    self._win_delay_sum, self._win_delivered):
            win.evict(slot)

        self._move_ues(t)
        snap = self.channel.snapshot(self.positions)
        self.last_snapshot = snap

        self._generate_arrivals(t, slot)
        self._expire_flows(t, slot)

        if self.agents is not None:
            reward = compute_reward(self._reward_inputs())
            feedback(self.agents, reward)
            self._budgets = decide_budgets(self.agents, self.budget_space,
                                           self.config.learner.epsilon, self._exploration_rng)

        pre_backlog = self.backlog_bits.copy() if self.config.validate else None
        alloc = self._allocate(t, snap)
        self.last_allocation = alloc
        self._transmit(t, slot, alloc)

        if self.config.validate:
            self._validate_tti(alloc, pre_backlog)
        if self.trace is not None:
            self.trace.append((t, int(self._win_arrived.slots[slot]),
                               int(self._win_dropped.slots[slot]), alloc.assigned_rbs,
                               int(self._win_served_bits.slots[slot])))

    def run(self) -> RunMetrics:
        """Execute the full horizon and aggregate the metrics."""
        cfg = self.config
        trace_fh = open(cfg.channel_trace_path, "w") if cfg.channel_trace_path else None
        try:
            if trace_fh:
                trace_fh.write("tti,ue,rb,sinr_db,bits\n")
            for _ in range(cfg.num_ttis):
                self.step()
                if trace_fh:
                    for row in trace_rows(self.last_snapshot, self.tti):
                        trace_fh.write(row + "\n")
        finally:
            if trace_fh:
                trace_fh.close()
        if cfg.validate:
            for f in self.flows:
                if self.backlog_bits[f.flow_id] != f.backlog_bits:
                    raise InvariantError(f"backlog accounting drifted on flow {f.flow_id}")
        window_ms = max(cfg.window_end_tti - cfg.window_start_tti, 1)
        return build_run_metrics(self.flows, cfg.num_ues, float(window_ms),
                                 cfg.scheduler, cfg.seed)

    def ue_states(self) -> list[UeState]:
        return [UeState(float(self.positions[i, 0]), float(self.positions[i, 1]),
                        float(self.headings[i]), self.config.ue_speed_kmh)
                for i in range(self.config.num_ues)]


def run(config: RunConfig) -> RunMetrics:
    """Run one simulation to completion."""
    return Simulation(config).run()
