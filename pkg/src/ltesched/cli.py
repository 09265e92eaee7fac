"""Batch experiment driver.

Reads a line-oriented ``key = value`` config (``#`` starts a comment), runs
every (scheduler, ue count, seed) cell of the sweep, and writes plot-ready
CSV artifacts: a per-cell directory with throughput CDFs (and Q-table dumps
for mdp-ql), one merged ``summary.csv``, and a qualitative trend report.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, replace
from itertools import product
from pathlib import Path
from typing import Callable, Optional

from .budget import qtable_filename
from .engine import SCHEDULERS, RunConfig, Simulation
from .metrics import RunMetrics, cdf_table
from .qlearn import LearnerConfig, qtable_to_csv
from .radio import CellConfig
from .traffic import CLASSES, TrafficConfig


class ConfigError(ValueError):
    """Malformed or out-of-range experiment configuration."""


@dataclass(frozen=True)
class ExperimentSpec:
    """A sweep: one run template plus the axes to vary."""

    run: RunConfig
    schedulers: tuple[str, ...]
    ue_counts: tuple[int, ...]
    seeds: tuple[int, ...]
    out_dir: str = "out"


def _parse_int(text: str) -> int:
    return int(text)


def _parse_float(text: str) -> float:
    return float(text)


def _parse_str(text: str) -> str:
    return text


def _parse_int_list(text: str) -> tuple[int, ...]:
    items = tuple(int(x.strip()) for x in text.split(",") if x.strip())
    if not items:
        raise ValueError("empty list")
    return items


def _parse_scheduler_list(text: str) -> tuple[str, ...]:
    items = tuple(x.strip() for x in text.split(",") if x.strip())
    if not items:
        raise ValueError("empty list")
    for token in items:
        if token not in SCHEDULERS:
            raise ValueError(f"unknown scheduler '{token}', expected one of {SCHEDULERS}")
    return items


# key -> (converter, target group).  Groups: sweep, run, cell, learner, traffic.
_KEYS: dict[str, tuple[Callable, str]] = {
    "schedulers": (_parse_scheduler_list, "sweep"),
    "ues": (_parse_int_list, "sweep"),
    "seeds": (_parse_int_list, "sweep"),
    "out_dir": (_parse_str, "sweep"),
    "duration_s": (_parse_float, "run"),
    "traffic_time_s": (_parse_float, "run"),
    "budget_levels": (_parse_int, "run"),
    "reward_window_ttis": (_parse_int, "run"),
    "pf_time_constant": (_parse_float, "run"),
    "fls_frame_ttis": (_parse_int, "run"),
    "fls_drain_coeff": (_parse_float, "run"),
    "ue_speed_kmh": (_parse_float, "run"),
    "heading_interval_s": (_parse_float, "run"),
    "num_rbs": (_parse_int, "cell"),
    "bandwidth_mhz": (_parse_float, "cell"),
    "cell_radius_km": (_parse_float, "cell"),
    "enb_power_dbm": (_parse_float, "cell"),
    "carrier_ghz": (_parse_float, "cell"),
    "noise_density_dbm_hz": (_parse_float, "cell"),
    "noise_figure_db": (_parse_float, "cell"),
    "shadowing_sigma_db": (_parse_float, "cell"),
    "shadowing_corr_m": (_parse_float, "cell"),
    "alpha": (_parse_float, "learner"),
    "gamma": (_parse_float, "learner"),
    "epsilon": (_parse_float, "learner"),
    "video_rate_kbps": (_parse_float, "traffic"),
    "video_frame_ms": (_parse_int, "traffic"),
    "voip_rate_kbps": (_parse_float, "traffic"),
    "voip_packet_ms": (_parse_int, "traffic"),
    "web_pareto_shape": (_parse_float, "traffic"),
    "web_mean_page_bytes": (_parse_float, "traffic"),
    "web_page_cap_bytes": (_parse_int, "traffic"),
    "web_reading_s": (_parse_float, "traffic"),
    "web_mtu_bytes": (_parse_int, "traffic"),
}

# config key -> dataclass field where the names differ
_FIELD_OF = {
    "cell_radius_km": "radius_km",
    "video_frame_ms": "video_frame_interval_ms",
    "voip_packet_ms": "voip_packet_interval_ms",
    "web_reading_s": "web_reading_mean_s",
}


def parse_config(text: str) -> ExperimentSpec:
    """Parse a config file body; missing keys take their defaults."""
    values: dict[str, object] = {}
    line_of: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        if not value:
            raise ConfigError(f"line {lineno}: empty value for '{key}'")
        converter, _ = _KEYS[key]
        try:
            values[key] = converter(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for '{key}': {exc}") from None
        line_of[key] = lineno
    return _build_spec(values, line_of)


def _group_kwargs(values: dict, group: str) -> dict:
    out = {}
    for key, (_, grp) in _KEYS.items():
        if grp == group and key in values:
            out[_FIELD_OF.get(key, key)] = values[key]
    return out


def _build_spec(values: dict, line_of: dict[str, int]) -> ExperimentSpec:
    def where(group: str) -> str:
        lines = [f"line {line_of[k]}" for k, (_, g) in _KEYS.items()
                 if g == group and k in line_of]
        return ", ".join(lines) if lines else "defaults"

    def build(factory, group):
        try:
            return factory(**_group_kwargs(values, group))
        except ValueError as exc:
            raise ConfigError(f"{where(group)}: {exc}") from None

    cell = build(CellConfig, "cell")
    learner = build(LearnerConfig, "learner")
    traffic = build(TrafficConfig, "traffic")
    run_kwargs = _group_kwargs(values, "run")
    if "budget_levels" in values and values["budget_levels"] >= cell.num_rbs:
        lineno = line_of["budget_levels"]
        raise ConfigError(f"line {lineno}: budget_levels ({values['budget_levels']}) must be "
                          f"smaller than num_rbs ({cell.num_rbs})")
    try:
        run = RunConfig(cell=cell, learner=learner, traffic=traffic, **run_kwargs)
    except ValueError as exc:
        raise ConfigError(f"{where('run')}: {exc}") from None
    return ExperimentSpec(
        run=run,
        schedulers=values.get("schedulers", ("pf",)),
        ue_counts=values.get("ues", (10,)),
        seeds=values.get("seeds", (1,)),
        out_dir=values.get("out_dir", "out"),
    )


def serialize_config(spec: ExperimentSpec) -> str:
    """Canonical config text; parse(serialize(spec)) == spec."""
    run, cell, learner, traffic = spec.run, spec.run.cell, spec.run.learner, spec.run.traffic
    values = {
        "schedulers": ",".join(spec.schedulers),
        "ues": ",".join(str(x) for x in spec.ue_counts),
        "seeds": ",".join(str(x) for x in spec.seeds),
        "out_dir": spec.out_dir,
        "duration_s": repr(run.duration_s),
        "traffic_time_s": repr(run.traffic_time_s),
        "budget_levels": run.budget_levels,
        "reward_window_ttis": run.reward_window_ttis,
        "pf_time_constant": repr(run.pf_time_constant),
        "fls_frame_ttis": run.fls_frame_ttis,
        "fls_drain_coeff": repr(run.fls_drain_coeff),
        "ue_speed_kmh": repr(run.ue_speed_kmh),
        "heading_interval_s": repr(run.heading_interval_s),
        "num_rbs": cell.num_rbs,
        "bandwidth_mhz": repr(cell.bandwidth_mhz),
        "cell_radius_km": repr(cell.radius_km),
        "enb_power_dbm": repr(cell.enb_power_dbm),
        "carrier_ghz": repr(cell.carrier_ghz),
        "noise_density_dbm_hz": repr(cell.noise_density_dbm_hz),
        "noise_figure_db": repr(cell.noise_figure_db),
        "shadowing_sigma_db": repr(cell.shadowing_sigma_db),
        "shadowing_corr_m": repr(cell.shadowing_corr_m),
        "alpha": repr(learner.alpha),
        "gamma": repr(learner.gamma),
        "epsilon": repr(learner.epsilon),
        "video_rate_kbps": repr(traffic.video_rate_kbps),
        "video_frame_ms": traffic.video_frame_interval_ms,
        "voip_rate_kbps": repr(traffic.voip_rate_kbps),
        "voip_packet_ms": traffic.voip_packet_interval_ms,
        "web_pareto_shape": repr(traffic.web_pareto_shape),
        "web_mean_page_bytes": repr(traffic.web_mean_page_bytes),
        "web_page_cap_bytes": traffic.web_page_cap_bytes,
        "web_reading_s": repr(traffic.web_reading_mean_s),
        "web_mtu_bytes": traffic.web_mtu_bytes,
    }
    return "".join(f"{key} = {values[key]}\n" for key in _KEYS)


@dataclass(frozen=True)
class TrendCheck:
    name: str
    passed: Optional[bool]    # None: not evaluable from the cells present
    detail: str


@dataclass
class ExperimentResult:
    rows: list[dict]
    metrics: dict[tuple[str, int, int], RunMetrics]
    trends: list[TrendCheck]
    failures: list[str]


SUMMARY_HEADER = "scheduler,ues,seed,class,thr_kbps,delay_ms,jitter_ms,plr,fairness"


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _cell_dir_name(scheduler: str, ues: int, seed: int) -> str:
    return f"{scheduler}_ue{ues}_seed{seed}"


def _write_cell_artifacts(cell_dir: Path, rm: RunMetrics, sim: Simulation) -> None:
    cell_dir.mkdir(parents=True, exist_ok=True)
    for cls in CLASSES:
        cm = rm.per_class[cls.name]
        if cm.per_ue_thr_kbps.size == 0:
            continue
        grid, frac = cdf_table(cm.per_ue_thr_kbps)
        body = "thr_kbps,fraction\n" + "".join(
            f"{g:.6g},{f:.6g}\n" for g, f in zip(grid, frac))
        _write_atomic(cell_dir / f"cdf_{cls.name}_{rm.num_ues}.csv", body)
    if sim.agents is not None:
        for agent in sim.agents:
            _write_atomic(cell_dir / qtable_filename(agent.qci), qtable_to_csv(agent.table))


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    """Run every sweep cell, write artifacts, and evaluate the trend report.

    Cells are executed and merged in deterministic (scheduler, ues, seed)
    order.  A failed cell is recorded and skipped; any failure makes the
    driver exit nonzero and leaves a ``failures.txt`` flag file.
    """
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = sorted(product(spec.schedulers, spec.ue_counts, spec.seeds))
    rows: list[dict] = []
    metrics: dict[tuple[str, int, int], RunMetrics] = {}
    failures: list[str] = []
    for scheduler, ues, seed in cells:
        cfg = replace(spec.run, scheduler=scheduler, num_ues=ues, seed=seed)
        try:
            sim = Simulation(cfg)
            rm = sim.run()
        except Exception as exc:   # noqa: BLE001 - cell isolation is the point
            failures.append(f"{scheduler} ues={ues} seed={seed}: {exc}")
            continue
        _write_cell_artifacts(out / _cell_dir_name(scheduler, ues, seed), rm, sim)
        metrics[(scheduler, ues, seed)] = rm
        for cls in CLASSES:
            cm = rm.per_class[cls.name]
            rows.append({
                "scheduler": scheduler, "ues": ues, "seed": seed, "class": cls.name,
                "thr_kbps": cm.thr_kbps, "delay_ms": cm.delay_ms,
                "jitter_ms": cm.jitter_ms, "plr": cm.plr, "fairness": cm.fairness,
            })
    body = SUMMARY_HEADER + "\n" + "".join(
        f"{r['scheduler']},{r['ues']},{r['seed']},{r['class']},{r['thr_kbps']:.6g},"
        f"{r['delay_ms']:.6g},{r['jitter_ms']:.6g},{r['plr']:.6g},{r['fairness']:.6g}\n"
        for r in rows)
    _write_atomic(out / "summary.csv", body)
    trends = evaluate_trends(metrics)
    _write_atomic(out / "trends.txt", format_trend_report(trends))
    flag = out / "failures.txt"
    if failures:
        _write_atomic(flag, "\n".join(failures) + "\n")
    elif flag.exists():
        flag.unlink()
    return ExperimentResult(rows, metrics, trends, failures)


def _seed_avg(metrics, scheduler: str, ues: int, pick) -> Optional[float]:
    vals = [pick(rm) for (s, u, _), rm in sorted(metrics.items())
            if s == scheduler and u == ues]
    if not vals:
        return None
    return sum(vals) / len(vals)


def evaluate_trends(metrics: dict[tuple[str, int, int], RunMetrics]) -> list[TrendCheck]:
    """Qualitative expectations over a sweep, checked with slack.

    These are soft gates: failures are reported, not raised, because the
    quantities are stochastic model outputs.
    """
    checks: list[TrendCheck] = []
    schedulers = sorted({s for s, _, _ in metrics})
    ue_counts = sorted({u for _, u, _ in metrics})

    for scheduler in schedulers:
        series = [(u, _seed_avg(metrics, scheduler, u, lambda rm: rm.per_class["video"].plr))
                  for u in ue_counts]
        series = [(u, v) for u, v in series if v is not None]
        if len(series) < 2:
            checks.append(TrendCheck(f"video PLR non-decreasing with load [{scheduler}]",
                                     None, "needs at least two UE counts"))
            continue
        ok = all(b >= a - 1e-9 for (_, a), (_, b) in zip(series, series[1:]))
        detail = " -> ".join(f"{u}:{v:.4f}" for u, v in series)
        checks.append(TrendCheck(f"video PLR non-decreasing with load [{scheduler}]", ok, detail))

    for scheduler in schedulers:
        video = _seed_avg(metrics, scheduler, 10, lambda rm: rm.per_class["video"].thr_kbps)
        voip = _seed_avg(metrics, scheduler, 10, lambda rm: rm.per_class["voip"].thr_kbps)
        if video is None or voip is None:
            checks.append(TrendCheck(f"light-load rates held [{scheduler}]", None,
                                     "no 10-UE cells in sweep"))
            continue
        ok = video >= 430.0 and voip >= 63.0
        checks.append(TrendCheck(
            f"light-load rates held [{scheduler}]", ok,
            f"10 UEs: video {video:.1f} Kbps (>=430), voip {voip:.2f} Kbps (>=63)"))

    fairness = _seed_avg(metrics, "mdp-ql", 40, lambda rm: rm.per_class["video"].fairness)
    if fairness is None:
        checks.append(TrendCheck("mdp-ql video fairness at 40 UEs", None,
                                 "no mdp-ql 40-UE cells in sweep"))
    else:
        checks.append(TrendCheck("mdp-ql video fairness at 40 UEs", fairness >= 0.85,
                                 f"fairness {fairness:.4f} (>=0.85 with slack)"))

    share = _seed_avg(
        metrics, "mdp-ql", 40,
        lambda rm: float((rm.per_class["video"].per_ue_thr_kbps > 400.0).mean()))
    if share is None:
        checks.append(TrendCheck("mdp-ql video coverage at 40 UEs", None,
                                 "no mdp-ql 40-UE cells in sweep"))
    else:
        checks.append(TrendCheck("mdp-ql video coverage at 40 UEs", share >= 0.55,
                                 f"{share:.0%} of UEs above 400 Kbps (>=55% with slack)"))
    return checks


def format_trend_report(checks: list[TrendCheck]) -> str:
    lines = ["qualitative trend report", "========================"]
    for check in checks:
        status = "PASS" if check.passed else ("SKIP" if check.passed is None else "FAIL")
        lines.append(f"[{status}] {check.name}: {check.detail}")
    return "\n".join(lines) + "\n"


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="ltesched",
        description="Run downlink scheduling experiments and emit CSV artifacts.")
    parser.add_argument("--config", type=Path, help="experiment config file (key = value lines)")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, help="single seed (overrides config seeds)")
    parser.add_argument("--ues", help="comma-separated UE counts (overrides config)")
    parser.add_argument("--scheduler", help="comma-separated scheduler tokens (overrides config)")
    parser.add_argument("--duration", type=float,
                        help="run duration in seconds (traffic window is clamped to fit)")
    args = parser.parse_args(argv)

    try:
        text = args.config.read_text() if args.config else ""
        spec = parse_config(text)
        if args.out is not None:
            spec = replace(spec, out_dir=args.out)
        if args.seed is not None:
            spec = replace(spec, seeds=(args.seed,))
        if args.ues is not None:
            spec = replace(spec, ue_counts=_parse_int_list(args.ues))
        if args.scheduler is not None:
            spec = replace(spec, schedulers=_parse_scheduler_list(args.scheduler))
        if args.duration is not None:
            window = min(spec.run.traffic_time_s, args.duration)
            spec = replace(spec, run=replace(spec.run, duration_s=args.duration,
                                             traffic_time_s=window))
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    result = run_experiment(spec)
    print(f"wrote {Path(spec.out_dir) / 'summary.csv'} ({len(result.rows)} rows)")
    print(format_trend_report(result.trends), end="")
    if result.failures:
        print(f"{len(result.failures)} cell(s) failed; partial outputs flagged in "
              f"{Path(spec.out_dir) / 'failures.txt'}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
