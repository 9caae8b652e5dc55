"""Seeded Monte Carlo campaigns over config sweeps, with CSV/JSON persistence.

Each (sweep point, trial) pair gets its own RNG stream derived from the
master seed, so campaigns are reproducible bit-for-bit and trials can run in
any order or in parallel without changing the output. Rows are always written
in (point, trial, metric) order.
"""

from __future__ import annotations

import csv
import json
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .channel import correlation_for_config, draw_channel, path_loss_db
from .config import (AlgoConfig, SystemConfig, ConfigError, db_to_linear,
                     render_config, with_overrides)
from .metrics import evaluate_trial, waterfill
from .optimizer import ObjectiveContext, run_lgd
from .propagation import build_propagation

EXPERIMENT_KINDS = ("convergence", "channel_matrix", "se_vs_streams", "ee_vs_power")

CSV_HEADER = ["experiment", "point_index", "params", "trial", "metric", "value"]

AGGREGATE_METRICS = ("nmse", "se", "se_ub", "ee", "ee_ub")


class ExperimentError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    """One campaign: experiment kind, base configs, and the sweep grid."""

    kind: str
    base_system: SystemConfig
    base_algo: AlgoConfig
    sweep: list[dict]
    trials: int
    threads: int = 1
    output_path: str | None = None

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ExperimentError(f"unknown experiment kind {self.kind!r}")
        if self.trials < 1:
            raise ExperimentError("trials must be >= 1")
        for overrides in self.sweep:
            with_overrides(self.base_system, self.base_algo, overrides)


@dataclass
class TrialRows:
    trial: int
    rows: list[tuple[str, float]]


@dataclass
class PointResult:
    index: int
    params: dict
    trial_rows: list[TrialRows] = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    error: str | None = None


@dataclass
class ExperimentReport:
    kind: str
    points: list[PointResult]
    provenance: dict


def default_sweep(kind: str) -> list[dict]:
    """Built-in sweep grids mirroring the reference experiment campaigns."""
    if kind == "convergence":
        return [{}]
    if kind == "channel_matrix":
        return [{"stack_mode": mode, "tx_layers": layers, "rx_layers": layers}
                for mode in ("dual_polarized", "tied_sim_baseline")
                for layers in (1, 2, 3)]
    if kind == "se_vs_streams":
        return [{"stack_mode": mode, "tx_units_per_layer": units,
                 "rx_units_per_layer": units, "streams_per_pol": s}
                for mode in ("dual_polarized", "tied_sim_baseline")
                for units in (49, 100)
                for s in (1, 2, 3, 4, 5, 6)]
    if kind == "ee_vs_power":
        return [{"stack_mode": mode, "pol_conversion_ratio": ratio,
                 "transmit_power": float(dbm)}
                for mode in ("dual_polarized", "tied_sim_baseline")
                for ratio in (0.2, 0.4)
                for dbm in (10, 15, 20, 25, 30)]
    raise ExperimentError(f"unknown experiment kind {kind!r}")


def cross_product_sweep(axes: dict[str, list]) -> list[dict]:
    """Cartesian product of {key: values} in the order the keys were given."""
    points: list[dict] = [{}]
    for key, values in axes.items():
        points = [{**p, key: v} for p in points for v in values]
    return points


def params_string(params: dict) -> str:
    return ";".join(f"{k}={params[k]}" for k in sorted(params))


def derive_trial_rng(master_seed: int, point_index: int,
                     trial_index: int) -> np.random.Generator:
    """Independent, order-free stream for one (sweep point, trial) pair."""
    seq = np.random.SeedSequence(entropy=master_seed,
                                 spawn_key=(point_index, trial_index))
    return np.random.default_rng(seq)


def run_trial(sys_cfg: SystemConfig, algo_cfg: AlgoConfig, prop, corr,
              kind: str, master_seed: int, point_index: int,
              trial_index: int) -> TrialRows:
    """One seeded trial: draw channel, optimize, allocate power, evaluate."""
    rng = derive_trial_rng(master_seed, point_index, trial_index)
    shadowing = float(rng.normal(0.0, sys_cfg.shadowing_std))
    pl_db = path_loss_db(sys_cfg.link_distance, sys_cfg, shadowing)
    chan = draw_channel(rng, sys_cfg, corr, db_to_linear(-pl_db))

    ctx = ObjectiveContext(prop, chan)
    stack, trace = run_lgd(rng, sys_cfg, algo_cfg, ctx)
    ctx.refresh(stack)
    h = ctx.h_mat

    noise_w = sys_cfg.noise_power_w
    total_w = sys_cfg.transmit_power_w
    gains = np.diag(chan.target) ** 2
    alloc = waterfill(gains, noise_w, total_w)
    report = evaluate_trial(stack.alpha, h, chan.target, alloc.p, noise_w, total_w)

    rows: list[tuple[str, float]] = list(report.as_rows())
    for s, power in enumerate(alloc.p):
        rows.append((f"power[{s}]", float(power)))

    if kind == "convergence":
        norm = chan.target_norm_sq
        rows.append(("nmse_init", trace.records[0].gamma / norm))
        for i, record in enumerate(trace.records[1:], start=1):
            rows.append((f"nmse_step[{i}]", record.gamma / norm))
    elif kind == "channel_matrix":
        magnitude = np.abs(stack.alpha * h)
        for i in range(magnitude.shape[0]):
            for j in range(magnitude.shape[1]):
                rows.append((f"abs_alpha_h[{i},{j}]", float(magnitude[i, j])))
    return TrialRows(trial=trial_index, rows=rows)


def _aggregate(trial_rows: list[TrialRows]) -> dict:
    by_metric: dict[str, list[float]] = {m: [] for m in AGGREGATE_METRICS}
    for tr in trial_rows:
        for metric, value in tr.rows:
            if metric in by_metric:
                by_metric[metric].append(value)
    out = {}
    for metric, values in by_metric.items():
        if values:
            arr = np.asarray(values)
            out[metric] = {"mean": float(arr.mean()),
                           "median": float(np.median(arr)),
                           "std": float(arr.std())}
    return out


def run_experiment(spec: ExperimentSpec) -> ExperimentReport:
    """Run every sweep point; a failing trial poisons only its own point."""
    seed = spec.base_algo.master_seed
    points: list[PointResult] = []
    for point_index, overrides in enumerate(spec.sweep):
        result = PointResult(index=point_index, params=dict(overrides))
        try:
            sys_cfg, algo_cfg = with_overrides(spec.base_system, spec.base_algo, overrides)
            prop = build_propagation(sys_cfg)
            corr = correlation_for_config(sys_cfg)

            def one(trial: int) -> TrialRows:
                return run_trial(sys_cfg, algo_cfg, prop, corr, spec.kind,
                                 seed, point_index, trial)

            if spec.threads > 1:
                with ThreadPoolExecutor(max_workers=spec.threads) as pool:
                    result.trial_rows = list(pool.map(one, range(spec.trials)))
            else:
                result.trial_rows = [one(t) for t in range(spec.trials)]
            result.aggregates = _aggregate(result.trial_rows)
        except Exception:
            result.error = traceback.format_exc(limit=8)
            result.trial_rows = []
            result.aggregates = {}
        points.append(result)

    provenance = {
        "experiment": spec.kind,
        "master_seed": seed,
        "trials": spec.trials,
        "version": __version__,
        "config": render_config(spec.base_system, spec.base_algo),
        "sweep": [params_string(p) for p in spec.sweep],
    }
    return ExperimentReport(kind=spec.kind, points=points, provenance=provenance)


def emit(report: ExperimentReport, out_dir, formats=("csv", "json")) -> dict:
    """Write the per-trial rows as CSV and the aggregates + provenance as JSON."""
    from pathlib import Path

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}

    if "csv" in formats:
        csv_path = out_dir / f"{report.kind}.csv"
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for point in report.points:
                pstr = params_string(point.params)
                for tr in point.trial_rows:
                    for metric, value in tr.rows:
                        writer.writerow([report.kind, point.index, pstr,
                                         tr.trial, metric, repr(value)])
        paths["csv"] = csv_path

    if "json" in formats:
        json_path = out_dir / f"{report.kind}.json"
        payload = {
            "provenance": report.provenance,
            "points": [
                {
                    "index": point.index,
                    "params": {k: point.params[k] for k in sorted(point.params)},
                    "trials": len(point.trial_rows),
                    "aggregates": point.aggregates,
                    "error": point.error,
                }
                for point in report.points
            ],
        }
        with open(json_path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        paths["json"] = json_path

    return paths


def load_report(out_dir, kind: str) -> ExperimentReport:
    """Read back an emitted report and verify the aggregates against the rows."""
    from pathlib import Path

    out_dir = Path(out_dir)
    with open(out_dir / f"{kind}.json") as fh:
        payload = json.load(fh)

    points: dict[int, PointResult] = {}
    for entry in payload["points"]:
        points[entry["index"]] = PointResult(
            index=entry["index"], params=entry["params"],
            aggregates=entry["aggregates"], error=entry["error"])

    rows_by_point_trial: dict[tuple[int, int], TrialRows] = {}
    with open(out_dir / f"{kind}.csv", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise ExperimentError(f"unexpected CSV header {header}")
        for _, point_s, _, trial_s, metric, value_s in reader:
            key = (int(point_s), int(trial_s))
            if key not in rows_by_point_trial:
                rows_by_point_trial[key] = TrialRows(trial=int(trial_s), rows=[])
            rows_by_point_trial[key].rows.append((metric, float(value_s)))

    for (point_index, _), tr in sorted(rows_by_point_trial.items()):
        points[point_index].trial_rows.append(tr)

    for point in points.values():
        recomputed = _aggregate(point.trial_rows)
        stored = point.aggregates
        for metric, stats in recomputed.items():
            for stat, value in stats.items():
                if not np.isclose(value, stored[metric][stat], rtol=1e-12, atol=1e-300):
                    raise ExperimentError(
                        f"aggregate mismatch at point {point.index} {metric}/{stat}: "
                        f"{value} vs {stored[metric][stat]}")

    ordered = [points[i] for i in sorted(points)]
    return ExperimentReport(kind=kind, points=ordered, provenance=payload["provenance"])
