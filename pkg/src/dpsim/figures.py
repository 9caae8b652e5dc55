"""Render campaign reports to PNG figures next to the CSV/JSON output.

The delimited files remain the canonical record; these plots are derived
views for quick inspection.
"""

from __future__ import annotations

import re
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .experiments import ExperimentReport

_INDEXED = re.compile(r"^(?P<name>\w+)\[(?P<idx>[\d,]+)\]$")


def _indexed_series(trial_rows, name: str) -> np.ndarray:
    """Stack metric rows like name[i] into a (trials, steps) array."""
    series = []
    for tr in trial_rows:
        values = {}
        for metric, value in tr.rows:
            m = _INDEXED.match(metric)
            if m and m.group("name") == name and "," not in m.group("idx"):
                values[int(m.group("idx"))] = value
        series.append([values[i] for i in sorted(values)])
    return np.asarray(series)


def _matrix_mean(trial_rows, name: str) -> np.ndarray:
    """Mean over trials of metric rows like name[i,j]."""
    acc = None
    count = 0
    for tr in trial_rows:
        entries = {}
        for metric, value in tr.rows:
            m = _INDEXED.match(metric)
            if m and m.group("name") == name and "," in m.group("idx"):
                i, j = (int(x) for x in m.group("idx").split(","))
                entries[(i, j)] = value
        n = max(k[0] for k in entries) + 1
        mat = np.zeros((n, n))
        for (i, j), v in entries.items():
            mat[i, j] = v
        acc = mat if acc is None else acc + mat
        count += 1
    return acc / count


def _point_label(params: dict) -> str:
    if not params:
        return "base"
    short = {"stack_mode": "", "tx_layers": "L", "rx_layers": "K",
             "tx_units_per_layer": "M", "rx_units_per_layer": "N",
             "streams_per_pol": "S", "transmit_power": "Pt",
             "pol_conversion_ratio": "eps"}
    parts = []
    for key in sorted(params):
        prefix = short.get(key, key)
        value = params[key]
        if key == "stack_mode":
            parts.append("DP" if value == "dual_polarized" else "SIM")
        else:
            parts.append(f"{prefix}={value}")
    return " ".join(parts)


def render_convergence(report: ExperimentReport, out_dir: Path) -> Path:
    fig, ax = plt.subplots(figsize=(7, 5))
    for point in report.points:
        if point.error or not point.trial_rows:
            continue
        steps = _indexed_series(point.trial_rows, "nmse_step")
        init = np.array([[v for m, v in tr.rows if m == "nmse_init"]
                         for tr in point.trial_rows])
        series = np.hstack([init, steps])
        mean_best = np.minimum.accumulate(series, axis=1).mean(axis=0)
        ax.semilogy(np.arange(len(mean_best)), mean_best, marker=".",
                    label=_point_label(point.params))
    ax.set_xlabel("layer update step")
    ax.set_ylabel("NMSE (best so far, mean over trials)")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = out_dir / "convergence.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_channel_matrix(report: ExperimentReport, out_dir: Path) -> Path:
    points = [p for p in report.points if not p.error and p.trial_rows]
    cols = max(1, (len(points) + 1) // 2)
    fig, axes = plt.subplots(2, cols, figsize=(3 * cols, 6), squeeze=False)
    for i, point in enumerate(points):
        ax = axes[i // cols][i % cols]
        mat = _matrix_mean(point.trial_rows, "abs_alpha_h")
        im = ax.imshow(mat, cmap="viridis")
        ax.set_title(_point_label(point.params), fontsize=8)
        fig.colorbar(im, ax=ax, fraction=0.046)
    for j in range(len(points), 2 * cols):
        axes[j // cols][j % cols].axis("off")
    fig.tight_layout()
    path = out_dir / "channel_matrix.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _grouped_curves(report: ExperimentReport, x_key: str):
    """Group points by the non-x parameters; yield (label, xs, aggs) sorted curves."""
    groups: dict[str, list] = {}
    for point in report.points:
        if point.error or not point.aggregates:
            continue
        rest = {k: v for k, v in point.params.items() if k != x_key}
        label = _point_label(rest)
        groups.setdefault(label, []).append((point.params[x_key], point.aggregates))
    for label, entries in groups.items():
        entries.sort(key=lambda e: e[0])
        xs = [e[0] for e in entries]
        aggs = [e[1] for e in entries]
        yield label, xs, aggs


def render_se_vs_streams(report: ExperimentReport, out_dir: Path) -> Path:
    fig, ax = plt.subplots(figsize=(7, 5))
    for label, streams_per_pol, aggs in _grouped_curves(report, "streams_per_pol"):
        xs = [2 * s for s in streams_per_pol]
        se = [a["se"]["mean"] for a in aggs]
        se_ub = [a["se_ub"]["mean"] for a in aggs]
        line, = ax.plot(xs, se, marker="o", label=label)
        ax.plot(xs, se_ub, marker="x", linestyle="--", color=line.get_color(),
                label=f"{label} (ub)")
    ax.set_xlabel("data streams")
    ax.set_ylabel("SE (bits/s/Hz)")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    path = out_dir / "se_vs_streams.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_ee_vs_power(report: ExperimentReport, out_dir: Path) -> Path:
    fig, ax = plt.subplots(figsize=(7, 5))
    for label, power_dbm, aggs in _grouped_curves(report, "transmit_power"):
        ee = [a["ee"]["mean"] for a in aggs]
        ee_ub = [a["ee_ub"]["mean"] for a in aggs]
        line, = ax.semilogy(power_dbm, ee, marker="o", label=label)
        ax.semilogy(power_dbm, ee_ub, marker="x", linestyle="--",
                    color=line.get_color(), label=f"{label} (ub)")
    ax.set_xlabel("transmit power (dBm)")
    ax.set_ylabel("EE (bits/s/Hz/W)")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    path = out_dir / "ee_vs_power.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


_RENDERERS = {
    "convergence": render_convergence,
    "channel_matrix": render_channel_matrix,
    "se_vs_streams": render_se_vs_streams,
    "ee_vs_power": render_ee_vs_power,
}


def render_figures(report: ExperimentReport, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return [_RENDERERS[report.kind](report, out_dir)]
