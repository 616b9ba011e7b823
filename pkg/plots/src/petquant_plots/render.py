"""Render agreement-report figures.

Four figures per bundle: a CCC radar, a TOST forest plot with equivalence
bounds, modified Bland-Altman panels (difference vs reference value), and
paired CP/TDI bar charts. Every number drawn comes straight from the
report JSON; nothing is recomputed here.

Rendering is deterministic: the SVG hash salt is pinned, savefig metadata
that would embed timestamps is stripped, and inputs map to byte-identical
outputs.
"""

from __future__ import annotations

import warnings
from math import pi
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .schema import ReportBundle  # noqa: E402

METRIC_ORDER = ("suv_mean", "suv_max", "tmtv_cc", "tla", "dmax_cm", "lesion_count")

_METRIC_LABELS = {
    "suv_mean": "SUVmean",
    "suv_max": "SUVmax",
    "tmtv_cc": "TMTV",
    "tla": "TLA",
    "dmax_cm": "Dmax",
    "lesion_count": "Lesions",
}

_EQUIV_COLOR = "#2ca02c"
_NON_EQUIV_COLOR = "#d62728"
_SERIES_COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b",
                  "#17becf", "#e377c2", "#7f7f7f")

_HASH_SALT = "petquant-plots"


def _metric_map(report: dict) -> dict[str, dict]:
    return {m["metric"]: m for m in report["metrics"]}


def _present_metrics(reports) -> list[str]:
    """Canonical metric order, restricted to metrics present in all reports."""
    present = []
    for name in METRIC_ORDER:
        if all(name in _metric_map(r) for r in reports):
            present.append(name)
        else:
            warnings.warn(f"metric {name!r} missing from a report; panel omitted")
    return present


def radar_values(report: dict, metrics=METRIC_ORDER) -> list[float]:
    """Radar radii: the CCC per metric, clipped to [0, 1]; undefined CCC
    (null in the report) is drawn at the center."""
    by_name = _metric_map(report)
    values = []
    for name in metrics:
        ccc = by_name[name]["ccc"]
        if ccc is None:
            warnings.warn(f"metric {name!r} has undefined CCC; drawn at radius 0")
            values.append(0.0)
        else:
            values.append(min(max(float(ccc), 0.0), 1.0))
    return values


def _render_radar(bundle: ReportBundle, metrics: list[str]):
    fig = plt.figure(figsize=(6.4, 6.4))
    ax = fig.add_subplot(111, projection="polar")
    n = len(metrics)
    angles = [2 * pi * k / n for k in range(n)]
    closed_angles = angles + angles[:1]
    for idx, (report, label) in enumerate(zip(bundle.reports, bundle.labels)):
        values = radar_values(report, metrics)
        closed = values + values[:1]
        color = _SERIES_COLORS[idx % len(_SERIES_COLORS)]
        ax.plot(closed_angles, closed, color=color, linewidth=1.5, label=label)
        ax.fill(closed_angles, closed, color=color, alpha=0.12)
    ax.set_xticks(angles)
    ax.set_xticklabels([_METRIC_LABELS[m] for m in metrics])
    ax.set_ylim(0.0, 1.05)
    ax.set_yticks([0.2, 0.4, 0.6, 0.8, 1.0])
    ax.set_title("Concordance with ground truth (CCC)")
    ax.legend(loc="lower right", bbox_to_anchor=(1.15, -0.1), fontsize=8)
    return fig


def _render_forest(bundle: ReportBundle, metrics: list[str]):
    n = len(metrics)
    fig, axes = plt.subplots(n, 1, figsize=(6.4, 1.5 * n), sharex=False)
    if n == 1:
        axes = [axes]
    for ax, name in zip(axes, metrics):
        deltas = []
        for idx, report in enumerate(bundle.reports):
            m = _metric_map(report)[name]
            t = m["tost"]
            deltas.append(float(t["delta"]))
            color = _EQUIV_COLOR if t["equivalent"] else _NON_EQUIV_COLOR
            lo, hi = (float(v) for v in t["ci90"])
            y = len(bundle.reports) - 1 - idx
            ax.plot([lo, hi], [y, y], color=color, linewidth=2.5,
                    solid_capstyle="butt")
            ax.plot([float(t["d_bar"])], [y], marker="o", color=color, markersize=5)
        bound = deltas[0]
        if any(abs(d - bound) > 1e-12 for d in deltas):
            warnings.warn(f"metric {name!r}: reports disagree on delta; drawing each")
            for d in deltas:
                ax.axvline(-d, color="black", linestyle="--", linewidth=0.8)
                ax.axvline(d, color="black", linestyle="--", linewidth=0.8)
        else:
            ax.axvline(-bound, color="black", linestyle="--", linewidth=0.8)
            ax.axvline(bound, color="black", linestyle="--", linewidth=0.8)
        ax.axvline(0.0, color="black", linestyle=":", linewidth=0.6)
        ax.set_yticks(range(len(bundle.reports)))
        ax.set_yticklabels(list(reversed(bundle.labels)), fontsize=7)
        ax.set_ylim(-0.7, len(bundle.reports) - 0.3)
        ax.set_title(_METRIC_LABELS[name], fontsize=9, loc="left")
    axes[-1].set_xlabel("mean difference (prediction - ground truth); "
                        "dashed: equivalence bounds")
    fig.suptitle("Equivalence testing (TOST, 90% CI)")
    fig.tight_layout()
    return fig


def _render_bland_altman(bundle: ReportBundle, metrics: list[str]):
    n = len(metrics)
    n_cols = 2
    n_rows = (n + n_cols - 1) // n_cols
    fig, axes = plt.subplots(n_rows, n_cols, figsize=(9.0, 2.6 * n_rows))
    flat_axes = axes.ravel() if n > 1 else [axes]
    for ax, name in zip(flat_axes, metrics):
        limit = None
        for idx, (report, label) in enumerate(zip(bundle.reports, bundle.labels)):
            m = _metric_map(report)[name]
            pts = m["ba"]["points"]
            xs = [float(p[0]) for p in pts]
            ys = [float(p[1]) for p in pts]
            color = _SERIES_COLORS[idx % len(_SERIES_COLORS)]
            ax.scatter(xs, ys, s=12, color=color, label=label, alpha=0.75,
                       edgecolors="none")
            limit = float(m["ba"]["limit"]) if limit is None else limit
        ax.axhline(limit, color="black", linestyle="--", linewidth=0.8)
        ax.axhline(-limit, color="black", linestyle="--", linewidth=0.8)
        ax.axhline(0.0, color="black", linestyle=":", linewidth=0.6)
        ax.set_title(_METRIC_LABELS[name], fontsize=9, loc="left")
        ax.set_xlabel("ground truth value", fontsize=8)
        ax.set_ylabel("difference", fontsize=8)
    for ax in flat_axes[len(metrics):]:
        ax.set_axis_off()
    handles, labels = flat_axes[0].get_legend_handles_labels()
    fig.legend(handles, labels, loc="lower right", fontsize=8)
    fig.suptitle("Modified Bland-Altman (difference vs ground truth)")
    fig.tight_layout()
    return fig


def _render_cp_tdi(bundle: ReportBundle, metrics: list[str]):
    fig, (ax_cp, ax_tdi) = plt.subplots(1, 2, figsize=(11.0, 4.2))
    n_reports = len(bundle.reports)
    width = 0.8 / n_reports
    positions = range(len(metrics))
    for idx, (report, label) in enumerate(zip(bundle.reports, bundle.labels)):
        by_name = _metric_map(report)
        offs = [p + (idx - (n_reports - 1) / 2) * width for p in positions]
        color = _SERIES_COLORS[idx % len(_SERIES_COLORS)]

        cp_vals = [float(by_name[m]["cp"]["value"]) for m in metrics]
        cp_err_lo, cp_err_hi = [], []
        for m in metrics:
            value = float(by_name[m]["cp"]["value"])
            lo, hi = (float(v) for v in by_name[m]["cp"]["ci95"])
            cp_err_lo.append(max(0.0, value - lo))
            cp_err_hi.append(max(0.0, hi - value))
        ax_cp.bar(offs, cp_vals, width=width, color=color, label=label,
                  yerr=[cp_err_lo, cp_err_hi], capsize=2,
                  error_kw={"linewidth": 0.8})

        tdi_vals = [float(by_name[m]["tdi"]["value"]) for m in metrics]
        ax_tdi.bar(offs, tdi_vals, width=width, color=color, label=label)

    for ax, title in ((ax_cp, "Coverage probability (95% CI)"),
                      (ax_tdi, "Total deviation index")):
        ax.set_xticks(list(positions))
        ax.set_xticklabels([_METRIC_LABELS[m] for m in metrics], fontsize=8)
        ax.set_title(title)
    ax_cp.set_ylim(0.0, 1.05)
    ax_cp.legend(fontsize=8)
    fig.tight_layout()
    return fig


def render_report(bundle: ReportBundle) -> dict[str, Path]:
    """Write the four figures; returns figure name -> output path."""
    metrics = _present_metrics(bundle.reports)
    if not metrics:
        raise ValueError("no metric appears in every report; nothing to draw")

    bundle.out_dir.mkdir(parents=True, exist_ok=True)
    renderers = {
        "radar": _render_radar,
        "forest": _render_forest,
        "bland_altman": _render_bland_altman,
        "cp_tdi": _render_cp_tdi,
    }
    outputs = {}
    with plt.rc_context({"svg.hashsalt": _HASH_SALT}):
        for name, renderer in renderers.items():
            fig = renderer(bundle, metrics)
            path = bundle.out_dir / f"{name}.{bundle.image_format}"
            # strip run-dependent metadata so identical inputs give
            # byte-identical files
            if bundle.image_format == "svg":
                fig.savefig(path, format="svg", metadata={"Date": None})
            else:
                fig.savefig(path, format="png", metadata={"Software": None})
            plt.close(fig)
            outputs[name] = path
    return outputs
