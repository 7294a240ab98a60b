"""Figure rendering for study outputs.

The delimited study artifacts (summary CSV, raw-estimate JSONL) stay the
primary interface; these helpers read them back and render standard report
figures to PNG files next to them: the log-log MSE-versus-n trend, bias with
Monte-Carlo error bars, and estimate histograms at the largest sample size.
"""

from __future__ import annotations

import csv
import json
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import ConfigError

__all__ = [
    "load_summary_rows",
    "load_records",
    "mse_rate_figure",
    "bias_figure",
    "histogram_figure",
    "render_report",
]


def load_summary_rows(path):
    """Parse a study summary CSV back into typed row dicts."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for raw in csv.DictReader(fh):
            rows.append(
                {
                    "estimator": raw["estimator"],
                    "n": int(raw["n"]),
                    "component": int(raw["component"]),
                    "mean": float(raw["mean"]),
                    "bias": float(raw["bias"]),
                    "variance": float(raw["variance"]),
                    "mse": float(raw["mse"]),
                    "stderr": float(raw["stderr"]),
                    "coverage": float(raw["coverage"]) if raw["coverage"] else None,
                    "n_total": int(raw["n_total"]),
                    "n_converged": int(raw["n_converged"]),
                }
            )
    if not rows:
        raise ConfigError(f"no summary rows in {path}")
    return rows


def load_records(path):
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _estimators(rows):
    seen = []
    for r in rows:
        if r["estimator"] not in seen:
            seen.append(r["estimator"])
    return seen


def mse_rate_figure(rows, path):
    """Log-log trace-MSE against n, one line per estimator, slope -1 guide."""
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    ns_all = sorted({r["n"] for r in rows})
    for est in _estimators(rows):
        ns, mses = [], []
        for n in ns_all:
            tot = sum(r["mse"] for r in rows if r["estimator"] == est and r["n"] == n)
            if tot > 0:
                ns.append(n)
                mses.append(tot)
        ax.loglog(ns, mses, "o-", label=est)
    if len(ns_all) >= 2 and mses:
        nref = np.array([ns_all[0], ns_all[-1]], float)
        ax.loglog(nref, mses[-1] * ns[-1] / nref, "k--", lw=0.8, label="slope -1")
    ax.set_xlabel("n")
    ax.set_ylabel("trace MSE")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def bias_figure(rows, path):
    """Bias with +/-2 Monte-Carlo standard errors per estimator and component."""
    n_big = max(r["n"] for r in rows)
    sel = [r for r in rows if r["n"] == n_big]
    comps = sorted({r["component"] for r in sel})
    ests = _estimators(sel)
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    width = 0.8 / max(len(ests), 1)
    for i, est in enumerate(ests):
        xs = [c + (i - (len(ests) - 1) / 2.0) * width for c in comps]
        bias = [next(r["bias"] for r in sel if r["estimator"] == est and r["component"] == c) for c in comps]
        err = [2 * next(r["stderr"] for r in sel if r["estimator"] == est and r["component"] == c) for c in comps]
        ax.bar(xs, bias, width=width, yerr=err, capsize=3, label=est)
    ax.axhline(0.0, color="k", lw=0.8)
    ax.set_xticks(comps)
    ax.set_xlabel("parameter component")
    ax.set_ylabel(f"bias at n={n_big} (+/- 2 stderr)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def histogram_figure(records, path, component=0):
    """Histograms of one estimate component at the largest n, per estimator."""
    recs = [r for r in records if r["converged"] and r["theta_hat"] is not None]
    if not recs:
        raise ConfigError("no converged records to plot")
    n_big = max(r["n"] for r in recs)
    ests = []
    for r in recs:
        if r["n"] == n_big and r["estimator"] not in ests:
            ests.append(r["estimator"])
    fig, axes = plt.subplots(1, len(ests), figsize=(3.0 * len(ests), 3.0), squeeze=False)
    for ax, est in zip(axes[0], ests):
        vals = [r["theta_hat"][component] for r in recs if r["n"] == n_big and r["estimator"] == est]
        ax.hist(vals, bins=max(8, int(np.sqrt(len(vals)))), color="C0", alpha=0.8)
        ax.set_title(f"{est}, n={n_big}", fontsize=9)
        ax.set_xlabel(f"component {component}")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_report(study_dir, out_dir=None):
    """Render the standard figures for a finished study directory.

    Reads summary.csv and raw_estimates.jsonl from ``study_dir`` and writes
    fig_bias.png, fig_estimates.png and, when the study spans several sample
    sizes, fig_mse_rate.png.  Returns the list of written paths.
    """
    out_dir = study_dir if out_dir is None else out_dir
    os.makedirs(out_dir, exist_ok=True)
    rows = load_summary_rows(os.path.join(study_dir, "summary.csv"))
    records = load_records(os.path.join(study_dir, "raw_estimates.jsonl"))
    written = []
    if len({r["n"] for r in rows}) >= 2:
        written.append(mse_rate_figure(rows, os.path.join(out_dir, "fig_mse_rate.png")))
    written.append(bias_figure(rows, os.path.join(out_dir, "fig_bias.png")))
    written.append(histogram_figure(records, os.path.join(out_dir, "fig_estimates.png")))
    return written
