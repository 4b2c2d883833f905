"""Render verification figures from mvstable CSV/JSON artifacts.

Strictly a consumer: every number in a figure comes from the artifact files,
nothing is recomputed or resampled here.  Rendering is deterministic (fixed
SVG hash salt, no timestamps, axes derived from the data), so re-rendering
the same inputs reproduces the output byte for byte.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

FIGURE_KINDS = (
    "laplace_match",
    "tail_ratio",
    "limit_decay",
    "contraction",
    "kernel_slope",
    "flow_snapshots",
)

_RC = {
    "svg.hashsalt": "mvstable-plots",
    "figure.figsize": (7.0, 4.5),
    "axes.grid": True,
    "grid.alpha": 0.3,
}


class ArtifactError(ValueError):
    """Missing, empty or malformed artifact; names the file (and row)."""


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    inputs: tuple
    output: str

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise ArtifactError(
                f"unknown figure kind {self.kind!r}; expected one of {FIGURE_KINDS}"
            )
        if not self.inputs:
            raise ArtifactError("at least one input artifact is required")


def _read_csv(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"{path}: no such artifact")
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ArtifactError(f"{path}: empty artifact (no header)")
        for i, row in enumerate(reader, start=2):
            if any(v is None or v == "" for v in row.values()):
                raise ArtifactError(f"{path}: malformed row {i}")
            rows.append(row)
    if not rows:
        raise ArtifactError(f"{path}: no data rows")
    return rows


def _read_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"{path}: no such artifact")
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"{path}: malformed JSON ({exc})") from exc


def _floats(rows, key, path) -> np.ndarray:
    try:
        return np.array([float(r[key]) for r in rows])
    except (KeyError, ValueError) as exc:
        raise ArtifactError(f"{path}: bad or missing column {key!r} ({exc})") from exc


def _pick(inputs, suffix):
    for p in inputs:
        if str(p).endswith(suffix):
            return p
    return None


def _pick_csv(inputs):
    return _pick(inputs, ".csv") or inputs[0]


# ---------------------------------------------------------------------------
# figure builders (axes in, artist out)
# ---------------------------------------------------------------------------


def _fig_laplace_match(spec, ax):
    path = _pick_csv(spec.inputs)
    rows = [r for r in _read_csv(path) if r.get("transform") == "laplace"]
    if not rows:
        raise ArtifactError(f"{path}: no laplace rows")
    alphas = sorted({float(r["alpha"]) for r in rows})
    for alpha in alphas:
        for t in sorted({float(r["t"]) for r in rows}):
            sub = [r for r in rows if float(r["alpha"]) == alpha and float(r["t"]) == t]
            sub.sort(key=lambda r: float(r["argument"]))
            r_args = _floats(sub, "argument", path)
            emp = _floats(sub, "empirical", path)
            se = _floats(sub, "stderr", path)
            exact = _floats(sub, "exact", path)
            line = ax.errorbar(
                r_args, emp, yerr=2 * se, marker="o", capsize=3,
                label=f"empirical, alpha={alpha:g}, t={t:g}",
            )
            ax.plot(r_args, exact, linestyle="--", marker="x",
                    color=line.lines[0].get_color(),
                    label=f"exact, alpha={alpha:g}, t={t:g}")
    ax.set_xlabel("r")
    ax.set_ylabel("E exp(-r S_t)")
    ax.set_title("Subordinator Laplace transform: empirical +-2se vs exact")
    ax.legend(fontsize=6, ncol=2)


def _fig_tail_ratio(spec, ax):
    path = _pick_csv(spec.inputs)
    rows = _read_csv(path)
    x = _floats(rows, "x", path)
    est = _floats(rows, "estimate", path)
    se = _floats(rows, "stderr", path)
    limit = _floats(rows, "limit", path)
    ax.errorbar(x, est, yerr=2 * se, marker="o", capsize=4, label="Monte Carlo +-2se")
    ax.axhline(limit[0], linestyle="--", color="k", label=f"limit {limit[0]:.4f}")
    ax.set_xlabel("threshold x")
    ax.set_ylabel("P(Z_1 >= 2x) / P(x <= Z_1 < 2x)")
    ax.set_title("Stable tail ratio vs its limit")
    ax.legend()


def _fig_limit_decay(spec, ax):
    path = _pick_csv(spec.inputs)
    rows = _read_csv(path)
    delta = _floats(rows, "delta", path)
    est = _floats(rows, "estimate", path)
    se = _floats(rows, "stderr", path)
    env = _floats(rows, "envelope", path)
    if np.any(est > env + 3 * se):
        raise ArtifactError(f"{path}: envelope fails to dominate the estimates")
    ax.errorbar(delta, est, yerr=2 * se, marker="o", capsize=4, label="estimate +-2se")
    ax.plot(delta, env, marker="s", linestyle="--", label="proof envelope (best eps)")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("delta")
    ax.set_ylabel("damped sup estimate")
    ax.set_title("Damping-limit decay under the proof envelope")
    ax.legend()


def _fig_contraction(spec, ax):
    path = _pick_csv(spec.inputs)
    rows = _read_csv(path)
    delta = _floats(rows, "delta", path)
    ratio = _floats(rows, "ratio", path)
    ax.plot(delta, ratio, marker="o", label="output/input distance")
    slope_txt = ""
    summary_path = _pick(spec.inputs, ".json")
    if summary_path:
        summary = _read_json(summary_path)
        slope, theo = summary.get("slope"), summary.get("theoretical_slope")
        if slope is not None and theo is not None:
            anchor = ratio[0] * (delta / delta[0]) ** slope
            ax.plot(delta, anchor, linestyle=":", label=f"fitted slope {slope:.3f}")
            slope_txt = f" (target slope {theo:.3f})"
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("delta")
    ax.set_ylabel("contraction ratio")
    ax.set_title("Picard-map contraction factors" + slope_txt)
    ax.legend()


def _fig_kernel_slope(spec, ax):
    path = _pick_csv(spec.inputs)
    rows = _read_csv(path)
    dt = _floats(rows, "dt", path)
    est = _floats(rows, "estimate", path)
    se = _floats(rows, "stderr", path)
    ax.errorbar(dt, est, yerr=2 * se, marker="o", capsize=3, label="integral estimate")
    summary_path = _pick(spec.inputs, ".json")
    if summary_path:
        summary = _read_json(summary_path)
        slope = summary.get("slope")
        theo = summary.get("theoretical_slope")
        intercept = summary.get("intercept")
        if slope is not None and intercept is not None:
            ax.plot(dt, np.exp(intercept) * dt**slope, linestyle="--",
                    label=f"fit: slope {slope:.3f}")
        if theo is not None:
            ax.plot(dt, est[0] * (dt / dt[0]) ** theo, linestyle=":",
                    label=f"theory: slope {theo:.3f}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("t - s")
    ax.set_ylabel("weighted gradient-kernel integral")
    ax.set_title("Kernel gradient scaling")
    ax.legend()


def _fig_flow_snapshots(spec, ax):
    path = _pick_csv(spec.inputs)
    rows = _read_csv(path)
    t = _floats(rows, "t", path)
    x = _floats(rows, "x_1", path)
    w = _floats(rows, "weight", path)
    times = np.unique(t)
    snapshots = times[np.linspace(0, times.size - 1, min(4, times.size)).astype(int)]
    lo, hi = np.quantile(x, 0.005), np.quantile(x, 0.995)
    edges = np.linspace(lo, hi, 61)
    for snap in snapshots:
        mask = t == snap
        hist, _ = np.histogram(x[mask], bins=edges, weights=w[mask])
        centers = 0.5 * (edges[1:] + edges[:-1])
        ax.plot(centers, hist / np.diff(edges), label=f"t = {snap:g}", drawstyle="steps-mid")
    ax.set_xlabel("x")
    ax.set_ylabel("density")
    ax.set_title("Solution law snapshots")
    ax.legend()


_BUILDERS = {
    "laplace_match": _fig_laplace_match,
    "tail_ratio": _fig_tail_ratio,
    "limit_decay": _fig_limit_decay,
    "contraction": _fig_contraction,
    "kernel_slope": _fig_kernel_slope,
    "flow_snapshots": _fig_flow_snapshots,
}


def render(spec: FigureSpec) -> str:
    """Render the figure; returns the output path.

    The file is written atomically (temp file + rename): a failing render
    never leaves a partial image behind.
    """
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        try:
            _BUILDERS[spec.kind](spec, ax)
            out = Path(spec.output)
            out.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(suffix=".svg", dir=out.parent)
            os.close(fd)
            try:
                fig.savefig(tmp, format="svg", metadata={"Date": None})
                os.replace(tmp, out)
            except BaseException:
                os.unlink(tmp)
                raise
        finally:
            plt.close(fig)
    return str(spec.output)
