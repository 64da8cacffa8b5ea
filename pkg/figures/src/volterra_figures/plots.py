"""Figure rendering: rate fits, moment curves, trajectory fans, covariance.

All figures are drawn with the Agg backend at fixed size and dpi, with a
constant metadata block, so identical inputs yield identical image bytes.
"""

from __future__ import annotations

from dataclasses import dataclass

import matplotlib
matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .io import SchemaError, load_rows, load_trajectory

FIGURE_KINDS = ("rate", "moments", "trajectories", "covariance")

SLOPE_CROSS_CHECK_TOL = 1e-9
_SAVE_OPTS = dict(dpi=110, metadata={"Software": "volterra-figures"})


@dataclass(frozen=True)
class FigureJob:
    input_csv: tuple
    figure_kind: str
    output_image: str
    title: str = ""

    def __post_init__(self):
        if self.figure_kind not in FIGURE_KINDS:
            raise SchemaError(f"unknown figure kind {self.figure_kind!r}")


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    mx, my = x.mean(), y.mean()
    slope = float(np.sum((x - mx) * (y - my)) / np.sum((x - mx) ** 2))
    return slope, float(my - slope * mx)


def _new_axes(title: str):
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    if title:
        ax.set_title(title)
    return fig, ax


def _save(fig, path: str):
    fig.savefig(path, **_SAVE_OPTS)
    plt.close(fig)


def render_rate(paths, output: str, title: str) -> dict:
    rows = load_rows(paths[0], "rate")
    annotations = {}
    fig, ax = _new_axes(title or "convergence rate")
    for p_val in sorted({row["p"] for row in rows}, key=float):
        grp = [r for r in rows if r["p"] == p_val and r["exact"] != "True"]
        if not grp:
            continue
        eps = np.asarray([float(r["eps"]) for r in grp])
        err = np.asarray([float(r["lp_error_pth_root"]) for r in grp])
        ses = np.asarray([float(r["std_error"]) for r in grp])
        stored = {float(r["slope"]) for r in grp if r["slope"] != ""}
        if len(stored) != 1:
            raise SchemaError("rate rows carry no unique stored slope")
        stored_slope = stored.pop()
        refit, intercept = _ols(np.log(eps), np.log(err))
        if abs(refit - stored_slope) > SLOPE_CROSS_CHECK_TOL:
            raise SchemaError(
                f"re-fitted slope {refit!r} disagrees with stored slope "
                f"{stored_slope!r} beyond {SLOPE_CROSS_CHECK_TOL}")
        annotations[float(p_val)] = stored_slope
        ax.errorbar(eps, err, yerr=ses, fmt="o", ms=4, capsize=2,
                    label=f"p={p_val}")
        grid_x = np.linspace(np.log(eps.min()), np.log(eps.max()), 50)
        ax.plot(np.exp(grid_x), np.exp(intercept + stored_slope * grid_x),
                "-", lw=1.2,
                label=f"fit: slope {stored_slope:.3f}")
        # Half-order reference guide through the coarsest point.
        ref = err[0] * (eps / eps[0]) ** 0.5
        ax.plot(eps, ref, "k--", lw=0.9, alpha=0.6, label="slope 1/2 guide")
    if not annotations:
        raise SchemaError("rate figure has no inexact rows to draw")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("perturbation size")
    ax.set_ylabel("sup-norm error, p-th root")
    ax.legend(fontsize=8)
    first = sorted(annotations)[0]
    ax.text(0.03, 0.95, f"slope {annotations[first]:.3f}",
            transform=ax.transAxes, va="top")
    _save(fig, output)
    return {"slope": annotations, "output": output}


def render_moments(paths, output: str, title: str) -> dict:
    rows = load_rows(paths[0], "moments")
    fig, ax = _new_axes(title or "moment curves")
    slopes = {}
    keys = sorted({(r["label"], r["eps"], r["p"]) for r in rows})
    for label, eps, p_val in keys:
        grp = [r for r in rows if (r["label"], r["eps"], r["p"]) ==
               (label, eps, p_val)]
        t = np.asarray([float(r["t"]) for r in grp])
        est = np.asarray([float(r["estimate"]) for r in grp])
        ses = np.asarray([float(r["std_error"]) for r in grp])
        order = np.argsort(t)
        t, est, ses = t[order], est[order], ses[order]
        tag = f"{label} eps={eps} p={p_val}"
        ax.plot(t, est, lw=1.1, label=tag)
        ax.fill_between(t, est - ses, est + ses, alpha=0.25, lw=0)
        good = (t > 0) & (est > 0)
        if good.sum() >= 3:
            slopes[tag], _ = _ols(np.log(t[good]), np.log(est[good]))
    ax.set_xlabel("t")
    ax.set_ylabel("moment estimate")
    ax.legend(fontsize=7)
    if slopes:
        first = sorted(slopes)[0]
        ax.text(0.03, 0.95, f"log-log slope vs t: {slopes[first]:.3f}",
                transform=ax.transAxes, va="top")
    _save(fig, output)
    return {"slope_vs_t": slopes, "output": output}


def render_trajectories(paths, output: str, title: str) -> dict:
    fig, ax = _new_axes(title or "trajectory fan")
    count = 0
    for path in paths:
        times, values = load_trajectory(path)
        values = np.asarray(values)
        for comp in range(values.shape[1]):
            ax.plot(times, values[:, comp], lw=0.8, alpha=0.8)
            count += 1
    ax.set_xlabel("t")
    ax.set_ylabel("state")
    _save(fig, output)
    return {"curves": count, "output": output}


def render_covariance(paths, output: str, title: str) -> dict:
    rows = load_rows(paths[0], "covariance")
    s_vals = sorted({float(r["s"]) for r in rows})
    t_vals = sorted({float(r["t"]) for r in rows})
    recon = np.full((len(s_vals), len(t_vals)), np.nan)
    ratio = np.full_like(recon, np.nan)
    for r in rows:
        i = s_vals.index(float(r["s"]))
        j = t_vals.index(float(r["t"]))
        recon[i, j] = float(r["reconstructed"])
        ratio[i, j] = float(r["ratio"])
    fitted = float(np.nanmedian(ratio))
    residual = ratio / fitted - 1.0
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.8, 4.0))
    if title:
        fig.suptitle(title)
    im1 = ax1.imshow(recon, origin="lower", aspect="auto",
                     extent=(min(t_vals), max(t_vals), min(s_vals),
                             max(s_vals)))
    ax1.set_title("reconstructed covariance")
    ax1.set_xlabel("t")
    ax1.set_ylabel("s")
    fig.colorbar(im1, ax=ax1, shrink=0.85)
    im2 = ax2.imshow(residual, origin="lower", aspect="auto",
                     extent=(min(t_vals), max(t_vals), min(s_vals),
                             max(s_vals)), cmap="RdBu_r")
    ax2.set_title(f"ratio residual (fitted {fitted:.4f})")
    ax2.set_xlabel("t")
    fig.colorbar(im2, ax=ax2, shrink=0.85)
    _save(fig, output)
    return {"fitted_constant": fitted,
            "max_residual": float(np.nanmax(np.abs(residual))),
            "output": output}


_RENDERERS = {
    "rate": render_rate,
    "moments": render_moments,
    "trajectories": render_trajectories,
    "covariance": render_covariance,
}


def render(job: FigureJob) -> dict:
    """Render one figure job; returns the annotation summary."""
    return _RENDERERS[job.figure_kind](list(job.input_csv),
                                       job.output_image, job.title)
