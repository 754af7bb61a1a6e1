"""
Figures written next to the CSV outputs.

Uses :class:`matplotlib.figure.Figure` directly, so nothing touches pyplot
state or needs a display.
"""

import numpy as np
from matplotlib.figure import Figure

RC = {"font.size": 9, "axes.labelsize": 9, "legend.fontsize": 8}


def _new(ncols=1, width=4.0, height=3.6):
    fig = Figure(figsize=(width * ncols, height), constrained_layout=True)
    axes = fig.subplots(1, ncols, squeeze=False)[0]
    for ax in axes:
        for side in ("top", "right"):
            ax.spines[side].set_visible(False)
    return fig, axes


def plot_design(design, path, candidates=None, region=None, title=None):
    """Scatter of a design; close-pair points and their links are highlighted."""
    fig, (ax,) = _new(width=5.0, height=5.0)
    if candidates is not None:
        ax.scatter(*candidates.points.T, s=4, c="0.25", lw=0, label="candidates")
    pts = design.points
    primary = design.parents < 0
    ax.scatter(*pts[primary].T, s=14, c="tab:blue", lw=0, label="inhibitory")
    kids = np.flatnonzero(~primary)
    if kids.size:
        ax.scatter(*pts[kids].T, s=14, c="tab:red", lw=0, label="close pair")
        for j in kids:
            p = pts[design.parents[j]]
            ax.plot([p[0], pts[j, 0]], [p[1], pts[j, 1]], c="tab:red", lw=0.6)
    if region is not None:
        ax.set_xlim(region.xmin, region.xmax)
        ax.set_ylim(region.ymin, region.ymax)
    ax.set_aspect("equal")
    ax.set_title(title or f"{design.family} design, n = {len(design)}")
    ax.legend(loc="upper right", frameon=False)
    fig.savefig(path, dpi=150)
    return path


def plot_report(report, path):
    """Mean APV against the swept design parameter, one panel per nugget value.

    Error bars are two Monte Carlo standard errors.
    """
    spec = report.spec
    xkey = {"si": "delta", "icp": "k"}.get(spec.family)
    tau2s = list(dict.fromkeys(c["tau2"] for c in report.cells))
    fig, axes = _new(ncols=len(tau2s))
    for ax, tau2 in zip(axes, tau2s):
        for phi in dict.fromkeys(c["phi"] for c in report.cells):
            cells = [c for c in report.cells if c["phi"] == phi and c["tau2"] == tau2]
            x = [c[xkey] if xkey else 0 for c in cells]
            y = np.array([c["mean_apv"] for c in cells])
            e = 2 * np.array([c["se_apv"] for c in cells])
            ax.errorbar(x, y, yerr=e, marker="o", ms=3, capsize=2, label=f"phi = {phi:g}")
        ax.set_xlabel({"delta": "inhibition distance", "k": "close pairs k"}.get(xkey, ""))
        ax.set_ylabel("average prediction variance")
        ax.set_title(f"{spec.model}, tau2 = {tau2:g}")
        ax.legend(frameon=False)
    fig.savefig(path, dpi=150)
    return path


def plot_surface(surface, grid, path, which="variance"):
    fig, (ax,) = _new(width=4.6, height=4.0)
    z = np.asarray(getattr(surface, which)).reshape(grid.ny, grid.nx)
    r = grid.region
    im = ax.imshow(z, origin="lower", extent=(r.xmin, r.xmax, r.ymin, r.ymax),
                   cmap="viridis", aspect="equal")
    fig.colorbar(im, ax=ax, label=which)
    fig.savefig(path, dpi=150)
    return path
