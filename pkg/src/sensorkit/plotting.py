"""Figure rendering for drift reports.

Uses the Agg backend so figures render to files in headless runs. A PSNR
value of infinity (identical frames) is drawn as a gap in the curve.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

__all__ = ["save_drift_figure"]


def save_drift_figure(records, path, dpi: int = 120):
    """Render per-step PSNR (one line per view) and Chamfer curves to a file."""
    steps = [r.step for r in records]
    n_views = len(records[0].view_psnr_db) if records else 0

    fig, (ax_psnr, ax_chamfer) = plt.subplots(
        2, 1, figsize=(7.0, 6.0), sharex=True, constrained_layout=True
    )
    for view in range(n_views):
        series = [
            r.view_psnr_db[view] if math.isfinite(r.view_psnr_db[view]) else float("nan")
            for r in records
        ]
        ax_psnr.plot(steps, series, marker="o", label=f"view {view}")
    ax_psnr.set_ylabel("PSNR [dB]")
    ax_psnr.grid(True, alpha=0.3)
    if n_views:
        ax_psnr.legend(fontsize=8, ncol=max(1, n_views // 4))

    ax_chamfer.plot(steps, [r.chamfer_m for r in records], marker="s", color="#aa3311")
    ax_chamfer.set_xlabel("rollout step")
    ax_chamfer.set_ylabel("Chamfer [m]")
    ax_chamfer.grid(True, alpha=0.3)

    fig.suptitle("Rollout drift")
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
    return path
