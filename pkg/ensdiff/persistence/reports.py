"""
CSV tables and SVG figures.
"""

import os
from typing import Dict, Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
import structlog  # noqa: E402

from ..core.schedule import Schedule  # noqa: E402

logger = structlog.get_logger(__name__)

plt.rcParams["svg.hashsalt"] = "ensdiff"
_SVG_METADATA = {"Date": None, "Creator": None}


def _ensure_parent(path: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)


def write_csv(frame: pd.DataFrame, path: str) -> None:
    _ensure_parent(path)
    frame.to_csv(path, index=False)
    logger.info("table_written", path=path, rows=len(frame))


def _save(fig, path: str) -> None:
    _ensure_parent(path)
    fig.savefig(path, format="svg", metadata=_SVG_METADATA)
    plt.close(fig)
    logger.info("figure_written", path=path)


def plot_variance_curve(frame: pd.DataFrame, path: str, reference_level: Optional[float] = None) -> None:
    """mu_V against the number of steps (log2 x axis)."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(frame["N_steps"], frame["mu_V"], marker="o", label="generated")
    if "mu_V_predicted" in frame:
        ax.plot(frame["N_steps"], frame["mu_V_predicted"], linestyle="--", label="predicted")
    if reference_level is not None:
        ax.axhline(reference_level, color="black", linewidth=1, linestyle=":", label="reference")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("diffusion steps N")
    ax.set_ylabel("global mean variance")
    ax.legend()
    fig.tight_layout()
    _save(fig, path)


def plot_spatial_maps(maps: Dict[str, np.ndarray], path: str) -> None:
    """One heatmap per season on a shared colour scale."""
    names = list(maps)
    vmax = max(float(np.max(m)) for m in maps.values())
    fig, axes = plt.subplots(1, len(names), figsize=(3 * len(names), 3), squeeze=False)
    for ax, name in zip(axes[0], names):
        image = ax.imshow(maps[name], vmin=0.0, vmax=vmax, cmap="viridis")
        ax.set_title(name)
        ax.set_xticks([])
        ax.set_yticks([])
    fig.colorbar(image, ax=axes[0].tolist(), shrink=0.8)
    _save(fig, path)


def schedule_frame(schedule: Schedule) -> pd.DataFrame:
    return pd.DataFrame({
        "t": np.arange(schedule.T + 1),
        "signal_rate": schedule.sr,
        "noise_rate": schedule.nr,
        "scaled_signal_rate": schedule.scaled_signal_rates(),
    })


def plot_schedule(schedule: Schedule, path: str) -> None:
    """Signal and noise rates with and without the lambda scaling."""
    frame = schedule_frame(schedule)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(frame["t"], frame["signal_rate"], label="signal rate")
    ax.plot(frame["t"], frame["noise_rate"], label="noise rate")
    ax.plot(frame["t"], frame["scaled_signal_rate"], linestyle="--", label=f"signal rate / {schedule.lambda_:g}")
    ax.set_xlabel("t")
    ax.legend()
    fig.tight_layout()
    _save(fig, path)


def plot_point_series(frame: pd.DataFrame, path: str) -> None:
    """Smoothed ensemble mean with a +/- one std band."""
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.fill_between(frame["sample"], frame["lower"], frame["upper"], alpha=0.3, label="+/- 1 std")
    ax.plot(frame["sample"], frame["mean_smoothed"], label="ensemble mean")
    ax.set_xlabel("sample")
    ax.legend()
    fig.tight_layout()
    _save(fig, path)
