from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "eadrc"

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from .sim import SimTrace  # noqa: E402
from .utils import ensure_dir  # noqa: E402


_SVG_METADATA = {"Date": None}


def plot_trace_svg(trace: SimTrace, path: Path, title: str = "") -> Path:
    """Output and control signal over time, two stacked panels."""
    ensure_dir(path.parent)
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(10, 7), sharex=True)
    ax1.plot(trace.t, trace.r, "k--", linewidth=1.0, label="r")
    ax1.plot(trace.t, trace.y, "b-", linewidth=1.2, label="y")
    ax1.set_ylabel("output")
    ax1.legend(loc="upper right")
    ax1.grid(True, alpha=0.3)
    if title:
        ax1.set_title(title)

    ax2.plot(trace.t, trace.u, "r-", linewidth=1.0, label="u")
    ax2.set_xlabel("time [s]")
    ax2.set_ylabel("control")
    ax2.legend(loc="upper right")
    ax2.grid(True, alpha=0.3)

    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_METADATA)
    plt.close(fig)
    return path


def plot_bode_svg(df: pd.DataFrame, path: Path, title: str = "") -> Path:
    """Magnitude and phase of every `<label>_mag_db` / `<label>_phase_deg` pair in a Bode frame."""
    ensure_dir(path.parent)
    labels = [c[: -len("_mag_db")] for c in df.columns if c.endswith("_mag_db")]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(10, 8), sharex=True)
    w = df["omega_rad_s"].to_numpy()
    for label in labels:
        ax1.semilogx(w, df[f"{label}_mag_db"].to_numpy(), linewidth=1.2, label=label)
        ax2.semilogx(w, df[f"{label}_phase_deg"].to_numpy(), linewidth=1.2, label=label)
    ax1.set_ylabel("Magnitude [dB]")
    ax1.grid(True, which="both", alpha=0.3)
    if labels:
        ax1.legend(loc="best", fontsize=8)
    if title:
        ax1.set_title(title)
    ax2.set_xlabel("Frequency [rad/s]")
    ax2.set_ylabel("Phase [deg]")
    ax2.grid(True, which="both", alpha=0.3)

    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_METADATA)
    plt.close(fig)
    return path
