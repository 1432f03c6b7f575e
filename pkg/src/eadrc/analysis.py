from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.optimize import minimize_scalar

from .errors import InvalidParameters, UnstableEvaluation
from .synth import TwoDofController
from .tf import (
    Continuous,
    FactoredTF,
    RationalTF,
    TransferFunction,
    freq_eval,
    response,
    tf_feedback,
    tf_scale,
    tf_series,
    tf_sum,
)
from .utils import dataframe_to_csv, log_grid


logger = logging.getLogger(__name__)

DEFAULT_MS_RANGE = (1e-3, 1e3)
MS_GRID_POINTS = 2000
MS_REFINE_XTOL = 1e-4
RETURN_DIFFERENCE_FLOOR = 1e-12


@dataclass(frozen=True)
class LoopAssembly:
    plant: RationalTF
    controller: TwoDofController

    def __post_init__(self) -> None:
        for tf in (self.plant, self.controller.feedback, self.controller.prefilter):
            if not isinstance(tf.domain, Continuous):
                raise InvalidParameters("Loop analysis works on continuous-time transfer functions")
        if self.controller.feedback.delay or self.controller.prefilter.delay:
            raise InvalidParameters("Controller transfer functions must not carry transport delay")

    @property
    def loop(self) -> RationalTF:
        return tf_series(self.controller.feedback, self.plant)


@dataclass(frozen=True)
class MsResult:
    ms: float
    omega_peak: float
    grid: str


def _sensitivity_magnitude(asm: LoopAssembly, w: np.ndarray) -> np.ndarray:
    loop = response(asm.loop, w)
    return_difference = np.abs(1.0 + loop)
    if np.any(return_difference < RETURN_DIFFERENCE_FLOOR):
        idx = int(np.argmin(return_difference))
        raise UnstableEvaluation(f"|1+L(jw)| = {return_difference[idx]:.3e} at w={w[idx]:.6g} rad/s")
    return 1.0 / return_difference


def ms_index(
    asm: LoopAssembly,
    omega_range: tuple[float, float] = DEFAULT_MS_RANGE,
    n_points: int = MS_GRID_POINTS,
) -> MsResult:
    lo, hi = omega_range
    w = log_grid(lo, hi, n_points)
    mags = _sensitivity_magnitude(asm, w)
    i = int(np.argmax(mags))
    best, w_best = float(mags[i]), float(w[i])
    note = f"log grid {n_points} pts on [{lo:g}, {hi:g}] rad/s"

    interior = 0 < i < len(w) - 1 and mags[i] > mags[i - 1] and mags[i] > mags[i + 1]
    if interior:

        def objective(omega: float) -> float:
            return -float(_sensitivity_magnitude(asm, np.array([omega]))[0])

        try:
            res = minimize_scalar(
                objective,
                bracket=(float(w[i - 1]), w_best, float(w[i + 1])),
                method="golden",
                options={"xtol": MS_REFINE_XTOL},
            )
        except ValueError as exc:
            logger.debug("golden refinement skipped: %s", exc)
        else:
            if -res.fun > best:
                best, w_best = float(-res.fun), float(res.x)
            note += f"; golden refinement xtol={MS_REFINE_XTOL:g}"
    else:
        note += "; no interior peak, refinement skipped"
    return MsResult(ms=best, omega_peak=w_best, grid=note)


def sensitivity_frame(asm: LoopAssembly, omegas: Sequence[float] | np.ndarray) -> pd.DataFrame:
    w = np.asarray(omegas, dtype=float)
    return pd.DataFrame({"omega_rad_s": w, "sensitivity_abs": _sensitivity_magnitude(asm, w)})


def channel_yd(asm: LoopAssembly) -> TransferFunction:
    """Disturbance to output: G_P / (1 + C_FB G_P)."""
    return tf_feedback(asm.plant, asm.controller.feedback)


def channel_un(asm: LoopAssembly) -> TransferFunction:
    """Measurement noise to control: -C_FB / (1 + C_FB G_P)."""
    closed = tf_feedback(asm.controller.feedback, asm.plant)
    if isinstance(closed, FactoredTF):
        return FactoredTF(g=closed.g, h=closed.h, gain=-1.0)
    return tf_scale(closed, -1.0)


def channel_er(asm: LoopAssembly) -> TransferFunction:
    """Reference to tracking error: 1 - C_PF C_FB G_P / (1 + C_FB G_P)."""
    prefilter = asm.controller.prefilter
    if asm.plant.delay > 0:
        return FactoredTF(g=asm.loop, h=RationalTF.gain(1.0), series=prefilter, gain=-1.0, offset=1.0)
    complementary = tf_feedback(asm.loop, RationalTF.gain(1.0))
    return tf_sum(RationalTF.gain(1.0), tf_scale(tf_series(prefilter, complementary), -1.0))


def bode_export(
    tfs: Sequence[tuple[str, TransferFunction]],
    omega_range: tuple[float, float] = (1e-2, 1e3),
    n_points: int = 200,
) -> pd.DataFrame:
    labels = [label for label, _ in tfs]
    if len(set(labels)) != len(labels):
        dupes = sorted({x for x in labels if labels.count(x) > 1})
        raise InvalidParameters(f"Duplicate Bode labels: {dupes}")
    w = log_grid(omega_range[0], omega_range[1], n_points)
    if not tfs:
        return pd.DataFrame(columns=["omega_rad_s"])
    columns: dict[str, np.ndarray] = {"omega_rad_s": w}
    for label, tf in tfs:
        fr = freq_eval(tf, w)
        columns[f"{label}_mag_db"] = fr.magnitude_db()
        columns[f"{label}_phase_deg"] = fr.phase_deg()
    return pd.DataFrame(columns)


def write_bode_csv(df: pd.DataFrame, path: Path) -> Path:
    dataframe_to_csv(df, path)
    return path
