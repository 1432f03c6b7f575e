from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal, Mapping, Sequence

import numpy as np
import pandas as pd

from .discretize import DiscreteController, QFormat, discretize_controller, quantize_controller
from .errors import EmptyTrace, InvalidParameters, NonFiniteState
from .synth import TwoDofController
from .tf import Continuous, Polynomial, RationalTF
from .utils import dataframe_to_csv, dataframe_to_parquet


logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["t", "r", "y", "y_meas", "u", "e", "d"]
DIVERGENCE_LIMIT = 1e12
SETTLED_FRACTION = 0.05
MAX_SUBSTEPS = 10_000

PlantKind = Literal["linear_tf", "second_order_input_disturbed"]
ShapeKind = Literal["step", "ramp", "sine"]
ReferenceKind = Literal["step", "square"]


@dataclass(frozen=True)
class PlantModel:
    tf: RationalTF
    kind: PlantKind = "linear_tf"
    params: tuple[tuple[str, float], ...] = ()

    def __post_init__(self) -> None:
        if not isinstance(self.tf.domain, Continuous):
            raise InvalidParameters("Plant must be a continuous-time transfer function")
        if not self.tf.is_strictly_proper or self.tf.num.is_zero:
            raise InvalidParameters("Plant must be strictly proper with a nonzero numerator")

    @classmethod
    def linear(cls, tf: RationalTF) -> PlantModel:
        return cls(tf=tf)

    @classmethod
    def second_order_input_disturbed(cls, a1: float, a0: float, b: float) -> PlantModel:
        """y'' = -a1 y' - a0 y + b (u + w)."""
        if b == 0 or not all(math.isfinite(v) for v in (a1, a0, b)):
            raise InvalidParameters(f"Second-order plant needs finite a1, a0 and b != 0, got ({a1}, {a0}, {b})")
        tf = RationalTF(Polynomial.constant(b), Polynomial((a0, a1, 1.0)))
        return cls(tf=tf, kind="second_order_input_disturbed", params=(("a1", a1), ("a0", a0), ("b", b)))

    @property
    def delay(self) -> float:
        return self.tf.delay


@dataclass(frozen=True)
class DisturbanceSegment:
    t_start: float
    shape: ShapeKind
    level: float = 0.0
    rate: float = 0.0
    amp: float = 0.0
    freq_hz: float = 0.0
    phase_rad: float = 0.0

    def evaluate(self, t: np.ndarray) -> np.ndarray:
        active = t >= self.t_start
        dt = t - self.t_start
        if self.shape == "step":
            values = np.full_like(t, self.level)
        elif self.shape == "ramp":
            values = self.rate * dt
        elif self.shape == "sine":
            values = self.amp * np.sin(2.0 * math.pi * self.freq_hz * dt + self.phase_rad)
        else:
            raise InvalidParameters(f"Unknown disturbance shape: {self.shape!r}")
        return np.where(active, values, 0.0)

    def to_record(self) -> dict[str, Any]:
        out: dict[str, Any] = {"t_start_s": self.t_start, "shape": self.shape}
        if self.shape == "step":
            out["level"] = self.level
        elif self.shape == "ramp":
            out["rate_per_s"] = self.rate
        else:
            out.update({"amp": self.amp, "freq_hz": self.freq_hz, "phase_rad": self.phase_rad})
        return out


@dataclass(frozen=True)
class DisturbanceProfile:
    """Superposition of segments, each active from its own start time."""

    segments: tuple[DisturbanceSegment, ...] = ()

    def __post_init__(self) -> None:
        starts = [s.t_start for s in self.segments]
        if any(b < a for a, b in zip(starts, starts[1:])):
            raise InvalidParameters(f"Disturbance segment start times must be non-decreasing: {starts}")

    def evaluate(self, t: np.ndarray | float) -> np.ndarray:
        arr = np.asarray(t, dtype=float)
        out = np.zeros_like(arr)
        for seg in self.segments:
            out = out + seg.evaluate(arr)
        return out


@dataclass(frozen=True)
class NoiseSpec:
    power: float = 0.0
    sample_time: float = 1e-3
    seed: int = 0
    t_on: float = 0.0

    def __post_init__(self) -> None:
        if self.power < 0 or not math.isfinite(self.power):
            raise InvalidParameters(f"Noise power must be >= 0, got {self.power!r}")
        if not (math.isfinite(self.sample_time) and self.sample_time > 0):
            raise InvalidParameters(f"Noise sample time must be > 0, got {self.sample_time!r}")

    @property
    def variance(self) -> float:
        return self.power / self.sample_time

    def samples(self, t: np.ndarray) -> np.ndarray:
        """Zero-order-held Gaussian sequence with variance power/sample_time."""
        if self.power == 0.0 or t.size == 0:
            return np.zeros_like(t)
        idx = np.floor(t / self.sample_time + 1e-9).astype(np.int64)
        rng = np.random.Generator(np.random.Philox(self.seed))
        draws = rng.standard_normal(int(idx.max()) + 1) * math.sqrt(self.variance)
        return np.where(t >= self.t_on, draws[idx], 0.0)


@dataclass(frozen=True)
class ReferenceSpec:
    kind: ReferenceKind = "step"
    amplitude: float = 1.0
    t_start: float = 0.0
    period: float = 10.0
    duty: float = 0.5
    shaping: RationalTF | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("step", "square"):
            raise InvalidParameters(f"Unknown reference kind: {self.kind!r}")
        if self.kind == "square" and not (self.period > 0 and 0.0 < self.duty < 1.0):
            raise InvalidParameters(f"Square reference needs period > 0 and duty in (0, 1), got ({self.period}, {self.duty})")
        if self.shaping is not None and not self.shaping.is_strictly_proper:
            raise InvalidParameters("Reference shaping filter must be strictly proper")

    def raw(self, t: np.ndarray) -> np.ndarray:
        started = t >= self.t_start
        if self.kind == "step":
            return np.where(started, self.amplitude, 0.0)
        phase = (t - self.t_start) / self.period
        phase = phase - np.floor(phase + 1e-9)
        high = phase < self.duty - 1e-9
        return np.where(started & high, self.amplitude, 0.0)


@dataclass(frozen=True)
class DiscretePipeline:
    """Serial discrete blocks: u = feedback(prefilter(r) - y_meas)."""

    prefilter: tuple[DiscreteController, ...]
    feedback: tuple[DiscreteController, ...]

    @property
    def blocks(self) -> tuple[DiscreteController, ...]:
        return self.prefilter + self.feedback

    def reset(self) -> None:
        for block in self.blocks:
            block.reset()

    def quantized(self, q: QFormat) -> DiscretePipeline:
        return DiscretePipeline(
            prefilter=tuple(quantize_controller(c, q) for c in self.prefilter),
            feedback=tuple(quantize_controller(c, q) for c in self.feedback),
        )


@dataclass(frozen=True)
class SimScenario:
    plant: PlantModel
    controller: TwoDofController | DiscretePipeline
    reference: ReferenceSpec
    ts: float
    t_end: float
    disturbance: DisturbanceProfile = DisturbanceProfile()
    noise: NoiseSpec = NoiseSpec()
    substeps: int = 10
    name: str = ""
    windows: tuple[tuple[str, float, float], ...] = ()
    notes: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not (math.isfinite(self.ts) and self.ts > 0):
            raise InvalidParameters(f"Controller sample time must be > 0, got {self.ts!r}")
        if not (math.isfinite(self.t_end) and self.t_end > 0):
            raise InvalidParameters(f"t_end must be > 0, got {self.t_end!r}")
        if self.substeps < 1:
            raise InvalidParameters(f"substeps must be >= 1, got {self.substeps}")
        if isinstance(self.controller, DiscretePipeline):
            for block in self.controller.blocks:
                if not math.isclose(block.ts, self.ts, rel_tol=1e-12):
                    raise InvalidParameters(f"Block {block.label!r} runs at Ts={block.ts}, scenario at Ts={self.ts}")

    def pipeline(self) -> DiscretePipeline:
        if isinstance(self.controller, DiscretePipeline):
            return self.controller
        c = self.controller
        return DiscretePipeline(
            prefilter=(discretize_controller(c.prefilter, self.ts, label=f"{c.label} C_PF"),),
            feedback=(discretize_controller(c.feedback, self.ts, label=f"{c.label} C_FB"),),
        )

    def window_map(self) -> dict[str, tuple[float, float]]:
        """Named windows clipped to the horizon; windows starting past t_end are dropped."""
        out = {"full": (0.0, self.t_end)}
        out.update({name: (t0, min(t1, self.t_end)) for name, t0, t1 in self.windows if t0 < self.t_end})
        return out


@dataclass(frozen=True, eq=False)
class SimTrace:
    t: np.ndarray
    r: np.ndarray
    y: np.ndarray
    y_meas: np.ndarray
    u: np.ndarray
    e: np.ndarray
    d: np.ndarray

    def __post_init__(self) -> None:
        n = self.t.size
        if any(getattr(self, c).size != n for c in TRACE_COLUMNS):
            raise InvalidParameters("All trace series must have the same length")

    def __len__(self) -> int:
        return int(self.t.size)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({c: getattr(self, c) for c in TRACE_COLUMNS})


@dataclass(frozen=True)
class Metrics:
    iae: float
    overshoot_pct: float
    u_peak: float
    steady_state_error: float
    rise_time: float

    def to_record(self) -> dict[str, float]:
        return {
            "iae": self.iae,
            "overshoot_pct": self.overshoot_pct,
            "u_peak": self.u_peak,
            "steady_state_error": self.steady_state_error,
            "rise_time_s": self.rise_time,
        }


def _companion(tf: RationalTF) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Controllable canonical (A, B, C) of a strictly proper TF."""
    den = tf.den.as_array() / tf.den.leading
    num = tf.num.as_array() / tf.den.leading
    m = tf.den.degree
    a = np.zeros((m, m))
    a[:-1, 1:] = np.eye(m - 1)
    a[-1, :] = -den[:m]
    b = np.zeros(m)
    b[-1] = 1.0
    c = np.zeros(m)
    c[: num.size] = num
    return a, b, c


def _rk4_stage_maps(a: np.ndarray, b: np.ndarray, h: float) -> np.ndarray:
    """One RK4 step of x' = A x + B v as a map on [x, v(t), v(t+h/2), v(t+h)]."""
    m = a.shape[0]
    ident = np.hstack([np.eye(m), np.zeros((m, 3))])

    def inject(col: int) -> np.ndarray:
        out = np.zeros((m, m + 3))
        out[:, m + col] = b
        return out

    k1 = a @ ident + inject(0)
    k2 = a @ (ident + 0.5 * h * k1) + inject(1)
    k3 = a @ (ident + 0.5 * h * k2) + inject(1)
    k4 = a @ (ident + h * k3) + inject(2)
    return ident + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass(frozen=True, eq=False)
class _LiftedPlant:
    """Substep RK4 folded into one controller period.

    x[k+1] = phi x[k] + ua u_old + ub u_new + wmat @ w(t_k + i h/2), i = 0..2S.
    """

    phi: np.ndarray
    ua: np.ndarray
    ub: np.ndarray
    wmat: np.ndarray
    c: np.ndarray
    substeps: int
    delay_periods: int
    switch_substep: int


def _lift(a: np.ndarray, b: np.ndarray, c: np.ndarray, ts: float, substeps: int, delay: float) -> _LiftedPlant:
    m = a.shape[0]
    h = ts / substeps
    step = _rk4_stage_maps(a, b, h)
    phi1, g0, gm, g1 = step[:, :m], step[:, m], step[:, m + 1], step[:, m + 2]
    delay_substeps = int(round(delay / h))
    d0, r = divmod(delay_substeps, substeps)

    phi = np.eye(m)
    ua = np.zeros(m)
    ub = np.zeros(m)
    wmat = np.zeros((m, 2 * substeps + 1))
    for j in range(substeps):
        # state after substep j: everything so far propagates once more
        phi = phi1 @ phi
        ua = phi1 @ ua
        ub = phi1 @ ub
        wmat = phi1 @ wmat
        gsum = g0 + gm + g1
        if j < r:
            ua = ua + gsum
        else:
            ub = ub + gsum
        wmat[:, 2 * j] += g0
        wmat[:, 2 * j + 1] += gm
        wmat[:, 2 * j + 2] += g1
    return _LiftedPlant(phi=phi, ua=ua, ub=ub, wmat=wmat, c=c, substeps=substeps, delay_periods=d0, switch_substep=r)


def _delay_compatible_substeps(ts: float, substeps: int, delay: float) -> int:
    if delay == 0.0:
        return substeps
    for s in range(substeps, MAX_SUBSTEPS + 1):
        ratio = delay * s / ts
        if abs(ratio - round(ratio)) <= 1e-9 * max(1.0, ratio):
            if s != substeps:
                logger.info("Substeps raised from %d to %d so the %.6g s delay spans whole substeps", substeps, s, delay)
            return s
    raise InvalidParameters(f"Delay {delay} s is not a rational multiple of Ts={ts} s within {MAX_SUBSTEPS} substeps")


def _shaped_reference(spec: ReferenceSpec, t: np.ndarray, ts: float, substeps: int) -> np.ndarray:
    raw = spec.raw(t)
    if spec.shaping is None:
        return raw
    a, b, c = _companion(spec.shaping)
    lifted = _lift(a, b, c, ts, substeps, 0.0)
    out = np.empty_like(raw)
    x = np.zeros(a.shape[0])
    for k, value in enumerate(raw):
        out[k] = c @ x
        x = lifted.phi @ x + lifted.ub * value
    return out


def run_closed_loop(sc: SimScenario) -> SimTrace:
    n = int(round(sc.t_end / sc.ts)) + 1
    t = np.arange(n) * sc.ts
    substeps = _delay_compatible_substeps(sc.ts, sc.substeps, sc.plant.delay)
    a, b, c = _companion(sc.plant.tf)
    plant = _lift(a, b, c, sc.ts, substeps, sc.plant.delay)

    r = _shaped_reference(sc.reference, t, sc.ts, substeps)
    noise = sc.noise.samples(t)
    d = sc.disturbance.evaluate(t)
    h = sc.ts / substeps
    offsets = np.arange(2 * substeps + 1) * (0.5 * h)
    w_samples = sc.disturbance.evaluate(t[:, None] + offsets[None, :])
    w_drive = w_samples @ plant.wmat.T

    pipeline = sc.pipeline()
    pipeline.reset()
    prefilter, feedback = pipeline.prefilter, pipeline.feedback

    y = np.empty(n)
    y_meas = np.empty(n)
    u = np.empty(n)
    e = np.empty(n)
    x = np.zeros(a.shape[0])
    d0, switch = plant.delay_periods, plant.switch_substep
    for k in range(n):
        yk = float(c @ x)
        ym = yk + noise[k]
        rp = r[k]
        for block in prefilter:
            rp = block.step(rp)
        ek = rp - ym
        uk = ek
        for block in feedback:
            uk = block.step(uk)
        y[k], y_meas[k], e[k], u[k] = yk, ym, ek, uk

        i_new = k - d0
        u_new = u[i_new] if i_new >= 0 else 0.0
        u_old = u[i_new - 1] if switch and i_new - 1 >= 0 else 0.0
        x = plant.phi @ x + plant.ub * u_new + plant.ua * u_old + w_drive[k]
        peak = float(np.max(np.abs(x)))
        if not peak <= DIVERGENCE_LIMIT:
            raise NonFiniteState(t[k] + sc.ts, f"|x|={peak:.3e} in scenario {sc.name or 'unnamed'}")
    return SimTrace(t=t, r=r, y=y, y_meas=y_meas, u=u, e=e, d=d)


def _settled_slice(n: int) -> slice:
    return slice(n - max(1, int(math.ceil(SETTLED_FRACTION * n))), n)


def _rise_time(t: np.ndarray, y: np.ndarray, y0: float, y_final: float) -> float:
    span = y_final - y0
    if span == 0.0:
        return math.nan
    progress = (y - y0) / span
    lo = np.flatnonzero(progress >= 0.1)
    hi = np.flatnonzero(progress >= 0.9)
    if lo.size == 0 or hi.size == 0:
        return math.nan
    return float(t[hi[0]] - t[lo[0]])


def _window_metrics(t: np.ndarray, r: np.ndarray, y: np.ndarray, u: np.ndarray, ts: float) -> Metrics:
    err = np.abs(r - y)
    settled = _settled_slice(t.size)
    y_final = float(np.mean(y[settled]))
    r_final = float(np.mean(r[settled]))
    amp = r_final - float(r[0])
    overshoot = 0.0
    rise = math.nan
    if abs(amp) > 1e-12:
        excursion = float(np.max(y)) - y_final if amp > 0 else y_final - float(np.min(y))
        overshoot = max(0.0, excursion / abs(amp) * 100.0)
        rise = _rise_time(t, y, float(y[0]), y_final)
    return Metrics(
        iae=float(np.sum(err) * ts),
        overshoot_pct=overshoot,
        u_peak=float(np.max(np.abs(u))),
        steady_state_error=float(np.mean(err[settled])),
        rise_time=rise,
    )


def compute_metrics(
    trace: SimTrace,
    windows: Mapping[str, tuple[float, float]] | None = None,
) -> dict[str, Metrics]:
    """Metrics per named window; "full" always covers the whole run."""
    if len(trace) == 0:
        raise EmptyTrace("Cannot compute metrics of an empty trace")
    ts = float(trace.t[1] - trace.t[0]) if len(trace) > 1 else 0.0
    spans = {"full": (float(trace.t[0]), float(trace.t[-1]))}
    spans.update(windows or {})
    out: dict[str, Metrics] = {}
    for name, (t0, t1) in spans.items():
        mask = (trace.t >= t0 - 1e-12) & (trace.t <= t1 + 1e-12) if name == "full" else (
            (trace.t >= t0 - 1e-12) & (trace.t < t1 - 1e-12)
        )
        if not np.any(mask):
            raise EmptyTrace(f"Window {name!r} [{t0}, {t1}) holds no samples")
        out[name] = _window_metrics(trace.t[mask], trace.r[mask], trace.y[mask], trace.u[mask], ts)
    return out


def relative_rms(actual: np.ndarray, reference: np.ndarray) -> float:
    denom = float(np.sqrt(np.mean(np.square(reference))))
    diff = float(np.sqrt(np.mean(np.square(actual - reference))))
    return diff / denom if denom > 0 else diff


def write_trace(trace: SimTrace, path: Path, fmt: str = "csv") -> Path:
    df = trace.to_frame()
    if fmt == "csv":
        dataframe_to_csv(df, path)
    elif fmt == "parquet":
        dataframe_to_parquet(df, path)
    else:
        raise InvalidParameters(f"Unsupported trace format: {fmt!r}")
    return path


@dataclass
class RunResult:
    scenario: SimScenario
    trace: SimTrace
    metrics: dict[str, Metrics] = field(default_factory=dict)


def run_scenarios(scenarios: Sequence[SimScenario]) -> list[RunResult]:
    results: list[RunResult] = []
    for sc in scenarios:
        trace = run_closed_loop(sc)
        results.append(RunResult(scenario=sc, trace=trace, metrics=compute_metrics(trace, sc.window_map())))
        logger.info("Simulated %s: %d samples", sc.name or "scenario", len(trace))
    return results
