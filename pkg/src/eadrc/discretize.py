from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal, Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import (
    FixedPointOverflow,
    HasDelay,
    ImproperResult,
    Indeterminate,
    InvalidParameters,
    UnsupportedOrder,
    WrongFilterKind,
)
from .synth import AdrcGains, FilterSpec, PidParams, build_ceq, build_eadrc_fb, build_pid_fb, equivalent_output_filter, pid_from_adrc
from .tf import Discrete, Polynomial, RationalTF, dc_gain, response, tf_series
from .utils import append_ndjson, coefficient_deviation, isoformat_utc, log_grid, max_relative_deviation, utc_now


logger = logging.getLogger(__name__)

CoefficientSource = Literal["oracle", "printed"]

ORACLE_AGREEMENT_TOL = 1e-9
AUDIT_GRID_POINTS = 200


@dataclass(frozen=True)
class QFormat:
    frac_bits: int = 40
    total_bits: int = 64

    def __post_init__(self) -> None:
        if self.total_bits != 64:
            raise InvalidParameters(f"Only 64-bit words are emulated, got total_bits={self.total_bits}")
        if not 8 <= self.frac_bits <= 56:
            raise InvalidParameters(f"frac_bits must be in [8, 56], got {self.frac_bits}")

    @property
    def max_int(self) -> int:
        return (1 << (self.total_bits - 1)) - 1

    @property
    def min_int(self) -> int:
        return -(1 << (self.total_bits - 1))

    @property
    def resolution(self) -> float:
        return math.ldexp(1.0, -self.frac_bits)

    def saturate(self, value: int) -> tuple[int, bool]:
        if value > self.max_int:
            return self.max_int, True
        if value < self.min_int:
            return self.min_int, True
        return value, False

    def to_fixed(self, x: float) -> tuple[int, bool]:
        # round() on a float is round-half-to-even on its exact binary value
        return self.saturate(round(math.ldexp(x, self.frac_bits)))

    def to_float(self, value: int) -> float:
        return math.ldexp(float(value), -self.frac_bits)

    def quantize(self, x: float) -> float:
        return self.to_float(self.to_fixed(x)[0])

    def mul(self, a: int, b: int) -> tuple[int, bool]:
        return self.saturate(_shift_round_half_even(a * b, self.frac_bits))

    def add(self, a: int, b: int) -> tuple[int, bool]:
        return self.saturate(a + b)


def _shift_round_half_even(value: int, shift: int) -> int:
    q, r = divmod(value, 1 << shift)
    half = 1 << (shift - 1)
    if r > half or (r == half and q & 1):
        q += 1
    return q


@dataclass(frozen=True)
class CoefficientAudit:
    """Printed closed-form coefficients diffed against Euler substitution."""

    builder: str
    ts: float
    printed: RationalTF
    oracle: RationalTF
    coefficient_deviation: float
    frequency_deviation: float
    printed_dc: float
    oracle_dc: float
    consumed: CoefficientSource

    @property
    def agrees(self) -> bool:
        return self.frequency_deviation <= ORACLE_AGREEMENT_TOL

    def to_record(self) -> dict[str, Any]:
        return {
            "ts_utc": isoformat_utc(utc_now()),
            "builder": self.builder,
            "ts_s": self.ts,
            "printed": {"num": list(self.printed.num.coeffs), "den": list(self.printed.den.coeffs)},
            "oracle": {"num": list(self.oracle.num.coeffs), "den": list(self.oracle.den.coeffs)},
            "max_coefficient_deviation": self.coefficient_deviation,
            "max_frequency_deviation": self.frequency_deviation,
            "printed_dc": _json_float(self.printed_dc),
            "oracle_dc": _json_float(self.oracle_dc),
            "agrees": self.agrees,
            "consumed": self.consumed,
        }


def _json_float(value: float) -> float | str:
    return value if math.isfinite(value) else str(value)


def _safe_dc(tf: RationalTF) -> float:
    try:
        return dc_gain(tf)
    except Indeterminate:
        return math.nan


class DiscreteController:
    """Serial Direct-Form-II-transposed realization of one or more discrete sections.

    The stepper is stateful; one instance belongs to one simulation run.
    """

    def __init__(
        self,
        tf: RationalTF,
        sections: Sequence[RationalTF] | None = None,
        *,
        quantization: QFormat | None = None,
        label: str = "",
        audit: CoefficientAudit | None = None,
    ) -> None:
        if not isinstance(tf.domain, Discrete):
            raise InvalidParameters("DiscreteController needs a discrete-time transfer function")
        sections = tuple(sections) if sections else (tf,)
        for sec in sections:
            if not isinstance(sec.domain, Discrete) or sec.domain.ts != tf.domain.ts:
                raise InvalidParameters("All realization sections must share the controller sample time")
            if not sec.is_proper:
                raise ImproperResult(
                    f"Section is not causal: numerator degree {sec.num.degree} > denominator degree {sec.den.degree}"
                )
        self.tf = tf
        self.sections = tuple(sec.normalized() for sec in sections)
        self.quantization = quantization
        self.label = label
        self.audit = audit
        self._coeffs = [_df2t_coefficients(sec) for sec in self.sections]
        self._fixed: list[tuple[list[int], list[int]]] = []
        if quantization is not None:
            for b, a in self._coeffs:
                self._fixed.append((_load_fixed(b, quantization), _load_fixed(a, quantization)))
        self._saturated = False
        self.reset()

    @property
    def ts(self) -> float:
        return self.tf.domain.ts  # type: ignore[union-attr]

    @property
    def state_size(self) -> int:
        return sum(len(a) - 1 for _, a in self._coeffs)

    def reset(self) -> None:
        self._state = [[0.0] * (len(a) - 1) for _, a in self._coeffs]
        self._fixed_state = [[0] * (len(a) - 1) for _, a in self._coeffs]
        self._saturated = False

    def step(self, x: float) -> float:
        if self.quantization is not None:
            return self._step_fixed(x)
        v = x
        for (b, a), s in zip(self._coeffs, self._state):
            order = len(a) - 1
            if order == 0:
                v = b[0] * v
                continue
            y = b[0] * v + s[0]
            for i in range(order - 1):
                s[i] = b[i + 1] * v - a[i + 1] * y + s[i + 1]
            s[order - 1] = b[order] * v - a[order] * y
            v = y
        return v

    def _step_fixed(self, x: float) -> float:
        q = self.quantization
        assert q is not None
        v, sat = q.to_fixed(x)
        flags = [sat]
        for (b, a), s in zip(self._fixed, self._fixed_state):
            order = len(a) - 1
            bv, f = q.mul(b[0], v)
            flags.append(f)
            if order == 0:
                v = bv
                continue
            y, f = q.add(bv, s[0])
            flags.append(f)
            for i in range(order):
                bi, f1 = q.mul(b[i + 1], v)
                ai, f2 = q.mul(a[i + 1], y)
                acc, f3 = q.add(bi, -ai)
                if i < order - 1:
                    acc, f4 = q.add(acc, s[i + 1])
                    flags.append(f4)
                s[i] = acc
                flags.extend((f1, f2, f3))
            v = y
        if any(flags) and not self._saturated:
            self._saturated = True
            logger.warning("Fixed-point saturation in controller %r (Q%d)", self.label, q.frac_bits)
        return q.to_float(v)


def _df2t_coefficients(sec: RationalTF) -> tuple[list[float], list[float]]:
    """Descending (b, a) with a[0] == 1 and len(b) == len(a)."""
    n = sec.den.degree
    a = list(reversed(sec.den.coeffs))
    num = list(sec.num.coeffs) + [0.0] * (n + 1 - len(sec.num.coeffs))
    b = list(reversed(num))
    return b, a


def _load_fixed(values: Sequence[float], q: QFormat) -> list[int]:
    out: list[int] = []
    for v in values:
        fixed, saturated = q.to_fixed(v)
        if saturated:
            raise FixedPointOverflow(f"Coefficient {v!r} does not fit Q{q.frac_bits} in {q.total_bits} bits")
        out.append(fixed)
    return out


def step_discrete(c: DiscreteController, x: float) -> float:
    return c.step(x)


def euler_discretize(g: RationalTF, ts: float) -> RationalTF:
    """Substitute s = (z - 1)/Ts and clear the common Ts powers."""
    if g.delay > 0:
        raise HasDelay("Euler discretization needs a delay-free transfer function")
    domain = Discrete(ts)
    m = max(g.num.degree, g.den.degree)

    def substitute(poly: Polynomial) -> Polynomial:
        out = np.zeros(m + 1)
        for i, c in enumerate(poly.coeffs):
            if c == 0.0:
                continue
            term = c * ts ** (m - i) * P.polypow([-1.0, 1.0], i)
            out[: term.size] += term
        return Polynomial(tuple(out))

    return RationalTF(substitute(g.num), substitute(g.den), domain)


def euler_sections(g: RationalTF, ts: float) -> tuple[RationalTF, ...]:
    """Euler realization with a pure integrator kept as its own 1/(z-1) section.

    The integrator Ts moves into the core section so that both keep coefficients of
    moderate size.
    """
    strictly_proper = g.num.degree < g.den.degree
    if g.den.coeffs[0] == 0.0 and strictly_proper and not g.num.is_zero:
        core = euler_discretize(RationalTF(g.num, Polynomial(g.den.coeffs[1:]), g.domain), ts)
        integrator = RationalTF(Polynomial.constant(1.0), Polynomial((-1.0, 1.0)), core.domain)
        return RationalTF(core.num.scale(ts), core.den, core.domain), integrator
    return (euler_discretize(g, ts),)


def _product(sections: Sequence[RationalTF]) -> RationalTF:
    out = sections[0]
    for sec in sections[1:]:
        out = tf_series(out, sec)
    return out


def _sectioned_response(sections: Sequence[RationalTF], w: np.ndarray) -> np.ndarray:
    out = np.ones(w.shape, dtype=complex)
    for sec in sections:
        out = out * response(sec.normalized(), w)
    return out


def _audit(
    builder: str,
    ts: float,
    printed_sections: Sequence[RationalTF],
    oracle_sections: Sequence[RationalTF],
    consumed: CoefficientSource,
    audit_log: Path | None,
) -> CoefficientAudit:
    printed, oracle = _product(printed_sections), _product(oracle_sections)
    p_norm, o_norm = printed.normalized(), oracle.normalized()
    # responses multiply section by section near z = 1
    w = log_grid(1e-2, 0.9 * math.pi / ts, AUDIT_GRID_POINTS)
    audit = CoefficientAudit(
        builder=builder,
        ts=ts,
        printed=printed,
        oracle=oracle,
        coefficient_deviation=max(
            coefficient_deviation(p_norm.num.coeffs, o_norm.num.coeffs),
            coefficient_deviation(p_norm.den.coeffs, o_norm.den.coeffs),
        ),
        frequency_deviation=max_relative_deviation(
            _sectioned_response(printed_sections, w), _sectioned_response(oracle_sections, w)
        ),
        printed_dc=_safe_dc(printed),
        oracle_dc=_safe_dc(oracle),
        consumed=consumed,
    )
    if not audit.agrees:
        logger.warning(
            "%s: printed coefficients deviate from Euler substitution (freq %.3e, coeff %.3e); using %s",
            builder,
            audit.frequency_deviation,
            audit.coefficient_deviation,
            consumed,
        )
    if audit_log is not None:
        append_ndjson(audit_log, audit.to_record())
    return audit


def _check_source(use: str) -> CoefficientSource:
    if use not in ("oracle", "printed"):
        raise InvalidParameters(f"use must be 'oracle' or 'printed', got {use!r}")
    return use  # type: ignore[return-value]


def _check_ts(ts: float) -> None:
    if not (math.isfinite(ts) and ts > 0):
        raise InvalidParameters(f"Sample time must be > 0, got {ts!r}")


def _require_second_order(g: AdrcGains) -> None:
    if g.n != 2:
        raise UnsupportedOrder(f"Discrete closed forms are printed for n=2 only, got n={g.n}")


def discretize_controller(g: RationalTF, ts: float, *, label: str = "") -> DiscreteController:
    """Euler realization of an arbitrary delay-free controller TF."""
    _check_ts(ts)
    sections = euler_sections(g, ts)
    return DiscreteController(_product(sections), sections, label=label)


def pid_z(
    p: PidParams,
    ts: float,
    *,
    use: CoefficientSource = "oracle",
    audit_log: Path | None = None,
) -> DiscreteController:
    _check_ts(ts)
    use = _check_source(use)
    if p.fy.kind != "first_order":
        raise WrongFilterKind(f"pid_z needs a first-order output filter, got {p.fy.kind}")
    kp, ki, kd, tf_ = p.kp, p.ki, p.kd, p.fy.t
    domain = Discrete(ts)
    printed = RationalTF.from_coeffs(
        (kd - kp * ts + kp * ts**2, kp * ts - 2.0 * kd, kd),
        (tf_ - ts, ts - 2.0 * tf_, tf_),
        domain,
    )
    sections = euler_sections(build_pid_fb(p), ts)
    oracle = _product(sections)
    audit = _audit("pid_z", ts, (printed,), sections, use, audit_log)
    if use == "printed":
        return DiscreteController(printed, label="PID(z) printed", audit=audit)
    return DiscreteController(oracle, sections, label="PID(z)", audit=audit)


def eadrc_fb_z(
    g: AdrcGains,
    ts: float,
    *,
    use: CoefficientSource = "oracle",
    audit_log: Path | None = None,
) -> DiscreteController:
    _require_second_order(g)
    _check_ts(ts)
    use = _check_source(use)
    k1, k2 = g.k
    l1, l2, l3 = g.l
    m2 = k1 * l1 + k2 * l2 + l3
    m_s = k1 * l2 + k2 * l3
    m1 = -2.0 * m2 + ts * m_s
    m0 = m2 - ts * m_s + ts**2 * k1 * l3
    n1 = ts * (k2 + l1) - 2.0
    n0 = -n1 + ts**2 * (l2 + k1 + l1 * k2) - 1.0
    domain = Discrete(ts)
    gain = ts / g.b0
    printed_sections = (
        RationalTF.from_coeffs((gain * m0, gain * m1, gain * m2), (n0, n1, 1.0), domain),
        RationalTF.from_coeffs((1.0,), (-1.0, 1.0), domain),
    )
    printed = _product(printed_sections)
    oracle_sections = euler_sections(build_eadrc_fb(g), ts)
    oracle = _product(oracle_sections)
    audit = _audit("eadrc_fb_z", ts, printed_sections, oracle_sections, use, audit_log)
    if use == "printed":
        return DiscreteController(printed, printed_sections, label="eADRC C_FB(z) printed", audit=audit)
    return DiscreteController(oracle, oracle_sections, label="eADRC C_FB(z)", audit=audit)


def ceq2_z(
    g: AdrcGains,
    tf_: float,
    ts: float,
    *,
    use: CoefficientSource = "oracle",
    audit_log: Path | None = None,
) -> DiscreteController:
    _require_second_order(g)
    _check_ts(ts)
    use = _check_source(use)
    k2, l1 = g.k[1], g.l[0]
    l1_coef = ts * tf_
    l0_coef = -l1_coef + ts**2
    p2 = 1.0 / g.equivalence_denominator
    p1 = p2 * (ts * k2 * l1 - 2.0)
    p0 = p2 * (ts * k2 * l1 + 1.0) + ts**2
    domain = Discrete(ts)
    printed = RationalTF.from_coeffs((l0_coef, l1_coef), (p0, p1, p2), domain)
    oracle = euler_discretize(build_ceq(g, FilterSpec.first_order(tf_)), ts)
    audit = _audit("ceq2_z", ts, (printed,), (oracle,), use, audit_log)
    chosen = printed if use == "printed" else oracle
    return DiscreteController(chosen, label=f"C_EQ2(z) {use}", audit=audit)


def eadrc_prefilter_continuous(g: AdrcGains, pid: PidParams, beta: float, tr: float) -> RationalTF:
    """(Kp beta s + Ki)/(Kd s^2 + Kp s + Ki) * 1/(Tr s + 1) / F_Y2."""
    ratio = RationalTF(Polynomial((pid.ki, pid.kp * beta)), Polynomial((pid.ki, pid.kp, pid.kd)))
    out = tf_series(ratio, FilterSpec.first_order(tr).tf())
    return tf_series(out, equivalent_output_filter(g).inverse_tf())


def eadrc_pf_z(
    g: AdrcGains,
    pid: PidParams | None,
    beta: float,
    tr: float,
    ts: float,
    *,
    use: CoefficientSource = "oracle",
    audit_log: Path | None = None,
) -> DiscreteController:
    _require_second_order(g)
    _check_ts(ts)
    use = _check_source(use)
    if not (math.isfinite(tr) and tr > 0):
        raise InvalidParameters(f"Reference filter time constant must be > 0, got {tr!r}")
    pid = pid or pid_from_adrc(g)
    kp, ki, kd = pid.kp, pid.ki, pid.kd
    k2, l1 = g.k[1], g.l[0]
    d = g.equivalence_denominator
    group = (kp * beta + ki * (k2 + l1)) / d
    # the bare "l" of the printed H1/H0 read as l1
    tail = ki * (k2 + l1) / d
    h3 = kp * beta / d
    h2 = -3.0 * h3 + ts * group
    h1 = 3.0 * h3 - 2.0 * ts * group + ts**2 * kp * beta + ts**2 * tail
    h0 = -h3 + ts * group - ts**2 * kp * beta - ts**2 * tail - ts**3 * ki
    q3 = kd * tr
    q_a = kd + kp * tr
    q_b = kp + ki * tr
    q2 = -3.0 * q3 + ts * q_a
    q1 = 3.0 * q3 - 2.0 * ts * q_a + ts**2 * q_b
    q0 = -q3 + ts * q_a - ts**2 * q_b + ts**3 * ki
    domain = Discrete(ts)
    printed = RationalTF.from_coeffs((h0, h1, h2, h3), (q0, q1, q2, q3), domain)
    oracle = euler_discretize(eadrc_prefilter_continuous(g, pid, beta, tr), ts)
    audit = _audit("eadrc_pf_z", ts, (printed,), (oracle,), use, audit_log)
    chosen = printed if use == "printed" else oracle
    return DiscreteController(chosen, label=f"eADRC C_PF(z) {use}", audit=audit)


def quantize_controller(c: DiscreteController, q: QFormat) -> DiscreteController:
    quantized: list[RationalTF] = []
    for sec in c.sections:
        num = _load_fixed(sec.num.coeffs, q)
        den = _load_fixed(sec.den.coeffs, q)
        quantized.append(
            RationalTF(
                Polynomial(tuple(q.to_float(v) for v in num)),
                Polynomial(tuple(q.to_float(v) for v in den)),
                sec.domain,
            )
        )
    return DiscreteController(
        _product(quantized),
        quantized,
        quantization=q,
        label=c.label,
        audit=c.audit,
    )
