from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Literal

import numpy as np
import pandas as pd
from numpy.polynomial import polynomial as P

from .errors import ImproperResult, InvalidParameters, UnsupportedOrder
from .tf import Polynomial, RationalTF, tf_inverse, tf_series
from .utils import append_ndjson, coefficient_deviation, ensure_dir, isoformat_utc, save_yaml, utc_now


logger = logging.getLogger(__name__)

FilterKind = Literal["unity", "first_order", "second_order"]
ControllerKind = Literal["PI", "PID", "eADRC"]

CLOSED_FORM_ORDERS = (1, 2)
LEVERRIER_RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class FilterSpec:
    """Unit-DC low-pass: 1, 1/(t s + 1) or 1/(a2 s^2 + a1 s + 1)."""

    kind: FilterKind = "unity"
    t: float = 0.0
    a2: float = 0.0
    a1: float = 0.0

    def __post_init__(self) -> None:
        if self.kind == "unity":
            return
        if self.kind == "first_order":
            if not (math.isfinite(self.t) and self.t > 0):
                raise InvalidParameters(f"First-order filter needs T > 0, got {self.t!r}")
            return
        if self.kind == "second_order":
            if not (math.isfinite(self.a2) and self.a2 > 0 and math.isfinite(self.a1) and self.a1 > 0):
                raise InvalidParameters(f"Second-order filter needs a2 > 0 and a1 > 0, got ({self.a2!r}, {self.a1!r})")
            return
        raise InvalidParameters(f"Unsupported filter kind: {self.kind!r}")

    @classmethod
    def unity(cls) -> FilterSpec:
        return cls()

    @classmethod
    def first_order(cls, t: float) -> FilterSpec:
        return cls(kind="first_order", t=float(t))

    @classmethod
    def second_order(cls, a2: float, a1: float) -> FilterSpec:
        return cls(kind="second_order", a2=float(a2), a1=float(a1))

    @property
    def is_unity(self) -> bool:
        return self.kind == "unity"

    def den(self) -> Polynomial:
        if self.kind == "first_order":
            return Polynomial((1.0, self.t))
        if self.kind == "second_order":
            return Polynomial((1.0, self.a1, self.a2))
        return Polynomial.constant(1.0)

    def tf(self) -> RationalTF:
        return RationalTF(Polynomial.constant(1.0), self.den())

    def inverse_tf(self) -> RationalTF:
        return RationalTF(self.den(), Polynomial.constant(1.0))

    def describe(self) -> str:
        if self.kind == "first_order":
            return f"1/({self.t:g}s+1)"
        if self.kind == "second_order":
            return f"1/({self.a2:g}s^2+{self.a1:g}s+1)"
        return "1"

    def to_record(self) -> dict[str, Any]:
        if self.kind == "first_order":
            return {"kind": self.kind, "t_s": self.t}
        if self.kind == "second_order":
            return {"kind": self.kind, "a2_s2": self.a2, "a1_s": self.a1}
        return {"kind": self.kind}


@dataclass(frozen=True)
class AdrcGains:
    n: int
    k: tuple[float, ...]
    l: tuple[float, ...]
    b0: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "k", tuple(float(v) for v in self.k))
        object.__setattr__(self, "l", tuple(float(v) for v in self.l))
        if not isinstance(self.n, int) or self.n < 1:
            raise InvalidParameters(f"Plant order must be a positive integer, got {self.n!r}")
        if len(self.k) != self.n or len(self.l) != self.n + 1:
            raise InvalidParameters(
                f"Order n={self.n} needs {self.n} controller gains and {self.n + 1} observer gains, "
                f"got {len(self.k)} and {len(self.l)}"
            )
        values = (*self.k, *self.l, self.b0)
        if not all(math.isfinite(v) for v in values):
            raise InvalidParameters("ADRC gains must be finite")
        if self.b0 == 0:
            raise InvalidParameters("b0 must be nonzero")

    @property
    def equivalence_denominator(self) -> float:
        """l2 + k1 for n=1, k2*l1 + l2 + k1 for n=2."""
        _require_closed_form(self.n)
        if self.n == 1:
            return self.l[1] + self.k[0]
        k1, k2 = self.k
        l1, l2, _ = self.l
        return k2 * l1 + l2 + k1

    def to_record(self) -> dict[str, Any]:
        return {"n": self.n, "k": list(self.k), "l": list(self.l), "b0": self.b0}


@dataclass(frozen=True)
class PidParams:
    kp: float
    ki: float
    kd: float = 0.0
    beta: float = 1.0
    fy: FilterSpec = FilterSpec()
    fr: FilterSpec = FilterSpec()

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.kp, self.ki, self.kd, self.beta)):
            raise InvalidParameters("PID gains must be finite")
        if not 0.0 <= self.beta <= 1.0:
            raise InvalidParameters(f"Reference weight beta must be in [0, 1], got {self.beta!r}")

    @property
    def is_pi(self) -> bool:
        return self.kd == 0.0 and self.fy.is_unity

    def to_record(self) -> dict[str, Any]:
        return {
            "kp": self.kp,
            "ki": self.ki,
            "kd": self.kd,
            "beta": self.beta,
            "fy": self.fy.to_record(),
            "fr": self.fr.to_record(),
        }


@dataclass(frozen=True)
class TwoDofController:
    """u = C_FB * (C_PF * r - y)."""

    prefilter: RationalTF
    feedback: RationalTF
    label: str


def _require_closed_form(n: int) -> None:
    if n not in CLOSED_FORM_ORDERS:
        raise UnsupportedOrder(f"Closed forms exist for n in {CLOSED_FORM_ORDERS}, got n={n}")


def unity_tf() -> RationalTF:
    return RationalTF.gain(1.0)


def bandwidth_tune(n: int, omega_cl: float, k_eso: float, b0: float = 1.0) -> AdrcGains:
    _require_closed_form(n)
    if not (math.isfinite(omega_cl) and omega_cl > 0):
        raise InvalidParameters(f"omega_cl must be > 0, got {omega_cl!r}")
    if not (math.isfinite(k_eso) and k_eso > 0):
        raise InvalidParameters(f"k_eso must be > 0, got {k_eso!r}")
    # (lambda + w)^n: k_{i+1} multiplies lambda^i.
    ctrl = P.polypow([omega_cl, 1.0], n)
    # (lambda + k_eso*w)^(n+1): l_1 multiplies lambda^n, l_{n+1} the constant.
    obs = P.polypow([k_eso * omega_cl, 1.0], n + 1)
    k = tuple(float(ctrl[i]) for i in range(n))
    l = tuple(float(obs[n - j]) for j in range(n + 1))
    return AdrcGains(n=n, k=k, l=l, b0=float(b0))


def build_pid_fb(p: PidParams) -> RationalTF:
    core = RationalTF(Polynomial((p.ki, p.kp, p.kd)), Polynomial((0.0, 1.0)))
    if p.fy.is_unity:
        return core
    return tf_series(core, p.fy.tf())


def _weighted_ratio(p: PidParams) -> RationalTF:
    return RationalTF(Polynomial((p.ki, p.kp * p.beta)), Polynomial((p.ki, p.kp, p.kd)))


def build_pid_pf(p: PidParams) -> RationalTF:
    out = _weighted_ratio(p)
    if not p.fr.is_unity:
        out = tf_series(out, p.fr.tf())
    if not p.fy.is_unity:
        out = tf_series(out, p.fy.inverse_tf())
    if not out.is_proper:
        raise ImproperResult(
            f"Prefilter numerator degree {out.num.degree} exceeds denominator degree {out.den.degree}; "
            f"F_R={p.fr.describe()} F_Y={p.fy.describe()}"
        )
    return out


def build_eadrc_fb(g: AdrcGains) -> RationalTF:
    _require_closed_form(g.n)
    if g.n == 1:
        (k1,) = g.k
        l1, l2 = g.l
        num = (k1 * l2, k1 * l1 + l2)
        den = (0.0, k1 + l2, 1.0)
    else:
        k1, k2 = g.k
        l1, l2, l3 = g.l
        num = (k1 * l3, k1 * l2 + k2 * l3, k1 * l1 + k2 * l2 + l3)
        den = (0.0, l2 + k1 + l1 * k2, k2 + l1, 1.0)
    return RationalTF(Polynomial(num).scale(1.0 / g.b0), Polynomial(den))


def closed_loop_matrix(g: AdrcGains) -> np.ndarray:
    """Observer dynamics with the control law substituted: A - l c^T - e_n (k^T 1)."""
    m = g.n + 1
    a = np.eye(m, k=1)
    c = np.zeros(m)
    c[0] = 1.0
    b_unit = np.zeros(m)
    b_unit[g.n - 1] = 1.0
    w = np.append(np.asarray(g.k, dtype=float), 1.0)
    return a - np.outer(np.asarray(g.l, dtype=float), c) - np.outer(b_unit, w)


def build_eadrc_fb_general(g: AdrcGains) -> RationalTF:
    """(k^T 1) adj(sI - A_CL) l / det(sI - A_CL) / b0 via Leverrier-Faddeev."""
    a_cl = closed_loop_matrix(g)
    m = a_cl.shape[0]
    w = np.append(np.asarray(g.k, dtype=float), 1.0)
    l = np.asarray(g.l, dtype=float)
    eye = np.eye(m)

    char = np.zeros(m + 1)
    char[m] = 1.0
    num = np.zeros(m)
    adj_term = eye
    num[m - 1] = w @ adj_term @ l
    for step in range(1, m + 1):
        product = a_cl @ adj_term
        coeff = -np.trace(product) / step
        char[m - step] = coeff
        adj_term = product + coeff * eye
        if step < m:
            num[m - 1 - step] = w @ adj_term @ l

    residual = float(np.max(np.abs(adj_term))) / max(1.0, float(np.max(np.abs(char))))
    if residual > LEVERRIER_RESIDUAL_TOL:
        logger.warning("Leverrier-Faddeev residual %.3e exceeds %.1e for n=%d", residual, LEVERRIER_RESIDUAL_TOL, g.n)
    return RationalTF(Polynomial(tuple(num / g.b0)), Polynomial(tuple(char)))


def structural_discrepancy(g: AdrcGains, *, audit_log: Path | None = None) -> dict[str, float]:
    """Coefficient deviation between the closed form and the matrix-structure form."""
    closed = build_eadrc_fb(g).normalized()
    general = build_eadrc_fb_general(g).normalized()
    out = {
        "num_deviation": coefficient_deviation(general.num.coeffs, closed.num.coeffs),
        "den_deviation": coefficient_deviation(general.den.coeffs, closed.den.coeffs),
    }
    if audit_log is not None:
        append_ndjson(
            audit_log,
            {
                "ts_utc": isoformat_utc(utc_now()),
                "check": "structural_discrepancy",
                "gains": g.to_record(),
                "closed_form": {"num": list(closed.num.coeffs), "den": list(closed.den.coeffs)},
                "general_form": {"num": list(general.num.coeffs), "den": list(general.den.coeffs)},
                **out,
            },
        )
    return out


def equivalent_output_filter(g: AdrcGains) -> FilterSpec:
    """F_Y1 (identical to C_EQ1) or the second-order F_Y2."""
    d = g.equivalence_denominator
    if g.n == 1:
        return FilterSpec.first_order(1.0 / d)
    k2, l1 = g.k[1], g.l[0]
    return FilterSpec.second_order(1.0 / d, (k2 + l1) / d)


def build_ceq(g: AdrcGains, fy: FilterSpec | None = None) -> RationalTF:
    d = g.equivalence_denominator
    if g.n == 1:
        return RationalTF(Polynomial.constant(1.0), Polynomial((1.0, 1.0 / d)))
    fy = fy or FilterSpec.unity()
    k2, l1 = g.k[1], g.l[0]
    quad = Polynomial((1.0, (k2 + l1) / d, 1.0 / d))
    return RationalTF(fy.den(), quad)


def pid_from_adrc(
    g: AdrcGains,
    *,
    beta: float = 1.0,
    fy: FilterSpec | None = None,
    fr: FilterSpec | None = None,
) -> PidParams:
    d = g.b0 * g.equivalence_denominator
    if g.n == 1:
        (k1,) = g.k
        l1, l2 = g.l
        kp, ki, kd = (k1 * l1 + l2) / d, k1 * l2 / d, 0.0
    else:
        k1, k2 = g.k
        l1, l2, l3 = g.l
        # s-coefficient of the n=2 feedback numerator
        kp = (k1 * l2 + k2 * l3) / d
        ki = k1 * l3 / d
        kd = (k1 * l1 + k2 * l2 + l3) / d
    return PidParams(
        kp=kp,
        ki=ki,
        kd=kd,
        beta=beta,
        fy=fy or FilterSpec.unity(),
        fr=fr or FilterSpec.unity(),
    )


def _normalize_kind(kind: str) -> ControllerKind:
    table = {"pi": "PI", "pid": "PID", "eadrc": "eADRC"}
    try:
        return table[kind.strip().lower()]  # type: ignore[return-value]
    except KeyError as exc:
        raise InvalidParameters(f"Unknown controller kind: {kind!r}") from exc


def make_controller(
    kind: str,
    dof: int,
    params: AdrcGains | PidParams,
    *,
    beta: float | None = None,
    fr: FilterSpec | None = None,
    fy: FilterSpec | None = None,
    simplified: bool = False,
) -> TwoDofController:
    """1DOF or 2DOF controller of the given kind.

    The eADRC 2DOF prefilter carries C_EQ^-1, so for n=2 with a unity F_R it is
    improper (numerator degree 3 over 2). It still evaluates in frequency, but
    discretizing or simulating it needs a first- or second-order F_R.
    """
    kind = _normalize_kind(kind)
    if dof not in (1, 2):
        raise InvalidParameters(f"dof must be 1 or 2, got {dof!r}")

    if kind in ("PI", "PID"):
        if not isinstance(params, PidParams):
            raise InvalidParameters(f"{kind} controller needs PidParams, got {type(params).__name__}")
        overrides: dict[str, Any] = {}
        if beta is not None:
            overrides["beta"] = beta
        if fr is not None:
            overrides["fr"] = fr
        if fy is not None:
            overrides["fy"] = fy
        p = replace(params, **overrides) if overrides else params
        if kind == "PI" and not p.is_pi:
            raise InvalidParameters("PI controller requires Kd == 0 and unity F_Y")
        feedback = build_pid_fb(p)
        prefilter = unity_tf() if dof == 1 else build_pid_pf(p)
        return TwoDofController(prefilter=prefilter, feedback=feedback, label=f"{dof}DOF {kind}")

    if not isinstance(params, AdrcGains):
        raise InvalidParameters(f"eADRC controller needs AdrcGains, got {type(params).__name__}")
    g = params
    feedback = build_eadrc_fb(g)
    label = f"{dof}DOF eADRC n={g.n}"
    if dof == 1:
        return TwoDofController(prefilter=unity_tf(), feedback=feedback, label=label)

    if g.n == 1 and fy is not None and not fy.is_unity:
        raise InvalidParameters("n=1 eADRC pairs with a PI controller; F_Y must be unity")
    pid = pid_from_adrc(g, beta=1.0 if beta is None else beta, fy=fy, fr=fr)
    if simplified:
        prefilter = _weighted_ratio(pid)
        if not pid.fr.is_unity:
            prefilter = tf_series(prefilter, pid.fr.tf())
        prefilter = tf_series(prefilter, equivalent_output_filter(g).inverse_tf())
    else:
        prefilter = tf_series(build_pid_pf(pid), tf_inverse(build_ceq(g, pid.fy)))
    return TwoDofController(prefilter=prefilter, feedback=feedback, label=label)


@dataclass(frozen=True)
class CribRow:
    structure: str
    dof: int
    controller: TwoDofController


@dataclass(frozen=True)
class CribSheet:
    order: int
    gains: AdrcGains
    pid: PidParams
    rows: tuple[CribRow, ...] = field(default_factory=tuple)

    def to_frame(self) -> pd.DataFrame:
        records = []
        for row in self.rows:
            c = row.controller
            records.append(
                {
                    "structure": row.structure,
                    "dof": row.dof,
                    "n": self.order,
                    "prefilter_num": _fmt(c.prefilter.num),
                    "prefilter_den": _fmt(c.prefilter.den),
                    "feedback_num": _fmt(c.feedback.num),
                    "feedback_den": _fmt(c.feedback.den),
                }
            )
        return pd.DataFrame.from_records(records)

    def to_text(self) -> str:
        header = [
            f"Crib sheet for n={self.order} (coefficients ascending in s)",
            f"gains: k={list(self.gains.k)} l={list(self.gains.l)} b0={self.gains.b0:g}",
            f"PI/PID: Kp={self.pid.kp:.10g} Ki={self.pid.ki:.10g} Kd={self.pid.kd:.10g} "
            f"beta={self.pid.beta:g} F_Y={self.pid.fy.describe()} F_R={self.pid.fr.describe()}",
            "",
        ]
        return "\n".join(header) + self.to_frame().to_string(index=False) + "\n"

    def to_record(self) -> dict[str, Any]:
        return {
            "order": self.order,
            "generated_at_utc": isoformat_utc(utc_now()),
            "gains": self.gains.to_record(),
            "pid": self.pid.to_record(),
            "rows": [
                {
                    "structure": row.structure,
                    "dof": row.dof,
                    "label": row.controller.label,
                    "prefilter": _tf_record(row.controller.prefilter),
                    "feedback": _tf_record(row.controller.feedback),
                }
                for row in self.rows
            ],
        }


def _fmt(poly: Polynomial) -> str:
    return "[" + ", ".join(f"{c:.10g}" for c in poly.coeffs) + "]"


def _tf_record(tf: RationalTF) -> dict[str, list[float]]:
    return {"num_ascending": list(tf.num.coeffs), "den_ascending": list(tf.den.coeffs)}


def crib_sheet(gains: AdrcGains | None, pid: PidParams | None = None) -> CribSheet:
    if gains is None:
        raise InvalidParameters("Crib sheet needs ADRC gains")
    _require_closed_form(gains.n)
    pid = pid or pid_from_adrc(gains)
    classic = "PI" if gains.n == 1 else "PID"
    if gains.n == 1 and not pid.is_pi:
        raise InvalidParameters("n=1 crib sheet pairs with a PI controller (Kd == 0, unity F_Y)")

    rows: list[CribRow] = []
    for dof in (1, 2):
        rows.append(CribRow(classic, dof, make_controller(classic, dof, pid)))
    for dof in (1, 2):
        ctrl = make_controller(
            "eADRC",
            dof,
            gains,
            beta=pid.beta,
            fr=pid.fr,
            fy=pid.fy if gains.n == 2 else None,
        )
        rows.append(CribRow("eADRC", dof, ctrl))
    return CribSheet(order=gains.n, gains=gains, pid=pid, rows=tuple(rows))


def write_crib_sheet(sheet: CribSheet, out_dir: Path) -> list[Path]:
    ensure_dir(out_dir)
    text_path = out_dir / "crib_sheet.txt"
    yaml_path = out_dir / "crib_sheet.yaml"
    text_path.write_text(sheet.to_text(), encoding="utf-8")
    save_yaml(yaml_path, sheet.to_record())
    return [text_path, yaml_path]
