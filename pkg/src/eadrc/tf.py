from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import ClassVar, Iterable, Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import (
    AlgebraicLoop,
    DomainMismatch,
    HasDelay,
    Indeterminate,
    InvalidParameters,
    NyquistExceeded,
    ZeroNumerator,
)


logger = logging.getLogger(__name__)

# Relative slack when comparing a discrete frequency against pi/Ts.
_NYQUIST_SLACK = 1e-12


@dataclass(frozen=True)
class Continuous:
    delay: float = 0.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.delay) or self.delay < 0:
            raise InvalidParameters(f"Transport delay must be finite and >= 0, got {self.delay!r}")


@dataclass(frozen=True)
class Discrete:
    ts: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.ts) or self.ts <= 0:
            raise InvalidParameters(f"Sample time must be finite and > 0, got {self.ts!r}")


Domain = Continuous | Discrete


@dataclass(frozen=True)
class Polynomial:
    """Real polynomial with ascending coefficients (coeffs[i] multiplies x**i)."""

    coeffs: tuple[float, ...]

    def __post_init__(self) -> None:
        arr = np.asarray(self.coeffs, dtype=float).ravel()
        if arr.size == 0:
            raise InvalidParameters("Polynomial needs at least one coefficient")
        if not np.all(np.isfinite(arr)):
            raise InvalidParameters(f"Polynomial coefficients must be finite: {arr.tolist()}")
        nonzero = np.flatnonzero(arr)
        trimmed = tuple(float(c) for c in arr[: nonzero[-1] + 1]) if nonzero.size else (0.0,)
        object.__setattr__(self, "coeffs", trimmed)

    @classmethod
    def from_descending(cls, coeffs: Iterable[float]) -> Polynomial:
        return cls(tuple(reversed(tuple(coeffs))))

    @classmethod
    def constant(cls, value: float) -> Polynomial:
        return cls((float(value),))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_zero(self) -> bool:
        return self.coeffs == (0.0,)

    @property
    def leading(self) -> float:
        return self.coeffs[-1]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.coeffs, dtype=float)

    def descending(self) -> tuple[float, ...]:
        return tuple(reversed(self.coeffs))

    def __call__(self, x):
        return P.polyval(x, self.as_array())

    def __mul__(self, other: Polynomial) -> Polynomial:
        return poly_mul(self, other)

    def __add__(self, other: Polynomial) -> Polynomial:
        return Polynomial(tuple(P.polyadd(self.as_array(), other.as_array())))

    def __sub__(self, other: Polynomial) -> Polynomial:
        return Polynomial(tuple(P.polysub(self.as_array(), other.as_array())))

    def __neg__(self) -> Polynomial:
        return self.scale(-1.0)

    def scale(self, k: float) -> Polynomial:
        return Polynomial(tuple(float(k) * c for c in self.coeffs))


def poly_mul(a: Polynomial, b: Polynomial) -> Polynomial:
    return Polynomial(tuple(P.polymul(a.as_array(), b.as_array())))


@dataclass(frozen=True)
class RationalTF:
    num: Polynomial
    den: Polynomial
    domain: Domain = Continuous()

    factored: ClassVar[bool] = False

    def __post_init__(self) -> None:
        if self.den.is_zero:
            raise InvalidParameters("Transfer function denominator is the zero polynomial")

    @classmethod
    def from_coeffs(
        cls,
        num: Iterable[float],
        den: Iterable[float],
        domain: Domain | None = None,
    ) -> RationalTF:
        return cls(Polynomial(tuple(num)), Polynomial(tuple(den)), domain or Continuous())

    @classmethod
    def gain(cls, k: float, domain: Domain | None = None) -> RationalTF:
        return cls(Polynomial.constant(k), Polynomial.constant(1.0), domain or Continuous())

    @property
    def delay(self) -> float:
        return self.domain.delay if isinstance(self.domain, Continuous) else 0.0

    @property
    def is_discrete(self) -> bool:
        return isinstance(self.domain, Discrete)

    @property
    def is_proper(self) -> bool:
        return self.num.is_zero or self.num.degree <= self.den.degree

    @property
    def is_strictly_proper(self) -> bool:
        return self.num.is_zero or self.num.degree < self.den.degree

    def normalized(self) -> RationalTF:
        lead = self.den.leading
        return RationalTF(self.num.scale(1.0 / lead), self.den.scale(1.0 / lead), self.domain)

    def without_delay(self) -> RationalTF:
        if self.delay == 0.0:
            return self
        return RationalTF(self.num, self.den, Continuous())

    def __call__(self, point):
        """Rational part evaluated at a complex point (delay not applied)."""
        return self.num(point) / self.den(point)


@dataclass(frozen=True)
class FactoredTF:
    """Closed-loop expression offset + gain * series * g / (1 + g*h), kept unexpanded.

    Used when a loop element carries transport delay; supports frequency evaluation
    and dc_gain only.
    """

    g: RationalTF
    h: RationalTF
    series: RationalTF | None = None
    gain: float = 1.0
    offset: float = 0.0

    factored: ClassVar[bool] = True

    def __post_init__(self) -> None:
        _require_same_domain(self.g, self.h, *(() if self.series is None else (self.series,)))

    @property
    def domain(self) -> Domain:
        return Continuous() if isinstance(self.g.domain, Continuous) else self.g.domain

    def rational_at_zero_delay(self) -> RationalTF:
        """Same expression with every delay set to zero (exact at s = 0)."""
        out = tf_feedback(self.g.without_delay(), self.h.without_delay())
        if self.series is not None:
            out = tf_series(self.series.without_delay(), out)
        out = tf_scale(out, self.gain)
        if self.offset:
            out = tf_sum(RationalTF.gain(self.offset, out.domain), out)
        return out


TransferFunction = RationalTF | FactoredTF


@dataclass(frozen=True, eq=False)
class FrequencyResponse:
    omegas: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.omegas.shape != self.values.shape:
            raise InvalidParameters("omegas and values must have the same length")

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    def magnitude_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 20.0 * np.log10(np.abs(self.values))

    def phase_deg(self) -> np.ndarray:
        return np.degrees(np.unwrap(np.angle(self.values)))


def _same_domain(a: Domain, b: Domain) -> bool:
    if isinstance(a, Continuous) and isinstance(b, Continuous):
        return True
    if isinstance(a, Discrete) and isinstance(b, Discrete):
        return a.ts == b.ts
    return False


def _require_same_domain(*tfs: RationalTF) -> None:
    first = tfs[0].domain
    for other in tfs[1:]:
        if not _same_domain(first, other.domain):
            raise DomainMismatch(f"Cannot combine {first} with {other.domain}")


def _combined_domain(g: RationalTF, h: RationalTF) -> Domain:
    if isinstance(g.domain, Continuous):
        return Continuous(g.delay + h.delay)
    return g.domain


def tf_series(g: RationalTF, h: RationalTF) -> RationalTF:
    _require_same_domain(g, h)
    return RationalTF(poly_mul(g.num, h.num), poly_mul(g.den, h.den), _combined_domain(g, h))


def tf_scale(g: RationalTF, k: float) -> RationalTF:
    return RationalTF(g.num.scale(k), g.den, g.domain)


def tf_sum(g: RationalTF, h: RationalTF) -> RationalTF:
    _require_same_domain(g, h)
    if g.delay != h.delay:
        raise HasDelay("Parallel connection of branches with different delays is not rational")
    num = poly_mul(g.num, h.den) + poly_mul(h.num, g.den)
    return RationalTF(num, poly_mul(g.den, h.den), g.domain)


def tf_feedback(g: RationalTF, h: RationalTF) -> TransferFunction:
    """Negative-feedback closed loop g / (1 + g*h)."""
    _require_same_domain(g, h)
    if g.delay > 0 or h.delay > 0:
        return FactoredTF(g=g, h=h)
    den = poly_mul(g.den, h.den) + poly_mul(g.num, h.num)
    if den.is_zero:
        raise AlgebraicLoop("1 + g*h is identically zero")
    return RationalTF(poly_mul(g.num, h.den), den, g.domain)


def tf_inverse(g: RationalTF) -> RationalTF:
    if g.num.is_zero:
        raise ZeroNumerator("Cannot invert a transfer function with zero numerator")
    if g.delay > 0:
        raise HasDelay("Cannot invert a transfer function carrying transport delay")
    return RationalTF(g.den, g.num, g.domain)


def _check_omegas(omegas: Sequence[float] | np.ndarray) -> np.ndarray:
    w = np.asarray(omegas, dtype=float).ravel()
    if w.size and not np.all(np.isfinite(w)):
        raise InvalidParameters("Frequencies must be finite")
    if w.size > 1 and not np.all(np.diff(w) > 0):
        raise InvalidParameters("Frequencies must be strictly increasing")
    return w


def _rational_response(g: RationalTF, w: np.ndarray) -> np.ndarray:
    if isinstance(g.domain, Discrete):
        points = np.exp(1j * w * g.domain.ts)
    else:
        points = 1j * w
    n = P.polyval(points, g.num.as_array())
    d = P.polyval(points, g.den.as_array())
    with np.errstate(divide="ignore", invalid="ignore"):
        values = np.where(d != 0, n / np.where(d != 0, d, 1.0), complex(np.inf, 0.0))
    values = np.where((d == 0) & (n == 0), complex(np.nan, np.nan), values)
    if g.delay > 0:
        values = values * np.exp(-1j * w * g.delay)
    return values.astype(complex)


def response(g: TransferFunction, w: np.ndarray) -> np.ndarray:
    """Complex response on an already validated frequency array."""
    if isinstance(g, FactoredTF):
        gv = _rational_response(g.g, w)
        hv = _rational_response(g.h, w)
        values = gv / (1.0 + gv * hv)
        if g.series is not None:
            values = _rational_response(g.series, w) * values
        return g.offset + g.gain * values
    return _rational_response(g, w)


def freq_eval(g: TransferFunction, omegas: Sequence[float] | np.ndarray) -> FrequencyResponse:
    w = _check_omegas(omegas)
    domain = g.domain
    if isinstance(domain, Discrete) and w.size:
        nyquist = math.pi / domain.ts
        if w[-1] > nyquist * (1.0 + _NYQUIST_SLACK):
            raise NyquistExceeded(f"omega={w[-1]:.6g} rad/s exceeds pi/Ts={nyquist:.6g} rad/s")
    return FrequencyResponse(omegas=w, values=response(g, w))


def dc_gain(g: TransferFunction) -> float:
    """Limit at s=0 (z=1); math.inf for an unmatched pole there."""
    if isinstance(g, FactoredTF):
        return dc_gain(g.rational_at_zero_delay())
    point = 1.0 if isinstance(g.domain, Discrete) else 0.0
    n = float(g.num(point))
    d = float(g.den(point))
    if isinstance(g.domain, Discrete):
        # sum of coefficients; rounding leaves tiny residue at a root
        n = 0.0 if abs(n) <= 1e-12 * float(np.sum(np.abs(g.num.as_array()))) else n
        d = 0.0 if abs(d) <= 1e-12 * float(np.sum(np.abs(g.den.as_array()))) else d
    if d == 0.0:
        if n == 0.0:
            raise Indeterminate("Numerator and denominator both vanish at the dc point")
        return math.inf
    return n / d


def simplify(g: RationalTF, tol: float = 1e-9) -> RationalTF:
    """Cancel numerator/denominator roots that coincide within tol (relative)."""
    if g.num.is_zero or g.num.degree == 0 or g.den.degree == 0:
        return g
    zeros = list(P.polyroots(g.num.as_array()))
    poles = list(P.polyroots(g.den.as_array()))
    kept_zeros: list[complex] = []
    for z in zeros:
        match = next(
            (i for i, p in enumerate(poles) if abs(z - p) <= tol * max(1.0, abs(p))),
            None,
        )
        if match is None:
            kept_zeros.append(z)
        else:
            poles.pop(match)
    if len(kept_zeros) == len(zeros):
        return g
    logger.debug("simplify cancelled %d pole/zero pairs", len(zeros) - len(kept_zeros))
    num = g.num.leading * np.real(P.polyfromroots(kept_zeros)) if kept_zeros else np.array([g.num.leading])
    den = g.den.leading * np.real(P.polyfromroots(poles)) if poles else np.array([g.den.leading])
    return RationalTF(Polynomial(tuple(num)), Polynomial(tuple(den)), g.domain)
