from __future__ import annotations


class EadrcError(RuntimeError):
    """Base exception for synthesis, analysis and simulation failures."""


class InvalidParameters(EadrcError, ValueError):
    """Parameter values outside their documented domain."""


class ConfigError(EadrcError, ValueError):
    """Malformed run configuration (unknown keys, bad types, missing preset)."""


class DomainMismatch(EadrcError):
    """Transfer functions from different domains (or sample times) were combined."""


class AlgebraicLoop(EadrcError):
    """Closed loop 1 + g*h is identically zero."""


class ZeroNumerator(EadrcError):
    """Inverse requested for a transfer function with zero numerator."""


class HasDelay(EadrcError):
    """Operation is undefined for a transfer function carrying transport delay."""


class NyquistExceeded(EadrcError):
    """Discrete frequency evaluation above pi/Ts."""


class Indeterminate(EadrcError):
    """Numerator and denominator vanish at the evaluation point."""


class UnsupportedOrder(EadrcError):
    """Plant order outside the closed-form range (n in {1, 2})."""


class ImproperResult(EadrcError):
    """Composition produced numerator degree above denominator degree."""


class UnstableEvaluation(EadrcError):
    """Return difference |1 + L(jw)| vanishes on the search grid."""


class WrongFilterKind(EadrcError):
    """Builder requires a different output filter kind."""


class FixedPointOverflow(EadrcError):
    """Coefficient or signal saturated the Q-format range."""


class EmptyTrace(EadrcError):
    """Metrics requested for a trace with no samples."""


class NonFiniteState(EadrcError):
    """Plant state diverged during simulation."""

    def __init__(self, t: float, detail: str = "") -> None:
        self.t = float(t)
        msg = f"Plant state diverged at t={self.t:.6g} s"
        if detail:
            msg = f"{msg}: {detail}"
        super().__init__(msg)
