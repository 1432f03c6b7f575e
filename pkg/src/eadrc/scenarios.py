"""Plants, tunings and scenario builders for the PI/PID vs eADRC comparison runs.

Disturbance levels, reference amplitudes and square-wave periods are reproduction
choices; each scenario lists the ones it uses in ``notes``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

from .analysis import LoopAssembly, channel_er, channel_un, channel_yd
from .discretize import CoefficientSource, DiscreteController, QFormat, ceq2_z, eadrc_fb_z, eadrc_pf_z, pid_z
from .errors import InvalidParameters, UnsupportedOrder
from .synth import (
    AdrcGains,
    FilterSpec,
    PidParams,
    TwoDofController,
    bandwidth_tune,
    make_controller,
    pid_from_adrc,
)
from .sim import (
    DiscretePipeline,
    DisturbanceProfile,
    DisturbanceSegment,
    NoiseSpec,
    PlantModel,
    ReferenceSpec,
    SimScenario,
)
from .tf import Continuous, Polynomial, RationalTF, TransferFunction


SCENARIO_ONE_VARIANTS = ("pid", "eadrc", "pid-plus-ceq2")
SCENARIO_TWO_VARIANTS = ("eadrc-1dof", "eadrc-2dof")

# Frequency-domain comparison tunings.
N1_OMEGA_CL = 2.7
N1_K_ESO = 15.0
N1_PI = PidParams(kp=1.0, ki=2.5)
N1_BETAS = (0.7, 0.3)
N2_OMEGA_CL = 4.0
N2_K_ESO = 7.0
N2_PID = PidParams(kp=30.0, ki=27.0, kd=5.0, fy=FilterSpec.first_order(0.05))
N2_BETAS = (0.75, 0.65)
REFERENCE_FILTER = FilterSpec.first_order(0.001)

TRANSIENT_TS = 1e-3
TRANSIENT_T_END = 20.0
TRANSIENT_DISTURBANCE_T = 10.0
TRANSIENT_NOISE_T = 15.0
TRANSIENT_DISTURBANCE_LEVEL = 0.5
TRANSIENT_NOISE_POWER = 1e-7
TRANSIENT_NOISE_TS = 1e-3


def gp1() -> RationalTF:
    """exp(-0.2 s) / (s + 1)."""
    return RationalTF(Polynomial.constant(1.0), Polynomial((1.0, 1.0)), Continuous(0.2))


def gp2() -> RationalTF:
    """1 / (s + 1)^2."""
    return RationalTF(Polynomial.constant(1.0), Polynomial((1.0, 2.0, 1.0)))


def second_order_shaper(tau: float) -> RationalTF:
    """1 / (tau s + 1)^2."""
    return RationalTF(Polynomial.constant(1.0), Polynomial((1.0, 2.0 * tau, tau * tau)))


def order_gains(order: int) -> AdrcGains:
    if order == 1:
        return bandwidth_tune(1, N1_OMEGA_CL, N1_K_ESO, 1.0)
    if order == 2:
        return bandwidth_tune(2, N2_OMEGA_CL, N2_K_ESO, 1.0)
    raise UnsupportedOrder(f"Comparison tunings exist for order 1 and 2, got {order}")


def order_plant(order: int) -> RationalTF:
    if order == 1:
        return gp1()
    if order == 2:
        return gp2()
    raise UnsupportedOrder(f"Comparison plants exist for order 1 and 2, got {order}")


def comparison_controller(order: int, structure: str, dof: int, beta: float | None = None) -> TwoDofController:
    """Classic or eADRC controller of the frequency-domain comparison."""
    betas = N1_BETAS if order == 1 else N2_BETAS
    beta = betas[0] if beta is None else beta
    structure = structure.lower()
    if structure in ("pi", "pid"):
        classic = N1_PI if order == 1 else N2_PID
        return make_controller("PI" if order == 1 else "PID", dof, classic, beta=beta, fr=REFERENCE_FILTER)
    if structure == "eadrc":
        return make_controller("eADRC", dof, order_gains(order), beta=beta, fr=REFERENCE_FILTER)
    raise InvalidParameters(f"Unknown comparison structure: {structure!r}")


def bode_comparison_set(order: int, betas: tuple[float, ...] | None = None) -> list[tuple[str, TransferFunction]]:
    """G_YD, G_UN and G_ER curves for the classic and eADRC structures of one order."""
    plant = order_plant(order)
    classic = "pi" if order == 1 else "pid"
    betas = betas or (N1_BETAS if order == 1 else N2_BETAS)
    curves: list[tuple[str, TransferFunction]] = []
    for structure in (classic, "eadrc"):
        one_dof = LoopAssembly(plant, comparison_controller(order, structure, 1))
        curves.append((f"{structure}_yd", channel_yd(one_dof)))
        curves.append((f"{structure}_un", channel_un(one_dof)))
        curves.append((f"{structure}_1dof_er", channel_er(one_dof)))
        for beta in betas:
            two_dof = LoopAssembly(plant, comparison_controller(order, structure, 2, beta))
            curves.append((f"{structure}_2dof_b{beta:g}_er", channel_er(two_dof)))
    return curves


def transient_test(
    order: int,
    structure: str,
    dof: int = 1,
    *,
    beta: float | None = None,
    seed: int = 0,
    noise: bool = True,
    disturbance_level: float = TRANSIENT_DISTURBANCE_LEVEL,
    t_end: float = TRANSIENT_T_END,
    substeps: int = 10,
) -> SimScenario:
    controller = comparison_controller(order, structure, dof, beta)
    return SimScenario(
        plant=PlantModel.linear(order_plant(order)),
        controller=controller,
        reference=ReferenceSpec(kind="step", amplitude=1.0, shaping=second_order_shaper(0.01)),
        ts=TRANSIENT_TS,
        t_end=t_end,
        disturbance=DisturbanceProfile(
            (DisturbanceSegment(TRANSIENT_DISTURBANCE_T, "step", level=disturbance_level),)
        ),
        noise=NoiseSpec(
            power=TRANSIENT_NOISE_POWER if noise else 0.0,
            sample_time=TRANSIENT_NOISE_TS,
            seed=seed,
            t_on=TRANSIENT_NOISE_T,
        ),
        substeps=substeps,
        name=f"transient-n{order}-{structure}-{dof}dof",
        windows=(
            ("reference", 0.0, TRANSIENT_DISTURBANCE_T),
            ("disturbance", TRANSIENT_DISTURBANCE_T, t_end),
        ),
        notes=(
            f"step disturbance level {disturbance_level:g} at plant input (reproduction choice)",
            f"controllers Euler-discretized at Ts={TRANSIENT_TS:g} s",
        ),
    )


@dataclass(frozen=True)
class BuckConverter:
    r_ohm: float = 50.0
    c_f: float = 0.001
    l_h: float = 0.01
    vin_v: float = 20.0

    @property
    def a1(self) -> float:
        return 1.0 / (self.c_f * self.r_ohm)

    @property
    def a0(self) -> float:
        return 1.0 / (self.c_f * self.l_h)

    @property
    def b(self) -> float:
        return self.vin_v / (self.c_f * self.l_h)

    @property
    def natural_frequency(self) -> float:
        return math.sqrt(self.a0)

    def plant(self) -> PlantModel:
        return PlantModel.second_order_input_disturbed(self.a1, self.a0, self.b)


@dataclass(frozen=True)
class DcMotor:
    ra_ohm: float = 8.9
    la_h: float = 4.5e-3
    je_kgm2: float = 8e-5
    fe: float = 12e-5
    kem: float = 0.105
    kme: float = 0.105

    @property
    def a1(self) -> float:
        return (self.la_h * self.fe + self.ra_ohm * self.je_kgm2) / (self.la_h * self.je_kgm2)

    @property
    def a0(self) -> float:
        return (self.ra_ohm * self.fe + self.kem * self.kme) / (self.la_h * self.je_kgm2)

    @property
    def b(self) -> float:
        return self.kem / (self.je_kgm2 * self.la_h)

    def plant(self) -> PlantModel:
        return PlantModel.second_order_input_disturbed(self.a1, self.a0, self.b)


BUCK = BuckConverter()
MOTOR = DcMotor()

SCENARIO_ONE_TS = 1e-4
SCENARIO_ONE_OMEGA_CL = 45.0
SCENARIO_ONE_K_ESO = 45.0
SCENARIO_ONE_T_END = 6.0
SCENARIO_ONE_NOISE_POWER = 1e-7

SCENARIO_TWO_TS = 1e-3
SCENARIO_TWO_OMEGA_CL = 50.0
SCENARIO_TWO_K_ESO = 12.0
SCENARIO_TWO_BETA = 0.6
SCENARIO_TWO_T_END = 4.0
SCENARIO_TWO_NOISE_POWER = 1e-5


def _input_disturbance(u_ss: float, t_step: float, t_sine: float) -> DisturbanceProfile:
    return DisturbanceProfile(
        (
            DisturbanceSegment(t_step, "step", level=0.2 * u_ss),
            DisturbanceSegment(t_sine, "sine", amp=0.1 * u_ss, freq_hz=2.0),
        )
    )


def scenario_one_gains() -> AdrcGains:
    return bandwidth_tune(2, SCENARIO_ONE_OMEGA_CL, SCENARIO_ONE_K_ESO, BUCK.b)


def scenario_one(
    variant: Literal["pid", "eadrc", "pid-plus-ceq2"],
    tf_s: float = 0.005,
    seed: int = 0,
    *,
    amplitude: float = 1.0,
    noise: bool = True,
    t_end: float = SCENARIO_ONE_T_END,
    substeps: int = 10,
    quantization: QFormat | None = None,
    use: CoefficientSource = "oracle",
    audit_log: Path | None = None,
) -> SimScenario:
    """Buck converter output-voltage loop at Ts = 0.1 ms."""
    if variant not in SCENARIO_ONE_VARIANTS:
        raise InvalidParameters(f"Scenario I variant must be one of {SCENARIO_ONE_VARIANTS}, got {variant!r}")
    ts = SCENARIO_ONE_TS
    g = scenario_one_gains()
    pid = pid_from_adrc(g, fy=FilterSpec.first_order(tf_s))
    if variant == "pid":
        feedback = (pid_z(pid, ts, use=use, audit_log=audit_log),)
    elif variant == "eadrc":
        feedback = (eadrc_fb_z(g, ts, use=use, audit_log=audit_log),)
    else:
        feedback = (
            pid_z(pid, ts, use=use, audit_log=audit_log),
            ceq2_z(g, tf_s, ts, use=use, audit_log=audit_log),
        )
    pipeline = DiscretePipeline(prefilter=(), feedback=feedback)
    if quantization is not None:
        pipeline = pipeline.quantized(quantization)

    u_ss = amplitude * BUCK.a0 / BUCK.b
    notes = [
        "square reference: period 10 s, 50% duty (reproduction choice)",
        f"input disturbance: step {0.2 * u_ss:g} at 1.5 s, sine {0.1 * u_ss:g} at 2 Hz from 3 s (reproduction choice)",
    ]
    if quantization is not None:
        notes.append(f"controller realized in Q{quantization.frac_bits} fixed point")
    return SimScenario(
        plant=BUCK.plant(),
        controller=pipeline,
        reference=ReferenceSpec(kind="square", amplitude=amplitude, period=10.0, duty=0.5, shaping=second_order_shaper(0.1)),
        ts=ts,
        t_end=t_end,
        disturbance=_input_disturbance(u_ss, 1.5, 3.0),
        noise=NoiseSpec(power=SCENARIO_ONE_NOISE_POWER if noise else 0.0, sample_time=ts, seed=seed),
        substeps=substeps,
        name=f"scenario-1-{variant}" + ("" if variant == "eadrc" else f"-tf{tf_s:g}"),
        windows=(
            ("reference", 0.0, 1.5),
            ("disturbance_step", 1.5, 3.0),
            ("disturbance_sine", 3.0, 5.0),
            ("reference_fall", 5.0, t_end),
        ),
        notes=tuple(notes),
    )


def scenario_two_gains() -> AdrcGains:
    return bandwidth_tune(2, SCENARIO_TWO_OMEGA_CL, SCENARIO_TWO_K_ESO, MOTOR.b)


def scenario_two(
    variant: Literal["eadrc-1dof", "eadrc-2dof"],
    tr_s: float = 0.03,
    seed: int = 0,
    *,
    amplitude: float = 1.0,
    noise: bool = True,
    t_end: float = SCENARIO_TWO_T_END,
    substeps: int = 10,
    quantization: QFormat | None = None,
    use: CoefficientSource = "oracle",
    audit_log: Path | None = None,
) -> SimScenario:
    """DC motor speed loop at Ts = 1 ms, optionally with the reference prefilter."""
    if variant not in SCENARIO_TWO_VARIANTS:
        raise InvalidParameters(f"Scenario II variant must be one of {SCENARIO_TWO_VARIANTS}, got {variant!r}")
    ts = SCENARIO_TWO_TS
    g = scenario_two_gains()
    feedback = (eadrc_fb_z(g, ts, use=use, audit_log=audit_log),)
    prefilter: tuple[DiscreteController, ...] = ()
    if variant == "eadrc-2dof":
        pid = pid_from_adrc(g, beta=SCENARIO_TWO_BETA)
        prefilter = (eadrc_pf_z(g, pid, SCENARIO_TWO_BETA, tr_s, ts, use=use, audit_log=audit_log),)
    pipeline = DiscretePipeline(prefilter=prefilter, feedback=feedback)
    if quantization is not None:
        pipeline = pipeline.quantized(quantization)

    u_ss = amplitude * MOTOR.a0 / MOTOR.b
    notes = [
        "square reference: period 4 s, 50% duty (reproduction choice)",
        f"input disturbance: step {0.2 * u_ss:g} at 1 s, sine {0.1 * u_ss:g} at 2 Hz from 3 s (reproduction choice)",
    ]
    if quantization is not None:
        notes.append(f"controller realized in Q{quantization.frac_bits} fixed point")
    return SimScenario(
        plant=MOTOR.plant(),
        controller=pipeline,
        reference=ReferenceSpec(kind="square", amplitude=amplitude, period=4.0, duty=0.5, shaping=second_order_shaper(0.05)),
        ts=ts,
        t_end=t_end,
        disturbance=_input_disturbance(u_ss, 1.0, 3.0),
        noise=NoiseSpec(power=SCENARIO_TWO_NOISE_POWER if noise else 0.0, sample_time=ts, seed=seed),
        substeps=substeps,
        name=f"scenario-2-{variant}" + (f"-tr{tr_s:g}" if variant == "eadrc-2dof" else ""),
        windows=(
            ("reference", 0.0, 1.0),
            ("disturbance_step", 1.0, 2.0),
            ("reference_fall", 2.0, 3.0),
            ("disturbance_sine", 3.0, t_end),
        ),
        notes=tuple(notes),
    )
