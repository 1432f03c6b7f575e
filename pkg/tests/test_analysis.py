from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from eadrc.analysis import (
    LoopAssembly,
    bode_export,
    channel_er,
    channel_un,
    channel_yd,
    ms_index,
    sensitivity_frame,
    write_bode_csv,
)
from eadrc.errors import InvalidParameters, UnstableEvaluation
from eadrc.scenarios import bode_comparison_set, comparison_controller, gp1, gp2
from eadrc.synth import TwoDofController, unity_tf
from eadrc.tf import Discrete, RationalTF, dc_gain, response


def _one_dof(feedback: RationalTF) -> TwoDofController:
    return TwoDofController(unity_tf(), feedback, "test")


def test_pi_on_delayed_first_order_plant():
    res = ms_index(LoopAssembly(gp1(), comparison_controller(1, "pi", 1)))
    assert 1.45 < res.ms < 1.6
    assert 1.0 < res.omega_peak < 4.0
    assert "golden refinement" in res.grid


def test_pid_on_second_order_plant():
    res = ms_index(LoopAssembly(gp2(), comparison_controller(2, "pid", 1)))
    assert res.ms == pytest.approx(1.45, abs=0.05)


def test_eadrc_matches_pi_robustness_first_order():
    pi = ms_index(LoopAssembly(gp1(), comparison_controller(1, "pi", 1)))
    eadrc = ms_index(LoopAssembly(gp1(), comparison_controller(1, "eadrc", 1)))
    assert abs(pi.ms - eadrc.ms) < 0.05


@pytest.mark.parametrize("order,structure", [(1, "pi"), (1, "eadrc"), (2, "pid"), (2, "eadrc")])
def test_prefilter_does_not_change_ms(order: int, structure: str):
    plant = gp1() if order == 1 else gp2()
    one = ms_index(LoopAssembly(plant, comparison_controller(order, structure, 1)))
    two = ms_index(LoopAssembly(plant, comparison_controller(order, structure, 2)))
    assert two.ms == pytest.approx(one.ms, rel=1e-9)


def test_open_loop_ms_is_one():
    res = ms_index(LoopAssembly(gp1(), _one_dof(RationalTF.gain(0.0))))
    assert res.ms == pytest.approx(1.0, abs=1e-15)
    assert "refinement skipped" in res.grid


def test_ms_refinement_never_below_grid_maximum():
    asm = LoopAssembly(gp2(), comparison_controller(2, "eadrc", 1))
    coarse = ms_index(asm, n_points=50)
    grid_max = float(sensitivity_frame(asm, np.logspace(-3, 3, 50))["sensitivity_abs"].max())
    assert coarse.ms >= grid_max


def test_unstable_evaluation_on_cancelled_return_difference():
    asm = LoopAssembly(RationalTF.gain(1.0), _one_dof(RationalTF.gain(-1.0)))
    with pytest.raises(UnstableEvaluation):
        ms_index(asm)


def test_loop_assembly_rejects_discrete_parts():
    discrete = RationalTF.from_coeffs((0.1,), (-0.9, 1.0), Discrete(1e-3))
    with pytest.raises(InvalidParameters):
        LoopAssembly(discrete, _one_dof(RationalTF.gain(1.0)))


def test_integral_action_rejects_disturbance_and_tracks():
    asm = LoopAssembly(gp1(), comparison_controller(1, "pi", 1))
    assert dc_gain(channel_yd(asm)) == pytest.approx(0.0, abs=1e-12)
    assert dc_gain(channel_er(asm)) == pytest.approx(0.0, abs=1e-12)
    asm2 = LoopAssembly(gp2(), comparison_controller(2, "eadrc", 1))
    assert dc_gain(channel_yd(asm2)) == pytest.approx(0.0, abs=1e-12)


def test_disturbance_and_noise_channels_ignore_prefilter():
    w = np.logspace(-2, 3, 100)
    for order, structure in [(1, "pi"), (2, "eadrc")]:
        plant = gp1() if order == 1 else gp2()
        one = LoopAssembly(plant, comparison_controller(order, structure, 1))
        two = LoopAssembly(plant, comparison_controller(order, structure, 2))
        np.testing.assert_allclose(response(channel_yd(two), w), response(channel_yd(one), w), rtol=1e-12)
        np.testing.assert_allclose(response(channel_un(two), w), response(channel_un(one), w), rtol=1e-12)
        assert not np.allclose(response(channel_er(two), w), response(channel_er(one), w))


def test_noise_channel_sign():
    asm = LoopAssembly(gp2(), comparison_controller(2, "eadrc", 1))
    w = np.array([1.0])
    c = response(asm.controller.feedback, w)
    p = response(asm.plant, w)
    assert response(channel_un(asm), w)[0] == pytest.approx(-c[0] / (1.0 + c[0] * p[0]))


def test_eadrc_rolls_off_noise_faster_than_pid():
    w = np.array([1e3])
    pid = LoopAssembly(gp2(), comparison_controller(2, "pid", 1))
    eadrc = LoopAssembly(gp2(), comparison_controller(2, "eadrc", 1))
    assert abs(response(channel_un(eadrc), w)[0]) < abs(response(channel_un(pid), w)[0])


def test_bode_comparison_set_labels():
    labels = [label for label, _ in bode_comparison_set(1)]
    assert labels == [
        "pi_yd",
        "pi_un",
        "pi_1dof_er",
        "pi_2dof_b0.7_er",
        "pi_2dof_b0.3_er",
        "eadrc_yd",
        "eadrc_un",
        "eadrc_1dof_er",
        "eadrc_2dof_b0.7_er",
        "eadrc_2dof_b0.3_er",
    ]


def test_bode_export_and_csv(tmp_path: Path):
    df = bode_export(bode_comparison_set(2), n_points=50)
    assert df.shape == (50, 21)
    assert list(df.columns[:3]) == ["omega_rad_s", "pid_yd_mag_db", "pid_yd_phase_deg"]
    assert np.all(np.isfinite(df.to_numpy()))
    path = write_bode_csv(df, tmp_path / "bode.csv")
    back = pd.read_csv(path)
    assert list(back.columns) == list(df.columns)
    np.testing.assert_allclose(back["omega_rad_s"].to_numpy(), df["omega_rad_s"].to_numpy(), rtol=1e-11)


def test_bode_export_rejects_duplicates_and_handles_empty():
    g = gp2()
    with pytest.raises(InvalidParameters):
        bode_export([("a", g), ("a", g)])
    empty = bode_export([])
    assert list(empty.columns) == ["omega_rad_s"]
    assert empty.empty
