from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from eadrc.discretize import discretize_controller
from eadrc.errors import ImproperResult, InvalidParameters, UnsupportedOrder
from eadrc.synth import (
    AdrcGains,
    FilterSpec,
    PidParams,
    bandwidth_tune,
    build_ceq,
    build_eadrc_fb,
    build_eadrc_fb_general,
    build_pid_fb,
    build_pid_pf,
    crib_sheet,
    equivalent_output_filter,
    make_controller,
    pid_from_adrc,
    structural_discrepancy,
    write_crib_sheet,
)
from eadrc.tf import dc_gain, response, tf_series
from eadrc.utils import coefficient_deviation, log_grid


def test_bandwidth_tune_second_order():
    g = bandwidth_tune(2, 4.0, 7.0)
    assert g.k == (16.0, 8.0)
    assert g.l == (84.0, 2352.0, 21952.0)
    assert g.equivalence_denominator == pytest.approx(3040.0)


def test_bandwidth_tune_first_order():
    g = bandwidth_tune(1, 2.7, 15.0)
    assert g.k == pytest.approx((2.7,))
    assert g.l == pytest.approx((81.0, 1640.25))


def test_bandwidth_tune_rejects_bad_input():
    with pytest.raises(UnsupportedOrder):
        bandwidth_tune(3, 1.0, 5.0)
    with pytest.raises(InvalidParameters):
        bandwidth_tune(2, 0.0, 5.0)
    with pytest.raises(InvalidParameters):
        bandwidth_tune(2, 1.0, -1.0)


def test_gains_shape_checked():
    with pytest.raises(InvalidParameters):
        AdrcGains(n=2, k=(1.0,), l=(1.0, 2.0, 3.0))
    with pytest.raises(InvalidParameters):
        AdrcGains(n=1, k=(1.0,), l=(1.0, 2.0), b0=0.0)


def test_eadrc_first_order_closed_form():
    fb = build_eadrc_fb(bandwidth_tune(1, 2.7, 15.0))
    assert fb.num.coeffs == pytest.approx((4428.675, 1858.95))
    assert fb.den.coeffs == pytest.approx((0.0, 1642.95, 1.0))


def test_eadrc_second_order_closed_form_scales_with_b0():
    fb = build_eadrc_fb(bandwidth_tune(2, 4.0, 7.0, b0=2.0))
    assert fb.num.coeffs == pytest.approx((351232.0 / 2.0, 213248.0 / 2.0, 42112.0 / 2.0))
    assert fb.den.coeffs == pytest.approx((0.0, 3040.0, 92.0, 1.0))


def test_pid_from_adrc_second_order():
    pid = pid_from_adrc(bandwidth_tune(2, 4.0, 7.0))
    assert pid.kp == pytest.approx(213248.0 / 3040.0, rel=1e-12)
    assert pid.ki == pytest.approx(351232.0 / 3040.0, rel=1e-12)
    assert pid.kd == pytest.approx(42112.0 / 3040.0, rel=1e-12)


def test_pid_from_adrc_first_order_is_pi():
    pid = pid_from_adrc(bandwidth_tune(1, 2.7, 15.0))
    assert pid.kp == pytest.approx(1858.95 / 1642.95)
    assert pid.ki == pytest.approx(4428.675 / 1642.95)
    assert pid.kd == 0.0
    assert pid.is_pi


@settings(max_examples=100, deadline=None)
@given(
    n=st.sampled_from([1, 2]),
    omega_cl=st.floats(min_value=0.5, max_value=100.0),
    k_eso=st.floats(min_value=2.0, max_value=50.0),
    b0=st.floats(min_value=0.1, max_value=1e7),
    tf_s=st.floats(min_value=1e-3, max_value=0.1),
)
def test_eadrc_equals_pid_times_ceq(n: int, omega_cl: float, k_eso: float, b0: float, tf_s: float):
    g = bandwidth_tune(n, omega_cl, k_eso, b0)
    fy = FilterSpec.first_order(tf_s) if n == 2 else FilterSpec.unity()
    pid = pid_from_adrc(g, fy=fy)
    w = log_grid(1e-3, 1e4, 200)
    eadrc = response(build_eadrc_fb(g), w)
    composed = response(tf_series(build_pid_fb(pid), build_ceq(g, fy)), w)
    assert np.max(np.abs(composed - eadrc) / np.abs(eadrc)) < 1e-9


def test_perturbed_kp_breaks_equivalence():
    g = bandwidth_tune(2, 4.0, 7.0)
    pid = pid_from_adrc(g)
    bumped = PidParams(kp=pid.kp * 1.01, ki=pid.ki, kd=pid.kd)
    w = log_grid(1e-2, 1e3, 200)
    eadrc = response(build_eadrc_fb(g), w)
    composed = response(tf_series(build_pid_fb(bumped), build_ceq(g)), w)
    assert np.max(np.abs(composed - eadrc) / np.abs(eadrc)) > 1e-3


@settings(max_examples=100, deadline=None)
@given(
    omega_cl=st.floats(min_value=0.5, max_value=100.0),
    k_eso=st.floats(min_value=2.0, max_value=50.0),
    b0=st.floats(min_value=0.1, max_value=1e7),
)
def test_general_form_matches_second_order_closed_form(omega_cl: float, k_eso: float, b0: float):
    g = bandwidth_tune(2, omega_cl, k_eso, b0)
    closed = build_eadrc_fb(g).normalized()
    general = build_eadrc_fb_general(g).normalized()
    assert coefficient_deviation(general.num.coeffs, closed.num.coeffs) < 1e-9
    assert coefficient_deviation(general.den.coeffs, closed.den.coeffs) < 1e-9
    report = structural_discrepancy(g)
    assert report["num_deviation"] < 1e-9
    assert report["den_deviation"] < 1e-9


def test_general_form_matches_tuned_example():
    g = bandwidth_tune(2, 4.0, 7.0)
    closed = build_eadrc_fb(g).normalized()
    general = build_eadrc_fb_general(g).normalized()
    assert general.num.coeffs == pytest.approx(closed.num.coeffs, rel=1e-9)
    assert general.den.coeffs == pytest.approx(closed.den.coeffs, rel=1e-9, abs=1e-9)


def test_structural_discrepancy_first_order_logged(tmp_path: Path):
    log = tmp_path / "audit.ndjson"
    report = structural_discrepancy(bandwidth_tune(1, 2.7, 15.0), audit_log=log)
    assert report["den_deviation"] > 1e-3
    record = json.loads(log.read_text(encoding="utf-8").splitlines()[0])
    assert record["check"] == "structural_discrepancy"
    assert record["gains"]["n"] == 1


def test_equivalent_output_filter():
    g1 = bandwidth_tune(1, 2.7, 15.0)
    fy1 = equivalent_output_filter(g1)
    assert fy1.kind == "first_order"
    assert fy1.t == pytest.approx(1.0 / 1642.95)
    fy2 = equivalent_output_filter(bandwidth_tune(2, 4.0, 7.0))
    assert fy2.kind == "second_order"
    assert fy2.a2 == pytest.approx(1.0 / 3040.0)
    assert fy2.a1 == pytest.approx(92.0 / 3040.0)


@pytest.mark.parametrize("order,beta", [(1, 0.7), (1, 0.3), (2, 0.75), (2, 0.65)])
def test_eadrc_prefilter_unit_dc(order: int, beta: float):
    g = bandwidth_tune(order, 2.7 if order == 1 else 4.0, 15.0 if order == 1 else 7.0)
    ctrl = make_controller("eADRC", 2, g, beta=beta, fr=FilterSpec.first_order(0.001))
    assert dc_gain(ctrl.prefilter) == pytest.approx(1.0)
    assert ctrl.prefilter.is_proper
    simplified = make_controller("eADRC", 2, g, beta=beta, fr=FilterSpec.first_order(0.001), simplified=True)
    w = log_grid(1e-2, 1e2, 50)
    np.testing.assert_allclose(response(simplified.prefilter, w), response(ctrl.prefilter, w), rtol=1e-9)


def test_one_dof_prefilter_is_unity():
    ctrl = make_controller("PI", 1, PidParams(kp=1.0, ki=2.5))
    assert ctrl.prefilter.num.coeffs == (1.0,)
    assert ctrl.prefilter.den.coeffs == (1.0,)
    assert ctrl.label == "1DOF PI"


def test_improper_prefilter_rejected():
    with pytest.raises(ImproperResult):
        build_pid_pf(PidParams(kp=1.0, ki=1.0, kd=1.0, fy=FilterSpec.second_order(0.01, 0.1)))
    with pytest.raises(ImproperResult):
        build_pid_pf(PidParams(kp=1.0, ki=1.0, fy=FilterSpec.first_order(0.1)))


def test_make_controller_rejects_mismatches():
    with pytest.raises(InvalidParameters):
        make_controller("PI", 1, bandwidth_tune(1, 2.7, 15.0))
    with pytest.raises(InvalidParameters):
        make_controller("eADRC", 1, PidParams(kp=1.0, ki=1.0))
    with pytest.raises(InvalidParameters):
        make_controller("PI", 3, PidParams(kp=1.0, ki=1.0))
    with pytest.raises(InvalidParameters):
        make_controller("PI", 1, PidParams(kp=1.0, ki=1.0, kd=0.5))
    with pytest.raises(InvalidParameters):
        make_controller("fuzzy", 1, PidParams(kp=1.0, ki=1.0))


def test_pid_params_validation():
    with pytest.raises(InvalidParameters):
        PidParams(kp=1.0, ki=1.0, beta=1.5)
    with pytest.raises(InvalidParameters):
        FilterSpec.first_order(0.0)
    with pytest.raises(InvalidParameters):
        FilterSpec.second_order(0.1, -1.0)


def test_lower_beta_raises_tracking_error_at_low_frequency():
    from eadrc.analysis import LoopAssembly, channel_er
    from eadrc.scenarios import comparison_controller, gp1

    w = np.array([1.0])
    low = abs(response(channel_er(LoopAssembly(gp1(), comparison_controller(1, "pi", 2, 0.3))), w)[0])
    high = abs(response(channel_er(LoopAssembly(gp1(), comparison_controller(1, "pi", 2, 0.7))), w)[0])
    assert low > high


def test_crib_sheet_rows_and_files(tmp_path: Path):
    g = bandwidth_tune(2, 4.0, 7.0)
    pid = pid_from_adrc(g, beta=0.75, fy=FilterSpec.first_order(0.05), fr=FilterSpec.first_order(0.001))
    sheet = crib_sheet(g, pid)
    df = sheet.to_frame()
    assert list(zip(df["structure"], df["dof"])) == [("PID", 1), ("PID", 2), ("eADRC", 1), ("eADRC", 2)]
    paths = write_crib_sheet(sheet, tmp_path)
    assert [p.name for p in paths] == ["crib_sheet.txt", "crib_sheet.yaml"]
    record = yaml.safe_load(paths[1].read_text(encoding="utf-8"))
    assert record["order"] == 2
    assert len(record["rows"]) == 4
    assert "Kp=70.14736842" in paths[0].read_text(encoding="utf-8")


def test_crib_sheet_first_order_feedback_shared_across_dof():
    sheet = crib_sheet(bandwidth_tune(1, 2.7, 15.0))
    one, two = (row.controller.feedback for row in sheet.rows if row.structure == "eADRC")
    assert one.num.coeffs == two.num.coeffs
    assert one.den.coeffs == two.den.coeffs


def test_crib_sheet_second_order_feedback_is_pid_times_ceq():
    g = bandwidth_tune(2, 4.0, 7.0)
    pid = pid_from_adrc(g, beta=0.75, fy=FilterSpec.first_order(0.05), fr=FilterSpec.first_order(0.001))
    sheet = crib_sheet(g, pid)
    pid_rows = [row for row in sheet.rows if row.structure == "PID"]
    eadrc_rows = [row for row in sheet.rows if row.structure == "eADRC"]
    w = log_grid(1e-3, 1e4, 200)
    ceq = build_ceq(g, pid.fy)
    for pid_row, eadrc_row in zip(pid_rows, eadrc_rows):
        assert pid_row.dof == eadrc_row.dof
        expected = response(eadrc_row.controller.feedback, w)
        composed = response(tf_series(pid_row.controller.feedback, ceq), w)
        assert np.max(np.abs(composed - expected) / np.abs(expected)) < 1e-9


@pytest.mark.parametrize("kp,ki", [(1.0, 2.5), (0.3, 40.0), (250.0, 1e-3)])
def test_unit_weight_pi_prefilter_collapses_to_one(kp: float, ki: float):
    ctrl = make_controller("PI", 2, PidParams(kp=kp, ki=ki), beta=1.0)
    values = response(ctrl.prefilter, log_grid(1e-3, 1e4, 200))
    assert np.max(np.abs(values - 1.0)) < 1e-12


def test_second_order_eadrc_prefilter_needs_reference_filter():
    g = bandwidth_tune(2, 4.0, 7.0)
    bare = make_controller("eADRC", 2, g, beta=0.7)
    assert (bare.prefilter.num.degree, bare.prefilter.den.degree) == (3, 2)
    with pytest.raises(ImproperResult):
        discretize_controller(bare.prefilter, 1e-3)
    filtered = make_controller("eADRC", 2, g, beta=0.7, fr=FilterSpec.second_order(1e-4, 0.02))
    assert filtered.prefilter.is_proper
    assert discretize_controller(filtered.prefilter, 1e-3).tf.is_discrete


def test_crib_sheet_needs_gains_and_pi_for_first_order():
    with pytest.raises(InvalidParameters):
        crib_sheet(None)
    g = bandwidth_tune(1, 2.7, 15.0)
    with pytest.raises(InvalidParameters):
        crib_sheet(g, PidParams(kp=1.0, ki=1.0, kd=0.1))
