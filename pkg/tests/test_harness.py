import math
from dataclasses import replace

import numpy as np
import pytest

from qkdsim.errors import CalibrationError, InvalidArgumentError
from qkdsim.harness import (
    CalibrationTarget, calibrate_fiber, expected_rates, eye_diagram, eye_traces, fit_alignment_error,
    link_budget, polarimeter_sweep, run_scenario, sweep
)
from qkdsim.models import EncoderSpec, FiberSpec, FilterSpec, RunMode, SweepAxis
from qkdsim.persistence import load_config


def test_requested_mu_above_the_budget_is_clamped(b2b_config):
    budget = link_budget(b2b_config.with_updates(mu=1e9))
    assert budget.mu == budget.mu_available
    assert budget.power_limited
    assert "clamped" in budget.warning


def test_ase_budget_is_not_power_limited(b2b_config):
    budget = link_budget(b2b_config)
    assert budget.mu == 0.1
    assert budget.mu_available > 1e3
    assert not budget.power_limited and budget.warning is None


def test_ge_on_si_at_max_power_is_power_limited(scenario_path):
    config = load_config(scenario_path("ge_on_si"))
    budget = link_budget(config)
    assert config.mu_is_max
    assert budget.mu == pytest.approx(0.025, rel=0.02)
    assert budget.power_limited
    assert "power-limited" in budget.warning


def test_analytic_back_to_back(b2b_config):
    record = run_scenario(b2b_config)
    assert record.dop == pytest.approx(1.0, abs=1e-9)
    assert record.transmittance == 1.0
    assert 0.0 < record.qber < 0.11
    assert record.feasible
    assert len(record.clicks) == 2
    assert record.raw_key_rate_summed_bps == pytest.approx(2 * record.raw_key_rate_bps)
    assert record.error is None


def test_montecarlo_runs_are_reproducible(b2b_config):
    config = b2b_config.with_updates(mode=RunMode.MONTECARLO, n_symbols=1_000_000, seed=7)
    sessions = []
    first = run_scenario(config, sessions=sessions)
    second = run_scenario(config)
    assert first.to_row() == second.to_row()
    assert len(sessions) == 2
    assert sum(len(s.key) for s in sessions) == first.sifted_count
    for s in sessions:
        assert np.all(np.diff(s.tags.times_ps) >= 0)


def test_different_seeds_give_different_tags(b2b_config):
    config = b2b_config.with_updates(mode=RunMode.MONTECARLO, n_symbols=1_000_000)
    a, b = [], []
    run_scenario(config.with_updates(seed=1), sessions=a)
    run_scenario(config.with_updates(seed=2), sessions=b)
    assert not np.array_equal(a[0].tags.times_ps, b[0].tags.times_ps)


def test_sweep_keeps_order_and_marks_failed_points(b2b_config):
    records = sweep(b2b_config, SweepAxis.parse("dlambda"), [2.0, -1.0, 5.0])
    assert [r.axis_value for r in records] == [2.0, -1.0, 5.0]
    assert all(r.axis == "delta_lambda" for r in records)
    assert records[0].error is None and records[2].error is None
    assert records[1].error.startswith("InvalidArgumentError")
    with pytest.raises(InvalidArgumentError):
        sweep(b2b_config, SweepAxis.OB, [])


def test_ob_sweep_trades_rate_for_qber(b2b_config):
    records = sweep(b2b_config, "ob", [0.0, 10.0, 20.0, 30.0])
    rates = [r.raw_key_rate_bps for r in records]
    qbers = [r.qber for r in records]
    assert all(a > b for a, b in zip(rates, rates[1:]))
    assert all(a <= b for a, b in zip(qbers, qbers[1:]))
    assert records[-1].transmittance == pytest.approx(1e-3)


def test_length_sweep_updates_the_fiber(b2b_config):
    [record] = sweep(b2b_config, SweepAxis.FIBER_LENGTH, [10.0])
    assert record.config["fiber"]["length_km"] == 10.0
    assert record.transmittance == pytest.approx(10 ** (-0.2), rel=1e-9)


def test_polarimeter_without_fiber_has_no_spread():
    result = polarimeter_sweep(FiberSpec(length_km=0.0), 1.0, 1569.0, 1585.0, steps=2)
    assert len(result.wavelengths_nm) == 17
    assert np.allclose(result.spreads_rad, 0.0, atol=1e-9)
    assert result.stokes[0, 0] == pytest.approx([0.0, 1.0, 0.0], abs=1e-12)


def test_long_spool_spreads_more_than_short():
    long_ = polarimeter_sweep(FiberSpec(length_km=12.8, pmd_ps_per_sqrt_km=0.1), 1.0, 1569.0, 1585.0, 1)
    short = polarimeter_sweep(FiberSpec(length_km=0.25, pmd_ps_per_sqrt_km=0.1), 1.0, 1569.0, 1585.0, 1)
    assert long_.spreads_rad[0] > short.spreads_rad[0]


def test_polarimeter_without_drift_repeats_itself():
    spec = FiberSpec(length_km=1.0, pmd_ps_per_sqrt_km=0.5, drift_rad_per_sqrt_h=0.0)
    result = polarimeter_sweep(spec, 2.0, 1570.0, 1584.0, steps=3, interval_min=5.0)
    assert result.times_min.tolist() == [0.0, 5.0, 10.0]
    assert np.array_equal(result.stokes[0], result.stokes[-1])
    assert len(list(result.rows())) == 3 * len(result.wavelengths_nm)


def test_polarimeter_rejects_bad_ranges():
    with pytest.raises(InvalidArgumentError):
        polarimeter_sweep(FiberSpec(), 1.0, 1585.0, 1569.0, 1)
    with pytest.raises(InvalidArgumentError):
        polarimeter_sweep(FiberSpec(), 0.0, 1569.0, 1585.0, 1)


def test_settled_eye_shows_three_levels(b2b_config):
    config = b2b_config.with_updates(encoder=EncoderSpec(bandwidth_hz=1e15))
    eye = eye_diagram(config, n_traces=200)
    assert eye.traces.shape == (200, 16)
    assert eye.mid_symbol_levels() == pytest.approx([0.0, 0.5, 1.0], abs=1e-6)


def test_eye_scales_with_transmittance():
    eye = eye_traces(np.array([0, 1, 0]), EncoderSpec(bandwidth_hz=1e15), np.eye(3), 0.25)
    assert eye.traces.max() == pytest.approx(0.25, abs=1e-9)
    with pytest.raises(InvalidArgumentError):
        eye_traces(np.array([0]), EncoderSpec(), np.eye(3), 1.0)


def test_calibration_needs_targets(b2b_config):
    with pytest.raises(CalibrationError):
        calibrate_fiber(b2b_config, [])
    with pytest.raises(CalibrationError):
        calibrate_fiber(b2b_config, [CalibrationTarget(2.0, 0.256, 0.11)], lo=0.0)
    with pytest.raises(CalibrationError):
        calibrate_fiber(b2b_config, [CalibrationTarget(2.0, 0.256, 0.11)], lo=3.0, hi=1.0)


def test_calibration_recovers_a_known_coefficient(b2b_config):
    template = b2b_config.with_updates(realizations=2)
    truth = template.with_updates(filter=FilterSpec(width_nm=2.0),
                                  fiber=replace(template.fiber, length_km=0.256, pmd_ps_per_sqrt_km=2.0))
    target = CalibrationTarget(2.0, 0.256, expected_rates(truth).qber)
    result = calibrate_fiber(template, [target], lo=1.0, hi=3.0, points=3, seeds=2)
    assert result.coefficient == 2.0
    assert result.fiber.pmd_ps_per_sqrt_km == 2.0
    assert result.max_residual < 1e-12
    assert len(result.costs) == 3


def test_alignment_error_fit_places_qber_on_the_threshold(b2b_config):
    error = fit_alignment_error(b2b_config, ob_db=18.5)
    assert 0.0 < error < math.pi / 2
    point = b2b_config.with_updates(ob_db=18.5, measurement=replace(b2b_config.measurement,
                                                                    alignment_error_rad=error))
    assert expected_rates(point).qber == pytest.approx(0.11, abs=1e-6)
    with pytest.raises(CalibrationError):
        fit_alignment_error(b2b_config, ob_db=18.5, threshold=0.9)


def test_montecarlo_handles_the_full_ase_budget(scenario_path):
    config = load_config(scenario_path("ase_b2b_ob")).with_updates(
        mu="max", mode=RunMode.MONTECARLO, n_symbols=200_000)
    sessions = []
    record = run_scenario(config, sessions=sessions)
    assert record.mu > 1e4
    assert record.error is None
    #25 us dead time over 200 us allows at most 9 clicks per detector and session
    assert all(c <= 2 * 9 for c in record.clicks)
    assert sum(len(s.key) for s in sessions) == record.sifted_count


def test_montecarlo_without_sifted_bits_reports_half_errors(b2b_config):
    config = b2b_config.with_updates(mode=RunMode.MONTECARLO, n_symbols=100, ob_db=60.0)
    record = run_scenario(config)
    assert record.sifted_count == 0.0
    assert record.qber == 0.5
    assert record.raw_key_rate_bps == 0.0
    assert not record.feasible
    assert "no sifted bits" in record.warning
