"""End-to-end checks against closed forms and the reference operating points."""

import hashlib
import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from scipy import constants

from qkdsim.app import run_application
from qkdsim.fiber import FiberRealization, channel_output
from qkdsim.harness import (
    calibrate_fiber, eye_diagram, eye_traces, fit_alignment_error, run_scenario, sweep
)
from qkdsim.models import EncoderSpec, RunMode, SpadParams, SweepAxis
from qkdsim.persistence import load_config, load_targets
from qkdsim.polarization import PolarizationState, StokesVector
from qkdsim.receiver import detect_streams
from qkdsim.source import FWHM_TO_SIGMA, gaussian_spectrum, sample_slices

pytestmark = pytest.mark.slow

CENTER_NM = 1577.0
ANCHORS = Path(__file__).resolve().parent.parent / "scenarios" / "anchors.json"


@pytest.mark.parametrize("width_nm", [1.0, 2.0, 5.0])
@pytest.mark.parametrize("dgd_ps", [0.5, 1.0, 2.0, 4.0])
def test_dop_matches_gaussian_closed_form(width_nm, dgd_ps):
    real = FiberRealization.from_segments([(dgd_ps, np.array([1.0, 0.0, 0.0]), 0.0)])
    slices = sample_slices(gaussian_spectrum(CENTER_NM, width_nm), 401)
    out = channel_output(PolarizationState(StokesVector(0, 1, 0)), slices, real, CENTER_NM)
    sigma_w = 2 * math.pi * constants.c * width_nm * FWHM_TO_SIGMA * 1e-9 / (CENTER_NM * 1e-9) ** 2
    expected = math.exp(-0.5 * (sigma_w * dgd_ps * 1e-12) ** 2)
    assert out.dop == pytest.approx(expected, abs=1e-3)


@pytest.mark.parametrize("load", [0.2, 1.0, 5.0])
def test_dead_time_saturation(load):
    params = SpadParams(efficiency=1.0, dead_time_us=25.0, dark_rate_cps=0.0, jitter_ps=0.0)
    rate = load / params.dead_time_s
    rng = np.random.default_rng(17)
    times = np.cumsum(rng.exponential(1e12 / rate, int(rate * 10.0 * 1.05) + 100))
    times = times[times < 10e12]
    tags = detect_streams(times, np.zeros(len(times), dtype=int), np.ones(len(times)), params, 10.0, seed=2)
    assert len(tags) / 10.0 == pytest.approx(rate / (1.0 + rate * params.dead_time_s), rel=0.02)


@pytest.mark.parametrize("ob_db", [0.0, 10.0])
@pytest.mark.parametrize("length_km", [0.0, 0.256, 1.0])
@pytest.mark.parametrize("width_nm", [1.0, 2.0])
def test_montecarlo_agrees_with_analytic(scenario_path, width_nm, length_km, ob_db):
    config = load_config(scenario_path("ase_fiber_length")).with_updates(
        ob_db=ob_db, realizations=1, n_symbols=1_000_000)
    config = config.with_updates(filter=replace(config.filter, width_nm=width_nm),
                                 fiber=replace(config.fiber, length_km=length_km))
    analytic = run_scenario(config.with_updates(mode=RunMode.ANALYTIC))
    mc = run_scenario(config.with_updates(mode=RunMode.MONTECARLO))
    #4 sigma keeps the 24 comparisons of this grid from failing by chance
    sigma_q = math.sqrt(analytic.qber * (1 - analytic.qber) / mc.sifted_count)
    assert abs(mc.qber - analytic.qber) < 4 * sigma_q
    assert abs(mc.sifted_count - analytic.sifted_count) < 4 * math.sqrt(analytic.sifted_count)


def test_dark_only_link_has_half_errors_in_both_modes(b2b_config):
    config = b2b_config.with_updates(
        mu=0.0, n_symbols=1_000_000,
        spad=SpadParams(efficiency=0.1, dead_time_us=0.0, dark_rate_cps=2e6, jitter_ps=0.0))
    analytic = run_scenario(config)
    mc = run_scenario(config.with_updates(mode=RunMode.MONTECARLO))
    assert analytic.qber == pytest.approx(0.5, abs=1e-12)
    assert abs(mc.qber - 0.5) < 4 * mc.qber_std_error


@pytest.fixture(scope="module")
def calibrated():
    template, targets, search = load_targets(ANCHORS)
    return calibrate_fiber(template, targets, **search)


def test_anchor_fit_is_interior(calibrated):
    #one coefficient cannot meet all three anchors exactly; the best fit stays close
    assert 0.5 < calibrated.coefficient < 8.5
    assert calibrated.max_residual < 0.08


def test_filter_width_trend_after_calibration(scenario_path, calibrated):
    config = load_config(scenario_path("ase_emission_bandwidth"))
    config = config.with_updates(fiber=replace(config.fiber, pmd_ps_per_sqrt_km=calibrated.coefficient))
    records = sweep(config, SweepAxis.DELTA_LAMBDA, [1.0, 2.0, 5.0])
    qbers = [r.qber for r in records]
    assert qbers[0] < qbers[1] < qbers[2]
    assert 0.18 <= qbers[2] <= 0.32


def test_ase_back_to_back_operating_point(scenario_path):
    config = load_config(scenario_path("ase_b2b_ob"))
    record = run_scenario(config)
    assert 10e3 <= record.raw_key_rate_bps <= 60e3
    low = sweep(config, SweepAxis.OB, [-3.0, -6.0, -10.0])
    rates = [r.raw_key_rate_bps for r in low]
    assert max(rates) / min(rates) - 1.0 <= 0.05


def test_qber_limit_crossing_is_placeable(scenario_path):
    config = load_config(scenario_path("ase_b2b_ob"))
    error = fit_alignment_error(config, ob_db=18.5)
    fitted = config.with_updates(measurement=replace(config.measurement, alignment_error_rad=error))
    below, above = sweep(fitted, SweepAxis.OB, [16.5, 20.5])
    assert below.qber < 0.11 < above.qber


def test_ge_on_si_operating_point(scenario_path):
    record = run_scenario(load_config(scenario_path("ge_on_si")))
    assert record.power_limited
    assert 2.8e3 / 3 <= record.raw_key_rate_bps <= 2.8e3 * 3
    assert 0.09 <= record.qber <= 0.11


def test_eye_levels_follow_the_dop():
    labels = np.random.default_rng(3).integers(0, 4, 201)
    spec = EncoderSpec(bandwidth_hz=1e15)
    polarized = eye_traces(labels, spec, np.eye(3), 1.0)
    assert polarized.mid_symbol_levels() == pytest.approx([0.0, 0.5, 1.0], abs=0.01)
    depolarized = eye_traces(labels, spec, 0.1 * np.eye(3), 1.0)
    assert depolarized.mid_symbol_levels() == pytest.approx([0.45, 0.5, 0.55], abs=0.01)


def test_short_spool_eye_is_less_open_than_back_to_back(scenario_path):
    config = load_config(scenario_path("eye_degraded"))
    config = config.with_updates(encoder=replace(config.encoder, bandwidth_hz=1e15))
    spooled = eye_diagram(config)
    b2b = eye_diagram(config.with_updates(fiber=replace(config.fiber, length_km=0.0)))
    opening = lambda eye: np.ptp(eye.mid_symbol_samples())
    assert opening(spooled) < opening(b2b)
    assert opening(b2b) == pytest.approx(1.0, abs=1e-6)


def test_output_files_hash_equal_across_runs(scenario_path, tmp_path):
    digests = []
    for name in ("a.csv", "b.csv"):
        out = tmp_path / name
        config = str(scenario_path("ase_emission_bandwidth"))
        code = run_application(["sweep", "--config", config, "--axis", "dlambda", "--values", "1,2,5",
                                "--out", str(out)])
        assert code == 0
        digests.append(hashlib.sha256(out.read_bytes()).hexdigest())
    assert digests[0] == digests[1]


@pytest.mark.parametrize("width_nm, last_feasible_km", [(2.0, 0.256), (1.0, 1.0)])
def test_fiber_length_sweep_feasibility(scenario_path, width_nm, last_feasible_km):
    config = load_config(scenario_path("ase_fiber_length"))
    config = config.with_updates(filter=replace(config.filter, width_nm=width_nm))
    lengths = [0.128, 0.256, 0.5, 1.0, 2.0, 4.0]
    records = sweep(config, SweepAxis.FIBER_LENGTH, lengths)
    qbers = [r.qber for r in records]
    assert all(a <= b for a, b in zip(qbers, qbers[1:]))
    assert [r.feasible for r in records] == [km <= last_feasible_km for km in lengths]
