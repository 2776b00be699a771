#scenario orchestration: link pipelines, sweeps, polarimeter, eye diagram, calibration

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from . import fiber as fiber_mod
from .encoder import label_waveform, stokes_of_phase, transition_phases
from .errors import CalibrationError, InvalidArgumentError, QkdSimError
from .models import (
    Basis, EncoderSpec, FiberSpec, MU_Q, QBER_LIMIT, ResultRecord, RunMode, ScenarioConfig,
    SweepAxis
)
from .polarization import StokesVector, max_pairwise_distance
from .protocol import SiftedKey, combine, generate_alice, pair_clicks, sift
from .receiver import (
    LinkRates, LinkSummary, analytic_rates, analyzer_axis, detect_streams, session_detectors,
    TagStream, session_plan, temporal_filter
)
from .seeds import ALICE_STREAM, DETECTOR_STREAM, EYE_STREAM, FIBER_STREAM, derive_seed
from .source import SpectralDensity, apply_filter, make_spectrum, photons_per_symbol, slice_arrays

logger = logging.getLogger(__name__)

TRANSITION_HISTORY = 2
POLARIMETER_SUB_SLICES = 11
MC_CHUNK_SYMBOLS = 1 << 16
EMPTY_KEY_QBER = 0.5


@dataclass
class LinkBudget:
    """Source side of a scenario: filtered spectrum and the launched mean photon number."""
    spectrum: SpectralDensity
    filter_fraction: float
    mu_available: float
    mu: float
    power_limited: bool
    warning: Optional[str] = None

    @property
    def center_nm(self) -> float:
        return self.spectrum.centroid_nm


@dataclass
class Channel:
    matrices: List[np.ndarray]  # controller-aligned 3x3 Stokes blocks, one per fiber draw
    transmittance: float

    @property
    def dop(self) -> float:
        lengths = [0.5 * (np.linalg.norm(m[:, 1]) + np.linalg.norm(m[:, 2])) for m in self.matrices]
        return float(min(np.mean(lengths), 1.0))


def link_budget(config: ScenarioConfig) -> LinkBudget:
    spectrum = make_spectrum(config.emitter)
    center = config.filter.center_nm if config.filter.center_nm is not None else config.emitter.center_nm
    filtered, fraction = apply_filter(spectrum, center, config.filter.width_nm, config.filter.shape)
    launch_w = filtered.total_power_w * 10.0 ** (-config.insertion_loss_db / 10.0)
    available = photons_per_symbol(launch_w, config.symbol_rate_hz, filtered.centroid_nm)

    warning = None
    if config.mu_is_max:
        mu = available
        limited = available < MU_Q
        if limited:
            warning = f"power-limited: mu {available:.4g} below {MU_Q}"
    elif config.mu > available:
        mu = available
        limited = True
        warning = f"requested mu {config.mu} exceeds available {available:.4g}, clamped"
    else:
        mu = float(config.mu)
        limited = False
    if warning:
        logger.warning(f"Scenario '{config.name}': {warning}")
    return LinkBudget(filtered, fraction, available, mu, limited, warning)


def fiber_draws(spec: FiberSpec, seed: int, realizations: int) -> List[fiber_mod.FiberRealization]:
    return [fiber_mod.build_fiber(spec, derive_seed(seed, FIBER_STREAM, r)) for r in range(realizations)]


def link_channel(config: ScenarioConfig, budget: LinkBudget) -> Channel:
    nodes, weights = slice_arrays(budget.spectrum, config.slices)
    matrices = []
    for realization in fiber_draws(config.fiber, config.seed, config.realizations):
        m = fiber_mod.channel_matrix(nodes, weights, realization, budget.center_nm)
        matrices.append(fiber_mod.aligned_matrix(m))
    return Channel(matrices, fiber_mod.transmittance(config.fiber, config.ob_db))


def bob_profile(encoder: EncoderSpec, matrix: np.ndarray) -> np.ndarray:
    """Stokes vectors at Bob per (label, history, intra-symbol sample)."""
    phases = transition_phases(encoder, TRANSITION_HISTORY)
    return stokes_of_phase(phases, encoder.balance_error) @ np.asarray(matrix).T


def _link_summary(config: ScenarioConfig, budget: LinkBudget, channel: Channel,
                  matrix: np.ndarray) -> LinkSummary:
    m = config.measurement
    return LinkSummary(
        mu=budget.mu,
        transmittance=channel.transmittance,
        dop=channel.dop,
        alignment_error_rad=m.alignment_error_rad,
        symbol_rate_hz=config.symbol_rate_hz,
        spad=config.spad,
        filter_fraction=m.filter_fraction,
        mode=m.mode,
        session_basis=m.session_basis,
        profile=bob_profile(config.encoder, matrix),
    )


def _average_rates(rates: List[LinkRates]) -> LinkRates:
    sifted = np.mean([r.session_sifted_cps for r in rates], axis=0)
    errors = np.mean([r.session_errors_cps for r in rates], axis=0)
    total = float(sifted.sum())
    return LinkRates(
        sifted_rate_cps=total / len(sifted),
        summed_rate_cps=total,
        qber=float(errors.sum() / total),
        session_sifted_cps=sifted.tolist(),
        session_errors_cps=errors.tolist(),
        detector_click_cps=np.mean([r.detector_click_cps for r in rates], axis=0).tolist(),
        detector_dark_cps=np.mean([r.detector_dark_cps for r in rates], axis=0).tolist(),
    )


def expected_rates(config: ScenarioConfig, budget: Optional[LinkBudget] = None,
                   channel: Optional[Channel] = None) -> LinkRates:
    budget = budget or link_budget(config)
    channel = channel or link_channel(config, budget)
    return _average_rates([analytic_rates(_link_summary(config, budget, channel, m))
                           for m in channel.matrices])


def _analytic_record(config: ScenarioConfig, budget: LinkBudget, channel: Channel,
                     record: ResultRecord) -> ResultRecord:
    rates = expected_rates(config, budget, channel)
    duration = config.n_symbols / config.symbol_rate_hz
    sifted = rates.summed_rate_cps * duration
    record.raw_key_rate_bps = rates.sifted_rate_cps
    record.raw_key_rate_summed_bps = rates.summed_rate_cps
    record.qber = rates.qber
    record.qber_std_error = math.sqrt(rates.qber * (1.0 - rates.qber) / sifted) if sifted > 0 else 0.0
    record.sifted_count = sifted
    record.clicks = [c * duration for c in rates.detector_click_cps]
    record.dark_clicks = [c * duration for c in rates.detector_dark_cps]
    return record


@dataclass
class SessionResult:
    basis: Optional[Basis]
    tags: TagStream
    key: SiftedKey
    clicks: List[int]
    dark_clicks: List[int]


def _first_arrivals(config: ScenarioConfig, budget: LinkBudget, channel: Channel, labels: np.ndarray,
                    detectors: List[Tuple[Basis, int, float]],
                    rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Earliest detected photon per (intra-symbol sample, detector) bin.

    Detected photons in a bin are Poisson with mean mu*T*eta*port/sps, so a bin clicks with
    probability 1 - exp(-mean) and its first arrival follows the conditioned exponential.
    Later photons in the same bin are not drawn, so dead times shorter than one sample are not resolved.
    """
    n = len(labels)
    sps = int(config.encoder.samples_per_symbol)
    sample_ps = 1e12 / (config.symbol_rate_hz * sps)
    err = config.measurement.alignment_error_rad
    axes = np.array([analyzer_axis(b, err) * (1.0 if bit == 0 else -1.0) for b, bit, _ in detectors])
    shares = np.array([share for _, _, share in detectors])
    mats = np.asarray(channel.matrices)
    scale = budget.mu * channel.transmittance * config.spad.efficiency / sps
    phases = label_waveform(labels, config.encoder).phases

    times, dets = [], []
    for start in range(0, n, MC_CHUNK_SYMBOLS):
        j = np.arange(start * sps, min(start + MC_CHUNK_SYMBOLS, n) * sps)
        launched = stokes_of_phase(phases[j], config.encoder.balance_error)
        stokes = np.einsum("nij,nj->ni", mats[(j // sps) * len(mats) // n], launched)
        mean = np.clip(scale * shares * (1.0 + stokes @ axes.T) / 2.0, 0.0, None)
        hit = rng.random(mean.shape) < -np.expm1(-mean)
        b, d = np.nonzero(hit)
        m = mean[b, d]
        frac = -np.log1p(rng.random(len(b)) * np.expm1(-m)) / m
        times.append((j[b] + frac) * sample_ps)
        dets.append(d)
    return np.concatenate(times), np.concatenate(dets)


def simulate_session(config: ScenarioConfig, budget: LinkBudget, channel: Channel,
                     basis: Optional[Basis], sweep_index: int = 0,
                     session: int = 0) -> SessionResult:
    """Photon-level run of one measurement session."""
    n = int(config.n_symbols)
    rate = config.symbol_rate_hz
    period_ps = 1e12 / rate
    alice = generate_alice(n, derive_seed(config.seed, ALICE_STREAM, sweep_index, session), rate, session)
    rng = np.random.default_rng(derive_seed(config.seed, ALICE_STREAM, sweep_index, session, 1))
    detectors = session_detectors(config.measurement.mode, basis)

    #incoherent CW light: arrivals uniform in time, already thinned by the SPAD efficiency
    times, det = _first_arrivals(config, budget, channel, alice.labels, detectors, rng)
    order = np.argsort(times, kind="stable")
    tags = detect_streams(times[order], det[order], np.ones(len(order)),
                          replace(config.spad, efficiency=1.0), n / rate,
                          derive_seed(config.seed, DETECTOR_STREAM, sweep_index, session),
                          n_detectors=len(detectors))
    kept = temporal_filter(tags, period_ps, config.measurement.filter_fraction, period_ps / 2.0)
    clicks = pair_clicks(kept, period_ps, n, [(b, bit) for b, bit, _ in detectors])
    key = sift(alice, clicks)
    logger.debug(f"Session {session}: {len(times)} arrivals, {len(tags)} tags, "
                 f"{len(kept)} in window, {len(key)} sifted")
    return SessionResult(basis, tags, key, tags.counts(len(detectors)), tags.dark_counts(len(detectors)))


def _montecarlo_record(config: ScenarioConfig, budget: LinkBudget, channel: Channel,
                       record: ResultRecord, sweep_index: int,
                       sessions: Optional[List["SessionResult"]] = None) -> ResultRecord:
    results = [simulate_session(config, budget, channel, basis, sweep_index, i)
               for i, basis in enumerate(session_plan(config.measurement.mode,
                                                      config.measurement.session_basis))]
    if sessions is not None:
        sessions.extend(results)
    keys = [r.key for r in results]
    clicks = np.sum([r.clicks for r in results], axis=0)
    darks = np.sum([r.dark_clicks for r in results], axis=0)
    record.clicks = clicks.astype(float).tolist()
    record.dark_clicks = darks.astype(float).tolist()
    if not any(len(k) for k in keys):
        #no key to estimate from: report the random-guess error rate
        warning = "no sifted bits, qber reported as 0.5"
        logger.warning(f"Scenario '{config.name}': {warning}")
        record.warning = f"{record.warning}; {warning}" if record.warning else warning
        record.raw_key_rate_bps = record.raw_key_rate_summed_bps = 0.0
        record.qber, record.qber_std_error, record.sifted_count = EMPTY_KEY_QBER, 0.0, 0.0
        return record
    estimate = combine(keys)
    record.raw_key_rate_bps = estimate.raw_key_rate_bps
    record.raw_key_rate_summed_bps = float(sum(len(k) / k.duration_s for k in keys))
    record.qber = estimate.qber
    record.qber_std_error = estimate.std_error
    record.sifted_count = float(estimate.samples)
    return record


def run_scenario(config: ScenarioConfig, sweep_index: int = 0, axis: str = "",
                 axis_value: Optional[float] = None,
                 sessions: Optional[List["SessionResult"]] = None) -> ResultRecord:
    """Run one scenario end to end; Monte Carlo sessions are appended to `sessions` if given."""
    config.validate()
    started = time.perf_counter()
    logger.info(f"Running scenario '{config.name}' ({config.mode.value})")
    budget = link_budget(config)
    channel = link_channel(config, budget)
    record = ResultRecord(
        config=config.to_dict(),
        axis=axis,
        axis_value=axis_value,
        mode=config.mode.value,
        mu=budget.mu,
        mu_available=budget.mu_available,
        power_limited=budget.power_limited,
        transmittance=channel.transmittance,
        dop=channel.dop,
        warning=budget.warning,
    )
    if config.mode is RunMode.MONTECARLO:
        record = _montecarlo_record(config, budget, channel, record, sweep_index, sessions)
    else:
        record = _analytic_record(config, budget, channel, record)
    record.feasible = record.qber <= QBER_LIMIT
    record.wall_seconds = time.perf_counter() - started
    logger.info(f"Scenario '{config.name}': raw key {record.raw_key_rate_bps:.4g} b/s, "
                f"QBER {record.qber:.4f}, DOP {record.dop:.4f} ({record.wall_seconds:.2f} s)")
    return record


def apply_axis(config: ScenarioConfig, axis: SweepAxis, value: float) -> ScenarioConfig:
    if axis is SweepAxis.OB:
        return config.with_updates(ob_db=float(value))
    if axis is SweepAxis.FIBER_LENGTH:
        return config.with_updates(fiber=replace(config.fiber, length_km=float(value)))
    return config.with_updates(filter=replace(config.filter, width_nm=float(value)))


def _sweep_point(config: ScenarioConfig, axis: SweepAxis, value: float, index: int) -> ResultRecord:
    point = apply_axis(config, axis, value)
    try:
        return run_scenario(point, sweep_index=index, axis=axis.value, axis_value=value)
    except (QkdSimError, ValueError, ArithmeticError) as e:
        logger.error(f"Sweep point {axis.value}={value} failed: {e}")
        return ResultRecord(config=point.to_dict(), axis=axis.value, axis_value=value,
                            mode=point.mode.value, error=f"{type(e).__name__}: {e}")


def sweep(config: ScenarioConfig, axis: SweepAxis, values: Sequence[float],
          workers: Optional[int] = None) -> List[ResultRecord]:
    values = list(values)
    if not values:
        raise InvalidArgumentError("sweep needs at least one value")
    axis = SweepAxis.parse(axis) if isinstance(axis, str) else axis
    workers = workers or config.workers
    logger.info(f"Sweeping {axis.value} over {len(values)} points ({workers} workers)")
    args = [(config, axis, v, i) for i, v in enumerate(values)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(_sweep_point, *zip(*args)))
    return [_sweep_point(*a) for a in args]


@dataclass
class PolarimeterResult:
    times_min: np.ndarray
    wavelengths_nm: np.ndarray
    stokes: np.ndarray  # (steps, wavelengths, 3)
    spreads_rad: np.ndarray

    def rows(self) -> Iterator[Tuple[float, float, StokesVector]]:
        for i, t in enumerate(self.times_min):
            for j, wl in enumerate(self.wavelengths_nm):
                yield float(t), float(wl), StokesVector.from_array(self.stokes[i, j])


def polarimeter_sweep(spec: FiberSpec, slice_nm: float, min_nm: float, max_nm: float,
                      steps: int, interval_min: float = 5.0, seed: int = 1,
                      input_stokes: Sequence[float] = (0.0, 1.0, 0.0)) -> PolarimeterResult:
    """Wavelength-swept slicing repeated in time, with drift between repetitions."""
    if not min_nm < max_nm:
        raise InvalidArgumentError("need min_nm < max_nm")
    if not slice_nm > 0 or steps < 1:
        raise InvalidArgumentError("need a positive slice width and at least one step")
    centers = np.arange(min_nm, max_nm + slice_nm / 2.0, slice_nm)
    center_nm = 0.5 * (min_nm + max_nm)
    s_in = np.asarray(input_stokes, dtype=float)
    offsets = np.linspace(-slice_nm / 2.0, slice_nm / 2.0, POLARIMETER_SUB_SLICES)
    weights = np.ones(POLARIMETER_SUB_SLICES)

    realization = fiber_mod.build_fiber(spec, derive_seed(seed, FIBER_STREAM, 0))
    stokes = np.empty((steps, len(centers), 3))
    spreads = np.empty(steps)
    for step in range(steps):
        for j, c in enumerate(centers):
            m = fiber_mod.channel_matrix(c + offsets, weights, realization, center_nm)
            stokes[step, j] = m @ s_in
        spreads[step] = max_pairwise_distance(stokes[step])
        realization = fiber_mod.drift_step(realization, interval_min * 60.0, spec)
    logger.info(f"Polarimeter: {steps} steps x {len(centers)} slices, "
                f"final spread {spreads[-1]:.3f} rad")
    return PolarimeterResult(np.arange(steps) * interval_min, centers, stokes, spreads)


@dataclass
class EyeDiagram:
    samples_per_symbol: int
    traces: np.ndarray  # (n, 2 * sps) relative power
    transmittance: float = 1.0

    @property
    def time_symbols(self) -> np.ndarray:
        return (np.arange(2 * self.samples_per_symbol) + 0.5) / self.samples_per_symbol

    def mid_symbol_samples(self) -> np.ndarray:
        mid = self.samples_per_symbol // 2
        return self.traces[:, [mid, self.samples_per_symbol + mid]].reshape(-1)

    def mid_symbol_levels(self, tolerance: float = 0.01) -> List[float]:
        """Centers of the mid-symbol sample clusters, gaps wider than tolerance split clusters."""
        values = np.sort(self.mid_symbol_samples())
        splits = np.nonzero(np.diff(values) > tolerance)[0] + 1
        return [float(c.mean()) for c in np.split(values, splits)]


def eye_traces(labels: np.ndarray, encoder: EncoderSpec, matrix: np.ndarray, transmittance: float,
               basis: Basis = Basis.DIAGONAL, alignment_error_rad: float = 0.0) -> EyeDiagram:
    """Classical power at analyzer port 0, folded onto overlapping two-symbol windows."""
    labels = np.asarray(labels, dtype=int)
    if len(labels) < 2:
        raise InvalidArgumentError("eye diagram needs at least two symbols")
    sps = int(encoder.samples_per_symbol)
    waveform = label_waveform(labels, encoder)
    stokes = stokes_of_phase(waveform.phases, encoder.balance_error) @ np.asarray(matrix).T
    power = transmittance * (1.0 + stokes @ analyzer_axis(basis, alignment_error_rad)) / 2.0
    traces = np.array([power[k * sps:(k + 2) * sps] for k in range(len(labels) - 1)])
    return EyeDiagram(sps, traces, transmittance)


def eye_diagram(config: ScenarioConfig, basis: Optional[Basis] = None,
                n_traces: Optional[int] = None) -> EyeDiagram:
    basis = basis or config.eye.basis
    n_traces = n_traces or config.eye.traces
    budget = link_budget(config)
    channel = link_channel(config, budget)
    rng = np.random.default_rng(derive_seed(config.seed, EYE_STREAM))
    labels = rng.integers(0, 4, n_traces + 1)
    return eye_traces(labels, config.encoder, channel.matrices[0], channel.transmittance,
                      basis, config.measurement.alignment_error_rad)


@dataclass
class CalibrationTarget:
    delta_lambda_nm: float
    length_km: float
    qber: float

    def to_dict(self) -> Dict[str, Any]:
        return {"delta_lambda_nm": self.delta_lambda_nm, "length_km": self.length_km, "qber": self.qber}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CalibrationTarget":
        return cls(float(data["delta_lambda_nm"]), float(data["length_km"]), float(data["qber"]))


@dataclass
class CalibrationResult:
    fiber: FiberSpec
    coefficient: float
    residuals: List[float]
    grid: np.ndarray = field(repr=False)
    costs: np.ndarray = field(repr=False)

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residuals)))


def calibrate_fiber(template: ScenarioConfig, targets: Sequence[CalibrationTarget],
                    lo: float = 0.5, hi: float = 8.5, points: int = 41,
                    seeds: int = 16) -> CalibrationResult:
    """Grid search of the PMD coefficient minimizing squared analytic QBER residuals."""
    targets = list(targets)
    if not targets:
        raise CalibrationError("no calibration targets")
    if not lo > 0 or hi < lo or points < 1:
        raise CalibrationError(f"invalid search range [{lo}, {hi}] with {points} points")
    grid = np.linspace(lo, hi, points)
    base = template.with_updates(mode=RunMode.ANALYTIC, realizations=seeds)

    prepared = []
    for t in targets:
        config = base.with_updates(filter=replace(base.filter, width_nm=t.delta_lambda_nm),
                                   fiber=replace(base.fiber, length_km=t.length_km))
        prepared.append((config, link_budget(config)))

    residuals = np.full((points, len(targets)), np.nan)
    for i, coefficient in enumerate(grid):
        for j, (config, budget) in enumerate(prepared):
            point = config.with_updates(fiber=replace(config.fiber, pmd_ps_per_sqrt_km=float(coefficient)))
            try:
                q = expected_rates(point, budget, link_channel(point, budget)).qber
            except (QkdSimError, ArithmeticError) as e:
                logger.debug(f"Calibration point {coefficient:.3f} failed: {e}")
                continue
            residuals[i, j] = q - targets[j].qber
    costs = np.sum(residuals ** 2, axis=1)
    if not np.any(np.isfinite(costs)):
        raise CalibrationError("no finite residual in the search range")
    best = int(np.argmin(np.where(np.isfinite(costs), costs, np.inf)))
    fiber = replace(template.fiber, pmd_ps_per_sqrt_km=float(grid[best]))
    logger.info(f"Calibrated PMD coefficient {grid[best]:.4g} ps/sqrt(km), "
                f"max residual {np.max(np.abs(residuals[best])):.4f}")
    return CalibrationResult(fiber, float(grid[best]), residuals[best].tolist(), grid, costs)


def fit_alignment_error(config: ScenarioConfig, ob_db: Optional[float] = None,
                        threshold: float = QBER_LIMIT,
                        bracket: Tuple[float, float] = (0.0, math.pi / 2.0)) -> float:
    """Alignment error that puts the analytic QBER at threshold for the given OB."""
    point = config.with_updates(mode=RunMode.ANALYTIC)
    if ob_db is not None:
        point = point.with_updates(ob_db=float(ob_db))
    budget = link_budget(point)
    channel = link_channel(point, budget)

    def excess(error: float) -> float:
        trial = point.with_updates(measurement=replace(point.measurement, alignment_error_rad=error))
        return expected_rates(trial, budget, channel).qber - threshold

    lo, hi = bracket
    if excess(lo) * excess(hi) > 0:
        raise CalibrationError(f"QBER threshold {threshold} not bracketed by alignment errors {bracket}")
    error = brentq(excess, lo, hi, xtol=1e-9)
    logger.info(f"Alignment error {error:.4f} rad places QBER {threshold} at OB {point.ob_db} dB")
    return float(error)
