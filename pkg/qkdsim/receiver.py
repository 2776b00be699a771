#Bob's side: basis analysis, SPAD clicks, time tags, temporal filter

import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from .encoder import LABEL_BASIS, LABEL_BIT, PHASES, stokes_of_phase
from .errors import InvalidArgumentError, UndefinedEstimateError
from .models import Basis, MeasurementMode, SpadParams, TagOrigin
from .polarization import (
    AnalyzerAxis, PolarizationState, StokesVector, projection_probability, rotate_about_s1
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeTag:
    detector: int
    time_ps: float
    origin: TagOrigin


@dataclass
class TagStream:
    """Time tags of several detectors, sorted by time. Origin is simulation truth."""
    detectors: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    times_ps: np.ndarray = field(default_factory=lambda: np.zeros(0))
    signal: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    def __len__(self) -> int:
        return len(self.times_ps)

    def __iter__(self) -> Iterator[TimeTag]:
        for d, t, s in zip(self.detectors, self.times_ps, self.signal):
            yield TimeTag(int(d), float(t), TagOrigin.SIGNAL if s else TagOrigin.DARK)

    def select(self, mask: np.ndarray) -> "TagStream":
        return TagStream(self.detectors[mask], self.times_ps[mask], self.signal[mask])

    def for_detector(self, detector: int) -> "TagStream":
        return self.select(self.detectors == detector)

    def counts(self, n_detectors: int) -> List[int]:
        return np.bincount(self.detectors, minlength=n_detectors).tolist()

    def dark_counts(self, n_detectors: int) -> List[int]:
        return np.bincount(self.detectors[~self.signal], minlength=n_detectors).tolist()

    @classmethod
    def from_tags(cls, tags: Sequence[TimeTag]) -> "TagStream":
        tags = sorted(tags, key=lambda t: t.time_ps)
        return cls(np.array([t.detector for t in tags], dtype=int),
                   np.array([t.time_ps for t in tags], dtype=float),
                   np.array([t.origin is TagOrigin.SIGNAL for t in tags], dtype=bool))


def analyzer_axis(basis: Basis, alignment_error_rad: float = 0.0) -> np.ndarray:
    axis = AnalyzerAxis.for_basis(Basis(basis)).axis
    if alignment_error_rad:
        axis = rotate_about_s1(axis, alignment_error_rad)
    return axis.as_array()


def analyze(state: PolarizationState, basis: Basis,
            alignment_error_rad: float = 0.0) -> Tuple[float, float]:
    axis = AnalyzerAxis(StokesVector.from_array(analyzer_axis(basis, alignment_error_rad)),
                        Basis(basis))
    p0 = projection_probability(state.stokes, axis)
    p0 = min(max(p0, 0.0), 1.0)
    return p0, 1.0 - p0


def apply_dead_time(times_ps: np.ndarray, dead_time_ps: float) -> np.ndarray:
    """Indices of accepted events under a non-paralyzable dead time."""
    n = len(times_ps)
    if dead_time_ps <= 0 or n == 0:
        return np.arange(n)
    keep = []
    i = 0
    while i < n:
        keep.append(i)
        i = int(np.searchsorted(times_ps, times_ps[i] + dead_time_ps, side="left"))
    return np.array(keep, dtype=int)


def detect_streams(times_ps, detectors, probabilities, params: SpadParams, duration_s: float,
                   seed: int, n_detectors: Optional[int] = None) -> TagStream:
    """Array form of spad_detect; detector d draws from SeedSequence(seed, spawn_key=(d,))."""
    times_ps = np.asarray(times_ps, dtype=float)
    detectors = np.asarray(detectors, dtype=int)
    probabilities = np.asarray(probabilities, dtype=float)
    if not len(times_ps) == len(detectors) == len(probabilities):
        raise InvalidArgumentError("arrival arrays must have equal length")
    if len(times_ps) > 1 and np.any(np.diff(times_ps) < 0):
        raise InvalidArgumentError("arrivals must be sorted by time")
    if duration_s < 0:
        raise InvalidArgumentError("duration must be >= 0")
    if np.any(detectors < 0):
        raise InvalidArgumentError("detector ids must be >= 0")
    if n_detectors is None:
        n_detectors = int(detectors.max()) + 1 if len(detectors) else 2
    duration_ps = duration_s * 1e12

    parts = []
    for det in range(n_detectors):
        rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(det,)))
        mine = detectors == det
        t_in = times_ps[mine]
        hit = rng.random(len(t_in)) < probabilities[mine] * params.efficiency
        signal_t = t_in[hit] + rng.normal(0.0, params.jitter_ps, int(hit.sum())) \
            if params.jitter_ps > 0 else t_in[hit]
        n_dark = rng.poisson(params.dark_rate_cps * duration_s)
        dark_t = rng.uniform(0.0, duration_ps, n_dark)
        t_all = np.concatenate([signal_t, dark_t])
        is_signal = np.concatenate([np.ones(len(signal_t), bool), np.zeros(n_dark, bool)])
        order = np.argsort(t_all, kind="stable")
        t_all, is_signal = t_all[order], is_signal[order]
        accepted = apply_dead_time(t_all, params.dead_time_ps)
        logger.debug(f"Detector {det}: {len(t_all)} events, {len(accepted)} after dead time")
        parts.append(TagStream(np.full(len(accepted), det, dtype=int), t_all[accepted],
                               is_signal[accepted]))

    merged = TagStream(np.concatenate([p.detectors for p in parts]),
                       np.concatenate([p.times_ps for p in parts]),
                       np.concatenate([p.signal for p in parts]))
    return merged.select(np.argsort(merged.times_ps, kind="stable"))


def spad_detect(arrivals: Sequence[Tuple[float, int, float]], params: SpadParams,
                duration_s: float, seed: int, n_detectors: Optional[int] = None) -> TagStream:
    arrivals = list(arrivals)
    times = np.array([a[0] for a in arrivals], dtype=float)
    dets = np.array([a[1] for a in arrivals], dtype=int)
    probs = np.array([a[2] for a in arrivals], dtype=float)
    return detect_streams(times, dets, probs, params, duration_s, seed, n_detectors)


def _phase_offset(times_ps: np.ndarray, period_ps: float, center_ps: float) -> np.ndarray:
    return np.mod(times_ps - center_ps + period_ps / 2.0, period_ps) - period_ps / 2.0


def recovered_center(tags: TagStream, period_ps: float) -> float:
    """Circular mean of the signal arrival phase."""
    times = tags.times_ps[tags.signal] if tags.signal.any() else tags.times_ps
    if len(times) == 0:
        return period_ps / 2.0
    angle = 2.0 * math.pi * np.mod(times, period_ps) / period_ps
    mean = math.atan2(np.sin(angle).mean(), np.cos(angle).mean())
    return (mean % (2.0 * math.pi)) * period_ps / (2.0 * math.pi)


def temporal_filter(tags: TagStream, period_ps: float, fraction: float,
                    center_ps: Optional[float] = None) -> TagStream:
    if not 0.0 < fraction <= 1.0:
        raise InvalidArgumentError(f"filter fraction must lie in (0, 1], got {fraction}")
    if fraction >= 1.0:
        return tags
    if center_ps is None:
        center_ps = recovered_center(tags, period_ps)
    offset = _phase_offset(tags.times_ps, period_ps, center_ps)
    return tags.select(np.abs(offset) <= fraction * period_ps / 2.0)


def _mean_cdf_integral(z_hi: np.ndarray, z_lo: np.ndarray) -> np.ndarray:
    #antiderivative of the normal cdf: z*Phi(z) + phi(z)
    g = lambda z: z * norm.cdf(z) + norm.pdf(z)
    return g(z_hi) - g(z_lo)


def window_weights(samples_per_symbol: int, fraction: float, jitter_ps: float,
                   period_ps: float, shift: int = 0) -> np.ndarray:
    """Probability that a photon emitted uniformly inside intra-symbol sample j is tagged
    inside the temporal window of symbol `shift` (0 = its own) after Gaussian jitter."""
    sps = int(samples_per_symbol)
    center = period_ps / 2.0 + shift * period_ps
    lo, hi = center - fraction * period_ps / 2.0, center + fraction * period_ps / 2.0
    a = np.arange(sps) * period_ps / sps
    b = a + period_ps / sps
    if jitter_ps <= 0:
        overlap = np.clip(np.minimum(b, hi) - np.maximum(a, lo), 0.0, None)
        return overlap / (b - a)
    s = jitter_ps
    inside = _mean_cdf_integral((hi - a) / s, (hi - b) / s) - _mean_cdf_integral((lo - a) / s, (lo - b) / s)
    return np.clip(s * inside / (b - a), 0.0, 1.0)


def spill_weights(samples_per_symbol: int, fraction: float, jitter_ps: float,
                  period_ps: float) -> np.ndarray:
    return sum(window_weights(samples_per_symbol, fraction, jitter_ps, period_ps, k) for k in (-1, 1))


@dataclass
class LinkSummary:
    mu: float
    transmittance: float
    dop: float
    alignment_error_rad: float
    symbol_rate_hz: float
    spad: SpadParams
    filter_fraction: float = 0.5
    mode: MeasurementMode = MeasurementMode.TWO_DETECTOR
    session_basis: Optional[Basis] = None
    profile: Optional[np.ndarray] = None  # (4, histories, sps, 3) Stokes at Bob

    def stokes_profile(self) -> np.ndarray:
        if self.profile is not None:
            return np.asarray(self.profile, dtype=float)
        return (self.dop * stokes_of_phase(PHASES))[:, None, None, :]

    @property
    def mean_photons(self) -> float:
        return self.mu * self.transmittance


@dataclass
class LinkRates:
    sifted_rate_cps: float
    summed_rate_cps: float
    qber: float
    session_sifted_cps: List[float]
    session_errors_cps: List[float]
    detector_click_cps: List[float]
    detector_dark_cps: List[float]


def session_detectors(mode: MeasurementMode,
                      basis: Optional[Basis]) -> List[Tuple[Basis, int, float]]:
    """(basis, bob bit, share of light) per detector of one session."""
    if mode is MeasurementMode.FOUR_DETECTOR:
        return [(b, bit, 0.5) for b in (Basis.DIAGONAL, Basis.CIRCULAR) for bit in (0, 1)]
    return [(basis, 0, 1.0), (basis, 1, 1.0)]


def session_plan(mode: MeasurementMode, session_basis: Optional[Basis]) -> List[Optional[Basis]]:
    if mode is MeasurementMode.FOUR_DETECTOR:
        return [None]
    if session_basis is not None:
        return [session_basis]
    return [Basis.DIAGONAL, Basis.CIRCULAR]


def analytic_rates(link: LinkSummary) -> LinkRates:
    """Expected sifted rate and QBER of the link in closed form."""
    if link.mu < 0 or link.transmittance < 0 or link.symbol_rate_hz <= 0:
        raise InvalidArgumentError("mu, transmittance and symbol rate must be valid")
    profile = link.stokes_profile()
    sps = profile.shape[2]
    period_ps = 1e12 / link.symbol_rate_hz
    own = window_weights(sps, link.filter_fraction, link.spad.jitter_ps, period_ps)
    spill = spill_weights(sps, link.filter_fraction, link.spad.jitter_ps, period_ps)
    rate = link.symbol_rate_hz
    n_eta = link.mean_photons * link.spad.efficiency
    dark = link.spad.dark_rate_cps
    tau = link.spad.dead_time_s

    sessions = session_plan(link.mode, link.session_basis)
    n_det = len(session_detectors(link.mode, sessions[0]))
    clicks = np.zeros(n_det)
    darks = np.zeros(n_det)
    sifted, errors = [], []
    for basis in sessions:
        s_sift = s_err = 0.0
        for d, (det_basis, bit, share) in enumerate(session_detectors(link.mode, basis)):
            axis = analyzer_axis(det_basis, link.alignment_error_rad) * (1.0 if bit == 0 else -1.0)
            p = share * (1.0 + profile @ axis) / 2.0
            p_bar = p.mean(axis=-1)
            click = -np.expm1(-n_eta * p_bar)
            with np.errstate(divide="ignore", invalid="ignore"):
                g_own = np.where(p_bar > 0, (p * own).mean(axis=-1) / p_bar, 0.0)
                g_spill = np.where(p_bar > 0, (p * spill).mean(axis=-1) / p_bar, 0.0)
            incident = rate * click.mean() + dark
            kappa = 1.0 / (1.0 + incident * tau)
            kept_by_label = rate / 4.0 * (click * g_own).mean(axis=1) * kappa
            noise = rate * (click * g_spill).mean() * kappa + dark * link.filter_fraction * kappa
            matched = LABEL_BASIS == det_basis.code
            s_sift += kept_by_label[matched].sum() + noise / 2.0
            s_err += kept_by_label[matched & (LABEL_BIT != bit)].sum() + noise / 4.0
            clicks[d] += incident * kappa
            darks[d] += dark * kappa
        sifted.append(float(s_sift))
        errors.append(float(s_err))

    total = sum(sifted)
    if not total > 0:
        raise UndefinedEstimateError("link produces no sifted events")
    return LinkRates(
        sifted_rate_cps=total / len(sessions),
        summed_rate_cps=total,
        qber=min(max(sum(errors) / total, 0.0), 1.0),
        session_sifted_cps=sifted,
        session_errors_cps=errors,
        detector_click_cps=clicks.tolist(),
        detector_dark_cps=darks.tolist(),
    )
