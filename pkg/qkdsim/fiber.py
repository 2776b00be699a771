#birefringent waveplate cascade: PMD, depolarization, drift and loss

import logging
import math
import warnings
from dataclasses import dataclass, replace
from typing import List, Tuple

import numpy as np
from scipy import constants
from scipy.spatial.transform import Rotation

from .errors import InvalidArgumentError, PhysicsError
from .models import FiberSpec
from .polarization import PolarizationState, StokesVector, rotation

logger = logging.getLogger(__name__)

DEPLOYED_DRIFT_FACTOR = 10.0
SECONDS_PER_HOUR = 3600.0
UNIT_TOLERANCE = 1e-9


@dataclass(frozen=True)
class FiberRealization:
    """One seeded draw of the segment cascade.

    Segment i rotates the Stokes vector about axes[i] by
    2*pi*c*dgd_ps[i]*(1/lambda - 1/lambda_c) + static_phase[i].
    """
    dgd_ps: np.ndarray
    axes: np.ndarray
    static_phase: np.ndarray
    seed: int = 0
    epoch: int = 0

    def __post_init__(self):
        dgd = np.asarray(self.dgd_ps, dtype=float).reshape(-1)
        axes = np.asarray(self.axes, dtype=float).reshape(-1, 3)
        phase = np.asarray(self.static_phase, dtype=float).reshape(-1)
        if not len(dgd) == len(axes) == len(phase) or len(dgd) == 0:
            raise InvalidArgumentError("segments need matching dgd, axis and phase entries")
        if np.any(dgd < 0):
            raise InvalidArgumentError("segment DGD must be >= 0")
        norms = np.linalg.norm(axes, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise InvalidArgumentError("segment axes must be unit vectors")
        for arr in (dgd, axes, phase):
            arr.setflags(write=False)
        object.__setattr__(self, "dgd_ps", dgd)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "static_phase", phase)

    @property
    def n_segments(self) -> int:
        return len(self.dgd_ps)

    @property
    def segments(self) -> List[Tuple[float, StokesVector, float]]:
        return [(float(d), StokesVector.from_array(a), float(p))
                for d, a, p in zip(self.dgd_ps, self.axes, self.static_phase)]

    @property
    def is_identity(self) -> bool:
        return not np.any(self.dgd_ps) and not np.any(self.static_phase)

    @property
    def summed_dgd_ps(self) -> float:
        return float(self.dgd_ps.sum())

    @property
    def total_dgd_ps(self) -> float:
        """Magnitude of the concatenated PMD vector at the band center."""
        omega = np.zeros(3)
        for dgd, axis, phase in zip(self.dgd_ps, self.axes, self.static_phase):
            omega = rotation(axis, phase).apply(omega)[0] + dgd * axis
        return float(np.linalg.norm(omega))

    @classmethod
    def from_segments(cls, segments, seed: int = 0) -> "FiberRealization":
        segments = list(segments)
        if not segments:
            raise InvalidArgumentError("need at least one segment")
        dgd = [float(s[0]) for s in segments]
        axes = [s[1].as_array() if isinstance(s[1], StokesVector) else s[1] for s in segments]
        phase = [float(s[2]) for s in segments]
        return cls(np.array(dgd), np.array(axes, dtype=float), np.array(phase), seed)


def segment_count(spec: FiberSpec) -> int:
    return max(1, math.ceil(spec.length_km / spec.correlation_length_km))


def birefringence_ps_per_km(spec: FiberSpec) -> float:
    """Delta beta_1 of a cascade whose mean DGD grows as pmd * sqrt(L) beyond h."""
    return spec.pmd_ps_per_sqrt_km * math.sqrt(3.0 * math.pi / (8.0 * spec.correlation_length_km))


def _random_axes(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def build_fiber(spec: FiberSpec, seed: int) -> FiberRealization:
    spec.validate()
    if spec.length_km == 0:
        return FiberRealization(np.zeros(1), np.array([[1.0, 0.0, 0.0]]), np.zeros(1), seed)
    n = segment_count(spec)
    rng = np.random.default_rng(seed)
    #draw order is fixed so realizations vary smoothly with the PMD coefficient
    axes = _random_axes(rng, n)
    phase = rng.uniform(0.0, 2.0 * math.pi, n)
    dgd = np.full(n, birefringence_ps_per_km(spec) * spec.length_km / n)
    logger.debug(f"Built fiber: {spec.length_km} km, {n} segments, sum DGD {dgd.sum():.4g} ps")
    return FiberRealization(dgd, axes, phase, seed)


def retardation(realization: FiberRealization, wavelengths_nm, center_nm: float) -> np.ndarray:
    """Segment angles, shape (len(wavelengths), n_segments)."""
    wl = np.atleast_1d(np.asarray(wavelengths_nm, dtype=float))
    offset_hz = constants.c / (wl * 1e-9) - constants.c / (center_nm * 1e-9)
    return (2.0 * math.pi * np.outer(offset_hz, realization.dgd_ps * 1e-12)
            + realization.static_phase)


def slice_rotations(realization: FiberRealization, wavelengths_nm, center_nm: float) -> Rotation:
    angles = retardation(realization, wavelengths_nm, center_nm)
    total = Rotation.identity(len(angles))
    for i, axis in enumerate(realization.axes):
        total = rotation(axis, angles[:, i]) * total
    return total


def propagate(state: StokesVector, realization: FiberRealization, wavelength_nm: float,
              center_nm: float) -> StokesVector:
    if realization.is_identity:
        return state
    out = slice_rotations(realization, [wavelength_nm], center_nm).apply(state.as_array())
    return StokesVector.from_array(out[0])


def channel_matrix(nodes_nm, weights, realization: FiberRealization, center_nm: float) -> np.ndarray:
    """Spectrally averaged 3x3 Stokes transfer matrix, so that output = M @ input."""
    weights = np.asarray(weights, dtype=float)
    if realization.is_identity:
        return np.eye(3)
    matrices = slice_rotations(realization, nodes_nm, center_nm).as_matrix()
    return np.einsum("k,kij->ij", weights / weights.sum(), matrices)


def channel_output(state: PolarizationState, slices, realization: FiberRealization,
                   center_nm: float) -> PolarizationState:
    slices = list(slices)
    nodes = np.array([n for n, _ in slices])
    weights = np.array([w for _, w in slices])
    m = channel_matrix(nodes, weights, realization, center_nm)
    out = m @ state.stokes.as_array()
    #averaging can leave a rounding excess above unit length
    norm = np.linalg.norm(out)
    if norm > 1.0 + UNIT_TOLERANCE:
        raise PhysicsError(f"averaged Stokes vector has length {norm:.12f} > 1")
    if norm > 1.0:
        out = out / norm
    return PolarizationState(StokesVector.from_array(out))


def align_controller(matrix: np.ndarray) -> Rotation:
    """Rotation taking the averaged D and R outputs onto the analyzer axes."""
    matrix = np.asarray(matrix, dtype=float)
    outputs = np.array([matrix[:, 1], matrix[:, 2]])
    if np.all(np.linalg.norm(outputs, axis=1) < 1e-12):
        return Rotation.identity()
    targets = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        controller, _ = Rotation.align_vectors(targets, outputs)
    return controller


def aligned_matrix(matrix: np.ndarray) -> np.ndarray:
    return align_controller(matrix).as_matrix() @ np.asarray(matrix, dtype=float)


def drift_rate(spec: FiberSpec) -> float:
    factor = DEPLOYED_DRIFT_FACTOR if spec.deployed else 1.0
    return spec.drift_rad_per_sqrt_h * factor


def drift_step(realization: FiberRealization, dt_s: float, spec: FiberSpec) -> FiberRealization:
    """Random-walk every segment axis by an RMS angle rate * sqrt(hours)."""
    if dt_s < 0:
        raise InvalidArgumentError("drift interval must be >= 0")
    rate = drift_rate(spec)
    if dt_s == 0 or rate == 0:
        return realization
    rng = np.random.default_rng(np.random.SeedSequence([realization.seed, realization.epoch]))
    n = realization.n_segments
    axes = realization.axes
    #random direction perpendicular to each axis
    g = rng.standard_normal((n, 3))
    perp = g - np.sum(g * axes, axis=1, keepdims=True) * axes
    perp /= np.linalg.norm(perp, axis=1, keepdims=True)
    angles = rng.normal(0.0, rate * math.sqrt(dt_s / SECONDS_PER_HOUR), n)
    moved = Rotation.from_rotvec(perp * angles[:, None]).apply(axes)
    moved /= np.linalg.norm(moved, axis=1, keepdims=True)
    return replace(realization, axes=moved, epoch=realization.epoch + 1)


def transmittance(spec: FiberSpec, ob_db: float = 0.0) -> float:
    loss_db = spec.attenuation_db_per_km * spec.length_km + ob_db
    return 10.0 ** (-loss_db / 10.0)
