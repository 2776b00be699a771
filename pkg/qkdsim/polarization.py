#Stokes/Jones polarization algebra
#
#convention: s1 = (|ex|^2 - |ey|^2)/P, s2 = 2 Re(ex* ey)/P, s3 = 2 Im(ex* ey)/P
#s2 = +1 is D, s3 = +1 is R (right circular), rotations follow the right-hand rule

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Tuple

import numpy as np
from scipy.spatial.distance import pdist
from scipy.spatial.transform import Rotation

from .errors import InvalidArgumentError
from .models import Basis

CONSTRUCTION_TOL = 1e-9
IDENTITY_TOL = 1e-12


@dataclass(frozen=True)
class JonesVector:
    ex: complex
    ey: complex

    def __post_init__(self):
        if self.power <= 0.0:
            raise InvalidArgumentError("Jones vector must be non-zero")

    @property
    def power(self) -> float:
        return abs(self.ex) ** 2 + abs(self.ey) ** 2

    def normalized(self) -> "JonesVector":
        norm = math.sqrt(self.power)
        return JonesVector(self.ex / norm, self.ey / norm)


@dataclass(frozen=True)
class StokesVector:
    s1: float
    s2: float
    s3: float

    def __post_init__(self):
        if self.length > 1.0 + CONSTRUCTION_TOL:
            raise InvalidArgumentError(f"Stokes vector longer than 1: {self.length}")

    @property
    def length(self) -> float:
        return math.sqrt(self.s1 ** 2 + self.s2 ** 2 + self.s3 ** 2)

    def as_array(self) -> np.ndarray:
        return np.array([self.s1, self.s2, self.s3], dtype=float)

    @classmethod
    def from_array(cls, values) -> "StokesVector":
        v = np.asarray(values, dtype=float)
        return cls(float(v[0]), float(v[1]), float(v[2]))

    def dot(self, other: "StokesVector") -> float:
        return self.s1 * other.s1 + self.s2 * other.s2 + self.s3 * other.s3

    def __neg__(self) -> "StokesVector":
        return StokesVector(-self.s1, -self.s2, -self.s3)


@dataclass(frozen=True)
class AnalyzerAxis:
    axis: StokesVector
    basis: Basis

    def __post_init__(self):
        if abs(self.axis.length - 1.0) > CONSTRUCTION_TOL:
            raise InvalidArgumentError("analyzer axis must be a unit vector")

    @classmethod
    def for_basis(cls, basis: Basis, sign: int = 1) -> "AnalyzerAxis":
        if basis is Basis.DIAGONAL:
            return cls(StokesVector(0.0, float(sign), 0.0), basis)
        return cls(StokesVector(0.0, 0.0, float(sign)), basis)

    def __neg__(self) -> "AnalyzerAxis":
        return AnalyzerAxis(-self.axis, self.basis)


@dataclass(frozen=True)
class PolarizationState:
    stokes: StokesVector
    jones: Optional[JonesVector] = None

    @property
    def dop(self) -> float:
        return dop(self.stokes)

    @classmethod
    def from_jones(cls, j: JonesVector) -> "PolarizationState":
        return cls(jones_to_stokes(j), j)


def jones_to_stokes(j: JonesVector) -> StokesVector:
    p = j.power
    cross = np.conj(j.ex) * j.ey
    s1 = (abs(j.ex) ** 2 - abs(j.ey) ** 2) / p
    s2 = 2.0 * cross.real / p
    s3 = 2.0 * cross.imag / p
    #rounding can push a pure state a hair past unit length
    length = math.sqrt(s1 * s1 + s2 * s2 + s3 * s3)
    if length > 1.0:
        s1, s2, s3 = s1 / length, s2 / length, s3 / length
    return StokesVector(float(s1), float(s2), float(s3))


def dop(s: StokesVector) -> float:
    return min(max(s.length, 0.0), 1.0)


def ensemble_average(states: Iterable[Tuple[float, StokesVector]]) -> StokesVector:
    pairs = list(states)
    if not pairs:
        raise InvalidArgumentError("ensemble needs at least one member")
    weights = np.array([w for w, _ in pairs], dtype=float)
    vectors = np.array([s.as_array() for _, s in pairs])
    return StokesVector.from_array(average_vectors(weights, vectors))


def average_vectors(weights: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """Weighted mean of an (n, 3) array of Stokes vectors."""
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0):
        raise InvalidArgumentError("ensemble weights must be non-negative")
    total = weights.sum()
    if not total > 0:
        raise InvalidArgumentError("ensemble needs at least one positive weight")
    return weights @ np.asarray(vectors, dtype=float) / total


def projection_probability(s: StokesVector, a: AnalyzerAxis) -> float:
    return (1.0 + s.dot(a.axis)) / 2.0


def rotation(axis, angles) -> Rotation:
    """Right-handed rotation(s) of the Poincare sphere about a unit axis."""
    axis = np.asarray(axis, dtype=float)
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    return Rotation.from_rotvec(np.outer(angles, axis))


def rotate(s: StokesVector, axis, angle: float) -> StokesVector:
    out = rotation(axis, angle).apply(s.as_array())[0]
    return StokesVector.from_array(out)


def rotate_about_s1(s: StokesVector, angle: float) -> StokesVector:
    return rotate(s, (1.0, 0.0, 0.0), angle)


def _unit(v: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.where(norms > 0, norms, 1.0)


def angular_distance(a, b) -> float:
    """Great-circle distance between the directions of two Stokes vectors."""
    u = _unit(np.asarray(a, dtype=float))
    v = _unit(np.asarray(b, dtype=float))
    chord = float(np.linalg.norm(u - v))
    return 2.0 * math.asin(min(chord / 2.0, 1.0))


def max_pairwise_distance(vectors: np.ndarray) -> float:
    v = np.asarray(vectors, dtype=float)
    if len(v) < 2:
        return 0.0
    chord = pdist(_unit(v)).max()
    return 2.0 * math.asin(min(chord / 2.0, 1.0))
