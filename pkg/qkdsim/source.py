#emitter spectra and photon budget

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
from scipy import constants
from scipy.integrate import trapezoid

from .errors import EmptySpectrumError, InvalidArgumentError
from .models import EmitterSpec, FilterShape, SpectrumShape

logger = logging.getLogger(__name__)

GRID_POINTS = 4001
GAUSSIAN_SPAN_FWHM = 3.0  # grid half-width in units of FWHM
LINE_WIDTH_FLOOR_NM = 1e-3  # narrower emitters are treated as a single line
FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


@dataclass(frozen=True)
class SpectralDensity:
    """Normalized spectral shape on a uniform wavelength grid.

    A single-sample spectrum is a line: unit step, density 1.
    """
    wavelengths_nm: np.ndarray
    density: np.ndarray
    total_power_w: float
    shape: SpectrumShape

    def __post_init__(self):
        wl = np.asarray(self.wavelengths_nm, dtype=float)
        d = np.asarray(self.density, dtype=float)
        if wl.ndim != 1 or wl.shape != d.shape or len(wl) == 0:
            raise InvalidArgumentError("wavelengths and densities must be equal-length 1-D arrays")
        if len(wl) > 1 and np.any(np.diff(wl) <= 0):
            raise InvalidArgumentError("wavelengths must be strictly increasing")
        if np.any(d < 0):
            raise InvalidArgumentError("densities must be non-negative")
        wl.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "wavelengths_nm", wl)
        object.__setattr__(self, "density", d)

    @property
    def step_nm(self) -> float:
        if len(self.wavelengths_nm) == 1:
            return 1.0
        return float(self.wavelengths_nm[1] - self.wavelengths_nm[0])

    @property
    def is_line(self) -> bool:
        return len(self.wavelengths_nm) == 1

    @property
    def centroid_nm(self) -> float:
        w = self.density * self.step_nm
        return float(w @ self.wavelengths_nm / w.sum())

    @property
    def fwhm_nm(self) -> float:
        if self.is_line:
            return 0.0
        wl, d = self.wavelengths_nm, self.density
        half = d.max() / 2.0
        above = np.nonzero(d >= half)[0]
        lo, hi = above[0], above[-1]
        #interpolate the half-maximum crossings
        left = wl[lo] if lo == 0 else np.interp(half, [d[lo - 1], d[lo]], [wl[lo - 1], wl[lo]])
        right = wl[hi] if hi == len(d) - 1 else np.interp(half, [d[hi + 1], d[hi]], [wl[hi + 1], wl[hi]])
        return float(right - left)

    def normalized(self) -> "SpectralDensity":
        return _normalized(self.wavelengths_nm, self.density, self.total_power_w, self.shape)


def _normalized(wl: np.ndarray, density: np.ndarray, power_w: float,
                shape: SpectrumShape) -> SpectralDensity:
    step = 1.0 if len(wl) == 1 else wl[1] - wl[0]
    area = density.sum() * step
    if not area > 0:
        raise EmptySpectrumError("spectrum carries no power")
    return SpectralDensity(wl, density / area, power_w, shape)


def line_spectrum(center_nm: float, power_w: float = 0.0) -> SpectralDensity:
    return SpectralDensity(np.array([float(center_nm)]), np.array([1.0]), power_w,
                           SpectrumShape.GAUSSIAN)


def gaussian_spectrum(center_nm: float, fwhm_nm: float, power_w: float = 0.0,
                      points: int = GRID_POINTS) -> SpectralDensity:
    if not fwhm_nm > 0:
        raise InvalidArgumentError(f"bandwidth must be positive, got {fwhm_nm}")
    if fwhm_nm < LINE_WIDTH_FLOOR_NM:
        return line_spectrum(center_nm, power_w)
    sigma = fwhm_nm * FWHM_TO_SIGMA
    wl = np.linspace(center_nm - GAUSSIAN_SPAN_FWHM * fwhm_nm,
                     center_nm + GAUSSIAN_SPAN_FWHM * fwhm_nm, points)
    density = np.exp(-0.5 * ((wl - center_nm) / sigma) ** 2)
    return _normalized(wl, density, power_w, SpectrumShape.GAUSSIAN)


def rectangular_spectrum(center_nm: float, width_nm: float, power_w: float = 0.0,
                         points: int = GRID_POINTS) -> SpectralDensity:
    if not width_nm > 0:
        raise InvalidArgumentError(f"bandwidth must be positive, got {width_nm}")
    wl = np.linspace(center_nm - width_nm / 2.0, center_nm + width_nm / 2.0, points)
    return _normalized(wl, np.ones_like(wl), power_w, SpectrumShape.RECTANGULAR)


def read_spectrum_table(path: Union[str, Path], power_w: float = 0.0,
                        points: int = GRID_POINTS) -> SpectralDensity:
    """Load a two-column (wavelength_nm, relative_density) table, '#' starts a comment."""
    table = np.loadtxt(path, comments="#", ndmin=2)
    if table.shape[1] < 2 or len(table) < 2:
        raise InvalidArgumentError(f"{path}: need at least two rows of two columns")
    order = np.argsort(table[:, 0])
    wl_in, d_in = table[order, 0], np.clip(table[order, 1], 0.0, None)
    #resample onto a uniform grid
    wl = np.linspace(wl_in[0], wl_in[-1], points)
    logger.debug(f"Loaded spectrum table {path}: {len(table)} rows")
    return _normalized(wl, np.interp(wl, wl_in, d_in), power_w, SpectrumShape.TABULATED)


def make_spectrum(spec: EmitterSpec) -> SpectralDensity:
    if not spec.bandwidth_nm > 0:
        raise InvalidArgumentError(f"bandwidth must be positive, got {spec.bandwidth_nm}")
    spec.validate()
    if spec.spectrum_file:
        return read_spectrum_table(spec.spectrum_file, spec.power_w)
    return gaussian_spectrum(spec.center_nm, spec.bandwidth_nm, spec.power_w)


def filter_transmission(wl: np.ndarray, center_nm: float, width_nm: float,
                        shape: FilterShape) -> np.ndarray:
    if shape is FilterShape.GAUSSIAN:
        sigma = width_nm * FWHM_TO_SIGMA
        return np.exp(-0.5 * ((wl - center_nm) / sigma) ** 2)
    return (np.abs(wl - center_nm) <= width_nm / 2.0).astype(float)


def apply_filter(s: SpectralDensity, center_nm: float, width_nm: float,
                 shape: FilterShape = FilterShape.RECTANGULAR,
                 points: int = GRID_POINTS) -> Tuple[SpectralDensity, float]:
    """Filter a spectrum; returns the renormalized spectrum and the captured power fraction."""
    if not width_nm > 0:
        raise InvalidArgumentError(f"filter width must be positive, got {width_nm}")
    wl = s.wavelengths_nm
    half = width_nm / 2.0 if shape is FilterShape.RECTANGULAR else GAUSSIAN_SPAN_FWHM * width_nm
    lo, hi = center_nm - half, center_nm + half

    if s.is_line:
        fraction = float(filter_transmission(wl, center_nm, width_nm, shape)[0])
        if fraction <= 0.0:
            raise EmptySpectrumError(f"line at {wl[0]} nm outside the filter band")
        return SpectralDensity(wl, s.density, s.total_power_w * fraction, s.shape), fraction

    step = s.step_nm
    edge_lo, edge_hi = wl[0] - step / 2.0, wl[-1] + step / 2.0
    if shape is FilterShape.RECTANGULAR and lo <= edge_lo and hi >= edge_hi:
        return s, 1.0
    if hi <= edge_lo or lo >= edge_hi:
        raise EmptySpectrumError(
            f"filter band [{lo:.3f}, {hi:.3f}] nm is disjoint from the spectrum support"
        )

    #resample the overlap so the passband keeps full grid resolution
    start, stop = max(lo, wl[0]), min(hi, wl[-1])
    if not stop > start:
        raise EmptySpectrumError(f"filter band [{lo:.3f}, {hi:.3f}] nm holds no spectral samples")
    grid = np.linspace(start, stop, points)
    passed = np.interp(grid, wl, s.density) * filter_transmission(grid, center_nm, width_nm, shape)
    fraction = float(min(trapezoid(passed, grid), 1.0))
    if not fraction > 0:
        raise EmptySpectrumError("no power inside the filter band")
    shape_tag = SpectrumShape.RECTANGULAR if shape is FilterShape.RECTANGULAR else s.shape
    filtered = _normalized(grid, passed, s.total_power_w * fraction, shape_tag)
    logger.debug(f"Filter {width_nm} nm at {center_nm} nm captured {fraction:.4g}")
    return filtered, fraction


def sample_slices(s: SpectralDensity, m: int = 101) -> List[Tuple[float, float]]:
    nodes, weights = slice_arrays(s, m)
    return list(zip(nodes.tolist(), weights.tolist()))


def slice_arrays(s: SpectralDensity, m: int = 101) -> Tuple[np.ndarray, np.ndarray]:
    """Midpoint quadrature: m equal bins over the support, weight = power in each bin."""
    if m < 1:
        raise InvalidArgumentError("need at least one slice")
    wl = s.wavelengths_nm
    step = s.step_nm
    lo, hi = wl[0] - step / 2.0, wl[-1] + step / 2.0
    if s.is_line:
        lo, hi = wl[0] - 0.5 * LINE_WIDTH_FLOOR_NM, wl[0] + 0.5 * LINE_WIDTH_FLOOR_NM
    edges = np.linspace(lo, hi, m + 1)
    nodes = 0.5 * (edges[:-1] + edges[1:])
    bins = np.clip(np.searchsorted(edges, wl, side="right") - 1, 0, m - 1)
    weights = np.bincount(bins, weights=s.density * step, minlength=m)
    return nodes, weights / weights.sum()


def coherence_time(s: SpectralDensity) -> float:
    """lambda_c^2 / (c * FWHM), in seconds; +inf for a line."""
    fwhm = s.fwhm_nm
    if fwhm <= 0.0:
        return math.inf
    center_m = s.centroid_nm * 1e-9
    return center_m ** 2 / (constants.c * fwhm * 1e-9)


def photon_energy_j(wavelength_nm: float) -> float:
    return constants.h * constants.c / (wavelength_nm * 1e-9)


def photons_per_symbol(power_w: float, symbol_rate_hz: float, wavelength_nm: float) -> float:
    if power_w < 0 or wavelength_nm <= 0:
        raise InvalidArgumentError("power and wavelength must be non-negative")
    if not symbol_rate_hz > 0:
        raise InvalidArgumentError("symbol rate must be positive")
    return power_w / (symbol_rate_hz * photon_energy_j(wavelength_nm))


def power_for_photons(mu: float, symbol_rate_hz: float, wavelength_nm: float) -> float:
    return mu * symbol_rate_hz * photon_energy_j(wavelength_nm)
