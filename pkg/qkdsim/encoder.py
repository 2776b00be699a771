#Alice's state preparation: symbols, drive waveform and launched states

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.signal import lfilter

from .errors import InvalidArgumentError
from .models import Basis, EncoderSpec, StateLabel
from .polarization import JonesVector, PolarizationState

logger = logging.getLogger(__name__)

#label index = 2 * basis code + bit, in StateLabel order (D, A, R, L)
LABELS = list(StateLabel)
PHASES = np.array([0.0, math.pi, math.pi / 2.0, 3.0 * math.pi / 2.0])
LABEL_BASIS = np.array([0, 0, 1, 1])
LABEL_BIT = np.array([0, 1, 0, 1])


@dataclass(frozen=True)
class Bb84Symbol:
    bit: int
    basis: Basis
    label: StateLabel
    phase: float

    @property
    def index(self) -> int:
        return LABELS.index(self.label)


@dataclass(frozen=True)
class Waveform:
    """Sampled modulator phase; sample j of symbol k sits at t = (k + (j + 0.5)/sps) / rate."""
    phases: np.ndarray
    samples_per_symbol: int
    symbol_rate_hz: float

    @property
    def n_symbols(self) -> int:
        return len(self.phases) // self.samples_per_symbol

    def per_symbol(self) -> np.ndarray:
        return self.phases.reshape(self.n_symbols, self.samples_per_symbol)


def label_index(bit: int, basis: Basis) -> int:
    return 2 * basis.code + int(bit)


def encode_symbol(bit: int, basis: Basis) -> Bb84Symbol:
    if bit not in (0, 1):
        raise InvalidArgumentError(f"bit must be 0 or 1, got {bit}")
    basis = Basis(basis)
    idx = label_index(bit, basis)
    return Bb84Symbol(int(bit), basis, LABELS[idx], float(PHASES[idx]))


def stokes_of_phase(phases, balance_error: float = 0.0) -> np.ndarray:
    """Vectorized Stokes vectors of the launched state, shape phases.shape + (3,)."""
    phases = np.asarray(phases, dtype=float)
    amplitude = math.sqrt(max(1.0 - balance_error ** 2, 0.0))
    out = np.empty(phases.shape + (3,))
    out[..., 0] = balance_error
    out[..., 1] = amplitude * np.cos(phases)
    out[..., 2] = amplitude * np.sin(phases)
    return out


def phase_to_state(phi: float, balance_error: float = 0.0) -> PolarizationState:
    if not -1.0 <= balance_error <= 1.0:
        raise InvalidArgumentError(f"balance error must lie in [-1, 1], got {balance_error}")
    ex = math.sqrt(0.5 + balance_error / 2.0)
    ey = math.sqrt(0.5 - balance_error / 2.0) * complex(math.cos(phi), math.sin(phi))
    return PolarizationState.from_jones(JonesVector(complex(ex), ey))


def launched_state(symbol: Bb84Symbol, spec: EncoderSpec) -> PolarizationState:
    return phase_to_state(symbol.phase, spec.balance_error)


def _smoothing(spec: EncoderSpec) -> float:
    dt = 1.0 / (spec.symbol_rate_hz * spec.samples_per_symbol)
    if math.isinf(spec.bandwidth_hz):
        return 1.0
    return 1.0 - math.exp(-2.0 * math.pi * spec.bandwidth_hz * dt)


def rise_time_s(spec: EncoderSpec) -> float:
    """10-90 % rise time of the first-order EO response."""
    return math.log(9.0) / (2.0 * math.pi * spec.bandwidth_hz)


def filter_levels(levels: np.ndarray, spec: EncoderSpec) -> np.ndarray:
    """Staircase of per-symbol drive levels through the single-pole EO response.

    Works along the last axis. The filter starts settled at the first level.
    """
    levels = np.asarray(levels, dtype=float)
    sps = int(spec.samples_per_symbol)
    staircase = np.repeat(levels, sps, axis=-1)
    alpha = _smoothing(spec)
    if alpha >= 1.0:
        return staircase
    first = staircase[..., :1]
    #filter deviations from the first level so a settled start is exact
    response = lfilter([alpha], [1.0, -(1.0 - alpha)], staircase - first, axis=-1)
    return first + response


def label_waveform(labels: np.ndarray, spec: EncoderSpec) -> Waveform:
    labels = np.asarray(labels, dtype=int)
    if labels.size == 0:
        raise InvalidArgumentError("need at least one symbol")
    phases = filter_levels(PHASES[labels], spec)
    return Waveform(phases, int(spec.samples_per_symbol), spec.symbol_rate_hz)


def drive_waveform(symbols: Sequence[Bb84Symbol], spec: EncoderSpec) -> Waveform:
    if not symbols:
        raise InvalidArgumentError("need at least one symbol")
    spec.validate()
    return label_waveform(np.array([s.index for s in symbols]), spec)


def transition_phases(spec: EncoderSpec, history: int = 2) -> np.ndarray:
    """Current-symbol phase samples for every predecessor history.

    Returns shape (4, 4**history, samples_per_symbol); all histories are equally likely
    for a uniform source.
    """
    if history < 0:
        raise InvalidArgumentError("history must be >= 0")
    histories = np.array(list(itertools.product(range(4), repeat=history)), dtype=int)
    histories = histories.reshape(4 ** history, history)
    sps = int(spec.samples_per_symbol)
    out = np.empty((4, len(histories), sps))
    for label in range(4):
        seq = np.hstack([histories, np.full((len(histories), 1), label)])
        out[label] = filter_levels(PHASES[seq], spec)[:, -sps:]
    return out
