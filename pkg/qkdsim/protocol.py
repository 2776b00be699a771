#BB84 bookkeeping: Alice's record, click pairing, sifting, QBER

import logging
import math
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .encoder import Bb84Symbol, LABELS, PHASES
from .errors import InvalidArgumentError, UndefinedEstimateError
from .models import Basis, QBER_LIMIT
from .receiver import TagStream

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AliceRecord:
    """Alice's symbols; symbol k has index k."""
    bits: np.ndarray
    bases: np.ndarray  # Basis.code per symbol
    symbol_rate_hz: float = 1e9
    session: int = 0

    def __post_init__(self):
        if len(self.bits) == 0 or len(self.bits) != len(self.bases):
            raise InvalidArgumentError("record needs equal, non-zero numbers of bits and bases")

    def __len__(self) -> int:
        return len(self.bits)

    @property
    def labels(self) -> np.ndarray:
        return 2 * self.bases + self.bits

    @property
    def duration_s(self) -> float:
        return len(self) / self.symbol_rate_hz

    def __iter__(self) -> Iterator[Bb84Symbol]:
        for bit, label in zip(self.bits, self.labels):
            yield Bb84Symbol(int(bit), Basis.from_code(label // 2), LABELS[label], float(PHASES[label]))


@dataclass(frozen=True)
class ClickRecord:
    symbol_index: np.ndarray
    basis: np.ndarray  # measured Basis.code
    bob_bit: np.ndarray
    double_clicks: int = 0

    def __len__(self) -> int:
        return len(self.symbol_index)

    @classmethod
    def from_tuples(cls, clicks: Sequence[Tuple[int, Basis, int]]) -> "ClickRecord":
        clicks = list(clicks)
        return cls(np.array([c[0] for c in clicks], dtype=int),
                   np.array([Basis(c[1]).code for c in clicks], dtype=int),
                   np.array([c[2] for c in clicks], dtype=int))


@dataclass(frozen=True)
class SiftedKey:
    indices: np.ndarray
    alice_bits: np.ndarray
    bob_bits: np.ndarray
    duration_s: float
    bases: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def mismatches(self) -> int:
        return int(np.count_nonzero(self.alice_bits != self.bob_bits))

    def to_clicks(self) -> ClickRecord:
        bases = self.bases if self.bases is not None else np.zeros(len(self), dtype=int)
        return ClickRecord(self.indices, bases, self.bob_bits)


@dataclass(frozen=True)
class QberEstimate:
    qber: float
    std_error: float
    samples: int
    raw_key_rate_bps: float

    @classmethod
    def from_counts(cls, mismatches: int, samples: int, duration_s: float) -> "QberEstimate":
        if samples < 1:
            raise UndefinedEstimateError("QBER needs at least one sifted bit")
        q = mismatches / samples
        rate = samples / duration_s if duration_s > 0 else 0.0
        return cls(q, math.sqrt(q * (1.0 - q) / samples), int(samples), rate)


def generate_alice(n: int, seed: int, symbol_rate_hz: float = 1e9, session: int = 0) -> AliceRecord:
    if n < 1:
        raise InvalidArgumentError("need at least one symbol")
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, n)
    bases = rng.integers(0, 2, n)
    return AliceRecord(bits, bases, symbol_rate_hz, session)


def pair_clicks(tags: TagStream, period_ps: float, n_symbols: int,
                detector_map: Sequence[Tuple[Basis, int]]) -> ClickRecord:
    """Assign tags to symbols by floor(t / T); symbols clicked by two detectors are dropped."""
    idx = np.floor(tags.times_ps / period_ps).astype(np.int64)
    inside = (idx >= 0) & (idx < n_symbols)
    idx, det = idx[inside], tags.detectors[inside]
    if len(idx) == 0:
        return ClickRecord(np.zeros(0, dtype=int), np.zeros(0, dtype=int), np.zeros(0, dtype=int))
    order = np.lexsort((det, idx))
    idx, det = idx[order], det[order]
    symbols, start, counts = np.unique(idx, return_index=True, return_counts=True)
    first, last = det[start], det[start + counts - 1]
    single = first == last
    double = int(np.count_nonzero(~single))
    if double:
        logger.debug(f"Discarded {double} double-click symbols")
    bases = np.array([Basis(b).code for b, _ in detector_map], dtype=int)
    bits = np.array([bit for _, bit in detector_map], dtype=int)
    chosen = first[single]
    return ClickRecord(symbols[single], bases[chosen], bits[chosen], double)


def sift(alice: AliceRecord, clicks: Union[ClickRecord, Sequence[Tuple[int, Basis, int]]]) -> SiftedKey:
    if not isinstance(clicks, ClickRecord):
        clicks = ClickRecord.from_tuples(clicks)
    idx = clicks.symbol_index
    if len(idx) and (idx.min() < 0 or idx.max() >= len(alice)):
        raise InvalidArgumentError("click index outside the symbol range")
    if len(np.unique(idx)) != len(idx):
        raise InvalidArgumentError("at most one click per symbol")
    order = np.argsort(idx, kind="stable")
    idx, basis, bob = idx[order], clicks.basis[order], clicks.bob_bit[order]
    matched = alice.bases[idx] == basis
    return SiftedKey(idx[matched], alice.bits[idx[matched]], bob[matched], alice.duration_s,
                     basis[matched])


def qber(key: SiftedKey) -> QberEstimate:
    return QberEstimate.from_counts(key.mismatches, len(key), key.duration_s)


def combine(keys: List[SiftedKey]) -> QberEstimate:
    """Pooled estimate over sessions; the rate is the mean session rate."""
    samples = sum(len(k) for k in keys)
    mismatches = sum(k.mismatches for k in keys)
    estimate = QberEstimate.from_counts(mismatches, samples, 1.0)
    rate = float(np.mean([len(k) / k.duration_s for k in keys]))
    return QberEstimate(estimate.qber, estimate.std_error, samples, rate)


def secret_key_feasible(estimate: QberEstimate, threshold: float = QBER_LIMIT) -> bool:
    return estimate.qber <= threshold
