#data models

import math
from dataclasses import dataclass, field, fields, replace
from typing import Dict, List, Optional, Any, Union
from enum import Enum

from .errors import ConfigError, InvalidArgumentError

MU_Q = 0.1
QBER_LIMIT = 0.11


class Basis(str, Enum):
    DIAGONAL = "diagonal"
    CIRCULAR = "circular"

    @property
    def code(self) -> int:
        return 0 if self is Basis.DIAGONAL else 1

    @classmethod
    def from_code(cls, code: int) -> "Basis":
        return cls.DIAGONAL if int(code) == 0 else cls.CIRCULAR


class StateLabel(str, Enum):
    D = "D"
    A = "A"
    R = "R"
    L = "L"


class EmitterKind(str, Enum):
    ASE = "ase"
    GE_ON_SI = "ge_on_si"


class FilterShape(str, Enum):
    RECTANGULAR = "rectangular"
    GAUSSIAN = "gaussian"


class SpectrumShape(str, Enum):
    GAUSSIAN = "gaussian"
    RECTANGULAR = "rectangular"
    TABULATED = "tabulated"


class MeasurementMode(str, Enum):
    TWO_DETECTOR = "two_detector_per_session"
    FOUR_DETECTOR = "four_detector_idealized"


class RunMode(str, Enum):
    ANALYTIC = "analytic"
    MONTECARLO = "montecarlo"

    @classmethod
    def parse(cls, text: str) -> "RunMode":
        if text == "mc":
            return cls.MONTECARLO
        return cls(text)


class SweepAxis(str, Enum):
    OB = "ob"
    FIBER_LENGTH = "fiber_length"
    DELTA_LAMBDA = "delta_lambda"

    @classmethod
    def parse(cls, text: str) -> "SweepAxis":
        aliases = {"length": cls.FIBER_LENGTH, "dlambda": cls.DELTA_LAMBDA}
        if text in aliases:
            return aliases[text]
        return cls(text)


class TagOrigin(str, Enum):
    SIGNAL = "signal"
    DARK = "dark"


def _check_keys(cls, data: Dict[str, Any], path: str, allowed: Optional[set] = None) -> None:
    if not isinstance(data, dict):
        raise ConfigError(f"Section '{path}' must be an object")
    known = allowed if allowed is not None else {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"Unknown key '{path}.{unknown[0]}'" if path else f"Unknown key '{unknown[0]}'")


def _build(cls, data: Dict[str, Any], path: str, **converted):
    #construct and validate, turning bad values into config errors
    _check_keys(cls, data, path)
    kwargs = {k: v for k, v in data.items() if k not in converted}
    kwargs.update({k: v for k, v in converted.items() if v is not None})
    try:
        obj = cls(**kwargs)
        obj.validate()
    except (InvalidArgumentError, TypeError, ValueError) as e:
        raise ConfigError(f"Invalid '{path}': {e}") from e
    return obj


@dataclass
class EmitterSpec:
    kind: EmitterKind = EmitterKind.ASE
    center_nm: float = 1577.0
    bandwidth_nm: float = 16.0
    power_dbm: float = 0.0
    forward_current_ma: Optional[float] = None
    spectrum_file: Optional[str] = None

    def validate(self) -> None:
        if not math.isfinite(self.power_dbm):
            raise InvalidArgumentError("emitter power must be finite")
        if not self.bandwidth_nm > 0:
            raise InvalidArgumentError(f"emitter bandwidth must be positive, got {self.bandwidth_nm}")

    @property
    def power_w(self) -> float:
        return 1e-3 * 10 ** (self.power_dbm / 10)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "center_nm": self.center_nm,
            "bandwidth_nm": self.bandwidth_nm,
            "power_dbm": self.power_dbm,
            "forward_current_ma": self.forward_current_ma,
            "spectrum_file": self.spectrum_file
        }

    @classmethod
    def defaults_for(cls, kind: EmitterKind) -> "EmitterSpec":
        if kind is EmitterKind.GE_ON_SI:
            #peak 1581 nm, -70 dBm at 46 mA; width assumed
            return cls(kind=kind, center_nm=1581.0, bandwidth_nm=30.0, power_dbm=-70.0,
                       forward_current_ma=46.0)
        return cls(kind=kind)

    @classmethod
    def from_dict(cls, data: Dict[str, Any], path: str = "emitter") -> "EmitterSpec":
        _check_keys(cls, data, path)
        try:
            kind = EmitterKind(data.get("kind", "ase"))
        except ValueError as e:
            raise ConfigError(f"Invalid '{path}.kind': {e}") from e
        merged = cls.defaults_for(kind).to_dict()
        merged.update(data)
        return _build(cls, merged, path, kind=kind)


@dataclass
class FilterSpec:
    width_nm: float = 2.0
    center_nm: Optional[float] = None
    shape: FilterShape = FilterShape.RECTANGULAR

    def validate(self) -> None:
        if not self.width_nm > 0:
            raise InvalidArgumentError(f"filter width must be positive, got {self.width_nm}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "width_nm": self.width_nm,
            "center_nm": self.center_nm,
            "shape": self.shape.value
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], path: str = "filter") -> "FilterSpec":
        try:
            shape = FilterShape(data.get("shape", "rectangular")) if isinstance(data, dict) else None
        except ValueError as e:
            raise ConfigError(f"Invalid '{path}.shape': {e}") from e
        return _build(cls, data, path, shape=shape)


@dataclass
class EncoderSpec:
    symbol_rate_hz: float = 1e9
    bandwidth_hz: float = 920e6
    balance_error: float = 0.0
    samples_per_symbol: int = 8

    def validate(self) -> None:
        if not self.symbol_rate_hz > 0:
            raise InvalidArgumentError("symbol rate must be positive")
        if not self.bandwidth_hz > 0:
            raise InvalidArgumentError("EO bandwidth must be positive")
        if int(self.samples_per_symbol) != self.samples_per_symbol or self.samples_per_symbol < 1:
            raise InvalidArgumentError("samples per symbol must be an integer >= 1")
        if not -1.0 <= self.balance_error <= 1.0:
            raise InvalidArgumentError("balance error must lie in [-1, 1]")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "bandwidth_hz": self.bandwidth_hz,
            "balance_error": self.balance_error,
            "samples_per_symbol": self.samples_per_symbol
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], symbol_rate_hz: float = 1e9,
                  path: str = "encoder") -> "EncoderSpec":
        _check_keys(cls, data, path, allowed={"bandwidth_hz", "balance_error", "samples_per_symbol"})
        merged = dict(data)
        merged["symbol_rate_hz"] = symbol_rate_hz
        return _build(cls, merged, path)


@dataclass
class FiberSpec:
    length_km: float = 0.0
    pmd_ps_per_sqrt_km: float = 0.1
    correlation_length_km: float = 0.1
    attenuation_db_per_km: float = 0.2
    deployed: bool = False
    drift_rad_per_sqrt_h: float = 0.0

    def validate(self) -> None:
        if self.length_km < 0:
            raise InvalidArgumentError("fiber length must be >= 0")
        if self.pmd_ps_per_sqrt_km < 0:
            raise InvalidArgumentError("PMD coefficient must be >= 0")
        if not self.correlation_length_km > 0:
            raise InvalidArgumentError("correlation length must be positive")
        if self.attenuation_db_per_km < 0:
            raise InvalidArgumentError("attenuation must be >= 0")
        if self.drift_rad_per_sqrt_h < 0:
            raise InvalidArgumentError("drift rate must be >= 0")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "length_km": self.length_km,
            "pmd_ps_per_sqrt_km": self.pmd_ps_per_sqrt_km,
            "correlation_length_km": self.correlation_length_km,
            "attenuation_db_per_km": self.attenuation_db_per_km,
            "deployed": self.deployed,
            "drift_rad_per_sqrt_h": self.drift_rad_per_sqrt_h
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], path: str = "fiber") -> "FiberSpec":
        return _build(cls, data, path)


@dataclass
class SpadParams:
    efficiency: float = 0.1
    dead_time_us: float = 25.0
    dark_rate_cps: float = 550.0
    jitter_ps: float = 150.0

    def validate(self) -> None:
        if not 0.0 <= self.efficiency <= 1.0:
            raise InvalidArgumentError("efficiency must lie in [0, 1]")
        if self.dead_time_us < 0 or self.dark_rate_cps < 0 or self.jitter_ps < 0:
            raise InvalidArgumentError("dead time, dark rate and jitter must be >= 0")

    @property
    def dead_time_ps(self) -> float:
        return self.dead_time_us * 1e6

    @property
    def dead_time_s(self) -> float:
        return self.dead_time_us * 1e-6

    def to_dict(self) -> Dict[str, Any]:
        return {
            "efficiency": self.efficiency,
            "dead_time_us": self.dead_time_us,
            "dark_rate_cps": self.dark_rate_cps,
            "jitter_ps": self.jitter_ps
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], path: str = "spad") -> "SpadParams":
        return _build(cls, data, path)


@dataclass
class MeasurementConfig:
    mode: MeasurementMode = MeasurementMode.TWO_DETECTOR
    session_basis: Optional[Basis] = None  # None runs one session per basis
    filter_fraction: float = 0.5
    alignment_error_rad: float = 0.0

    def validate(self) -> None:
        if not 0.0 < self.filter_fraction <= 1.0:
            raise InvalidArgumentError("filter fraction must lie in (0, 1]")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mode": self.mode.value,
            "session_basis": self.session_basis.value if self.session_basis else None,
            "filter_fraction": self.filter_fraction,
            "alignment_error_rad": self.alignment_error_rad
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], path: str = "measurement") -> "MeasurementConfig":
        try:
            mode = MeasurementMode(data.get("mode", MeasurementMode.TWO_DETECTOR.value)) \
                if isinstance(data, dict) else None
            basis = data.get("session_basis") if isinstance(data, dict) else None
            basis = Basis(basis) if basis else None
        except ValueError as e:
            raise ConfigError(f"Invalid '{path}': {e}") from e
        return _build(cls, data, path, mode=mode, session_basis=basis)


@dataclass
class PolarimeterSpec:
    slice_nm: float = 1.0
    min_nm: float = 1569.0
    max_nm: float = 1585.0
    steps: int = 61
    interval_min: float = 5.0
    input_stokes: List[float] = field(default_factory=lambda: [0.0, 1.0, 0.0])

    def validate(self) -> None:
        if not self.min_nm < self.max_nm:
            raise InvalidArgumentError("polarimeter range needs min < max")
        if not self.slice_nm > 0:
            raise InvalidArgumentError("slice width must be positive")
        if self.steps < 1 or self.interval_min < 0:
            raise InvalidArgumentError("need at least one time step and a non-negative interval")
        if len(self.input_stokes) != 3:
            raise InvalidArgumentError("input_stokes needs three components")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "slice_nm": self.slice_nm,
            "min_nm": self.min_nm,
            "max_nm": self.max_nm,
            "steps": self.steps,
            "interval_min": self.interval_min,
            "input_stokes": list(self.input_stokes)
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], path: str = "polarimeter") -> "PolarimeterSpec":
        return _build(cls, data, path)


@dataclass
class EyeSpec:
    basis: Basis = Basis.DIAGONAL
    traces: int = 200

    def validate(self) -> None:
        if self.traces < 1:
            raise InvalidArgumentError("need at least one trace")

    def to_dict(self) -> Dict[str, Any]:
        return {"basis": self.basis.value, "traces": self.traces}

    @classmethod
    def from_dict(cls, data: Dict[str, Any], path: str = "eye") -> "EyeSpec":
        try:
            basis = Basis(data.get("basis", "diagonal")) if isinstance(data, dict) else None
        except ValueError as e:
            raise ConfigError(f"Invalid '{path}.basis': {e}") from e
        return _build(cls, data, path, basis=basis)


@dataclass
class ScenarioConfig:
    name: str = ""
    emitter: EmitterSpec = field(default_factory=EmitterSpec)
    filter: FilterSpec = field(default_factory=FilterSpec)
    mu: Union[float, str] = MU_Q  # photons/symbol at Alice's output, or "max"
    symbol_rate_hz: float = 1e9
    insertion_loss_db: float = 13.0
    fiber: FiberSpec = field(default_factory=FiberSpec)
    ob_db: float = 0.0
    encoder: EncoderSpec = field(default_factory=EncoderSpec)
    spad: SpadParams = field(default_factory=SpadParams)
    measurement: MeasurementConfig = field(default_factory=MeasurementConfig)
    polarimeter: PolarimeterSpec = field(default_factory=PolarimeterSpec)
    eye: EyeSpec = field(default_factory=EyeSpec)
    mode: RunMode = RunMode.ANALYTIC
    n_symbols: int = 1_000_000
    seed: int = 1
    slices: int = 101
    realizations: int = 1
    workers: int = 1

    def __post_init__(self):
        if self.encoder.symbol_rate_hz != self.symbol_rate_hz:
            self.encoder = replace(self.encoder, symbol_rate_hz=self.symbol_rate_hz)

    @property
    def mu_is_max(self) -> bool:
        return isinstance(self.mu, str)

    def validate(self) -> None:
        if isinstance(self.mu, str):
            if self.mu != "max":
                raise InvalidArgumentError(f"mu must be a number or 'max', got '{self.mu}'")
        elif not self.mu >= 0:
            raise InvalidArgumentError("mu must be >= 0")
        if not self.symbol_rate_hz > 0:
            raise InvalidArgumentError("symbol rate must be positive")
        if self.mode is RunMode.MONTECARLO and self.n_symbols < 1:
            raise InvalidArgumentError("montecarlo mode needs n_symbols >= 1")
        if self.slices < 1 or self.realizations < 1 or self.workers < 1:
            raise InvalidArgumentError("slices, realizations and workers must be >= 1")
        for part in (self.emitter, self.filter, self.fiber, self.encoder, self.spad,
                     self.measurement, self.polarimeter, self.eye):
            part.validate()

    def with_updates(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "emitter": self.emitter.to_dict(),
            "filter": self.filter.to_dict(),
            "mu": self.mu,
            "symbol_rate_hz": self.symbol_rate_hz,
            "insertion_loss_db": self.insertion_loss_db,
            "fiber": self.fiber.to_dict(),
            "ob_db": self.ob_db,
            "encoder": self.encoder.to_dict(),
            "spad": self.spad.to_dict(),
            "measurement": self.measurement.to_dict(),
            "polarimeter": self.polarimeter.to_dict(),
            "eye": self.eye.to_dict(),
            "mode": self.mode.value,
            "n_symbols": self.n_symbols,
            "seed": self.seed,
            "slices": self.slices,
            "realizations": self.realizations,
            "workers": self.workers
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ScenarioConfig":
        _check_keys(cls, data, "")
        rate = data.get("symbol_rate_hz", 1e9)
        try:
            mode = RunMode.parse(data.get("mode", "analytic"))
        except ValueError as e:
            raise ConfigError(f"Invalid 'mode': {e}") from e
        sections = {
            "emitter": EmitterSpec.from_dict(data.get("emitter", {})),
            "filter": FilterSpec.from_dict(data.get("filter", {})),
            "fiber": FiberSpec.from_dict(data.get("fiber", {})),
            "encoder": EncoderSpec.from_dict(data.get("encoder", {}), symbol_rate_hz=rate),
            "spad": SpadParams.from_dict(data.get("spad", {})),
            "measurement": MeasurementConfig.from_dict(data.get("measurement", {})),
            "polarimeter": PolarimeterSpec.from_dict(data.get("polarimeter", {})),
            "eye": EyeSpec.from_dict(data.get("eye", {})),
        }
        scalars = {k: v for k, v in data.items() if k not in sections and k != "mode"}
        try:
            config = cls(mode=mode, **sections, **scalars)
            config.validate()
        except (InvalidArgumentError, TypeError, ValueError) as e:
            raise ConfigError(f"Invalid scenario: {e}") from e
        return config


@dataclass
class ResultRecord:
    config: Dict[str, Any] = field(default_factory=dict)
    axis: str = ""
    axis_value: Optional[float] = None
    mode: str = RunMode.ANALYTIC.value
    mu: float = 0.0
    mu_available: float = 0.0
    power_limited: bool = False
    transmittance: float = 0.0
    dop: float = 0.0
    raw_key_rate_bps: float = 0.0
    raw_key_rate_summed_bps: float = 0.0
    qber: float = 0.0
    qber_std_error: float = 0.0
    sifted_count: float = 0.0
    feasible: bool = False
    clicks: List[float] = field(default_factory=list)
    dark_clicks: List[float] = field(default_factory=list)
    wall_seconds: float = 0.0
    error: Optional[str] = None
    warning: Optional[str] = None

    COLUMNS = ("axis", "axis_value", "mode", "mu", "mu_available", "power_limited",
               "transmittance", "dop", "raw_key_rate_bps", "raw_key_rate_summed_bps", "qber",
               "qber_std_error", "sifted_count", "feasible", "clicks", "dark_clicks", "error")

    def to_row(self, include_timing: bool = False) -> Dict[str, Any]:
        row = {
            "axis": self.axis,
            "axis_value": "" if self.axis_value is None else repr(float(self.axis_value)),
            "mode": self.mode,
            "mu": repr(float(self.mu)),
            "mu_available": repr(float(self.mu_available)),
            "power_limited": int(self.power_limited),
            "transmittance": repr(float(self.transmittance)),
            "dop": repr(float(self.dop)),
            "raw_key_rate_bps": repr(float(self.raw_key_rate_bps)),
            "raw_key_rate_summed_bps": repr(float(self.raw_key_rate_summed_bps)),
            "qber": repr(float(self.qber)),
            "qber_std_error": repr(float(self.qber_std_error)),
            "sifted_count": repr(float(self.sifted_count)),
            "feasible": int(self.feasible),
            "clicks": ";".join(repr(float(c)) for c in self.clicks),
            "dark_clicks": ";".join(repr(float(c)) for c in self.dark_clicks),
            "error": self.error or ""
        }
        if include_timing:
            row["wall_seconds"] = f"{self.wall_seconds:.3f}"
        return row

    def to_dict(self) -> Dict[str, Any]:
        result = self.to_row(include_timing=True)
        result["config"] = self.config
        result["warning"] = self.warning
        return result
