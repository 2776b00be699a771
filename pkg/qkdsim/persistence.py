#persistence for scenarios, result tables, time tags and keys

import csv
import json
import logging
import os
import platform
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np

from . import __version__
from .errors import ConfigError
from .harness import CalibrationResult, CalibrationTarget, EyeDiagram, PolarimeterResult
from .models import FiberSpec, ResultRecord, ScenarioConfig, TagOrigin
from .protocol import QberEstimate, SiftedKey
from .receiver import TagStream

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def get_data_dir() -> Path:
    override = os.environ.get("QKDSIM_DATA_DIR")
    if override:
        data_dir = Path(override)
    else:
        system = platform.system()
        if system == "Windows":
            base = Path.home() / "AppData" / "Roaming"
        elif system == "Darwin":  #macOS
            base = Path.home() / "Library" / "Application Support"
        else:  #Linux and others
            base = Path.home() / ".local" / "share"
        data_dir = base / "qkdsim"

    data_dir.mkdir(parents=True, exist_ok=True)
    return data_dir


def get_log_path() -> Path:
    return get_data_dir() / "qkdsim.log"


def metadata_line(seed: int) -> str:
    return f"# qkdsim {__version__} seed={seed}\n"


def _read_json(path: PathLike) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"Config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from e


def load_config(path: PathLike) -> ScenarioConfig:
    data = _read_json(path)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: scenario must be a JSON object")
    config = ScenarioConfig.from_dict(data)
    logger.info(f"Loaded scenario '{config.name}' from {path}")
    return config


def save_config(config: ScenarioConfig, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config.to_dict(), f, indent=2)
    logger.info(f"Scenario saved to {path}")


def load_targets(path: PathLike) -> Tuple[ScenarioConfig, List[CalibrationTarget], Dict[str, Any]]:
    """Calibration file: base scenario, target list and optional search settings."""
    data = _read_json(path)
    if not isinstance(data, dict) or "targets" not in data:
        raise ConfigError(f"{path}: expected an object with a 'targets' list")
    unknown = sorted(set(data) - {"scenario", "targets", "search"})
    if unknown:
        raise ConfigError(f"Unknown key '{unknown[0]}'")
    template = ScenarioConfig.from_dict(data.get("scenario", {}))
    try:
        targets = [CalibrationTarget.from_dict(t) for t in data["targets"]]
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"{path}: invalid target: {e}") from e
    search = data.get("search", {})
    unknown = sorted(set(search) - {"lo", "hi", "points", "seeds"})
    if unknown:
        raise ConfigError(f"Unknown key 'search.{unknown[0]}'")
    return template, targets, search


def _write_table(path: PathLike, seed: int, columns: Sequence[str], rows, comments: Sequence[str] = ()) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(metadata_line(seed))
        for comment in comments:
            f.write(f"# {comment}\n")
        writer = csv.DictWriter(f, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def write_results(records: List[ResultRecord], path: PathLike, seed: int,
                  include_timing: bool = False) -> None:
    columns = list(ResultRecord.COLUMNS) + (["wall_seconds"] if include_timing else [])
    _write_table(path, seed, columns, (r.to_row(include_timing) for r in records))
    logger.info(f"Results saved: {len(records)} rows to {path}")


def read_results(path: PathLike) -> Tuple[List[str], List[Dict[str, str]]]:
    """Comment lines and data rows of a result table."""
    with open(path, "r", encoding="utf-8", newline="") as f:
        lines = f.read().splitlines()
    comments = [line[1:].strip() for line in lines if line.startswith("#")]
    body = [line for line in lines if not line.startswith("#")]
    return comments, list(csv.DictReader(body))


def write_eye(eye: EyeDiagram, path: PathLike, seed: int) -> None:
    t = eye.time_symbols
    rows = ({"trace": i, "t_symbols": repr(float(t[j])), "power": repr(float(p))}
            for i, trace in enumerate(eye.traces) for j, p in enumerate(trace))
    levels = ";".join(f"{v:.6g}" for v in eye.mid_symbol_levels())
    _write_table(path, seed, ["trace", "t_symbols", "power"], rows, [f"mid_symbol_levels={levels}"])
    logger.info(f"Eye diagram saved: {len(eye.traces)} traces to {path}")


def write_polarimeter(result: PolarimeterResult, path: PathLike, seed: int) -> None:
    spreads = dict(zip(result.times_min.tolist(), result.spreads_rad.tolist()))
    rows = ({"time_min": repr(t), "wavelength_nm": repr(wl), "s1": repr(s.s1), "s2": repr(s.s2),
             "s3": repr(s.s3), "spread_rad": repr(spreads[t])} for t, wl, s in result.rows())
    _write_table(path, seed, ["time_min", "wavelength_nm", "s1", "s2", "s3", "spread_rad"], rows)
    logger.info(f"Polarimeter trace saved to {path}")


def write_calibration(result: CalibrationResult, targets: List[CalibrationTarget], path: PathLike,
                      seed: int) -> None:
    rows = ({"delta_lambda_nm": repr(t.delta_lambda_nm), "length_km": repr(t.length_km),
             "target_qber": repr(t.qber), "residual": repr(r)}
            for t, r in zip(targets, result.residuals))
    _write_table(path, seed, ["delta_lambda_nm", "length_km", "target_qber", "residual"], rows,
                 [f"pmd_coefficient_ps_per_sqrt_km={result.coefficient!r}"])
    logger.info(f"Calibration saved to {path}")


def save_fiber(spec: FiberSpec, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(spec.to_dict(), f, indent=2)


def write_time_tags(tags: TagStream, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for tag in tags:
            f.write(f"{tag.detector}\t{tag.time_ps!r}\t{tag.origin.value}\n")
    logger.info(f"Time tags saved: {len(tags)} tags to {path}")


def read_time_tags(path: PathLike) -> TagStream:
    detectors, times, signal = [], [], []
    with open(path, "r", encoding="utf-8") as f:
        for n, line in enumerate(f, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{n}: expected 3 tab-separated fields")
            detectors.append(int(parts[0]))
            times.append(float(parts[1]))
            signal.append(TagOrigin(parts[2]) is TagOrigin.SIGNAL)
    return TagStream(np.array(detectors, dtype=int), np.array(times, dtype=float),
                     np.array(signal, dtype=bool))


def write_sifted_key(key: SiftedKey, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# duration_s={key.duration_s!r}\n")
        for i, a, b in zip(key.indices, key.alice_bits, key.bob_bits):
            f.write(f"{int(i)}\t{int(a)}\t{int(b)}\n")


def read_sifted_key(path: PathLike) -> SiftedKey:
    duration = 0.0
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.startswith("# duration_s="):
                duration = float(line.split("=", 1)[1])
            elif line.strip() and not line.startswith("#"):
                rows.append([int(v) for v in line.split("\t")])
    table = np.array(rows, dtype=int).reshape(-1, 3)
    return SiftedKey(table[:, 0], table[:, 1], table[:, 2], duration)


def write_qber_estimate(estimate: QberEstimate, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("# qber\tstd_error\tsamples\traw_key_rate_bps\n")
        f.write(f"{estimate.qber!r}\t{estimate.std_error!r}\t{estimate.samples}\t"
                f"{estimate.raw_key_rate_bps!r}\n")


def read_qber_estimate(path: PathLike) -> QberEstimate:
    with open(path, "r", encoding="utf-8") as f:
        line = next(l for l in f if l.strip() and not l.startswith("#"))
    q, err, n, rate = line.rstrip("\n").split("\t")
    return QberEstimate(float(q), float(err), int(n), float(rate))
