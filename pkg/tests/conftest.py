import json
from pathlib import Path

import pytest

from qkdsim.models import (
    EmitterSpec, FiberSpec, FilterSpec, MeasurementConfig, RunMode, ScenarioConfig, SpadParams
)

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture(autouse=True)
def data_dir(tmp_path, monkeypatch):
    #keep log files out of the user's data directory
    path = tmp_path / "data"
    monkeypatch.setenv("QKDSIM_DATA_DIR", str(path))
    return path


@pytest.fixture
def scenario_path():
    return lambda name: SCENARIOS / f"{name}.json"


@pytest.fixture
def reference_spad():
    return SpadParams(efficiency=0.1, dead_time_us=25.0, dark_rate_cps=550.0, jitter_ps=150.0)


@pytest.fixture
def b2b_config(reference_spad):
    """Back-to-back ASE link at 1 GHz."""
    return ScenarioConfig(
        name="b2b",
        emitter=EmitterSpec(),
        filter=FilterSpec(width_nm=2.0),
        mu=0.1,
        fiber=FiberSpec(length_km=0.0),
        spad=reference_spad,
        measurement=MeasurementConfig(filter_fraction=0.5),
        mode=RunMode.ANALYTIC,
        n_symbols=200_000,
        slices=51,
    )


@pytest.fixture
def write_json(tmp_path):
    def write(name, payload):
        path = tmp_path / name
        path.write_text(json.dumps(payload), encoding="utf-8")
        return path
    return write
