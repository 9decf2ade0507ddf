import numpy as np
import pytest

from svdphat.geometry import build_doa_grid, build_neighbor_sets, build_null_ranges, compute_tdoa, preset_array
from svdphat.pipeline import Localizer, RunConfig, get_model
from svdphat.srp import SrpPhat
from svdphat.svd import build_model

PRESETS = ("linear7", "planar7", "spatial7")


@pytest.fixture(scope="session")
def model_cache(tmp_path_factory):
    return tmp_path_factory.mktemp("models")


@pytest.fixture(scope="session")
def grid4():
    return build_doa_grid(4)


@pytest.fixture(scope="session")
def grid2():
    return build_doa_grid(2)


@pytest.fixture(scope="session")
def default_models(model_cache):
    """Level-4 models at the default parameters, one per preset."""
    return {name: get_model(preset_array(name), RunConfig(geometry=name), model_cache) for name in PRESETS}


@pytest.fixture(scope="session")
def localizers(default_models, model_cache):
    out = {}
    for name in PRESETS:
        out[name] = Localizer(preset_array(name), RunConfig(geometry=name), model=default_models[name], cache_dir=model_cache)
    return out


@pytest.fixture(scope="session")
def small_setup(grid2):
    """Level-2 grid (Q=162) tables and model for the spatial preset."""
    array = preset_array("spatial7")
    tdoa = compute_tdoa(array, grid2)
    ranges = build_null_ranges(tdoa, build_neighbor_sets(grid2, 0.1745), 0.1745)
    model = build_model(tdoa, 512, 1e-5, grid2, array)
    return array, tdoa, SrpPhat(grid2, tdoa, ranges, 512), model


def steering_phat(tau_column, frame_size=512):
    """Unit-modulus cross-spectra of an ideal far-field source with TDOAs ``tau_column``."""
    k = np.arange(frame_size // 2 + 1)
    return np.exp(-2j * np.pi * np.outer(tau_column, k) / frame_size)


# one line per acceptance criterion, echoed after the run
ACCEPTANCE: dict[str, str] = {}


def record_acceptance(label: str, ok: bool, detail: str) -> None:
    line = f"{label}: {'PASS' if ok else 'FAIL'} ({detail})"
    ACCEPTANCE[label] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for label in sorted(ACCEPTANCE, key=lambda s: int(s.split()[-1])):
            terminalreporter.write_line(ACCEPTANCE[label])
