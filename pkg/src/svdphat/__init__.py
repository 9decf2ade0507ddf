"""Multiple sound source localization with discrete SRP-PHAT and SVD-PHAT."""

from .geometry import MicArray, build_doa_grid, compute_tdoa, preset_array, resolve_array
from .pipeline import Localizer, RunConfig
from .svd import SvdPhatModel, build_model, load_model, localize_svd, save_model

__version__ = "0.1.0"

__all__ = [
    "Localizer",
    "MicArray",
    "RunConfig",
    "SvdPhatModel",
    "build_doa_grid",
    "build_model",
    "compute_tdoa",
    "load_model",
    "localize_svd",
    "preset_array",
    "resolve_array",
    "save_model",
]
