"""Streaming localization shared by the CLI commands, the campaign runner and the benchmark."""

from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .frontend import CrossSpectrumState, StftConfig, iter_frames, phat_normalize, stft_frame
from .geometry import MicArray, build_doa_grid, build_neighbor_sets, build_null_ranges, compute_tdoa
from .scan import ScanResult
from .srp import SrpPhat
from .svd import SvdPhatModel, build_model, load_model, localize_svd, save_model

log = logging.getLogger(__name__)

METHODS = ("srp", "svd", "both")


class DataError(RuntimeError):
    """Input data (audio, model, estimates) that cannot be used as given."""


@dataclass(frozen=True)
class RunConfig:
    geometry: str = "spatial7"
    grid_level: int = 4
    fs: float = 16000.0
    frame_size: int = 512
    hop: int = 128
    alpha: float = 0.1
    delta: float = 1e-5
    delta_theta: float = 0.1745
    c: float = 340.0
    scans: int = 1
    method: str = "both"
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.scans < 1:
            raise ValueError("scans must be >= 1")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not 0.0 < self.delta_theta <= np.pi:
            raise ValueError("delta_theta must lie in (0, pi]")
        if self.c <= 0:
            raise ValueError("speed of sound must be positive")
        StftConfig(self.frame_size, self.hop, self.fs)

    @property
    def stft(self) -> StftConfig:
        return StftConfig(self.frame_size, self.hop, self.fs)

    def to_dict(self) -> dict:
        return asdict(self)


def default_cache_dir() -> Path:
    return Path(os.environ.get("SVDPHAT_CACHE", Path.home() / ".cache" / "svdphat"))


def model_key(array: MicArray, cfg: RunConfig) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(array.positions, dtype="<f8").tobytes())
    h.update(repr((cfg.grid_level, float(cfg.fs), float(cfg.c), cfg.frame_size, float(cfg.delta))).encode())
    return f"{array.name}-L{cfg.grid_level}-{h.hexdigest()[:16]}.svdphat"


def get_model(array: MicArray, cfg: RunConfig, cache_dir=None) -> SvdPhatModel:
    """Load the SVD-PHAT model for this array and configuration, building it on a cache miss."""
    cache = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    path = cache / model_key(array, cfg)
    if path.is_file():
        return load_model(path)
    grid = build_doa_grid(cfg.grid_level)
    log.info("building SVD-PHAT model for %s (Q=%d)", array.name, grid.num_points)
    model = build_model(compute_tdoa(array, grid, cfg.fs, cfg.c), cfg.frame_size, cfg.delta, grid, array)
    cache.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(f".tmp{os.getpid()}")
    save_model(model, tmp)
    os.replace(tmp, path)
    return model


def check_model(model: SvdPhatModel, array: MicArray, cfg: RunConfig) -> None:
    if model.frame_size != cfg.frame_size:
        raise DataError(f"model frame size {model.frame_size} != {cfg.frame_size}")
    if model.num_pairs != array.num_pairs:
        raise DataError(f"model has {model.num_pairs} pairs, array has {array.num_pairs}")
    if model.grid_level != cfg.grid_level:
        raise DataError(f"model grid level {model.grid_level} != {cfg.grid_level}")
    if model.fs != cfg.fs or model.c != cfg.c:
        raise DataError("model was built for a different sample rate or speed of sound")
    if model.mic_positions is not None and not np.allclose(model.mic_positions, array.positions):
        raise DataError("model was built for a different microphone layout")


@dataclass
class FrameResult:
    frame: int
    time_s: float
    srp: ScanResult | None
    svd: ScanResult | None

    def get(self, method: str) -> ScanResult | None:
        return getattr(self, method)


class Localizer:
    """Front end plus the requested method(s) for one array and configuration.

    With ``method="both"`` the two localizers read the same PHAT vector each
    frame. A frame whose PHAT vector is identically zero is reported with
    empty results for every method.
    """

    def __init__(self, array: MicArray, cfg: RunConfig, model: SvdPhatModel | None = None, cache_dir=None):
        self.array = array
        self.cfg = cfg
        self.grid = build_doa_grid(cfg.grid_level)
        self.srp = None
        self.model = None
        if cfg.method in ("srp", "both"):
            tdoa = compute_tdoa(array, self.grid, cfg.fs, cfg.c)
            ranges = build_null_ranges(tdoa, build_neighbor_sets(self.grid, cfg.delta_theta), cfg.delta_theta)
            self.srp = SrpPhat(self.grid, tdoa, ranges, cfg.frame_size)
        if cfg.method in ("svd", "both"):
            self.model = model if model is not None else get_model(array, cfg, cache_dir)
            check_model(self.model, array, cfg)

    @property
    def methods(self) -> list[str]:
        return ["srp", "svd"] if self.cfg.method == "both" else [self.cfg.method]

    def process(self, audio: np.ndarray, num_scans: int | None = None, max_frames: int | None = None) -> list[FrameResult]:
        audio = np.asarray(audio, dtype=np.float64)
        if audio.ndim != 2 or audio.shape[0] != self.array.num_mics:
            raise DataError(f"audio has shape {audio.shape}; expected {self.array.num_mics} channels")
        R = num_scans or self.cfg.scans
        stft = self.cfg.stft
        window = stft.analysis_window()
        state = CrossSpectrumState(self.array.num_mics, stft.num_bins, self.cfg.alpha)
        out = []
        for l, start, block in iter_frames(audio, stft):
            if max_frames is not None and l >= max_frames:
                break
            state.update(stft_frame(block, stft, window))
            phat = phat_normalize(state)
            res = FrameResult(l, start / stft.fs, None, None)
            silent = phat.is_silent()
            if self.srp is not None:
                res.srp = ScanResult() if silent else self.srp.localize(phat, R)
            if self.model is not None:
                res.svd = ScanResult() if silent else localize_svd(self.model, phat, R)
            out.append(res)
        return out


# -- WAV and CSV helpers ---------------------------------------------------

def read_wav(path) -> tuple[float, np.ndarray]:
    """Return ``(fs, audio)`` with audio as (channels, samples) floats in [-1, 1]."""
    try:
        fs, data = wavfile.read(path)
    except (ValueError, OSError) as exc:
        raise DataError(f"{path}: cannot read WAV ({exc})") from exc
    if data.dtype == np.int16:
        data = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        data = data.astype(np.float64)
    else:
        raise DataError(f"{path}: unsupported sample format {data.dtype}; use 16-bit or 32-bit float PCM")
    if data.ndim == 1:
        data = data[:, None]
    return float(fs), data.T


def write_wav(path, audio: np.ndarray, fs: float, pcm16: bool = False) -> None:
    audio = np.asarray(audio)
    if pcm16:
        data = np.clip(np.round(audio * 32767.0), -32768, 32767).astype(np.int16)
    else:
        data = audio.astype(np.float32)
    wavfile.write(path, int(fs), data.T)


ESTIMATE_FIELDS = ["method", "frame", "time_s", "scan_r", "x", "y", "z", "energy"]


def estimate_rows(frames: list[FrameResult], methods: list[str]):
    for fr in frames:
        for method in methods:
            result = fr.get(method)
            if not result:
                continue
            for r, item in enumerate(result, start=1):
                x, y, z = item.doa
                yield [method, fr.frame, f"{fr.time_s:.6f}", r, f"{x:.9f}", f"{y:.9f}", f"{z:.9f}", f"{item.energy:.6f}"]
