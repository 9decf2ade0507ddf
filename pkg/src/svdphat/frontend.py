"""STFT analysis and PHAT-weighted, recursively smoothed cross-spectra."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import get_window

PHAT_EPS = 1e-12


@dataclass(frozen=True)
class StftConfig:
    frame_size: int = 512
    hop: int = 128
    fs: float = 16000.0
    window: str = "hann"

    def __post_init__(self):
        if self.frame_size <= 0 or self.frame_size % 2:
            raise ValueError("frame size must be a positive even integer")
        if not 0 < self.hop <= self.frame_size:
            raise ValueError("hop must satisfy 0 < hop <= frame size")
        if self.fs <= 0:
            raise ValueError("sample rate must be positive")

    @property
    def num_bins(self) -> int:
        return self.frame_size // 2 + 1

    def analysis_window(self) -> np.ndarray:
        # periodic ("DFT-even") window
        return get_window(self.window, self.frame_size, fftbins=True)

    def num_frames(self, num_samples: int) -> int:
        if num_samples < self.frame_size:
            return 0
        return 1 + (num_samples - self.frame_size) // self.hop


def stft_frame(samples: np.ndarray, cfg: StftConfig, window: np.ndarray | None = None, num_mics: int | None = None) -> np.ndarray:
    """Windowed one-sided spectra, shape (M, N/2 + 1), of an (M, N) block of audio."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[1] != cfg.frame_size:
        raise ValueError(f"expected an (M, {cfg.frame_size}) frame, got {samples.shape}")
    if num_mics is not None and samples.shape[0] != num_mics:
        raise ValueError(f"frame has {samples.shape[0]} channels but the array has {num_mics} microphones")
    if window is None:
        window = cfg.analysis_window()
    return np.fft.rfft(samples * window, axis=1)


def iter_frames(audio: np.ndarray, cfg: StftConfig):
    """Yield ``(frame_index, start_sample, block)`` over an (M, samples) signal."""
    audio = np.asarray(audio)
    for l in range(cfg.num_frames(audio.shape[1])):
        start = l * cfg.hop
        yield l, start, audio[:, start:start + cfg.frame_size]


class CrossSpectrumState:
    """Running estimate of X_i X_j^* for every microphone pair (i < j).

    Starts from zero; each :meth:`update` applies
    ``X <- (1 - alpha) X + alpha * X_i conj(X_j)``.
    """

    def __init__(self, num_mics: int, num_bins: int, alpha: float = 0.1):
        if not 0.0 <= alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        self.alpha = float(alpha)
        self.num_mics = int(num_mics)
        i, j = np.triu_indices(num_mics, k=1)
        self._i, self._j = i, j
        self.xspec = np.zeros((len(i), num_bins), dtype=np.complex128)
        self.frame_index = 0

    @property
    def num_pairs(self) -> int:
        return self.xspec.shape[0]

    def instantaneous(self, spectra: np.ndarray) -> np.ndarray:
        return spectra[self._i] * np.conj(spectra[self._j])

    def update(self, spectra: np.ndarray) -> "CrossSpectrumState":
        spectra = np.asarray(spectra)
        if spectra.shape != (self.num_mics, self.xspec.shape[1]):
            raise ValueError(f"expected spectra of shape ({self.num_mics}, {self.xspec.shape[1]}), got {spectra.shape}")
        self.xspec *= 1.0 - self.alpha
        self.xspec += self.alpha * self.instantaneous(spectra)
        self.frame_index += 1
        return self


def update_cross_spectrum(state: CrossSpectrumState, spectra: np.ndarray) -> CrossSpectrumState:
    return state.update(spectra)


@dataclass(frozen=True)
class PhatVector:
    """Unit-modulus cross-spectra, shape (P, N/2 + 1)."""

    xhat: np.ndarray

    @property
    def flat(self) -> np.ndarray:
        """Pair-major stacking: all bins of pair (1,2), then (1,3), ..."""
        return self.xhat.reshape(-1)

    def is_silent(self) -> bool:
        return not np.any(self.xhat)


def phat_normalize(state_or_xspec) -> PhatVector:
    """Divide each cross-spectrum bin by its magnitude; bins with |X| < 1e-12 become 0."""
    xspec = getattr(state_or_xspec, "xspec", state_or_xspec)
    xspec = np.asarray(xspec, dtype=np.complex128)
    mag = np.abs(xspec)
    out = np.zeros_like(xspec)
    ok = mag >= PHAT_EPS
    out[ok] = xspec[ok] / mag[ok]
    return PhatVector(out)
