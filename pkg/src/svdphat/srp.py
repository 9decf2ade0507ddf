"""Discrete SRP-PHAT: GCC-PHAT by inverse FFT, rounded-TDOA lookup, and
GCC nulling between scans to find several sources."""

from __future__ import annotations

import numpy as np

from .frontend import PhatVector
from .geometry import DoaGrid, NullRangeTable, TdoaTable
from .scan import ScanItem, ScanResult


def gcc_phat(phat, frame_size: int | None = None) -> np.ndarray:
    """Real part of sum_k Xhat[k] exp(+2j pi k n / N) for n = 0..N-1, per pair.

    The half spectrum is zero-extended to length N and inverse transformed;
    ``ifft`` divides by N, so the result is scaled back up by N.
    """
    xhat = phat.xhat if isinstance(phat, PhatVector) else np.asarray(phat)
    num_bins = xhat.shape[-1]
    n = frame_size or 2 * (num_bins - 1)
    full = np.zeros(xhat.shape[:-1] + (n,), dtype=np.complex128)
    full[..., :num_bins] = xhat
    return np.fft.ifft(full, axis=-1).real * n


def steered_power(gcc: np.ndarray, lag_index: np.ndarray) -> np.ndarray:
    """Y_q = sum over pairs of gcc[p, lag_index[p, q]]; ``lag_index`` is already mod N."""
    rows = np.arange(gcc.shape[0])[:, None]
    return gcc[rows, lag_index].sum(axis=0)


def null_gcc(gcc: np.ndarray, ranges: NullRangeTable, q_star: int) -> np.ndarray:
    """Zero, in place, every lag in [tau_min, tau_max] (mod N) of grid point ``q_star``."""
    n = gcc.shape[1]
    lo = ranges.tau_min[:, q_star]
    hi = ranges.tau_max[:, q_star]
    for p in range(gcc.shape[0]):
        width = hi[p] - lo[p] + 1
        if width >= n:
            gcc[p] = 0.0
        else:
            gcc[p, np.mod(np.arange(lo[p], hi[p] + 1), n)] = 0.0
    return gcc


class SrpPhat:
    """Offline tables for discrete SRP-PHAT over one grid and array."""

    def __init__(self, grid: DoaGrid, tdoa: TdoaTable, ranges: NullRangeTable, frame_size: int):
        self.grid = grid
        self.tdoa = tdoa
        self.ranges = ranges
        self.frame_size = frame_size
        self.lag_index = tdoa.lag_index(frame_size)

    def localize(self, phat, num_scans: int) -> ScanResult:
        return localize_srp(gcc_phat(phat, self.frame_size), num_scans, self)


def localize_srp(gcc: np.ndarray, num_scans: int, tables: SrpPhat) -> ScanResult:
    """Scan ``num_scans`` times, nulling the GCC support of each source found.

    ``gcc`` is modified in place. Ties in the argmax go to the lowest grid index.
    """
    if num_scans < 1:
        raise ValueError("need at least one scan")
    result = ScanResult()
    for _ in range(num_scans):
        y = steered_power(gcc, tables.lag_index)
        q = int(np.argmax(y))
        null_gcc(gcc, tables.ranges, q)
        result.items.append(ScanItem(q, tables.grid.directions[q], float(y[q])))
    return result
