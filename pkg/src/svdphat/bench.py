"""Per-frame online cost of SRP-PHAT and SVD-PHAT, measured on synthetic frames."""

from __future__ import annotations

import platform
import time

import numpy as np

from .frontend import PhatVector
from .geometry import TdoaTable
from .srp import SrpPhat, gcc_phat, null_gcc, steered_power
from .svd import DeflationState, SvdPhatModel, deflate, nearest_doa, project_observation

BENCH_SCHEMA = 1


def synthetic_frames(tdoa: TdoaTable, frame_size: int, count: int, seed: int = 0, phase_noise: float = 0.5):
    """PHAT vectors of single sources at random grid points with random phase jitter."""
    rng = np.random.default_rng(seed)
    k = np.arange(frame_size // 2 + 1)
    for _ in range(count):
        q = rng.integers(tdoa.num_points)
        phase = -2.0 * np.pi * np.outer(tdoa.tau[:, q], k) / frame_size
        phase += phase_noise * rng.standard_normal(phase.shape)
        yield PhatVector(np.exp(1j * phase))


def _summary(samples) -> dict:
    ms = 1e3 * np.asarray(samples)
    return {"median_ms": float(np.median(ms)), "p90_ms": float(np.percentile(ms, 90))}


def run_bench(srp: SrpPhat, model: SvdPhatModel, num_scans: int = 1, frames: int = 1000, seed: int = 0) -> dict:
    """Time both online loops frame by frame and report medians.

    SRP-PHAT: one GCC transform, then per scan a full Y recompute, argmax and
    nulling. SVD-PHAT: one projection, then per scan a k-d tree query and a
    deflation step. ``scan_ms`` entries are per scan.
    """
    if frames < 1 or num_scans < 1:
        raise ValueError("need at least one frame and one scan")
    t = time.perf_counter
    srp_gcc, srp_y, srp_scan, srp_frame = [], [], [], []
    svd_proj, svd_scan, svd_frame = [], [], []
    for phat in synthetic_frames(srp.tdoa, srp.frame_size, frames, seed):
        t0 = t()
        gcc = gcc_phat(phat, srp.frame_size)
        t1 = t()
        srp_gcc.append(t1 - t0)
        for _ in range(num_scans):
            s0 = t()
            y = steered_power(gcc, srp.lag_index)
            s1 = t()
            q = int(np.argmax(y))
            null_gcc(gcc, srp.ranges, q)
            s2 = t()
            srp_y.append(s1 - s0)
            srp_scan.append(s2 - s0)
        srp_frame.append(t() - t0)

        t0 = t()
        state = DeflationState(project_observation(model, phat))
        t1 = t()
        svd_proj.append(t1 - t0)
        for _ in range(num_scans):
            s0 = t()
            q, _ = nearest_doa(model, state.Z)
            state, _ = deflate(state, model, q)
            svd_scan.append(t() - s0)
        svd_frame.append(t() - t0)

    return {
        "schema": BENCH_SCHEMA,
        "frames": int(frames),
        "scans": int(num_scans),
        "grid_points": int(model.num_points),
        "rank": int(model.rank),
        "num_pairs": int(model.num_pairs),
        "frame_size": int(model.frame_size),
        "machine": platform.machine(),
        "python": platform.python_version(),
        "srp": {
            "frame": _summary(srp_frame),
            "gcc": _summary(srp_gcc),
            "steered_power": _summary(srp_y),
            "scan": _summary(srp_scan),
        },
        "svd": {
            "frame": _summary(svd_frame),
            "projection": _summary(svd_proj),
            "scan": _summary(svd_scan),
        },
    }
