"""DOA error metrics: geometry-dependent projections, per-frame angular error, RMSE."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .scan import ScanResult

UNIT_TOL = 1e-6


def azimuth(x) -> np.ndarray:
    """atan2(x_x, sqrt(x_y^2 + x_z^2)): angle from broadside of an x-axis linear array, in [-pi/2, pi/2]."""
    x = np.asarray(x, dtype=np.float64)
    return np.arctan2(x[..., 0], np.hypot(x[..., 1], x[..., 2]))


def project_doa(x, beta: int) -> np.ndarray:
    """Map a unit DOA onto the part of the sphere a geometry class can resolve.

    beta=1 (linear): [cos g, sin g, 0] with g the azimuth above;
    beta=2 (planar): z folded onto the upper hemisphere; beta=3: unchanged.
    """
    x = np.asarray(x, dtype=np.float64)
    if np.any(np.abs(np.linalg.norm(x, axis=-1) - 1.0) > UNIT_TOL):
        raise ValueError("DOA must be a unit vector")
    if beta == 1:
        g = azimuth(x)
        return np.stack([np.cos(g), np.sin(g), np.zeros_like(g)], axis=-1)
    if beta == 2:
        out = np.array(x, copy=True)
        out[..., 2] = np.abs(out[..., 2])
        return out
    if beta == 3:
        return np.array(x, copy=True)
    raise ValueError(f"geometry class must be 1, 2 or 3, got {beta!r}")


def angle_between(a, b) -> np.ndarray:
    dots = np.sum(np.asarray(a) * np.asarray(b), axis=-1)
    return np.arccos(np.clip(dots, -1.0, 1.0))


def frame_error(estimates, truths, beta: int) -> np.ndarray:
    """For each true DOA, the smallest projected angle to any estimate.

    ``estimates`` is a :class:`ScanResult` or an (R, 3) array; with no
    estimates every source scores pi.
    """
    doas = estimates.doas if isinstance(estimates, ScanResult) else np.asarray(estimates, dtype=np.float64)
    truths = np.atleast_2d(np.asarray(truths, dtype=np.float64))
    if len(doas) == 0:
        return np.full(len(truths), np.pi)
    est = project_doa(np.atleast_2d(doas), beta)
    ref = project_doa(truths, beta)
    return angle_between(ref[:, None, :], est[None, :, :]).min(axis=1)


@dataclass
class ErrorRecord:
    """Per-frame, per-source angular errors, shape (L, T)."""

    phi: np.ndarray
    geometry_class: int

    def __post_init__(self):
        self.phi = np.atleast_2d(np.asarray(self.phi, dtype=np.float64))


def rmse(errors) -> float:
    phi = errors.phi if isinstance(errors, ErrorRecord) else np.atleast_2d(np.asarray(errors, dtype=np.float64))
    if phi.size == 0:
        raise ValueError("need at least one frame and one source")
    return float(np.sqrt(np.mean(phi**2)))


@dataclass(frozen=True)
class SummaryRow:
    geometry: str
    num_sources: int
    count: int
    srp: float
    svd: float

    @property
    def delta(self) -> float:
        """SRP minus SVD mean RMSE; positive when SVD-PHAT is better."""
        return self.srp - self.svd


def campaign_summary(records) -> list[SummaryRow]:
    """Mean RMSE per (geometry, number of sources) for each method.

    ``records`` yields ``(geometry, num_sources, method, rmse)`` tuples with
    method ``"srp"`` or ``"svd"``. Rows come out in first-seen geometry order,
    then by source count.
    """
    cells: dict[tuple, dict[str, list[float]]] = defaultdict(lambda: {"srp": [], "svd": []})
    geometry_order: list[str] = []
    for geometry, t, method, value in records:
        if geometry not in geometry_order:
            geometry_order.append(geometry)
        cells[(geometry, int(t))][method].append(float(value))
    rows = []
    for geometry in geometry_order:
        for t in sorted(k[1] for k in cells if k[0] == geometry):
            cell = cells[(geometry, t)]
            n = max(len(cell["srp"]), len(cell["svd"]))
            mean = lambda v: float(np.mean(v)) if v else float("nan")  # noqa: E731
            rows.append(SummaryRow(geometry, t, n, mean(cell["srp"]), mean(cell["svd"])))
    return rows
