"""Microphone arrays, the spherical DOA grid and the TDOA lookup tables."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAX_GRID_LEVEL = 6
_CHUNK = 1024

# Microphone coordinates in cm, relative to the array center.
PRESETS_CM = {
    "linear7": [
        (-5.0, 0.0, 0.0),
        (-3.3, 0.0, 0.0),
        (-1.7, 0.0, 0.0),
        (0.0, 0.0, 0.0),
        (1.7, 0.0, 0.0),
        (3.3, 0.0, 0.0),
        (5.0, 0.0, 0.0),
    ],
    "planar7": [
        (0.0, 0.0, 0.0),
        (5.0, 0.0, 0.0),
        (2.5, 4.3, 0.0),
        (-2.5, 4.3, 0.0),
        (-5.0, 0.0, 0.0),
        (-2.5, -4.3, 0.0),
        (2.5, -4.3, 0.0),
    ],
    "spatial7": [
        (0.0, 0.0, 0.0),
        (-5.0, 0.0, 0.0),
        (5.0, 0.0, 0.0),
        (0.0, -5.0, 0.0),
        (0.0, 5.0, 0.0),
        (0.0, 0.0, -5.0),
        (0.0, 0.0, 5.0),
    ],
}

_UNIT_SCALE = {"cm": 0.01, "m": 1.0}


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class MicArray:
    """Microphone positions in meters, one row per microphone."""

    positions: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        pos = np.array(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise GeometryError("positions must have shape (M, 3)")
        if pos.shape[0] < 2:
            raise GeometryError("an array needs at least two microphones")
        if not np.all(np.isfinite(pos)):
            raise GeometryError("microphone positions must be finite")
        pos.flags.writeable = False
        object.__setattr__(self, "positions", pos)

    @property
    def num_mics(self) -> int:
        return self.positions.shape[0]

    @property
    def pairs(self) -> np.ndarray:
        """(P, 2) index pairs (i, j) with i < j, in (1,2), (1,3), ..., (M-1,M) order."""
        i, j = np.triu_indices(self.num_mics, k=1)
        return np.stack([i, j], axis=1)

    @property
    def num_pairs(self) -> int:
        return self.num_mics * (self.num_mics - 1) // 2

    def geometry_class(self, tol: float = 1e-9) -> int:
        """1 for collinear, 2 for coplanar, 3 for arrays spanning 3-D space."""
        centered = self.positions - self.positions.mean(axis=0)
        sv = np.linalg.svd(centered, compute_uv=False)
        if sv[0] <= tol:
            raise GeometryError("all microphones are coincident")
        rank = int(np.sum(sv > tol * sv[0]))
        return max(rank, 1)


def preset_array(name: str) -> MicArray:
    try:
        cm = PRESETS_CM[name]
    except KeyError:
        raise GeometryError(
            f"unknown geometry preset {name!r}; choose from {sorted(PRESETS_CM)}"
        ) from None
    return MicArray(np.asarray(cm) * _UNIT_SCALE["cm"], name=name)


def load_array(path) -> MicArray:
    """Read an array definition: ``{"name", "unit": "cm"|"m", "positions": [[x,y,z], ...]}``."""
    with open(path) as fh:
        spec = json.load(fh)
    unit = spec.get("unit", "m")
    if unit not in _UNIT_SCALE:
        raise GeometryError(f"unit must be 'cm' or 'm', got {unit!r}")
    positions = np.asarray(spec["positions"], dtype=np.float64) * _UNIT_SCALE[unit]
    return MicArray(positions, name=spec.get("name", Path(path).stem))


def save_array(array: MicArray, path) -> None:
    with open(path, "w") as fh:
        json.dump(
            {"name": array.name, "unit": "m", "positions": array.positions.tolist()},
            fh,
            indent=2,
        )


def resolve_array(spec: str) -> MicArray:
    """Return a preset by name, or load a JSON definition from a path."""
    if spec in PRESETS_CM:
        return preset_array(spec)
    if Path(spec).is_file():
        return load_array(spec)
    raise GeometryError(f"{spec!r} is neither a preset nor an array file")


@dataclass(frozen=True)
class DoaGrid:
    """Unit vectors scanned for sources, with the triangle mesh that produced them."""

    directions: np.ndarray
    faces: np.ndarray
    level: int

    @property
    def num_points(self) -> int:
        return self.directions.shape[0]

    def edges(self) -> np.ndarray:
        """Unique mesh edges (E, 2) with the smaller index first."""
        f = self.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def adjacency(self) -> list[set[int]]:
        adj = [set() for _ in range(self.num_points)]
        for a, b in self.edges():
            adj[a].add(int(b))
            adj[b].add(int(a))
        return adj

    def max_neighbor_spacing(self) -> float:
        """Largest angle between any grid point and its nearest other grid point."""
        s = self.directions
        best = np.empty(self.num_points)
        for start in range(0, self.num_points, _CHUNK):
            dots = s[start:start + _CHUNK] @ s.T
            rows = np.arange(dots.shape[0])
            dots[rows, rows + start] = -np.inf
            best[start:start + _CHUNK] = dots.max(axis=1)
        return float(np.arccos(np.clip(best, -1.0, 1.0)).max())


_PHI = (1.0 + np.sqrt(5.0)) / 2.0

_ICO_VERTICES = [
    (-1, _PHI, 0), (1, _PHI, 0), (-1, -_PHI, 0), (1, -_PHI, 0),
    (0, -1, _PHI), (0, 1, _PHI), (0, -1, -_PHI), (0, 1, -_PHI),
    (_PHI, 0, -1), (_PHI, 0, 1), (-_PHI, 0, -1), (-_PHI, 0, 1),
]

_ICO_FACES = [
    (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
    (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
    (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
    (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
]


def build_doa_grid(level: int = 4) -> DoaGrid:
    """Geodesic sphere from a regular icosahedron, subdivided ``level`` times.

    Each subdivision splits every triangle in four, pushing edge midpoints
    out to the unit sphere, which gives ``10 * 4**level + 2`` points. The
    twelve icosahedron vertices come first; new vertices follow in the order
    their edges are first visited, so the ordering is reproducible.
    """
    if level < 0:
        raise GeometryError("grid level must be >= 0")
    if level > MAX_GRID_LEVEL:
        raise GeometryError(f"grid level is capped at {MAX_GRID_LEVEL}")

    verts = [np.asarray(v, dtype=np.float64) for v in _ICO_VERTICES]
    verts = [v / np.linalg.norm(v) for v in verts]
    faces = list(_ICO_FACES)

    for _ in range(level):
        midpoints: dict[tuple[int, int], int] = {}

        def midpoint(a, b):
            key = (a, b) if a < b else (b, a)
            idx = midpoints.get(key)
            if idx is None:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                idx = midpoints[key] = len(verts) - 1
            return idx

        refined = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            refined += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = refined

    directions = np.array(verts)
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    directions.flags.writeable = False
    return DoaGrid(directions, np.array(faces, dtype=np.int64), level)


@dataclass(frozen=True)
class TdoaTable:
    """Per pair and grid direction TDOAs in samples.

    ``tau[p, q]`` is the continuous value, ``tau_rounded`` the nearest integer
    (halves round up) and ``lag_index`` the rounded value wrapped into ``[0, N)``
    once a frame size is known.
    """

    tau: np.ndarray
    tau_rounded: np.ndarray
    fs: float
    c: float

    @property
    def num_pairs(self) -> int:
        return self.tau.shape[0]

    @property
    def num_points(self) -> int:
        return self.tau.shape[1]

    def lag_index(self, frame_size: int) -> np.ndarray:
        return np.mod(self.tau_rounded, frame_size)


def round_half_up(x):
    return np.floor(np.asarray(x) + 0.5).astype(np.int64)


def compute_tdoa(array: MicArray, grid: DoaGrid, fs: float = 16000.0, c: float = 340.0) -> TdoaTable:
    if fs <= 0 or c <= 0:
        raise GeometryError("fs and c must be positive")
    pairs = array.pairs
    baselines = array.positions[pairs[:, 1]] - array.positions[pairs[:, 0]]
    tau = (fs / c) * (baselines @ grid.directions.T)
    tau.flags.writeable = False
    rounded = round_half_up(tau)
    rounded.flags.writeable = False
    return TdoaTable(tau, rounded, float(fs), float(c))


def build_neighbor_sets(grid: DoaGrid, delta_theta: float) -> list[np.ndarray]:
    """For each grid point, the indices of all points within ``delta_theta`` radians."""
    if not 0 < delta_theta <= np.pi:
        raise GeometryError("delta_theta must lie in (0, pi]")
    s = grid.directions
    out = []
    for start in range(0, grid.num_points, _CHUNK):
        angles = np.arccos(np.clip(s[start:start + _CHUNK] @ s.T, -1.0, 1.0))
        within = angles <= delta_theta
        rows = np.arange(within.shape[0])
        within[rows, rows + start] = True
        out.extend(np.flatnonzero(row) for row in within)
    return out


@dataclass(frozen=True)
class NullRangeTable:
    """Inclusive integer lag intervals ``[tau_min, tau_max]`` per (pair, grid point)."""

    tau_min: np.ndarray
    tau_max: np.ndarray
    delta_theta: float


def build_null_ranges(tdoa: TdoaTable, neighbors: list[np.ndarray], delta_theta: float = float("nan")) -> NullRangeTable:
    if len(neighbors) != tdoa.num_points:
        raise GeometryError("neighbor sets and TDOA table come from different grids")
    tau = tdoa.tau
    lo = np.empty(tau.shape, dtype=np.int64)
    hi = np.empty(tau.shape, dtype=np.int64)
    for q, nbrs in enumerate(neighbors):
        block = tau[:, nbrs]
        lo[:, q] = np.floor(block.min(axis=1))
        hi[:, q] = np.ceil(block.max(axis=1))
    return NullRangeTable(lo, hi, float(delta_theta))
