from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ScanItem:
    index: int
    doa: np.ndarray
    energy: float
    # set when the direction was already spanned by earlier scans (SVD-PHAT only)
    duplicate: bool = False


@dataclass
class ScanResult:
    """Sources found in one frame, in scan order."""

    items: list[ScanItem] = field(default_factory=list)

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    @property
    def indices(self) -> list[int]:
        return [it.index for it in self.items]

    @property
    def doas(self) -> np.ndarray:
        if not self.items:
            return np.empty((0, 3))
        return np.array([it.doa for it in self.items])

    @property
    def energies(self) -> np.ndarray:
        return np.array([it.energy for it in self.items], dtype=np.float64)
