"""Sampled fields on dyadic grids over a bounding square."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class Field:
    """Samples ``values[i, j] = f(x0 + i*h, y0 + j*h)`` with ``h = side / 2**level``.

    ``mask`` marks nodes strictly inside the domain (``None`` means the whole
    square counts).
    """

    values: np.ndarray
    level: int
    origin: tuple[float, float] = (0.0, 0.0)
    side: float = 1.0
    mask: np.ndarray | None = None

    def __post_init__(self):
        n = 2**self.level + 1
        if self.values.shape != (n, n):
            raise ValueError(f"level {self.level} needs a {n}x{n} array, got {self.values.shape}")
        if self.mask is not None and self.mask.shape != (n, n):
            raise ValueError("mask shape does not match values")

    @property
    def n(self) -> int:
        return 2**self.level + 1

    @property
    def h(self) -> float:
        return self.side / 2**self.level

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        return grid_coords(self.level, self.origin, self.side)

    def with_values(self, values: np.ndarray) -> "Field":
        return replace(self, values=values)

    def masked(self) -> "Field":
        """Copy with every non-mask node set to zero."""
        if self.mask is None:
            return self
        return replace(self, values=np.where(self.mask, self.values, 0.0))

    def inside(self) -> np.ndarray:
        return np.ones(self.values.shape, bool) if self.mask is None else self.mask


def grid_coords(level: int, origin=(0.0, 0.0), side: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    t = np.arange(2**level + 1) / 2**level
    x = origin[0] + side * t
    y = origin[1] + side * t
    return np.meshgrid(x, y, indexing="ij")


def sample(func, level: int, origin=(0.0, 0.0), side: float = 1.0, mask=None) -> Field:
    """Evaluate a vectorised ``func(x, y)`` on the grid."""
    X, Y = grid_coords(level, origin, side)
    return Field(np.asarray(func(X, Y), dtype=float) * np.ones_like(X), level, tuple(origin), float(side), mask)
