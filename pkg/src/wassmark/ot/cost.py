"""Euclidean ground cost on a pixel grid, stored by pixel offset."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

# Largest grid for which the dense (HW x HW) cost may be built.
DENSE_CELL_LIMIT = 256


@dataclass(frozen=True)
class GroundCost:
    """Euclidean distance between cell centres of an ``height x width`` grid.

    Coordinates are divided by ``max(height - 1, width - 1)`` so the largest
    axis spans the unit interval. The cost only depends on the offset between
    two cells, which is what ``offset_table`` stores; the dense matrix exists
    for the LP oracle alone.
    """

    height: int
    width: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.height}x{self.width}")
        if self.height * self.width < 2:
            raise ValueError("grid needs at least two cells")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def size(self) -> int:
        return self.height * self.width

    @property
    def scale(self) -> float:
        return float(max(self.height - 1, self.width - 1))

    @property
    def pixel(self) -> float:
        """Length of one pixel step in normalized units."""
        return 1.0 / self.scale

    @property
    def max_cost(self) -> float:
        return float(np.hypot(self.height - 1, self.width - 1) / self.scale)

    @cached_property
    def offset_table(self) -> np.ndarray:
        """``table[dy, dx]`` is the cost between cells ``dy`` rows and ``dx`` columns apart."""
        dy = np.arange(self.height, dtype=np.float64)[:, None]
        dx = np.arange(self.width, dtype=np.float64)[None, :]
        return np.sqrt(dy**2 + dx**2) / self.scale

    def toeplitz(self, values: np.ndarray) -> np.ndarray:
        """Expand an offset table into ``T[dy, xi, xj] = values[dy, |xi - xj|]``."""
        cols = np.abs(np.arange(self.width)[:, None] - np.arange(self.width)[None, :])
        return np.ascontiguousarray(values[:, cols])

    def positions(self) -> np.ndarray:
        """(HW, 2) array of normalized (x, y) cell centres in row-major order."""
        yy, xx = np.meshgrid(np.arange(self.height), np.arange(self.width), indexing="ij")
        return np.stack([xx.ravel(), yy.ravel()], axis=1) / self.scale

    def dense(self) -> np.ndarray:
        if self.size > DENSE_CELL_LIMIT:
            raise ValueError(
                f"dense cost refused for {self.height}x{self.width} grid: "
                f"{self.size} cells exceeds the limit of {DENSE_CELL_LIMIT}"
            )
        p = self.positions()
        return np.sqrt(((p[:, None, :] - p[None, :, :]) ** 2).sum(-1))

    def __call__(self, a: tuple[int, int], b: tuple[int, int]) -> float:
        """Cost between cells given as (row, col)."""
        return float(self.offset_table[abs(a[0] - b[0]), abs(a[1] - b[1])])
