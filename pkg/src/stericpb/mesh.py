"""Uniform cubic grid and grid-function storage.

Grid functions are stored as ``(n + 2, n + 2, n + 2)`` arrays indexed
``[i, j, k]`` so that Dirichlet data live in the same array as the unknowns.
The interior unknown vector is the x-fastest flattening of the interior block,
i.e. ``m = (i - 1) + n (j - 1) + n^2 (k - 1)``.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument

UNITS = ("potential", "concentration", "field")


@dataclass(frozen=True)
class UniformGrid3:
    """Cube ``[-L, L]^3`` with ``n`` interior points per axis."""

    L: float
    n: int

    def __post_init__(self):
        if not np.isfinite(self.L) or self.L <= 0:
            raise InvalidArgument(f"half width must be positive, got {self.L}")
        if int(self.n) != self.n or self.n < 1:
            raise InvalidArgument(f"interior count must be >= 1, got {self.n}")

    @property
    def h(self) -> float:
        return 2.0 * self.L / (self.n + 1)

    @property
    def points_per_axis(self) -> int:
        return self.n + 2

    @property
    def shape(self):
        return (self.n + 2,) * 3

    @property
    def num_unknowns(self) -> int:
        return self.n ** 3

    @property
    def coords(self) -> np.ndarray:
        return -self.L + np.arange(self.n + 2) * self.h

    def mesh(self):
        """Return the three coordinate arrays of shape ``self.shape``."""
        x = self.coords
        return np.meshgrid(x, x, x, indexing="ij")

    def points(self) -> np.ndarray:
        X, Y, Z = self.mesh()
        return np.stack([X, Y, Z], axis=-1)

    def interior_index(self, i, j, k) -> int:
        n = self.n
        for c in (i, j, k):
            if not 1 <= c <= n:
                raise InvalidArgument(f"lattice coordinate {c} outside 1..{n}")
        return (i - 1) + n * (j - 1) + n * n * (k - 1)

    def lattice_coords(self, m):
        n = self.n
        if not 0 <= m < n ** 3:
            raise InvalidArgument(f"flat index {m} outside 0..{n ** 3 - 1}")
        k, rem = divmod(m, n * n)
        j, i = divmod(rem, n)
        return i + 1, j + 1, k + 1

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def interior(self, arr: np.ndarray) -> np.ndarray:
        """Flatten the interior block of a full grid array (x fastest)."""
        return arr[1:-1, 1:-1, 1:-1].ravel(order="F")

    def to_full(self, vec: np.ndarray, boundary: np.ndarray = None) -> np.ndarray:
        """Embed an interior vector into a full array, boundary from ``boundary``."""
        out = self.zeros() if boundary is None else np.array(boundary, dtype=float)
        n = self.n
        out[1:-1, 1:-1, 1:-1] = np.reshape(vec, (n, n, n), order="F")
        return out

    def boundary_mask(self) -> np.ndarray:
        mask = np.ones(self.shape, dtype=bool)
        mask[1:-1, 1:-1, 1:-1] = False
        return mask


def build_grid(L: float, n: int) -> UniformGrid3:
    return UniformGrid3(float(L), int(n))


def grid_for_spacing(L: float, h: float) -> UniformGrid3:
    """Grid on ``[-L, L]^3`` whose spacing is ``h`` (``2L/h`` must be integral)."""
    cells = 2.0 * L / h
    if abs(cells - round(cells)) > 1e-9 * cells:
        raise InvalidArgument(f"spacing {h} does not divide 2L = {2 * L}")
    return build_grid(L, int(round(cells)) - 1)


@dataclass
class GridFunction:
    grid: UniformGrid3
    values: np.ndarray
    unit: str = "field"
    name: str = field(default="field")

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise InvalidArgument(
                f"grid function shape {self.values.shape} != grid {self.grid.shape}")
        if self.unit not in UNITS:
            raise InvalidArgument(f"unknown unit tag {self.unit!r}")
        if not np.all(np.isfinite(self.values)):
            bad = np.argwhere(~np.isfinite(self.values))[0]
            raise InvalidArgument(f"non-finite value at index {tuple(int(i) for i in bad)}")
