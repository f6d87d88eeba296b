"""Uniform periodic grid on the unit torus with difference operators and quadrature.

The domain is [0,1)^d with d in {1,2,3}, so the cell volume is h^d and the
total volume is exactly 1.  All stencils wrap around modulo n; there are no
boundary cases.  Reductions use compensated summation in a fixed traversal
order so that diagnostic scalars are bit-reproducible across runs and across
worker counts.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False


# ---------------------------------------------------------------------------
# Deterministic compensated summation
# ---------------------------------------------------------------------------

# Fixed chunk size for the reduction tree.  Partial sums are computed per
# chunk (possibly on several workers) and combined in chunk order, so the
# result depends only on the data, never on the worker count.
_CHUNK = 1 << 15

_workers = 1


def set_workers(count: int) -> None:
    """Set the worker count used for chunked reductions (>=1)."""
    global _workers
    if count < 1:
        raise ValueError(f"worker count must be >= 1, got {count}")
    _workers = count


def get_workers() -> int:
    return _workers


if _HAVE_NUMBA:

    @njit(cache=True)
    def _neumaier(a):  # pragma: no cover - exercised via compensated_sum
        s = 0.0
        c = 0.0
        for i in range(a.size):
            x = a[i]
            t = s + x
            if abs(s) >= abs(x):
                c += (s - t) + x
            else:
                c += (x - t) + s
            s = t
        return s + c

    def _chunk_sum(a: np.ndarray) -> float:
        return _neumaier(a)

else:

    def _chunk_sum(a: np.ndarray) -> float:
        return math.fsum(a)


def compensated_sum(values: np.ndarray) -> float:
    """Neumaier-compensated sum over the C-order flattening of ``values``.

    The traversal order and the chunking of the reduction tree are fixed,
    so the result is bit-identical for any worker count.
    """
    flat = np.ascontiguousarray(values, dtype=np.float64).reshape(-1)
    if flat.size == 0:
        return 0.0
    if flat.size <= _CHUNK:
        return _chunk_sum(flat)
    chunks = [flat[i : i + _CHUNK] for i in range(0, flat.size, _CHUNK)]
    if _workers > 1:
        with ThreadPoolExecutor(max_workers=_workers) as pool:
            partials = list(pool.map(_chunk_sum, chunks))
    else:
        partials = [_chunk_sum(c) for c in chunks]
    return _chunk_sum(np.asarray(partials))


# ---------------------------------------------------------------------------
# Grid and fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic grid on [0,1)^d, same resolution n on every axis."""

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.n < 8:
            raise ValueError(f"n must be >= 8, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def num_points(self) -> int:
        return self.n**self.dim

    def axis_coordinates(self) -> np.ndarray:
        return np.arange(self.n) * self.h

    def meshgrid(self) -> list[np.ndarray]:
        """Coordinate arrays of shape ``self.shape``, 'ij' indexing."""
        x = self.axis_coordinates()
        return list(np.meshgrid(*([x] * self.dim), indexing="ij"))


@dataclass
class ScalarField:
    """Grid-sampled real function."""

    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} does not match grid shape {self.grid.shape}"
            )

    @classmethod
    def from_function(cls, grid: TorusGrid, fn) -> "ScalarField":
        return cls(grid, np.asarray(fn(*grid.meshgrid()), dtype=np.float64))

    @classmethod
    def constant(cls, grid: TorusGrid, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(value)))

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())

    def assert_finite(self) -> None:
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError("scalar field contains non-finite values")


@dataclass
class VectorField:
    """Componentwise grid-sampled vector function (one array per axis)."""

    grid: TorusGrid
    components: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.components) != self.grid.dim:
            raise ValueError("component count must equal grid.dim")
        self.components = tuple(np.asarray(c, dtype=np.float64) for c in self.components)
        for c in self.components:
            if c.shape != self.grid.shape:
                raise ValueError("component shape does not match grid shape")

    @classmethod
    def zero(cls, grid: TorusGrid) -> "VectorField":
        return cls(grid, tuple(np.zeros(grid.shape) for _ in range(grid.dim)))

    def norm(self) -> np.ndarray:
        sq = np.zeros(self.grid.shape)
        for c in self.components:
            sq += c * c
        return np.sqrt(sq)

    def assert_finite(self) -> None:
        for c in self.components:
            if not np.all(np.isfinite(c)):
                raise FloatingPointError("vector field contains non-finite values")


# ---------------------------------------------------------------------------
# Difference operators
# ---------------------------------------------------------------------------


def shift(values: np.ndarray, axis: int, offset: int) -> np.ndarray:
    """values[..., i+offset, ...] with periodic wrap along ``axis``."""
    return np.roll(values, -offset, axis=axis)


def gradient_values(grid: TorusGrid, values: np.ndarray) -> tuple[np.ndarray, ...]:
    inv2h = 0.5 * grid.n
    return tuple(
        (shift(values, a, +1) - shift(values, a, -1)) * inv2h for a in range(grid.dim)
    )


def gradient(f: ScalarField) -> VectorField:
    """Central-difference gradient, periodic wrap, second order on smooth data."""
    return VectorField(f.grid, gradient_values(f.grid, f.values))


def hessian_values(grid: TorusGrid, values: np.ndarray) -> np.ndarray:
    """Symmetric second-difference Hessian, shape (dim, dim) + grid.shape."""
    d = grid.dim
    inv_h2 = float(grid.n) ** 2
    inv_4h2 = 0.25 * inv_h2
    out = np.empty((d, d) + grid.shape)
    for a in range(d):
        out[a, a] = (shift(values, a, +1) - 2.0 * values + shift(values, a, -1)) * inv_h2
    for a in range(d):
        for b in range(a + 1, d):
            pp = shift(shift(values, a, +1), b, +1)
            pm = shift(shift(values, a, +1), b, -1)
            mp = shift(shift(values, a, -1), b, +1)
            mm = shift(shift(values, a, -1), b, -1)
            out[a, b] = (pp - pm - mp + mm) * inv_4h2
            out[b, a] = out[a, b]
    return out


def hessian(f: ScalarField) -> np.ndarray:
    return hessian_values(f.grid, f.values)


def regularized_norm(p, eps: float):
    """sqrt(eps^2 + |p|^2) for a vector ``p`` (VectorField, sequence of arrays,
    or sequence of floats).  Always >= eps and >= |p|."""
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    if isinstance(p, VectorField):
        comps = p.components
    else:
        comps = tuple(p)
    sq = eps * eps
    for c in comps:
        c = np.asarray(c, dtype=np.float64)
        sq = sq + c * c
    out = np.sqrt(sq)
    return float(out) if np.ndim(out) == 0 else out


def integrate_values(grid: TorusGrid, values: np.ndarray) -> float:
    """Rectangle rule: compensated sum times h^d (exact order, reproducible)."""
    return compensated_sum(values) * grid.h**grid.dim


def integrate(f: ScalarField) -> float:
    return integrate_values(f.grid, f.values)
