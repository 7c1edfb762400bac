"""Tensor-product grids on the unit interval and unit square, the discrete
Neumann Laplacian, and the dyadic fold (periodisation) transform.

Grids are node-centered with both endpoints included: per axis, N nodes at
x_i = i*h with h = 1/(N-1). The Neumann Laplacian uses mirrored ghost nodes,
which gives the tridiagonal stencil with boundary rows (-2, 2) and (2, -2)
scaled by 1/h^2; the 2D operator is the Kronecker sum of the 1D ones. The
matrix is not symmetric, but W * Lap is, where W carries the trapezoid node
weights (1/2 at endpoints). Those weights double as the quadrature used for
all integral-like functionals; see fields.mean.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import solve_banded


class GridError(ValueError):
    pass


class PeriodiseDivisibilityError(ValueError):
    """Raised when a fold level does not land on grid nodes."""


@dataclass(frozen=True)
class Grid:
    """Uniform node-centered grid on (0,1)^dim, dim in {1, 2}.

    counts holds the per-axis node count (N_x,) or (N_x, N_y); spacings the
    matching h = 1/(N-1). Values on 2D grids are stored row-major with the
    x index fastest, i.e. flat index j*N_x + i for node (x_i, y_j).
    """

    counts: tuple[int, ...]

    def __post_init__(self):
        if len(self.counts) not in (1, 2):
            raise GridError(f"dim must be 1 or 2, got {len(self.counts)}")
        for n in self.counts:
            if int(n) != n or n < 3:
                raise GridError(f"need at least 3 nodes per axis, got {n}")
        object.__setattr__(self, "counts", tuple(int(n) for n in self.counts))

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def spacings(self) -> tuple[float, ...]:
        return tuple(1.0 / (n - 1) for n in self.counts)

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self.counts))

    def axis_coords(self, axis: int) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.counts[axis])

    @cached_property
    def node_weights(self) -> np.ndarray:
        """Trapezoid quadrature weight per node, flattened; sums to
        prod(N_axis - 1), i.e. 1/h^dim times the domain volume."""
        w = _axis_weights(self.counts[0])
        if self.dim == 2:
            w = np.outer(_axis_weights(self.counts[1]), w).ravel()
        return w

    def coords_columns(self) -> list[np.ndarray]:
        """Per-axis coordinate of every node, in flat order (for CSV export)."""
        if self.dim == 1:
            return [self.axis_coords(0)]
        x, y = np.meshgrid(self.axis_coords(0), self.axis_coords(1))
        return [x.ravel(), y.ravel()]

    def refined(self, k: int) -> "Grid":
        """Grid with each axis interval split 2^k times (same endpoints)."""
        return Grid(tuple((n - 1) * (1 << k) + 1 for n in self.counts))


def _axis_weights(n: int) -> np.ndarray:
    w = np.ones(n)
    w[0] = 0.5
    w[-1] = 0.5
    return w


def _lap1d_csr(n: int) -> sp.csr_matrix:
    scale = (n - 1.0) ** 2
    mat = sp.diags(
        [np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)], [-1, 0, 1], format="lil"
    )
    mat[0, 1] = 2.0
    mat[n - 1, n - 2] = 2.0
    return (mat * scale).tocsr()


class NeumannLaplacian:
    """The discrete Laplacian with mirror (zero-flux) boundary rows.

    Supports application to flat nodal vectors and direct solves of the
    shifted systems (mu * (-Lap) + diag(d)) x = rhs that the Newton, Picard
    and adjoint steps need. 1D systems go through the banded tridiagonal
    solver; 2D through a sparse LU factorization, which the caller may keep
    for reuse (the adjoint system at a converged state is the last Newton
    matrix).
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        if grid.dim == 1:
            self._mat = _lap1d_csr(grid.counts[0])
        else:
            nx, ny = grid.counts
            self._mat = (
                sp.kron(sp.eye(ny), _lap1d_csr(nx)) + sp.kron(_lap1d_csr(ny), sp.eye(nx))
            ).tocsr()

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self._mat @ v

    def matrix(self) -> sp.csr_matrix:
        return self._mat

    def dense(self) -> np.ndarray:
        # test oracle convenience; only sensible for small grids
        return self._mat.toarray()

    def shifted_factor(self, mu: float, diag: np.ndarray):
        """Factorization object for mu * (-Lap) + diag(d); has .solve(rhs)."""
        if self.grid.dim == 1:
            return _Banded1D(self.grid.counts[0], self.grid.spacings[0], mu, diag)
        mat = ((-mu) * self._mat + sp.diags(diag)).tocsc()
        return spla.splu(mat)

    def solve_shifted(self, mu: float, diag: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        return self.shifted_factor(mu, diag).solve(rhs)

    def largest_eigenvalue_magnitude(self, iters: int = 2000, seed: int = 0) -> float:
        """Power-iteration estimate of the spectral radius (test oracle)."""
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(self.grid.num_nodes)
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(iters):
            w = self._mat @ v
            lam = float(v @ w)
            nrm = np.linalg.norm(w)
            if nrm == 0.0:
                return 0.0
            v = w / nrm
        return abs(lam)


class _Banded1D:
    """Tridiagonal factor-free solver wrapper matching the splu interface."""

    def __init__(self, n: int, h: float, mu: float, diag: np.ndarray):
        inv = mu / (h * h)
        ab = np.zeros((3, n))
        ab[0, 1] = -2.0 * inv
        if n > 2:
            ab[0, 2:] = -1.0 * inv
            ab[2, :-2] = -1.0 * inv
        ab[1, :] = 2.0 * inv + diag
        ab[2, n - 2] = -2.0 * inv
        self._ab = ab

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return solve_banded((1, 1), self._ab, rhs)


def _fold_indices(n_out: int, stride: int, m_in: int) -> np.ndarray:
    """Even-periodic (period 2*m_in) fold of stride-sampled indices."""
    r = (stride * np.arange(n_out)) % (2 * m_in)
    return np.minimum(r, 2 * m_in - r)


def periodise_axis_indices(n: int, k: int) -> np.ndarray:
    """Index map for the same-grid fold: node i reads input node
    fold(2^k * i) where fold reflects across 0 and 1."""
    m = n - 1
    if m % (1 << k):
        raise PeriodiseDivisibilityError(
            f"fold level {k} needs (N-1) divisible by {1 << k}; "
            f"N={n} has N-1={m}. Use a grid with N = j*{1 << k} + 1 nodes."
        )
    return _fold_indices(n, 1 << k, m)


def periodise_values(values: np.ndarray, grid: Grid, k: int) -> np.ndarray:
    """Same-grid dyadic squeeze: output(x) = input(fold(2^k x)) per axis."""
    if k < 0 or int(k) != k:
        raise ValueError(f"fold level must be a nonnegative integer, got {k}")
    if k == 0:
        return values.copy()
    idx = periodise_axis_indices(grid.counts[0], k)
    if grid.dim == 1:
        return values[idx]
    nx, ny = grid.counts
    idy = periodise_axis_indices(ny, k)
    square = values.reshape(ny, nx)
    return square[np.ix_(idy, idx)].ravel()


def refine_fold_values(values: np.ndarray, grid: Grid, k: int) -> np.ndarray:
    """Dyadic squeeze onto the 2^k-refined grid: the output lives on
    grid.refined(k) and samples the even-periodic extension of the input at
    2^k x. Every input edge is traversed exactly 2^k times per period, so
    trapezoid means are preserved exactly; used by the identity experiments.
    """
    if k == 0:
        return values.copy()
    mx = grid.counts[0] - 1
    idx = _fold_indices((1 << k) * mx + 1, 1, mx)
    if grid.dim == 1:
        return values[idx]
    nx, ny = grid.counts
    my = ny - 1
    idy = _fold_indices((1 << k) * my + 1, 1, my)
    square = values.reshape(ny, nx)
    return square[np.ix_(idy, idx)].ravel()
