"""Steady states of the logistic diffusion equation on a box.

The discrete problem is R(theta) = 0 with

    R(theta) = mu * Lap(theta) + theta * (m - theta),

Lap the mirrored-ghost Neumann Laplacian, solved by damped Newton from the
constant start theta = mean(m). When the plain Newton line search cannot
reduce the residual (which happens at small mu, where the solution develops
steep transition layers far from the constant start), a short burst of the
positivity-preserving fixed-point iteration

    (mu * (-Lap) + diag(theta_k)) theta_{k+1} = m . theta_k

carries the iterate into the Newton basin; the shifted matrix is an M-matrix
for positive theta_k, so iterates stay strictly positive. Every accepted
solution is strictly positive without clipping.

Residual tolerances: convergence means ||R||_inf <= newton_tol, or
||R||_inf below the floating-point evaluation floor of the stiff term
(about eps * 4 * dim * mu / h^2 * ||theta||), which is the best any method
can do in double precision at large mu / h^2.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .fields import ProblemParams, ResourceField, ScalarField, mean
from .grids import NeumannLaplacian

_EPS = float(np.finfo(float).eps)


class SolverError(RuntimeError):
    pass


class NonPositiveMeanResource(SolverError):
    """The equation has no positive steady state when the resource mean
    is not positive."""


class NoConvergence(SolverError):
    def __init__(self, message: str, last_residual: float):
        super().__init__(f"{message} (last residual {last_residual:.3e})")
        self.last_residual = last_residual


@dataclass(frozen=True)
class SolverConfig:
    newton_tol: float = 1e-11          # inf-norm of the discrete residual
    max_newton_iters: int = 100
    damping_floor: float = 2.0 ** -20  # smallest backtracking fraction
    positivity_floor: float = 1e-14    # line-search clip only, never the answer
    fallback_steps: int = 200          # total fixed-point step budget
    fallback_burst: int = 6            # steps per rescue burst

    def __post_init__(self):
        if not (self.newton_tol > 0 and self.positivity_floor > 0):
            raise ValueError("tolerances must be positive")
        if self.max_newton_iters < 1 or self.fallback_steps < 1:
            raise ValueError("iteration caps must be at least 1")


@dataclass(frozen=True)
class SteadyState:
    theta: ScalarField
    residual_norm: float
    iterations: int                    # Newton iterations (rescue steps excluded)
    used_fallback: bool = False
    params: ProblemParams = field(default=None, repr=False)

    @property
    def grid(self):
        return self.theta.grid


def _residual(lap, theta, m_vals, mu):
    return mu * lap.apply(theta) + theta * (m_vals - theta)


def _residual_floor(grid, mu):
    hmin = min(grid.spacings)
    return 8.0 * _EPS * (1.0 + 4.0 * grid.dim * mu / (hmin * hmin))


def _picard_burst(lap, theta, m_vals, mu, steps):
    for _ in range(steps):
        theta = np.maximum(theta, 1e-300)
        theta = lap.solve_shifted(mu, theta, theta * m_vals)
        theta = np.maximum(theta, 1e-300)
    return theta


def solve_steady_state(
    m: ResourceField,
    params: ProblemParams,
    cfg: SolverConfig | None = None,
    theta0: np.ndarray | None = None,
    lap: NeumannLaplacian | None = None,
    keep_factor: bool = False,
) -> SteadyState:
    """Compute the positive steady state for resource field m.

    Parameters
    ----------
    m, params : the problem instance; params.mu is the diffusivity.
    cfg : solver tolerances and caps; defaults are fine for all presets.
    theta0 : optional warm start (flat nodal array). Defaults to the
        constant mean(m).
    lap : optional prebuilt Laplacian for m.grid (reused across solves in
        the optimizer loops).
    keep_factor : if True, attach the factorization of the final Newton
        matrix mu*(-Lap) + diag(2 theta - m) as state attribute `_factor`
        (private, used by the adjoint solve which needs exactly that matrix).

    Raises
    ------
    NonPositiveMeanResource : if mean(m) <= 0.
    NoConvergence : if Newton plus the fixed-point rescue budget fail.
    """
    cfg = cfg or SolverConfig()
    mbar = mean(m)
    if mbar <= 0.0:
        raise NonPositiveMeanResource(f"mean(m) = {mbar} must be positive")
    lap = lap or NeumannLaplacian(m.grid)
    mu = params.mu
    m_vals = m.values

    theta = (
        np.full(m.grid.num_nodes, mbar)
        if theta0 is None
        else np.maximum(np.asarray(theta0, dtype=float), 1e-300)
    )
    floor_limit = _residual_floor(m.grid, mu)

    r = _residual(lap, theta, m_vals, mu)
    rnorm = float(np.max(np.abs(r)))
    newton_iters = 0
    fallback_used = 0

    while True:
        if rnorm <= cfg.newton_tol or rnorm <= floor_limit * float(
            np.max(np.abs(theta))
        ):
            break
        if newton_iters >= cfg.max_newton_iters:
            raise NoConvergence("Newton iteration cap exceeded", rnorm)
        delta = lap.solve_shifted(mu, 2.0 * theta - m_vals, r)
        newton_iters += 1
        step = 1.0
        accepted = False
        while step >= cfg.damping_floor:
            trial = np.maximum(theta + step * delta, cfg.positivity_floor)
            rt = _residual(lap, trial, m_vals, mu)
            rtn = float(np.max(np.abs(rt)))
            if rtn < rnorm:
                theta, r, rnorm = trial, rt, rtn
                accepted = True
                break
            step *= 0.5
        if not accepted:
            if fallback_used + cfg.fallback_burst > cfg.fallback_steps:
                raise NoConvergence("Newton stalled and rescue budget spent", rnorm)
            theta = _picard_burst(lap, theta, m_vals, mu, cfg.fallback_burst)
            fallback_used += cfg.fallback_burst
            r = _residual(lap, theta, m_vals, mu)
            rnorm = float(np.max(np.abs(r)))

    if float(np.min(theta)) <= 0.0:
        raise NoConvergence("converged iterate is not strictly positive", rnorm)

    state = SteadyState(
        theta=ScalarField(m.grid, theta),
        residual_norm=rnorm,
        iterations=newton_iters,
        used_fallback=fallback_used > 0,
        params=params,
    )
    if keep_factor:
        object.__setattr__(
            state, "_factor", lap.shifted_factor(mu, 2.0 * theta - m_vals)
        )
    return state


def total_population(state: SteadyState) -> float:
    """The maximized objective: weighted mean of the steady state."""
    return mean(state.theta)


def lou_identity_residual(
    state: SteadyState, m: ResourceField, params: ProblemParams
) -> float:
    """Defect of the mass-balance identity relating the relative Dirichlet
    energy to the population excess:

        mu * avg(|grad theta|^2 / theta^2) = avg(theta) - m0.

    The left side is quadrature over cell edges (squared one-sided
    difference over the squared edge midpoint value); both averages on the
    right are plain nodal means. The deliberate mismatch of the two
    quadratures makes this an O(h) diagnostic that shrinks under refinement
    for a converged solve and blows up for a wrong one.
    """
    th = state.theta.values
    grid = state.theta.grid
    mu = params.mu
    if grid.dim == 1:
        (h,) = grid.spacings
        mid = 0.5 * (th[1:] + th[:-1])
        q = float(np.sum(h * ((th[1:] - th[:-1]) / h) ** 2 / mid**2))
    else:
        nx, ny = grid.counts
        hx, hy = grid.spacings
        sq = th.reshape(ny, nx)
        midx = 0.5 * (sq[:, 1:] + sq[:, :-1])
        midy = 0.5 * (sq[1:, :] + sq[:-1, :])
        q = float(
            np.sum(hx * hy * (np.diff(sq, axis=1) / hx) ** 2 / midx**2)
            + np.sum(hx * hy * (np.diff(sq, axis=0) / hy) ** 2 / midy**2)
        )
    return abs(mu * q - (float(np.mean(th)) - float(np.mean(m.values))))


def energy(theta: ScalarField, m: ResourceField, params: ProblemParams) -> float:
    """Gradient-flow energy whose minimizer over positive fields is the
    steady state:

        J(theta) = (mu/2) <theta, -Lap theta>_w - sum_i w_i (theta_i^2 m_i / 2 - theta_i^3 / 3)

    with w the trapezoid node weights. The weighted quadratic form equals
    the sum over edges of (d theta)^2 / h^2, and the gradient of J is
    exactly -w . R(theta), so stationarity at the steady state holds to
    solver tolerance.
    """
    if theta.grid != m.grid:
        raise ValueError("fields on different grids")
    grid = theta.grid
    w = grid.node_weights
    lap = NeumannLaplacian(grid)
    quad = 0.5 * params.mu * float(theta.values @ (w * (-lap.apply(theta.values))))
    th = theta.values
    pot = float(np.sum(w * (0.5 * th**2 * m.values - th**3 / 3.0)))
    return quad - pot


def energy_gradient(
    theta: ScalarField, m: ResourceField, params: ProblemParams,
    lap: NeumannLaplacian | None = None,
) -> np.ndarray:
    lap = lap or NeumannLaplacian(theta.grid)
    w = theta.grid.node_weights
    return -w * _residual(lap, theta.values, m.values, params.mu)


def energy_descent_guess(
    m: ResourceField, params: ProblemParams, iters: int = 80
) -> ScalarField:
    """Approximate energy minimizer used as a Newton warm start.

    Projected gradient descent on J from the constant start, with the
    descent direction preconditioned by the diagonal of the Hessian-like
    shift (Jacobi scaling) and a doubling/halving backtracking line search
    on the energy value. The positivity floor is enforced after every step.
    Best effort by construction; the Newton solve validates the result.
    """
    grid = m.grid
    lap = NeumannLaplacian(grid)
    w = grid.node_weights
    mu = params.mu
    hmin = min(grid.spacings)
    stiff = 4.0 * grid.dim * mu / (hmin * hmin)
    floor = 1e-12

    theta = np.full(grid.num_nodes, max(mean(m), floor))

    def j_value(t):
        quad = 0.5 * mu * float(t @ (w * (-lap.apply(t))))
        return quad - float(np.sum(w * (0.5 * t**2 * m.values - t**3 / 3.0)))

    current = j_value(theta)
    step = 1.0
    for _ in range(iters):
        r = _residual(lap, theta, m.values, mu)
        direction = r / (stiff + np.abs(m.values - 2.0 * theta) + 1e-30)
        moved = False
        while step >= 2.0 ** -30:
            trial = np.maximum(theta + step * direction, floor)
            jt = j_value(trial)
            if jt < current:
                theta, current = trial, jt
                step = min(step * 2.0, 1.0)
                moved = True
                break
            step *= 0.5
        if not moved:
            break
    return ScalarField(grid, theta)
