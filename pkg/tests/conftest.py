import numpy as np
import pytest

from kppfrag import (
    Grid,
    ProblemParams,
    ResourceField,
    make_crenel,
    solve_steady_state,
)


@pytest.fixture(scope="session")
def crenel_1000():
    grid = Grid((1000,))
    return make_crenel(grid, 1.0, 0.3)


@pytest.fixture(scope="session")
def crenel_state_mu001(crenel_1000):
    # the canonical small-diffusivity instance shared across modules
    params = ProblemParams(mu=0.01, kappa=1.0, m0=0.3)
    state = solve_steady_state(crenel_1000, params)
    return crenel_1000, params, state


def constant_resource(grid: Grid, value: float, kappa: float = 1.0) -> ResourceField:
    return ResourceField(grid, np.full(grid.num_nodes, value), kappa, value)


def interior_resource(m: ResourceField, shrink: float = 0.9) -> ResourceField:
    """Pull a (possibly bound-touching) admissible field strictly inside the
    box so that finite-difference probes m +- t*xi stay admissible."""
    vals = m.m0 + shrink * (m.values - m.m0)
    return ResourceField(m.grid, vals, m.kappa, m.m0)


def zero_mean_direction(grid: Grid, seed: int) -> np.ndarray:
    """Random direction with exact weighted zero mean and unit sup norm."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(grid.num_nodes)
    w = grid.node_weights
    v -= float(w @ v) / float(w.sum())
    return v / float(np.max(np.abs(v)))


def lp_bruteforce(g_vals: np.ndarray, m_vals: np.ndarray, kappa: float,
                  w: np.ndarray) -> float:
    """Exhaustive vertex enumeration for   max g.xi   subject to
    -m <= xi <= kappa - m,  w.xi = 0.

    Every vertex has at most one coordinate off its bound (n-1 active box
    constraints plus the equality). Enumerate the free index and the bound
    pattern of the rest, back-solve the free coordinate from the equality,
    and keep it if it lands inside its own box. Exponential; test use only.
    """
    n = g_vals.size
    lo = -m_vals
    hi = kappa - m_vals
    best = -np.inf
    for free in range(n):
        others = np.array([j for j in range(n) if j != free])
        for bits in range(1 << (n - 1)):
            xi = np.empty(n)
            pick = (bits >> np.arange(n - 1)) & 1
            xi[others] = np.where(pick == 1, hi[others], lo[others])
            xi[free] = -float(w[others] @ xi[others]) / w[free]
            if lo[free] - 5e-13 <= xi[free] <= hi[free] + 5e-13:
                best = max(best, float(g_vals @ xi))
    return best
