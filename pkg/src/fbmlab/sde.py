"""Pathwise solvers for SDEs driven by a sampled rough path (H > 1/2).

Because the driving paths have Holder exponent above 1/2, the equations are
Riemann-Stieltjes (Young) equations and explicit classical schemes apply
with no stochastic correction terms: "euler" is the left-point reference
scheme, "heun" the trapezoid predictor-corrector default.

The first-variation flow J (the state Jacobian) and its inverse K are
propagated by their own linear equations dJ = dA J, dK = -K dA rather than
by inverting J node by node; with the Heun scheme the product J K stays
within ~1e-6 of the identity at desk-scale resolutions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .fbm import FbmPath, as_hurst, sample_array
from .fields import VectorFieldSystem
from .grids import TimeGrid
from .rng import substream

__all__ = [
    "SdeBlowupError",
    "SdeSolution",
    "solve",
    "solve_variation",
    "solve_batch",
    "flow_derivative_check",
    "apriori_moments",
]

DEFAULT_SCHEME = "heun"


class SdeBlowupError(RuntimeError):
    def __init__(self, node: int, path: int = 0):
        super().__init__(f"solution became non-finite at node {node} (path {path})")
        self.node = node
        self.path = path


@dataclass
class SdeSolution:
    grid: TimeGrid
    state: np.ndarray                      # (n_nodes, n)
    variation: np.ndarray | None = None    # (n_nodes, n, n)
    inverse_variation: np.ndarray | None = None
    scheme: str = DEFAULT_SCHEME
    inverse_defect: float = 0.0            # max_t ||J K - I||_F

    @property
    def n(self) -> int:
        return self.state.shape[1]

    def terminal(self) -> np.ndarray:
        return self.state[-1]


def _driver_increments(sys: VectorFieldSystem, driver, grid: TimeGrid | None):
    if isinstance(driver, FbmPath):
        if driver.dim != sys.d:
            raise ValueError(f"driver has {driver.dim} components, system needs {sys.d}")
        return driver.increments(), driver.grid
    if grid is None:
        raise ValueError("grid is required when the driver is a raw increment array")
    dB = np.asarray(driver, dtype=float)
    if dB.ndim != 2 or dB.shape != (grid.n_steps, sys.d):
        raise ValueError(f"driver increments must have shape ({grid.n_steps}, {sys.d})")
    return dB, grid


def _check_finite(X: np.ndarray):
    ok = np.isfinite(X).all(axis=2)   # (P, n_nodes)
    if not ok.all():
        bad_path, bad_node = np.argwhere(~ok)[0]
        raise SdeBlowupError(int(bad_node), int(bad_path))


def solve_batch(sys: VectorFieldSystem, x0, dB: np.ndarray, dt: float,
                scheme: str = DEFAULT_SCHEME, want_variation: bool = False):
    """Solve a batch of drivers; dB has shape (P, n_steps, d), mesh dt.

    Returns (X, J, K) with shapes (P, n_steps+1, n) and, when requested,
    (P, n_steps+1, n, n); J is the state Jacobian flow, K its inverse flow.
    Raises SdeBlowupError (with the first bad node) if any state leaves the
    finite range.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (sys.n,):
        raise ValueError(f"x0 must have shape ({sys.n},)")
    X, J, K = _kernels.solve_batch(sys.pack(), x0, dt, dB,
                                   scheme=scheme, want_variation=want_variation)
    _check_finite(X)
    return X, J, K


def _inverse_defect(J: np.ndarray, K: np.ndarray) -> float:
    prod = np.einsum("tij,tjk->tik", J, K)
    prod -= np.eye(J.shape[1])
    return float(np.sqrt(np.sum(prod**2, axis=(1, 2))).max())


def solve(sys: VectorFieldSystem, x0, driver, grid: TimeGrid | None = None,
          scheme: str = DEFAULT_SCHEME) -> SdeSolution:
    """Solve dX = V0(X) dt + sum_j V_j(X) dB^j pathwise for one driver."""
    dB, grid = _driver_increments(sys, driver, grid)
    X, _, _ = solve_batch(sys, x0, dB[None], grid.mesh, scheme=scheme)
    return SdeSolution(grid=grid, state=X[0], scheme=scheme)


def solve_variation(sys: VectorFieldSystem, x0, driver, grid: TimeGrid | None = None,
                    scheme: str = DEFAULT_SCHEME) -> SdeSolution:
    """Solve the state together with its first-variation flow and inverse."""
    dB, grid = _driver_increments(sys, driver, grid)
    X, J, K = solve_batch(sys, x0, dB[None], grid.mesh, scheme=scheme,
                          want_variation=True)
    return SdeSolution(
        grid=grid, state=X[0], variation=J[0], inverse_variation=K[0],
        scheme=scheme, inverse_defect=_inverse_defect(J[0], K[0]),
    )


@dataclass
class FlowCheckReport:
    max_rel_error: float
    per_column: np.ndarray
    eps: float

    def to_dict(self):
        return {
            "max_rel_error": self.max_rel_error,
            "per_column": [float(v) for v in self.per_column],
            "eps": self.eps,
        }


def flow_derivative_check(sys: VectorFieldSystem, x0, driver,
                          grid: TimeGrid | None = None, eps: float | None = None,
                          scheme: str = DEFAULT_SCHEME) -> FlowCheckReport:
    """Compare the variation flow at the horizon against central finite
    differences of the solution map along the same driver."""
    dB, grid = _driver_increments(sys, driver, grid)
    x0 = np.asarray(x0, dtype=float)
    if eps is None:
        eps = 1e-5 * max(1.0, float(np.max(np.abs(x0))))
    sol = solve_variation(sys, x0, dB, grid, scheme=scheme)
    J_end = sol.variation[-1]
    n = sys.n
    fd = np.empty((n, n))
    for i in range(n):
        bump = np.zeros(n)
        bump[i] = eps
        Xp, _, _ = solve_batch(sys, x0 + bump, dB[None], grid.mesh, scheme=scheme)
        Xm, _, _ = solve_batch(sys, x0 - bump, dB[None], grid.mesh, scheme=scheme)
        fd[:, i] = (Xp[0, -1] - Xm[0, -1]) / (2.0 * eps)
    scale = max(float(np.max(np.abs(J_end))), 1e-12)
    per_col = np.max(np.abs(fd - J_end), axis=0) / scale
    return FlowCheckReport(max_rel_error=float(per_col.max()), per_column=per_col, eps=eps)


def apriori_moments(sys: VectorFieldSystem, x0, hurst, n_paths: int,
                    gamma: float, n_steps: int = 256, seed: int = 0,
                    powers=(1, 2, 4, 8), scheme: str = DEFAULT_SCHEME) -> dict:
    """Monte Carlo estimates of E ||X||_gamma^p for the listed powers.

    Finiteness is probed, not proved: the report carries high quantiles and
    a stability diagnostic comparing the first half of the sample with the
    whole of it (heavy tails show up as instability under doubling).
    Requires gamma < H.
    """
    H = as_hurst(hurst).value
    if not (0.0 < gamma < H):
        raise ValueError(f"need 0 < gamma < H = {H}, got {gamma}")
    grid = TimeGrid(n_steps)
    rng = substream(seed, "sde.apriori")
    paths = sample_array(H, grid, sys.d, n_paths, rng)
    dB = np.diff(paths, axis=2).transpose(0, 2, 1)   # (P, S, d)
    X, _, _ = solve_batch(sys, x0, dB, grid.mesh, scheme=scheme)
    nodes = grid.nodes()
    norms = np.array([_kernels.holder_norm(X[p], nodes, gamma) for p in range(n_paths)])
    half = norms[: n_paths // 2]
    report = {
        "hurst": H, "gamma": gamma, "n_paths": n_paths, "n_steps": n_steps,
        "powers": list(powers),
        "moments": {str(p): float(np.mean(norms**p)) for p in powers},
        "moments_first_half": {str(p): float(np.mean(half**p)) for p in powers},
        "quantiles": {
            "q90": float(np.quantile(norms, 0.9)),
            "q99": float(np.quantile(norms, 0.99)),
            "max": float(norms.max()),
        },
    }
    report["stability"] = {
        str(p): abs(report["moments"][str(p)] - report["moments_first_half"][str(p)])
        / max(report["moments"][str(p)], 1e-300)
        for p in powers
    }
    return report
