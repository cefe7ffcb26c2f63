"""Pathwise calculus: discrete Holder norms, Young integrals, interpolation.

All norms are grid norms: the Holder seminorm scans every node pair
(adjacent-pair scans systematically underestimate rough paths), the L^1
norm is the trapezoid rule, the sup norm a plain max.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .grids import SampledPath, TimeGrid, require_same_grid

__all__ = [
    "holder_norm",
    "sup_norm",
    "l1_norm",
    "young_integral",
    "interpolation_check",
    "step_approximation",
    "InterpolationReport",
]


def holder_norm(p: SampledPath, alpha: float) -> float:
    """Discrete alpha-Holder seminorm, max over all grid pairs i < j."""
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if p.grid.n_nodes < 2:
        raise ValueError("need at least two nodes")
    return float(_kernels.holder_norm(p.values, p.grid.nodes(), alpha))


def sup_norm(p: SampledPath) -> float:
    v = p.values if p.is_scalar else np.linalg.norm(p.values, axis=1)
    return float(np.max(np.abs(v)))


def l1_norm(p: SampledPath) -> float:
    v = np.abs(p.values) if p.is_scalar else np.linalg.norm(p.values, axis=1)
    return float(np.trapezoid(v, dx=p.grid.mesh))


def young_integral(f: SampledPath, g: SampledPath, rule: str = "left") -> SampledPath:
    """Running Riemann-Stieltjes integral t -> int_0^t f dg on the common grid.

    "left" is the reference rule matching the Young construction; the
    "trapezoid" variant exists for convergence studies.  For vector f and g
    of equal width the integrand is the pairing sum_i f_i dg_i.
    """
    grid = require_same_grid(f, g)
    if f.declared_regularity is not None and g.declared_regularity is not None:
        if f.declared_regularity + g.declared_regularity <= 1.0:
            warnings.warn(
                "declared regularities sum to <= 1; the Young integral may not converge",
                stacklevel=2,
            )
    dg = np.diff(g.values, axis=0)
    if f.is_scalar != g.is_scalar:
        raise ValueError("integrand and integrator must both be scalar or both vector")
    if not f.is_scalar and f.values.shape[1] != g.values.shape[1]:
        raise ValueError("vector integrand/integrator widths differ")
    if rule == "left":
        fv = f.values[:-1]
    elif rule == "trapezoid":
        fv = 0.5 * (f.values[:-1] + f.values[1:])
    else:
        raise ValueError(f"unknown rule {rule!r}")
    terms = fv * dg if f.is_scalar else np.sum(fv * dg, axis=1)
    out = np.concatenate([[0.0], np.cumsum(terms)])
    return SampledPath(grid, out)


@dataclass
class InterpolationReport:
    lhs: float
    rhs: float
    ratio: float
    gamma: float
    holder_exp: float


def interpolation_check(b: SampledPath, gamma_weight: float, holder_exp: float) -> InterpolationReport:
    """Evaluate sup|b| against gamma ||b||_h + gamma^{-1/h} ||b||_{L1} with
    unit constant; the ratio lhs/rhs estimates the constant empirically."""
    if gamma_weight > 1.0:
        raise ValueError("gamma_weight must be <= 1")
    lhs = sup_norm(b)
    rhs = gamma_weight * holder_norm(b, holder_exp) + gamma_weight ** (-1.0 / holder_exp) * l1_norm(b)
    ratio = 0.0 if lhs == 0.0 else lhs / rhs
    return InterpolationReport(lhs=lhs, rhs=rhs, ratio=ratio,
                               gamma=gamma_weight, holder_exp=holder_exp)


def step_approximation(b: SampledPath, Delta: float):
    """Split b into its coarse step approximation and the remainder.

    The step function freezes b at the left endpoint of each window of
    length Delta; requires 1/Delta integer and Delta an integer multiple of
    the grid mesh.  Returns (step_path, remainder).
    """
    grid = b.grid
    inv = 1.0 / Delta
    if abs(inv - round(inv)) > 1e-9:
        raise ValueError(f"1/Delta must be an integer, got Delta={Delta}")
    ratio = Delta / grid.mesh
    if abs(ratio - round(ratio)) > 1e-9:
        raise ValueError(f"Delta={Delta} is not a multiple of the mesh {grid.mesh}")
    r = int(round(ratio))
    n = grid.n_steps
    idx = (np.arange(n + 1) // r) * r
    bbar = SampledPath(grid, b.values[idx])
    beta = SampledPath(grid, b.values - bbar.values)
    return bbar, beta
