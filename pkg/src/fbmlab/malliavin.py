"""Malliavin derivative of the solution map and its covariance matrices.

For an adapted solution with variation flow J and inverse flow K, the
derivative of the terminal state with respect to a bump of driver component
j at time s is the n-vector

    D_s^j X_T = J_T K_s V_j(X_s),  0 <= s <= T.

The covariance matrix of the terminal state is the Gram matrix of these
paths in the fBm reproducing-kernel geometry; with the exact cell masses of
`frachilbert` this becomes the double sum

    Gamma = H(2H-1) J_T [ sum_{u,v} w_{|u-v|} A_u A_v^T ] J_T^T,
    C1    =           sum_{u,v} w_{|u-v|} A_u A_v^T,      A_u = K_u V(X_u),

where C1 is the reduced matrix whose smallest eigenvalue the probes track.
Note the H(2H-1) normalization belongs to Gamma only; the relation
Gamma = H(2H-1) J C1 J^T is enforced as a consistency invariant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .fbm import as_hurst, sample_array
from .fields import VectorFieldSystem, eval_fields_batch
from .frachilbert import h_inner_kernel, kernel_cell_masses
from .grids import SampledPath, TimeGrid
from .rng import substream
from .sde import DEFAULT_SCHEME, SdeSolution, solve_batch

__all__ = [
    "malliavin_derivative",
    "derivative_path",
    "gamma_matrix",
    "c1_matrix",
    "gram_matrix",
    "MalliavinReport",
    "build_report",
    "ProbeReport",
    "eigen_probe",
    "probe_directions",
]


def _require_variation(sol: SdeSolution):
    if sol.variation is None or sol.inverse_variation is None:
        raise ValueError("solution lacks variation data; use solve_variation")


def _diffusion_along(sys: VectorFieldSystem, states: np.ndarray) -> np.ndarray:
    """V(X_t) stacked along the path: (n_nodes, n, d)."""
    _, diff = eval_fields_batch(sys, states)
    return diff


def malliavin_derivative(sol: SdeSolution, sys: VectorFieldSystem,
                         s_index: int, j: int) -> np.ndarray:
    """D_s^j X_T for a grid node index s_index and noise component j (0-based)."""
    _require_variation(sol)
    n_nodes = sol.state.shape[0]
    if not (0 <= s_index < n_nodes):
        raise ValueError(f"s_index {s_index} outside the grid (solution has {n_nodes} nodes)")
    if not (0 <= j < sys.d):
        raise ValueError(f"noise index {j} outside 0..{sys.d - 1}")
    Vx = sys.fields[j].evaluate(sol.state[s_index])
    return sol.variation[-1] @ sol.inverse_variation[s_index] @ Vx


def derivative_path(sol: SdeSolution, sys: VectorFieldSystem, i: int) -> SampledPath:
    """s -> (D_s X_T)_i as a d-vector path (used for Gram cross-checks)."""
    _require_variation(sol)
    A = _pullback_cells(sol, sys, include_last=True)        # (n_nodes, n, d)
    rows = np.einsum("j,tjd->td", sol.variation[-1][i], A)
    return SampledPath(sol.grid, rows)


def _pullback_cells(sol: SdeSolution, sys: VectorFieldSystem,
                    include_last: bool = False) -> np.ndarray:
    """A_u = K_u V(X_u) at grid nodes; (n_nodes or n_steps, n, d)."""
    _require_variation(sol)
    stop = None if include_last else -1
    states = sol.state[:stop]
    Vx = _diffusion_along(sys, states)
    return np.einsum("tij,tjd->tid", sol.inverse_variation[:stop], Vx)


def c1_matrix(sol: SdeSolution, sys: VectorFieldSystem, hurst) -> np.ndarray:
    """Reduced covariance matrix (no flow conjugation, no H(2H-1) factor)."""
    H = as_hurst(hurst).value
    w = kernel_cell_masses(H, sol.grid.n_steps, sol.grid.mesh)
    A = _pullback_cells(sol, sys)
    return _kernels.c1_contract(w, A)


def gamma_matrix(sol: SdeSolution, sys: VectorFieldSystem, hurst) -> np.ndarray:
    """Malliavin covariance matrix of the terminal state."""
    H = as_hurst(hurst).value
    J_T = sol.variation[-1] if sol.variation is not None else None
    if J_T is None:
        raise ValueError("solution lacks variation data; use solve_variation")
    M = c1_matrix(sol, sys, hurst)
    return H * (2.0 * H - 1.0) * J_T @ M @ J_T.T


def gram_matrix(sol: SdeSolution, sys: VectorFieldSystem, hurst) -> np.ndarray:
    """Gram matrix of the derivative paths under the kernel inner product.

    Independent route to gamma_matrix: goes through `h_inner_kernel` on the
    assembled D X_T component paths instead of the fused contraction.
    """
    n = sys.n
    paths = [derivative_path(sol, sys, i) for i in range(n)]
    G = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            G[i, j] = G[j, i] = h_inner_kernel(paths[i], paths[j], hurst)
    return G


@dataclass
class MalliavinReport:
    gamma: np.ndarray
    c1: np.ndarray
    gamma_eigenvalues: np.ndarray
    c1_eigenvalues: np.ndarray
    gamma_det: float
    c1_det: float
    symmetry_defect: float
    relation_defect: float

    def to_dict(self):
        return {
            "gamma": self.gamma.tolist(),
            "c1": self.c1.tolist(),
            "gamma_eigenvalues": self.gamma_eigenvalues.tolist(),
            "c1_eigenvalues": self.c1_eigenvalues.tolist(),
            "gamma_det": self.gamma_det,
            "c1_det": self.c1_det,
            "symmetry_defect": self.symmetry_defect,
            "relation_defect": self.relation_defect,
        }


def build_report(sol: SdeSolution, sys: VectorFieldSystem, hurst) -> MalliavinReport:
    H = as_hurst(hurst).value
    c1 = c1_matrix(sol, sys, hurst)
    J_T = sol.variation[-1]
    gamma = H * (2.0 * H - 1.0) * J_T @ c1 @ J_T.T
    scale = max(float(np.max(np.abs(gamma))), 1e-300)
    sym = max(
        float(np.max(np.abs(gamma - gamma.T))),
        float(np.max(np.abs(c1 - c1.T))),
    ) / scale
    rel = float(np.max(np.abs(gamma - gamma_matrix(sol, sys, hurst)))) / scale
    return MalliavinReport(
        gamma=gamma,
        c1=c1,
        gamma_eigenvalues=np.linalg.eigvalsh(0.5 * (gamma + gamma.T)),
        c1_eigenvalues=np.linalg.eigvalsh(0.5 * (c1 + c1.T)),
        gamma_det=float(np.linalg.det(gamma)),
        c1_det=float(np.linalg.det(c1)),
        symmetry_defect=sym,
        relation_defect=rel,
    )


# ---------------------------------------------------------------------------
# Monte Carlo nondegeneracy probe
# ---------------------------------------------------------------------------

def probe_directions(n: int, n_random: int = 32, seed: int = 0) -> np.ndarray:
    """Canonical basis plus seeded random unit vectors (rows)."""
    dirs = [np.eye(n)]
    if n_random > 0:
        rng = substream(seed, "malliavin.directions")
        g = rng.standard_normal((n_random, n))
        dirs.append(g / np.linalg.norm(g, axis=1, keepdims=True))
    return np.vstack(dirs)


@dataclass
class ProbeReport:
    hurst: float
    n_paths: int
    n_steps: int
    eps_grid: list
    directions: np.ndarray
    counts: np.ndarray              # (n_directions, n_eps)
    probs: np.ndarray
    wilson_upper: np.ndarray
    decay_exponents: list           # per direction; None when all counts vanish
    det_inverse_moments: dict
    min_quadratic_form: np.ndarray  # per direction, min over paths
    min_eigenvalue: float
    zero_eigenvalue_paths: int

    def to_dict(self):
        return {
            "hurst": self.hurst,
            "n_paths": self.n_paths,
            "n_steps": self.n_steps,
            "eps_grid": list(self.eps_grid),
            "directions": self.directions.tolist(),
            "counts": self.counts.tolist(),
            "probs": self.probs.tolist(),
            "wilson_upper": self.wilson_upper.tolist(),
            "decay_exponents": self.decay_exponents,
            "det_inverse_moments": self.det_inverse_moments,
            "min_quadratic_form": self.min_quadratic_form.tolist(),
            "min_eigenvalue": self.min_eigenvalue,
            "zero_eigenvalue_paths": self.zero_eigenvalue_paths,
        }


def eigen_probe(sys: VectorFieldSystem, x0, hurst, eps_grid, n_paths: int,
                seed: int = 0, directions: np.ndarray | None = None,
                n_random_directions: int = 32, n_steps: int = 256,
                scheme: str = DEFAULT_SCHEME, batch_size: int = 2048,
                threads: int = 1) -> ProbeReport:
    """Estimate P(<v, C1 v> <= eps) over directions and eps, plus spectral
    and inverse-determinant diagnostics of the reduced matrix.

    Inverse moments E |det C1|^{-p} (p = 1, 2) are reported with a
    first-half/full stability ratio instead of being asserted finite: a
    heavy tail shows up as instability under sample doubling.
    """
    H = as_hurst(hurst).value
    x0 = np.asarray(x0, dtype=float)
    eps_grid = sorted(float(e) for e in eps_grid)
    if directions is None:
        directions = probe_directions(sys.n, n_random_directions, seed)
    directions = np.asarray(directions, dtype=float)
    grid = TimeGrid(n_steps)
    w = kernel_cell_masses(H, n_steps, grid.mesh)

    def one_batch(replica: int, count: int):
        rng = substream(seed, "malliavin.probe", replica)
        paths = sample_array(H, grid, sys.d, count, rng)
        dB = np.diff(paths, axis=2).transpose(0, 2, 1)
        X, J, K = solve_batch(sys, x0, dB, grid.mesh, scheme=scheme, want_variation=True)
        flat = X[:, :-1, :].reshape(-1, sys.n)
        _, Vx = eval_fields_batch(sys, flat)
        Vx = Vx.reshape(count, n_steps, sys.n, sys.d)
        A = np.einsum("ptij,ptjd->ptid", K[:, :-1], Vx)
        C1 = _kernels.c1_contract_batch(w, A)
        quad = np.einsum("pij,vi,vj->pv", C1, directions, directions)
        dets = np.linalg.det(C1)
        eigs = np.linalg.eigvalsh(0.5 * (C1 + C1.transpose(0, 2, 1)))
        return quad, dets, eigs[:, 0]

    from .util import batch_sizes, run_replicas, wilson_upper

    sizes = batch_sizes(n_paths, batch_size)
    results = run_replicas(one_batch, sizes, threads=threads)
    quad = np.concatenate([r[0] for r in results], axis=0)
    dets = np.concatenate([r[1] for r in results])
    min_eigs = np.concatenate([r[2] for r in results])

    eps_arr = np.asarray(eps_grid)
    counts = (quad[:, :, None] <= eps_arr[None, None, :]).sum(axis=0).astype(int)
    probs = counts / n_paths
    wilson = np.vectorize(lambda c: wilson_upper(int(c), n_paths))(counts)

    exponents = []
    for vi in range(directions.shape[0]):
        mask = counts[vi] > 0
        if mask.sum() >= 2:
            slope = np.polyfit(np.log(eps_arr[mask]), np.log(probs[vi][mask]), 1)[0]
            exponents.append(float(slope))
        else:
            exponents.append(None)

    absdet = np.abs(dets)
    half = absdet[: n_paths // 2]
    inv_moments = {}
    for p in (1, 2):
        full_m = float(np.mean(absdet ** (-p))) if np.all(absdet > 0) else float("inf")
        half_m = float(np.mean(half ** (-p))) if np.all(half > 0) else float("inf")
        stab = abs(full_m - half_m) / full_m if np.isfinite(full_m) and full_m > 0 else float("inf")
        inv_moments[str(p)] = {"estimate": full_m, "first_half": half_m, "stability": stab}

    return ProbeReport(
        hurst=H,
        n_paths=n_paths,
        n_steps=n_steps,
        eps_grid=eps_grid,
        directions=directions,
        counts=counts,
        probs=probs,
        wilson_upper=wilson,
        decay_exponents=exponents,
        det_inverse_moments=inv_moments,
        min_quadratic_form=quad.min(axis=0),
        min_eigenvalue=float(min_eigs.min()),
        zero_eigenvalue_paths=int(np.sum(min_eigs <= 0.0)),
    )
