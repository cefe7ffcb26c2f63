"""Coarse-grained quadratic variation, Gaussian concentration experiments,
and the quantitative smallness-transfer sweep.

The guiding estimate: if y_t = int_0^t a ds + int_0^t <b, dB> stays
uniformly below eps, then with overwhelming probability ||a|| + ||b|| is
below eps^q for some q > 0.  The sweep estimates the largest q a scenario
supports empirically, using block statistics of the driver at two scales
delta << Delta chosen as powers of eps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fbm import as_hurst, increment_covariance, sample_array
from .fields import (
    VectorFieldSystem,
    eval_vectorfield_batch,
    heisenberg,
    lie_bracket,
)
from .grids import TimeGrid
from .rng import substream
from .util import batch_sizes, run_replicas, wilson_upper

__all__ = [
    "CoarseQvConfig",
    "NorrisStatistics",
    "coarse_qv",
    "concentration_experiment",
    "hs_bound_check",
    "scale_choices",
    "ScaleChoices",
    "norris_sweep",
    "SweepReport",
    "SCENARIOS",
]


@dataclass(frozen=True)
class CoarseQvConfig:
    """Fine scale delta and coarse scale Delta with 1/delta, 1/Delta integers
    and 1/Delta dividing 1/delta; r = Delta/delta increments per block."""

    delta: float
    Delta: float

    def __post_init__(self):
        inv_d = 1.0 / self.delta
        inv_D = 1.0 / self.Delta
        if abs(inv_d - round(inv_d)) > 1e-9 or abs(inv_D - round(inv_D)) > 1e-9:
            raise ValueError("1/delta and 1/Delta must be integers")
        if round(inv_d) % round(inv_D) != 0:
            raise ValueError("1/Delta must divide 1/delta")
        if not self.Delta < 1.0:
            raise ValueError("Delta must be < 1 (blockwise delta * r < 1)")
        if not self.delta <= self.Delta:
            raise ValueError("delta must not exceed Delta")

    @property
    def inv_delta(self) -> int:
        return int(round(1.0 / self.delta))

    @property
    def inv_Delta(self) -> int:
        return int(round(1.0 / self.Delta))

    @property
    def r(self) -> int:
        """Increments per block."""
        return self.inv_delta // self.inv_Delta

    @property
    def n_blocks(self) -> int:
        return self.inv_Delta


@dataclass
class NorrisStatistics:
    config: CoarseQvConfig
    hurst: float
    X: np.ndarray        # (n_blocks, d, d) block quadratic covariation sums
    Y_diag: np.ndarray   # (n_blocks, d)      sqrt(X_ii)
    Y_cross: np.ndarray  # (n_blocks, d, d)   sqrt(|X_ij|)
    T: float             # block scale sqrt(r) delta^H

    def total_quadratic_variation(self) -> np.ndarray:
        return self.X.sum(axis=0)


def coarse_qv(driver, cfg: CoarseQvConfig) -> NorrisStatistics:
    """Blockwise products of driver increments at scale delta.

    X_N^{ij} sums increment products over block N; its mean for exact fBm is
    T^2 = r delta^{2H} per diagonal entry.  The driver grid must refine
    delta (horizon 1).
    """
    grid = driver.grid
    if abs(grid.horizon - 1.0) > 1e-12:
        raise ValueError("coarse statistics expect horizon 1")
    stride = cfg.delta / grid.mesh
    if abs(stride - round(stride)) > 1e-9:
        raise ValueError(f"driver mesh {grid.mesh} does not refine delta={cfg.delta}")
    stride = int(round(stride))
    sub = driver.values[:, ::stride]          # (d, inv_delta + 1)
    inc = np.diff(sub, axis=1)                # (d, inv_delta)
    d = inc.shape[0]
    blocks = inc.reshape(d, cfg.n_blocks, cfg.r)
    X = np.einsum("iNr,jNr->Nij", blocks, blocks)
    H = driver.hurst.value
    T = math.sqrt(cfg.r) * cfg.delta**H
    return NorrisStatistics(
        config=cfg, hurst=H, X=X,
        Y_diag=np.sqrt(np.maximum(X[:, range(d), range(d)], 0.0)),
        Y_cross=np.sqrt(np.abs(X)),
        T=T,
    )


# ---------------------------------------------------------------------------
# Concentration of block statistics
# ---------------------------------------------------------------------------

_TAIL_LEVELS = (0.5, 0.3, 0.2, 0.1, 0.05)


def _fit_rate(samples: np.ndarray, square: bool, levels=_TAIL_LEVELS):
    """Exponential tail fit: log P(X >= h) ~ const - rate * h^2 (square=True)
    or - rate * h.  Thresholds are taken at empirical quantiles so the tail
    probabilities are exact by construction; the moderate-tail window keeps
    the quantile estimates stable at 10^4-path budgets."""
    hs = np.quantile(samples, [1.0 - q for q in levels])
    x = hs**2 if square else hs
    y = np.log(np.asarray(levels))
    slope = np.polyfit(x, y, 1)[0]
    return float(-slope), [(float(h), float(q)) for h, q in zip(hs, levels)]


def concentration_experiment(hurst, cfg: CoarseQvConfig, n_paths: int,
                             seed: int = 0, dim: int = 2) -> dict:
    """Empirical tails of | |X^i| - T | and |<X^i, X^j>| for iid components.

    Runs the block statistic at (delta, N) and at (delta/2, 2N) (same
    window Delta = delta N) and fits the exponential rates; the bound's
    rate scales like N / (delta N)^{2H}, so the fitted rates should double
    across the pair.
    """
    if dim < 2:
        raise ValueError("need at least two components for the cross statistic")
    H = as_hurst(hurst).value
    settings = []
    for half in (1, 2):
        delta = cfg.delta / half
        N = cfg.r * half
        cov = increment_covariance(H, delta, N)
        L = np.linalg.cholesky(cov)
        rng = substream(seed, f"norris.concentration.{half}")
        Z = rng.standard_normal((n_paths, dim, N))
        X = Z @ L.T                                  # (paths, dim, N)
        T = math.sqrt(N) * delta**H
        diag = np.abs(np.linalg.norm(X, axis=2) - T).ravel()
        cross = []
        for i in range(dim):
            for j in range(i + 1, dim):
                cross.append(np.abs(np.einsum("pk,pk->p", X[:, i], X[:, j])))
        cross = np.concatenate(cross)
        rate_diag, tail_diag = _fit_rate(diag, square=True)
        rate_cross, tail_cross = _fit_rate(cross, square=False)
        settings.append({
            "delta": delta, "N": N, "T": T,
            "rate_diag": rate_diag, "rate_cross": rate_cross,
            "tails_diag": tail_diag, "tails_cross": tail_cross,
            "theory_rate_scale": N / (delta * N) ** (2 * H),
        })
    predicted = settings[1]["theory_rate_scale"] / settings[0]["theory_rate_scale"]
    return {
        "hurst": H,
        "n_paths": n_paths,
        "dim": dim,
        "settings": settings,
        "rate_ratio_diag": settings[1]["rate_diag"] / settings[0]["rate_diag"],
        "rate_ratio_cross": settings[1]["rate_cross"] / settings[0]["rate_cross"],
        "predicted_ratio": predicted,
    }


def hs_bound_check(hurst, cfg: CoarseQvConfig, Ns=(64, 128, 256, 512)) -> dict:
    """Hilbert-Schmidt growth of the exact increment covariance.

    At fixed product delta N = Delta, the delta-normalized squared HS norm
    ||Gamma||_HS^2 / delta^{4H} should grow like N^{4H-2}; the report fits
    the log-log slope over the listed N.
    """
    H = as_hurst(hurst).value
    c = cfg.Delta
    rows = []
    for N in Ns:
        delta = c / N
        G = increment_covariance(H, delta, N)
        hs2 = float(np.sum(G**2))
        rows.append({
            "N": int(N), "delta": delta, "hs2": hs2,
            "normalized": hs2 / delta ** (4 * H),
            "diag_exact": bool(np.allclose(np.diag(G), delta ** (2 * H), rtol=1e-10)),
        })
    slope = float(np.polyfit(np.log([r["N"] for r in rows]),
                             np.log([r["normalized"] for r in rows]), 1)[0])
    single = increment_covariance(H, cfg.delta, 1)
    return {
        "hurst": H,
        "window": c,
        "rows": rows,
        "slope": slope,
        "predicted_slope": 4 * H - 2,
        "single_increment_hs2": float(np.sum(single**2)),
        "single_increment_target": cfg.delta ** (4 * H),
    }


# ---------------------------------------------------------------------------
# eps-dependent scale choices
# ---------------------------------------------------------------------------

@dataclass
class ScaleChoices:
    eps: float
    gamma: float
    delta: float
    Delta: float
    alpha: float
    inv_delta: int
    inv_Delta: int
    degenerate: bool

    def to_dict(self):
        return {
            "eps": self.eps, "gamma": self.gamma, "delta": self.delta,
            "Delta": self.Delta, "alpha": self.alpha,
            "inv_delta": self.inv_delta, "inv_Delta": self.inv_Delta,
            "degenerate": self.degenerate,
        }


def scale_choices(eps: float, hurst) -> ScaleChoices:
    """Power-of-eps scales gamma ~ eps^{H(1-H)/((1+H)(2-H))},
    delta ~ eps^{1/(H(2-H))}, Delta ~ eps^{(1-H)/(H(2-H))}, rounded to an
    admissible grid pair (1/delta, 1/Delta integers with divisibility).

    Rounding always shrinks delta and enlarges Delta, preserving
    delta <= Delta <= 1.  alpha is the limiting exponent of the gamma
    scale.  eps near 1 collapses all scales and is flagged degenerate.
    """
    if not (0.0 < eps < 1.0):
        raise ValueError("eps must lie in (0, 1)")
    H = as_hurst(hurst).value
    a_gamma = H * (1 - H) / ((1 + H) * (2 - H))
    a_delta = 1.0 / (H * (2 - H))
    a_Delta = (1 - H) / (H * (2 - H))
    gamma = eps**a_gamma
    delta_raw = eps**a_delta
    Delta_raw = eps**a_Delta
    inv_D = max(int(math.floor(1.0 / Delta_raw)), 1)
    inv_d = int(math.ceil((1.0 / delta_raw) / inv_D)) * inv_D
    degenerate = inv_D < 2 or inv_d <= inv_D
    return ScaleChoices(
        eps=eps, gamma=gamma, delta=1.0 / inv_d, Delta=1.0 / inv_D,
        alpha=a_gamma, inv_delta=inv_d, inv_Delta=inv_D, degenerate=degenerate,
    )


# ---------------------------------------------------------------------------
# Sweep scenarios
# ---------------------------------------------------------------------------

def _scenario_pure_noise(hurst, n_steps, seed, replica, count, **_):
    """b = 1 (scalar), a = 0, so y is the first driver component."""
    grid = TimeGrid(n_steps)
    rng = substream(seed, "norris.scenario.noise", replica)
    B = sample_array(hurst, grid, 1, count, rng)
    return {
        "sup_y": np.max(np.abs(B[:, 0, :]), axis=1),
        "sup_a": np.zeros(count),
        "sup_b": np.ones(count),
    }


def _scenario_pure_drift(hurst, n_steps, seed, replica, count, **_):
    """a = 1, b = 0: y_t = t deterministically."""
    return {
        "sup_y": np.ones(count),
        "sup_a": np.ones(count),
        "sup_b": np.zeros(count),
    }


def _scenario_degenerate(hurst, n_steps, seed, replica, count, **_):
    return {
        "sup_y": np.zeros(count),
        "sup_a": np.zeros(count),
        "sup_b": np.zeros(count),
    }


def _scenario_pullback(hurst, n_steps, seed, replica, count, system=None,
                       v=None, target_index: int = 0, scheme: str = "heun", **_):
    """Pull a chosen diffusion field back along the inverse variation flow.

    y_t = <v, K_t W(X_t)> - <v, W(x0)> for the target field W; its exact
    integrand pair is a_t = <v, K_t [V0, W](X_t)> (zero without drift) and
    b^j_t = <v, K_t [V_j, W](X_t)>, which is how rank information at deeper
    bracket levels is extracted from a single smallness event.  The batch
    also reports the worst chain-rule defect |y - (int a + int <b, dB>)| as
    a consistency diagnostic.
    """
    from .sde import solve_batch

    sys = system if system is not None else heisenberg()
    x0 = sys.x0 if sys.x0 is not None else np.zeros(sys.n)
    W = sys.fields[target_index]
    if v is None:
        v = np.zeros(sys.n)
        v[-1] = 1.0
    v = np.asarray(v, dtype=float)
    a_field = lie_bracket(sys.drift, W) if sys.has_drift else None
    b_fields = [lie_bracket(Vj, W) for Vj in sys.fields]

    grid = TimeGrid(n_steps)
    rng = substream(seed, "norris.scenario.pullback", replica)
    paths = sample_array(hurst, grid, sys.d, count, rng)
    dB = np.diff(paths, axis=2).transpose(0, 2, 1)           # (P, S, d)
    X, J, K = solve_batch(sys, x0, dB, grid.mesh, scheme=scheme, want_variation=True)

    flat = X.reshape(-1, sys.n)

    def pullback_scalar(field):
        vals = eval_vectorfield_batch(field, flat).reshape(count, n_steps + 1, sys.n)
        return np.einsum("i,ptij,ptj->pt", v, K, vals)

    y = pullback_scalar(W)
    y = y - y[:, :1]
    b = np.stack([pullback_scalar(f) for f in b_fields], axis=2)   # (P, S+1, d)
    if a_field is not None:
        a = pullback_scalar(a_field)
    else:
        a = np.zeros_like(y)

    # chain-rule consistency: y should equal int a dt + int <b, dB> (left sums)
    incr = a[:, :-1] * grid.mesh + np.einsum("ptj,ptj->pt", b[:, :-1], dB)
    y_rs = np.concatenate([np.zeros((count, 1)), np.cumsum(incr, axis=1)], axis=1)
    defect = np.max(np.abs(y - y_rs), axis=1)

    return {
        "sup_y": np.max(np.abs(y), axis=1),
        "sup_a": np.max(np.abs(a), axis=1),
        "sup_b": np.max(np.linalg.norm(b, axis=2), axis=1),
        "chain_defect": defect,
    }


SCENARIOS = {
    "pure-noise": _scenario_pure_noise,
    "pure-drift": _scenario_pure_drift,
    "degenerate": _scenario_degenerate,
    "pullback": _scenario_pullback,
}


@dataclass
class SweepReport:
    scenario: str
    hurst: float
    eps_grid: list
    q_grid: list
    n_paths: int
    counts: np.ndarray            # (n_eps, n_q) joint-event counts
    joint_probs: np.ndarray
    wilson_upper: np.ndarray
    marginal_y_probs: np.ndarray  # P(sup|y| < eps)
    q_hat: float
    alpha_guidance: float
    scale_table: list
    diagnostics: dict

    def to_dict(self):
        return {
            "scenario": self.scenario,
            "hurst": self.hurst,
            "eps_grid": list(self.eps_grid),
            "q_grid": list(self.q_grid),
            "n_paths": self.n_paths,
            "counts": self.counts.tolist(),
            "joint_probs": self.joint_probs.tolist(),
            "wilson_upper": self.wilson_upper.tolist(),
            "marginal_y_probs": self.marginal_y_probs.tolist(),
            "q_hat": self.q_hat,
            "alpha_guidance": self.alpha_guidance,
            "scale_table": self.scale_table,
            "diagnostics": self.diagnostics,
        }


def norris_sweep(scenario: str, hurst, eps_grid, n_paths: int, seed: int = 0,
                 q_grid=None, n_steps: int = 256, system=None, v=None,
                 target_index: int = 0, batch_size: int = 4096,
                 threads: int = 1, scheme: str = "heun") -> SweepReport:
    """Empirical joint probability of {sup|y| < eps and sup|a|+sup|b| > eps^q}
    over grids of eps and q.

    q_hat is the largest grid q whose event count is zero at every eps
    (the event probability grows with q, since eps^q shrinks); Wilson upper
    bounds certify how small a zero count is.  The report carries the
    theoretical exponent guidance alpha and the eps-dependent scale choices
    alongside the raw tables.
    """
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}; choose from {sorted(SCENARIOS)}")
    H = as_hurst(hurst).value
    eps_grid = sorted((float(e) for e in eps_grid), reverse=True)
    if any(not (0 < e < 1) for e in eps_grid):
        raise ValueError("eps values must lie in (0, 1)")
    if q_grid is None:
        q_grid = [round(0.05 * k, 2) for k in range(1, 21)]
    q_grid = sorted(float(q) for q in q_grid)
    fn = SCENARIOS[scenario]

    eps_arr = np.asarray(eps_grid)
    q_arr = np.asarray(q_grid)
    thresholds = eps_arr[:, None] ** q_arr[None, :]    # (n_eps, n_q)

    def one_batch(replica, count):
        stats = fn(hurst=H, n_steps=n_steps, seed=seed, replica=replica,
                   count=count, system=system, v=v, target_index=target_index,
                   scheme=scheme)
        small_y = stats["sup_y"][:, None] < eps_arr[None, :]            # (P, n_eps)
        mag = stats["sup_a"] + stats["sup_b"]
        big_ab = mag[:, None, None] > thresholds[None, :, :]            # (P, n_eps, n_q)
        joint = (small_y[:, :, None] & big_ab).sum(axis=0)
        marg = small_y.sum(axis=0)
        diag = {}
        if "chain_defect" in stats:
            diag["chain_defect_max"] = float(stats["chain_defect"].max())
        return joint, marg, diag

    results = run_replicas(one_batch, batch_sizes(n_paths, batch_size), threads=threads)
    counts = np.sum([r[0] for r in results], axis=0)
    marginal = np.sum([r[1] for r in results], axis=0)
    diagnostics = {}
    defects = [r[2].get("chain_defect_max") for r in results if r[2]]
    if defects:
        diagnostics["chain_defect_max"] = float(max(defects))

    joint_probs = counts / n_paths
    wilson = np.vectorize(lambda c: wilson_upper(int(c), n_paths))(counts)
    null_q = [q for qi, q in enumerate(q_grid) if np.all(counts[:, qi] == 0)]
    q_hat = max(null_q) if null_q else 0.0

    return SweepReport(
        scenario=scenario,
        hurst=H,
        eps_grid=eps_grid,
        q_grid=q_grid,
        n_paths=n_paths,
        counts=counts,
        joint_probs=joint_probs,
        wilson_upper=wilson,
        marginal_y_probs=marginal / n_paths,
        q_hat=float(q_hat),
        alpha_guidance=H * (1 - H) / ((1 + H) * (2 - H)),
        scale_table=[scale_choices(e, H).to_dict() for e in eps_grid],
        diagnostics=diagnostics,
    )
