"""Command-line interface: experiment subcommands, manifests, replay.

Every run resolves its parameters, executes deterministically from the root
seed, writes its outputs, and drops a sidecar manifest with checksums.
`fbmlab replay <manifest>` re-runs the recorded command into a scratch
directory and verifies byte identity.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .fbm import TimeGrid, sample_array
from .fields import BUILTIN_SYSTEMS, load_system
from .manifest import (
    file_sha256,
    load_manifest,
    write_envelope,
    write_sidecar,
)
from .rng import substream

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_MISMATCH = 3


# ---------------------------------------------------------------------------
# Parameter parsing helpers
# ---------------------------------------------------------------------------

def parse_grid(spec: str) -> list:
    """Grid specs: 'a,b,c' literal, 'a:b:Nlog' geometric, 'a:b:N' linear,
    'a:b:log' geometric by decades."""
    spec = spec.strip()
    if ":" in spec:
        lo_s, hi_s, n_s = spec.split(":")
        lo, hi = float(lo_s), float(hi_s)
        if n_s == "log":
            decades = int(round(abs(math.log10(hi / lo))))
            return [float(v) for v in np.geomspace(lo, hi, decades + 1)]
        if n_s.endswith("log"):
            return [float(v) for v in np.geomspace(lo, hi, int(n_s[:-3]))]
        return [float(v) for v in np.linspace(lo, hi, int(n_s))]
    return [float(v) for v in spec.split(",") if v]


def parse_point(spec: str) -> list:
    return [float(v) for v in spec.split(",")]


def _fmt(x) -> str:
    return repr(float(x))


def _config_digest(path_or_name: str) -> dict:
    p = Path(path_or_name)
    if p.exists():
        return {str(path_or_name): file_sha256(p)}
    return {str(path_or_name): "builtin"}


def _resolve_system(params):
    sys_obj = load_system(params["config"])
    x0 = params.get("x0")
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float)
    elif sys_obj.x0 is not None:
        x0 = sys_obj.x0
    else:
        x0 = np.zeros(sys_obj.n)
    return sys_obj, x0


def _out_path(params, out_dir):
    out = Path(params["out"])
    if out_dir is not None:
        out = Path(out_dir) / out.name
    return out


# ---------------------------------------------------------------------------
# Runners (shared by dispatch and replay)
# ---------------------------------------------------------------------------

def run_fbm_sample(params: dict, out_dir=None, threads: int = 1):
    grid = TimeGrid(int(params["steps"]), float(params.get("horizon", 1.0)))
    dim = int(params["dim"])
    n_paths = int(params["paths"])
    method = params["method"]
    seed = int(params["seed"])
    rng = substream(seed, f"fbm.{method}")
    values = sample_array(float(params["hurst"]), grid, dim, n_paths, rng, method=method)
    out = _out_path(params, out_dir)
    nodes = grid.nodes()
    with open(out, "w") as fh:
        fh.write("t," + ",".join(f"comp_{i}" for i in range(dim)) + ",path_id\n")
        for p in range(n_paths):
            for k in range(grid.n_nodes):
                row = [_fmt(nodes[k])] + [_fmt(values[p, i, k]) for i in range(dim)]
                fh.write(",".join(row) + f",{p}\n")
    write_sidecar(out, ["fbm", "sample"], params, seed, [out])
    return [out]


def run_sde_solve(params: dict, out_dir=None, threads: int = 1):
    from .sde import solve_batch

    sys_obj, x0 = _resolve_system(params)
    grid = TimeGrid(int(params["steps"]))
    n_paths = int(params["paths"])
    seed = int(params["seed"])
    scheme = params.get("scheme", "heun")
    rng = substream(seed, "cli.sde.solve")
    drivers = sample_array(float(params["hurst"]), grid, sys_obj.d, n_paths, rng)
    dB = np.diff(drivers, axis=2).transpose(0, 2, 1)
    X, _, _ = solve_batch(sys_obj, x0, dB, grid.mesh, scheme=scheme)
    out = _out_path(params, out_dir)
    nodes = grid.nodes()
    with open(out, "w") as fh:
        fh.write("t," + ",".join(f"x_{i}" for i in range(sys_obj.n)) + ",path_id\n")
        for p in range(n_paths):
            for k in range(grid.n_nodes):
                row = [_fmt(nodes[k])] + [_fmt(X[p, k, i]) for i in range(sys_obj.n)]
                fh.write(",".join(row) + f",{p}\n")
    write_sidecar(out, ["sde", "solve"], params, seed, [out],
                  _config_digest(params["config"]))
    return [out]


def run_frac_check_reprh(params: dict, out_dir=None, threads: int = 1):
    from .frachilbert import representation_report

    seed = int(params["seed"])
    report = representation_report(
        float(params["hurst"]), n_steps=int(params["steps"]),
        n_pairs=int(params["pairs"]), seed=seed,
        horizon=float(params.get("horizon", 8.0)),
    )
    out = _out_path(params, out_dir)
    write_envelope(out, ["frac", "check-reprh"], report, params, seed)
    return [out]


def run_malliavin_gamma(params: dict, out_dir=None, threads: int = 1):
    from .fbm import sample_cholesky
    from .malliavin import build_report, gram_matrix
    from .sde import solve_variation

    sys_obj, x0 = _resolve_system(params)
    seed = int(params["seed"])
    hurst = float(params["hurst"])
    grid = TimeGrid(int(params["steps"]))
    driver = sample_cholesky(hurst, grid, dim=sys_obj.d, n_paths=1, seed=seed)[0]
    sol = solve_variation(sys_obj, x0, driver, scheme=params.get("scheme", "heun"))
    rep = build_report(sol, sys_obj, hurst)
    gram = gram_matrix(sol, sys_obj, hurst)
    scale = max(float(np.max(np.abs(rep.gamma))), 1e-300)
    payload = rep.to_dict()
    payload["gram"] = gram.tolist()
    payload["gram_max_rel_diff"] = float(np.max(np.abs(gram - rep.gamma))) / scale
    payload["inverse_defect"] = sol.inverse_defect
    out = _out_path(params, out_dir)
    write_envelope(out, ["malliavin", "gamma"], payload, params, seed,
                   config_digests=_config_digest(params["config"]))
    return [out]


def run_malliavin_probe(params: dict, out_dir=None, threads: int = 1):
    from .malliavin import eigen_probe

    sys_obj, x0 = _resolve_system(params)
    seed = int(params["seed"])
    rep = eigen_probe(
        sys_obj, x0, float(params["hurst"]), params["eps"],
        n_paths=int(params["paths"]), seed=seed,
        n_steps=int(params["steps"]), threads=threads,
    )
    out = _out_path(params, out_dir)
    write_envelope(out, ["malliavin", "probe"], rep.to_dict(), params, seed,
                   config_digests=_config_digest(params["config"]))
    return [out]


def run_norris_sweep(params: dict, out_dir=None, threads: int = 1):
    from .norris import norris_sweep

    seed = int(params["seed"])
    system = None
    digests = None
    if params.get("config"):
        system, _ = _resolve_system(params)
        digests = _config_digest(params["config"])
    rep = norris_sweep(
        params["scenario"], float(params["hurst"]), params["eps"],
        n_paths=int(params["paths"]), seed=seed,
        n_steps=int(params["steps"]), system=system, threads=threads,
    )
    out = _out_path(params, out_dir)
    write_envelope(out, ["norris", "sweep"], rep.to_dict(), params, seed,
                   config_digests=digests)
    return [out]


def run_norris_concentration(params: dict, out_dir=None, threads: int = 1):
    from .norris import CoarseQvConfig, concentration_experiment, hs_bound_check

    seed = int(params["seed"])
    cfg = CoarseQvConfig(delta=float(params["delta"]), Delta=float(params["Delta"]))
    payload = {
        "concentration": concentration_experiment(
            float(params["hurst"]), cfg, n_paths=int(params["paths"]), seed=seed
        ),
        "hs_bound": hs_bound_check(float(params["hurst"]), cfg),
    }
    out = _out_path(params, out_dir)
    write_envelope(out, ["norris", "concentration"], payload, params, seed)
    return [out]


def run_hormander_check(params: dict, out_dir=None, threads: int = 1):
    from .hormander import hormander_check, strong_hormander_flag

    sys_obj = load_system(params["fields"])
    point = np.asarray(params["point"], dtype=float)
    mode = params.get("mode", "weak")
    max_level = int(params.get("max_level", 5))
    if mode == "weak":
        payload = hormander_check(sys_obj, point, max_level, mode="weak").to_dict()
    else:
        payload = strong_hormander_flag(sys_obj, point, level_cap=max_level).to_dict()
    payload["mode"] = mode
    out = _out_path(params, out_dir)
    write_envelope(out, ["hormander", "check"], payload, params,
                   seed=int(params.get("seed", 0)),
                   config_digests=_config_digest(params["fields"]))
    return [out]


def run_smalltime_exponent(params: dict, out_dir=None, threads: int = 1):
    from .smalltime import density_estimate, exponent_fit

    sys_obj, x0 = _resolve_system(params)
    seed = int(params["seed"])
    rep = density_estimate(
        sys_obj, x0, float(params["hurst"]), params["tgrid"],
        n_paths=int(params["paths"]), seed=seed,
        n_steps=int(params["steps"]), threads=threads,
    )
    payload = rep.to_dict()
    payload["fit_kde"] = exponent_fit(rep.kde, rep.t_grid, rep.kde_se)
    payload["fit_knn"] = exponent_fit(rep.knn, rep.t_grid)
    out = _out_path(params, out_dir)
    write_envelope(out, ["smalltime", "exponent"], payload, params, seed,
                   config_digests=_config_digest(params["config"]))
    return [out]


RUNNERS = {
    ("fbm", "sample"): run_fbm_sample,
    ("sde", "solve"): run_sde_solve,
    ("frac", "check-reprh"): run_frac_check_reprh,
    ("malliavin", "gamma"): run_malliavin_gamma,
    ("malliavin", "probe"): run_malliavin_probe,
    ("norris", "sweep"): run_norris_sweep,
    ("norris", "concentration"): run_norris_concentration,
    ("hormander", "check"): run_hormander_check,
    ("smalltime", "exponent"): run_smalltime_exponent,
}


def run_replay(manifest_path: str, out_dir=None, threads: int = 1) -> int:
    """Re-run a recorded command and compare output checksums."""
    man = load_manifest(manifest_path)
    command = tuple(man["command"])
    if command not in RUNNERS:
        raise ValueError(f"manifest records unknown command {command}")
    for cfg_path, digest in man.get("config_digests", {}).items():
        if digest == "builtin":
            continue
        p = Path(cfg_path)
        if not p.exists():
            raise FileNotFoundError(f"config file referenced by manifest not found: {cfg_path}")
        if file_sha256(p) != digest:
            print(json.dumps({"error": "config file changed since recording",
                              "path": cfg_path}), file=sys.stderr)
            return EXIT_MISMATCH
    scratch = Path(out_dir) if out_dir else Path(tempfile.mkdtemp(prefix="fbmlab-replay-"))
    scratch.mkdir(parents=True, exist_ok=True)
    outputs = RUNNERS[command](dict(man["params"]), out_dir=scratch, threads=threads)
    produced = {Path(o).name: file_sha256(o) for o in outputs}
    ok = True
    for entry in man["outputs"]:
        got = produced.get(entry["path"])
        match = got == entry["sha256"]
        ok &= match
        print(json.dumps({"path": entry["path"], "recorded": entry["sha256"],
                          "replayed": got, "match": match}))
    return EXIT_OK if ok else EXIT_MISMATCH


# ---------------------------------------------------------------------------
# Argument parser
# ---------------------------------------------------------------------------

def _add_common(p, config=False, steps_default=256):
    if config:
        p.add_argument("--config", required=True,
                       help="system JSON file or builtin name "
                            f"({', '.join(sorted(BUILTIN_SYSTEMS))})")
    p.add_argument("--hurst", type=float, required=True)
    p.add_argument("--steps", type=int, default=steps_default)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fbmlab", description=__doc__)
    ap.add_argument("--threads", type=int,
                    default=int(os.environ.get("FBMLAB_THREADS", "1")),
                    help="worker threads for Monte Carlo batches "
                         "(never affects results)")
    ap.add_argument("--version", action="version", version=f"fbmlab {__version__}")
    sub = ap.add_subparsers(dest="group", required=True)

    g = sub.add_parser("fbm").add_subparsers(dest="cmd", required=True)
    p = g.add_parser("sample", help="sample fBm paths to CSV")
    _add_common(p)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--paths", type=int, default=1)
    p.add_argument("--method", choices=["cholesky", "volterra"], default="cholesky")
    p.add_argument("--horizon", type=float, default=1.0)

    g = sub.add_parser("sde").add_subparsers(dest="cmd", required=True)
    p = g.add_parser("solve", help="solve an SDE over sampled drivers to CSV")
    _add_common(p, config=True)
    p.add_argument("--paths", type=int, default=1)
    p.add_argument("--scheme", choices=["euler", "heun"], default="heun")

    g = sub.add_parser("frac").add_subparsers(dest="cmd", required=True)
    p = g.add_parser("check-reprh", help="inner-product representation equivalence report")
    _add_common(p, steps_default=1024)
    p.add_argument("--pairs", type=int, default=50)
    p.add_argument("--horizon", type=float, default=8.0)

    g = sub.add_parser("malliavin").add_subparsers(dest="cmd", required=True)
    p = g.add_parser("gamma", help="covariance matrices for one driver path")
    _add_common(p, config=True)
    p.add_argument("--scheme", choices=["euler", "heun"], default="heun")
    p = g.add_parser("probe", help="Monte Carlo nondegeneracy probe")
    _add_common(p, config=True)
    p.add_argument("--eps", type=parse_grid, required=True,
                   help="eps grid, e.g. 1e-1,1e-2,1e-3 or 1e-1:1e-4:log")
    p.add_argument("--paths", type=int, default=1000)

    g = sub.add_parser("norris").add_subparsers(dest="cmd", required=True)
    p = g.add_parser("sweep", help="joint smallness sweep over (eps, q)")
    _add_common(p)
    p.add_argument("--eps", type=parse_grid, required=True)
    p.add_argument("--paths", type=int, default=1000)
    p.add_argument("--scenario", default="pullback",
                   choices=["pure-noise", "pure-drift", "degenerate", "pullback"])
    p.add_argument("--config", default=None,
                   help="system for the pullback scenario (default heisenberg)")
    p = g.add_parser("concentration", help="block-statistic concentration report")
    _add_common(p)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--Delta", type=float, required=True)
    p.add_argument("--paths", type=int, default=10000)

    g = sub.add_parser("hormander").add_subparsers(dest="cmd", required=True)
    p = g.add_parser("check", help="bracket span test / canonical flag at a point")
    p.add_argument("--fields", required=True, help="system JSON file or builtin name")
    p.add_argument("--point", type=parse_point, required=True)
    p.add_argument("--max-level", type=int, default=5, dest="max_level")
    p.add_argument("--mode", choices=["weak", "strong"], default="weak")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    g = sub.add_parser("smalltime").add_subparsers(dest="cmd", required=True)
    p = g.add_parser("exponent", help="small-time density exponent fit")
    _add_common(p, config=True, steps_default=128)
    p.add_argument("--tgrid", type=parse_grid, default="0.02:0.5:8log",
                   help="horizon grid, e.g. 0.02:0.5:8log")
    p.add_argument("--paths", type=int, default=100000)

    p = sub.add_parser("replay", help="re-run a manifest and verify outputs")
    p.add_argument("manifest")
    p.add_argument("--out-dir", default=None)

    return ap


_PARAM_KEYS = {
    ("fbm", "sample"): ["hurst", "dim", "steps", "paths", "seed", "method", "horizon", "out"],
    ("sde", "solve"): ["config", "hurst", "steps", "paths", "seed", "scheme", "out"],
    ("frac", "check-reprh"): ["hurst", "steps", "pairs", "seed", "horizon", "out"],
    ("malliavin", "gamma"): ["config", "hurst", "steps", "seed", "scheme", "out"],
    ("malliavin", "probe"): ["config", "hurst", "eps", "paths", "steps", "seed", "out"],
    ("norris", "sweep"): ["scenario", "hurst", "eps", "paths", "steps", "seed", "config", "out"],
    ("norris", "concentration"): ["hurst", "delta", "Delta", "paths", "seed", "out"],
    ("hormander", "check"): ["fields", "point", "max_level", "mode", "seed", "out"],
    ("smalltime", "exponent"): ["config", "hurst", "tgrid", "paths", "steps", "seed", "out"],
}


def dispatch(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.group == "replay":
            return run_replay(args.manifest, out_dir=args.out_dir, threads=args.threads)
        key = (args.group, args.cmd)
        if isinstance(getattr(args, "tgrid", None), str):
            args.tgrid = parse_grid(args.tgrid)
        params = {k: getattr(args, k) for k in _PARAM_KEYS[key] if getattr(args, k, None) is not None}
        if "Delta" in _PARAM_KEYS[key]:
            params["Delta"] = args.Delta
        t0 = time.time()
        outputs = RUNNERS[key](params, threads=args.threads)
        print(json.dumps({"ok": True, "outputs": [str(o) for o in outputs],
                          "seconds": round(time.time() - t0, 3)}), file=sys.stderr)
        return EXIT_OK
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(json.dumps({"error": str(exc), "type": type(exc).__name__}), file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # pragma: no cover - defensive
        print(json.dumps({"error": str(exc), "type": type(exc).__name__}), file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
