"""Kernel backend dispatch.

The hot inner loops (pathwise SDE stepping, singular-kernel double sums,
all-pairs Holder norms) exist twice: a compiled Cython extension
(`_ckern`) and a NumPy fallback (`_pykern`).  The backend is chosen once at
import time; set FBMLAB_KERNEL_BACKEND to "c" or "python" to force one
(default "auto" prefers the extension when built).

Both backends implement the same arithmetic; `benchmarks/bench_kernels.py`
compares their speed and `tests/test_kernels.py` their agreement.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykern

_choice = os.environ.get("FBMLAB_KERNEL_BACKEND", "auto").lower()
if _choice not in ("auto", "c", "python", "py"):
    raise RuntimeError(f"FBMLAB_KERNEL_BACKEND must be auto|c|python, got {_choice!r}")

_impl = None
BACKEND = "python"
if _choice in ("auto", "c"):
    try:
        from . import _ckern as _impl  # type: ignore[attr-defined]

        BACKEND = "c"
    except ImportError:
        if _choice == "c":
            raise
if _impl is None:
    _impl = _pykern


def backend_name() -> str:
    return BACKEND


def available_backends():
    names = ["python"]
    try:
        from . import _ckern  # noqa: F401

        names.insert(0, "c")
    except ImportError:
        pass
    return names


def get_impl(name: str | None = None):
    """Implementation module by name (None = active backend)."""
    if name is None:
        return _impl
    if name in ("py", "python"):
        return _pykern
    if name == "c":
        from . import _ckern

        return _ckern
    raise ValueError(f"unknown backend {name!r}")


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def solve_batch(pack, x0, dt, dB, scheme="heun", want_variation=False, impl=None):
    """Solve a batch of driver paths; see `_pykern.solve_batch`.

    pack: a fields.SystemPack. dB: (P, S, d) increments. Returns (X, J, K).
    """
    mod = impl if impl is not None else _impl
    sch = {"euler": 0, "heun": 1}[scheme]
    dB = _f64(dB)
    if dB.ndim != 3 or dB.shape[2] != pack.d:
        raise ValueError(f"dB must have shape (P, S, {pack.d})")
    return mod.solve_batch(
        dB, _f64(x0), float(dt), pack.n, pack.d,
        pack.fc, pack.fe, pack.fcomp, pack.fidx,
        pack.jc, pack.je, pack.jrow, pack.jcol, pack.jidx,
        sch, bool(want_variation),
    )


def c1_contract(w_abs, A, impl=None):
    mod = impl if impl is not None else _impl
    return mod.c1_contract(_f64(w_abs), _f64(A))


def c1_contract_batch(w_abs, A, impl=None):
    mod = impl if impl is not None else _impl
    return mod.c1_contract_batch(_f64(w_abs), _f64(A))


def h_inner_toeplitz(w_abs, u, v, impl=None):
    mod = impl if impl is not None else _impl
    u = _f64(u)
    v = _f64(v)
    if u.ndim == 1:
        u = u[:, None]
    if v.ndim == 1:
        v = v[:, None]
    return mod.h_inner_toeplitz(_f64(w_abs), u, v)


def holder_norm(values, times, alpha, impl=None):
    mod = impl if impl is not None else _impl
    return mod.holder_norm(_f64(values), _f64(times), float(alpha))


def holder_norm_batch(values, times, alpha, impl=None):
    mod = impl if impl is not None else _impl
    return mod.holder_norm_batch(_f64(values), _f64(times), float(alpha))
