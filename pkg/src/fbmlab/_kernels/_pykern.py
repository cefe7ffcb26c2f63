"""NumPy implementations of the hot kernels.

This is the fallback backend; `_ckern.pyx` implements the same functions in
Cython with identical signatures and step-for-step identical arithmetic
(results agree to floating-point associativity, not bit-for-bit).

Polynomial vector field systems arrive packed as flat term arrays:

    fc[t]    coefficient of term t
    fe[t,i]  exponent of x_i in term t
    fcomp[t] output component of term t
    fidx[t]  field index: 0 = drift, 1..d = diffusion fields

and analogously (jc, je, jrow, jcol, jidx) for the exact Jacobians, where
(jrow, jcol) address the (n, n) Jacobian entry.
"""

from __future__ import annotations

import numpy as np


def _monomials(x: np.ndarray, coeff: np.ndarray, expo: np.ndarray) -> np.ndarray:
    """Evaluate all terms at x (P, n); returns (T, P)."""
    P = x.shape[0]
    T = coeff.shape[0]
    out = np.repeat(coeff[:, None], P, axis=1)
    for t in range(T):
        for i in range(x.shape[1]):
            e = expo[t, i]
            if e == 1:
                out[t] *= x[:, i]
            elif e > 1:
                out[t] *= x[:, i] ** e
    return out


def _eval_fields(x, n, d, fc, fe, fcomp, fidx):
    """Drift (P, n) and diffusion (P, n, d) field values at states x (P, n)."""
    P = x.shape[0]
    drift = np.zeros((P, n))
    diff = np.zeros((P, n, d))
    vals = _monomials(x, fc, fe)
    for t in range(fc.shape[0]):
        if fidx[t] == 0:
            drift[:, fcomp[t]] += vals[t]
        else:
            diff[:, fcomp[t], fidx[t] - 1] += vals[t]
    return drift, diff


def _eval_da(x, dt, db_k, n, jc, je, jrow, jcol, jidx):
    """One-step linearization increment dA (P, n, n).

    dA = D(drift)(x) dt + sum_j D(V_j)(x) dB^j_k; combining the weights here
    avoids materializing per-field Jacobians.
    """
    P = x.shape[0]
    da = np.zeros((P, n, n))
    vals = _monomials(x, jc, je)
    for t in range(jc.shape[0]):
        if jidx[t] == 0:
            w = vals[t] * dt
        else:
            w = vals[t] * db_k[:, jidx[t] - 1]
        da[:, jrow[t], jcol[t]] += w
    return da


def solve_batch(dB, x0, dt, n, d, fc, fe, fcomp, fidx,
                jc, je, jrow, jcol, jidx, scheme, want_var):
    """Pathwise explicit solve of dX = V0(X) dt + sum_j V_j(X) dB^j.

    dB: (P, S, d) driver increments.  scheme: 0 = Euler, 1 = Heun
    (trapezoid predictor-corrector).  With want_var, also propagates the
    first-variation flow dJ = dA J and its inverse flow dK = -K dA.

    Returns (X, J, K); J and K are None unless want_var.
    """
    P, S, _ = dB.shape
    X = np.empty((P, S + 1, n))
    X[:, 0, :] = x0
    J = K = None
    if want_var:
        eye = np.eye(n)
        J = np.empty((P, S + 1, n, n))
        K = np.empty((P, S + 1, n, n))
        J[:, 0] = eye
        K[:, 0] = eye

    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(S):
            xk = X[:, k, :]
            db_k = dB[:, k, :]
            d0, s0 = _eval_fields(xk, n, d, fc, fe, fcomp, fidx)
            dx0 = d0 * dt + np.einsum("pij,pj->pi", s0, db_k)
            if want_var:
                da0 = _eval_da(xk, dt, db_k, n, jc, je, jrow, jcol, jidx)
            if scheme == 0:
                X[:, k + 1, :] = xk + dx0
                if want_var:
                    J[:, k + 1] = J[:, k] + da0 @ J[:, k]
                    K[:, k + 1] = K[:, k] - K[:, k] @ da0
            else:
                xp = xk + dx0
                d1, s1 = _eval_fields(xp, n, d, fc, fe, fcomp, fidx)
                dx1 = d1 * dt + np.einsum("pij,pj->pi", s1, db_k)
                X[:, k + 1, :] = xk + 0.5 * (dx0 + dx1)
                if want_var:
                    da1 = _eval_da(xp, dt, db_k, n, jc, je, jrow, jcol, jidx)
                    jp = J[:, k] + da0 @ J[:, k]
                    J[:, k + 1] = J[:, k] + 0.5 * (da0 @ J[:, k] + da1 @ jp)
                    kp = K[:, k] - K[:, k] @ da0
                    K[:, k + 1] = K[:, k] - 0.5 * (K[:, k] @ da0 + kp @ da1)
    return X, J, K


def c1_contract(w_abs, A):
    """M = sum_{u,v} w_abs[|u-v|] A_u A_v^T for A of shape (S, n, d)."""
    S, n, d = A.shape
    W = _toeplitz(w_abs, S)
    t1 = W @ A.reshape(S, n * d)
    return np.einsum("upj,uqj->pq", A, t1.reshape(S, n, d))


def c1_contract_batch(w_abs, A):
    """Batched c1_contract; A of shape (P, S, n, d) -> (P, n, n)."""
    P, S, n, d = A.shape
    W = _toeplitz(w_abs, S)
    out = np.empty((P, n, n))
    for p in range(P):
        t1 = W @ A[p].reshape(S, n * d)
        out[p] = np.einsum("upj,uqj->pq", A[p], t1.reshape(S, n, d))
    return out


def h_inner_toeplitz(w_abs, u, v):
    """sum_{j,k} w_abs[|j-k|] <u_j, v_k> for cell values u, v of shape (S, c)."""
    S = u.shape[0]
    W = _toeplitz(w_abs, S)
    return float(np.sum(u * (W @ v)))


def _toeplitz(w_abs, S):
    idx = np.abs(np.arange(S)[:, None] - np.arange(S)[None, :])
    return w_abs[idx]


def holder_norm(values, times, alpha):
    """max over i<j of |v_j - v_i| / (t_j - t_i)^alpha (Euclidean for vectors)."""
    v = values if values.ndim == 2 else values[:, None]
    m = v.shape[0]
    best = 0.0
    for i in range(m - 1):
        num = np.sqrt(np.sum((v[i + 1:] - v[i]) ** 2, axis=1))
        den = (times[i + 1:] - times[i]) ** alpha
        r = np.max(num / den)
        if r > best:
            best = float(r)
    return best


def holder_norm_batch(values, times, alpha):
    """Per-row Holder seminorm for scalar paths stacked as (P, m)."""
    P, m = values.shape
    best = np.zeros(P)
    for i in range(m - 1):
        num = np.abs(values[:, i + 1:] - values[:, i:i + 1])
        den = (times[i + 1:] - times[i]) ** alpha
        np.maximum(best, np.max(num / den, axis=1), out=best)
    return best
