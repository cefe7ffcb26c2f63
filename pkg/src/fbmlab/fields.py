"""Polynomial vector fields on R^n, closed under differentiation and Lie bracket.

Coefficient arithmetic preserves the input number type (int, Fraction,
float), so brackets and Jacobians of integer-coefficient fields are exact
and algebraic identities (antisymmetry, Jacobi) hold to equality, not just
to rounding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np


class Poly:
    """Sparse multivariate polynomial: {exponent tuple: coefficient}."""

    __slots__ = ("n", "terms")

    def __init__(self, n: int, terms: dict | None = None):
        self.n = n
        self.terms = {}
        if terms:
            for e, c in terms.items():
                if c != 0:
                    e = tuple(int(v) for v in e)
                    if len(e) != n or any(v < 0 for v in e):
                        raise ValueError(f"bad exponent tuple {e} for n={n}")
                    self.terms[e] = self.terms.get(e, 0) + c
            self.terms = {e: c for e, c in self.terms.items() if c != 0}

    @classmethod
    def constant(cls, n: int, c) -> "Poly":
        return cls(n, {(0,) * n: c})

    @classmethod
    def monomial(cls, n: int, coeff, exps) -> "Poly":
        return cls(n, {tuple(exps): coeff})

    def __add__(self, other: "Poly") -> "Poly":
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0) + c
        return Poly(self.n, out)

    def __neg__(self) -> "Poly":
        return Poly(self.n, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other: "Poly") -> "Poly":
        return self + (-other)

    def __mul__(self, other) -> "Poly":
        if isinstance(other, Poly):
            out: dict = {}
            for e1, c1 in self.terms.items():
                for e2, c2 in other.terms.items():
                    e = tuple(a + b for a, b in zip(e1, e2))
                    out[e] = out.get(e, 0) + c1 * c2
            return Poly(self.n, out)
        return Poly(self.n, {e: c * other for e, c in self.terms.items()})

    __rmul__ = __mul__

    def diff(self, i: int) -> "Poly":
        out = {}
        for e, c in self.terms.items():
            if e[i] > 0:
                de = list(e)
                de[i] -= 1
                out[tuple(de)] = out.get(tuple(de), 0) + c * e[i]
        return Poly(self.n, out)

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        tot = 0.0
        for e, c in self.terms.items():
            v = float(c)
            for i, ei in enumerate(e):
                if ei:
                    v *= x[i] ** ei
            tot += v
        return tot

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def key(self):
        """Canonical hashable form (used to deduplicate bracket fields)."""
        return tuple(sorted((e, c) for e, c in self.terms.items()))

    def __eq__(self, other):
        return isinstance(other, Poly) and self.n == other.n and self.terms == other.terms

    def __hash__(self):
        return hash((self.n, self.key()))

    def __repr__(self):
        if not self.terms:
            return "0"
        bits = []
        for e, c in sorted(self.terms.items()):
            mono = "*".join(f"x{i}^{v}" if v > 1 else f"x{i}" for i, v in enumerate(e) if v)
            bits.append(f"{c}" + (f"*{mono}" if mono else ""))
        return " + ".join(bits)


class VectorField:
    """Polynomial map R^n -> R^n given by one Poly per component."""

    __slots__ = ("components", "_jac")

    def __init__(self, components):
        self.components = tuple(components)
        if not self.components:
            raise ValueError("vector field needs at least one component")
        n = self.components[0].n
        if any(p.n != n for p in self.components) or len(self.components) != n:
            raise ValueError("vector field components must map R^n -> R^n")
        self._jac = None

    @classmethod
    def from_arrays(cls, n: int, monomials) -> "VectorField":
        """monomials: per component, a list of {'coeff': c, 'exps': [..]} dicts."""
        comps = []
        for comp in monomials:
            p = Poly(n)
            for m in comp:
                p = p + Poly.monomial(n, m["coeff"], m["exps"])
            comps.append(p)
        return cls(comps)

    @classmethod
    def zero(cls, n: int) -> "VectorField":
        return cls([Poly(n) for _ in range(n)])

    @classmethod
    def constant(cls, vec) -> "VectorField":
        n = len(vec)
        return cls([Poly.constant(n, v) for v in vec])

    @property
    def n(self) -> int:
        return len(self.components)

    @property
    def is_zero(self) -> bool:
        return all(p.is_zero for p in self.components)

    def jacobian(self):
        """DV as an n x n grid of Poly (row = component, col = variable)."""
        if self._jac is None:
            self._jac = tuple(
                tuple(p.diff(i) for i in range(self.n)) for p in self.components
            )
        return self._jac

    def evaluate(self, x) -> np.ndarray:
        return np.array([p(x) for p in self.components])

    def evaluate_jacobian(self, x) -> np.ndarray:
        jac = self.jacobian()
        return np.array([[jac[r][c](x) for c in range(self.n)] for r in range(self.n)])

    def key(self):
        return tuple(p.key() for p in self.components)

    def to_monomials(self):
        return [
            [{"coeff": _plain_number(c), "exps": list(e)} for e, c in sorted(p.terms.items())]
            for p in self.components
        ]

    def __repr__(self):
        return "(" + ", ".join(repr(p) for p in self.components) + ")"


def lie_bracket(V: VectorField, W: VectorField) -> VectorField:
    """[V, W] = DW V - DV W, exact on polynomial fields."""
    if V.n != W.n:
        raise ValueError("bracket of fields on different spaces")
    n = V.n
    dW = W.jacobian()
    dV = V.jacobian()
    comps = []
    for c in range(n):
        p = Poly(n)
        for a in range(n):
            p = p + dW[c][a] * V.components[a] - dV[c][a] * W.components[a]
        comps.append(p)
    return VectorField(comps)


def _plain_number(c):
    if isinstance(c, Fraction):
        return float(c)
    if isinstance(c, (int, float)):
        return c
    return float(c)


@dataclass
class SystemPack:
    """Flat term arrays consumed by the compute kernels."""

    n: int
    d: int
    fc: np.ndarray
    fe: np.ndarray
    fcomp: np.ndarray
    fidx: np.ndarray
    jc: np.ndarray
    je: np.ndarray
    jrow: np.ndarray
    jcol: np.ndarray
    jidx: np.ndarray


@dataclass
class VectorFieldSystem:
    """Drift V0 (optional) plus diffusion fields V_1..V_d on R^n."""

    n: int
    d: int
    fields: list
    drift: VectorField | None = None
    x0: np.ndarray | None = None
    name: str = ""
    _pack: SystemPack | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if len(self.fields) != self.d:
            raise ValueError(f"expected {self.d} diffusion fields, got {len(self.fields)}")
        for V in self.fields:
            if V.n != self.n:
                raise ValueError("diffusion field dimension mismatch")
        if self.drift is not None and self.drift.n != self.n:
            raise ValueError("drift dimension mismatch")
        if self.x0 is not None:
            self.x0 = np.asarray(self.x0, dtype=float)
            if self.x0.shape != (self.n,):
                raise ValueError("x0 dimension mismatch")

    @property
    def has_drift(self) -> bool:
        return self.drift is not None and not self.drift.is_zero

    def all_fields(self):
        """(index, field) pairs with index 0 = drift (if any), 1..d = diffusion."""
        out = []
        if self.drift is not None:
            out.append((0, self.drift))
        out.extend((j + 1, V) for j, V in enumerate(self.fields))
        return out

    def pack(self) -> SystemPack:
        if self._pack is None:
            fc, fe, fcomp, fidx = [], [], [], []
            jc, je, jrow, jcol, jidx = [], [], [], [], []
            for idx, V in self.all_fields():
                for comp, p in enumerate(V.components):
                    for e, c in sorted(p.terms.items()):
                        fc.append(float(c))
                        fe.append(e)
                        fcomp.append(comp)
                        fidx.append(idx)
                jac = V.jacobian()
                for r in range(self.n):
                    for col in range(self.n):
                        for e, c in sorted(jac[r][col].terms.items()):
                            jc.append(float(c))
                            je.append(e)
                            jrow.append(r)
                            jcol.append(col)
                            jidx.append(idx)
            self._pack = SystemPack(
                n=self.n,
                d=self.d,
                fc=np.asarray(fc, dtype=np.float64),
                fe=np.asarray(fe, dtype=np.int64).reshape(len(fc), self.n),
                fcomp=np.asarray(fcomp, dtype=np.int32),
                fidx=np.asarray(fidx, dtype=np.int32),
                jc=np.asarray(jc, dtype=np.float64),
                je=np.asarray(je, dtype=np.int64).reshape(len(jc), self.n),
                jrow=np.asarray(jrow, dtype=np.int32),
                jcol=np.asarray(jcol, dtype=np.int32),
                jidx=np.asarray(jidx, dtype=np.int32),
            )
        return self._pack

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "d": self.d,
            "x0": None if self.x0 is None else [float(v) for v in self.x0],
            "drift": None if self.drift is None else self.drift.to_monomials(),
            "fields": [V.to_monomials() for V in self.fields],
            "name": self.name,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "VectorFieldSystem":
        n = int(obj["n"])
        d = int(obj["d"])
        drift = None
        if obj.get("drift"):
            drift = VectorField.from_arrays(n, obj["drift"])
        fields = [VectorField.from_arrays(n, f) for f in obj["fields"]]
        return cls(
            n=n, d=d, fields=fields, drift=drift,
            x0=obj.get("x0"), name=obj.get("name", ""),
        )


def eval_fields_batch(sys: VectorFieldSystem, states: np.ndarray):
    """Vectorized field evaluation at many states (M, n).

    Returns (drift, diffusion) of shapes (M, n) and (M, n, d).
    """
    pack = sys.pack()
    states = np.asarray(states, dtype=float)
    M = states.shape[0]
    drift = np.zeros((M, sys.n))
    diff = np.zeros((M, sys.n, sys.d))
    for t in range(pack.fc.shape[0]):
        val = np.full(M, pack.fc[t])
        for i in range(sys.n):
            e = pack.fe[t, i]
            if e == 1:
                val = val * states[:, i]
            elif e > 1:
                val = val * states[:, i] ** e
        if pack.fidx[t] == 0:
            drift[:, pack.fcomp[t]] += val
        else:
            diff[:, pack.fcomp[t], pack.fidx[t] - 1] += val
    return drift, diff


def eval_vectorfield_batch(V: VectorField, states: np.ndarray) -> np.ndarray:
    """Evaluate one field at many states; (M, n) -> (M, n)."""
    states = np.asarray(states, dtype=float)
    M = states.shape[0]
    out = np.zeros((M, V.n))
    for c, p in enumerate(V.components):
        for e, coeff in p.terms.items():
            val = np.full(M, float(coeff))
            for i, ei in enumerate(e):
                if ei == 1:
                    val = val * states[:, i]
                elif ei > 1:
                    val = val * states[:, i] ** ei
            out[:, c] += val
    return out


def substitute_linear(p: Poly, M: np.ndarray) -> Poly:
    """Compose a polynomial with the linear change of variables x = M y."""
    n = p.n
    rows = [Poly(n, {tuple(int(k == j) for k in range(n)): M[i, j] for j in range(n) if M[i, j] != 0})
            for i in range(n)]
    out = Poly(n)
    for e, c in p.terms.items():
        term = Poly.constant(n, c)
        for i, ei in enumerate(e):
            for _ in range(ei):
                term = term * rows[i]
        out = out + term
    return out


def conjugate_linear(V: VectorField, Q: np.ndarray) -> VectorField:
    """Push a field through the coordinate change y = Q x (Q invertible):
    the transformed field is y -> Q V(Q^{-1} y)."""
    Qinv = np.linalg.inv(Q)
    n = V.n
    subbed = [substitute_linear(p, Qinv) for p in V.components]
    comps = []
    for r in range(n):
        acc = Poly(n)
        for c in range(n):
            if Q[r, c] != 0:
                acc = acc + Q[r, c] * subbed[c]
        comps.append(acc)
    return VectorField(comps)


def rotate_system(sys: VectorFieldSystem, Q: np.ndarray) -> VectorFieldSystem:
    """Apply an invertible linear state change to every field and to x0."""
    return VectorFieldSystem(
        n=sys.n, d=sys.d,
        fields=[conjugate_linear(V, Q) for V in sys.fields],
        drift=None if sys.drift is None else conjugate_linear(sys.drift, Q),
        x0=None if sys.x0 is None else Q @ sys.x0,
        name=f"{sys.name}-rotated" if sys.name else "rotated",
    )


def save_system(sys: VectorFieldSystem, path) -> None:
    Path(path).write_text(json.dumps(sys.to_json_dict(), indent=2, sort_keys=True))


def load_system(path_or_name) -> VectorFieldSystem:
    """Load a system from a JSON file, or a builtin by name."""
    p = Path(path_or_name)
    if p.exists():
        return VectorFieldSystem.from_json_dict(json.loads(p.read_text()))
    name = str(path_or_name)
    if name in BUILTIN_SYSTEMS:
        return BUILTIN_SYSTEMS[name]()
    raise FileNotFoundError(
        f"system file not found: {path_or_name!r} (and it is not one of the builtins "
        f"{sorted(BUILTIN_SYSTEMS)})"
    )


# ---------------------------------------------------------------------------
# Builtin example systems; x0 is the conventional base point for each.
# ---------------------------------------------------------------------------

def heisenberg() -> VectorFieldSystem:
    """V1 = d/dx, V2 = d/dy + x1 d/dz; brackets reach e_z at level 2."""
    V1 = VectorField.from_arrays(3, [[{"coeff": 1, "exps": [0, 0, 0]}], [], []])
    V2 = VectorField.from_arrays(
        3, [[], [{"coeff": 1, "exps": [0, 0, 0]}], [{"coeff": 1, "exps": [1, 0, 0]}]]
    )
    return VectorFieldSystem(n=3, d=2, fields=[V1, V2], x0=np.zeros(3), name="heisenberg")


def grushin() -> VectorFieldSystem:
    """V1 = d/dx, V2 = x1 d/dy; rank drops to 1 on the axis x1 = 0."""
    V1 = VectorField.from_arrays(2, [[{"coeff": 1, "exps": [0, 0]}], []])
    V2 = VectorField.from_arrays(2, [[], [{"coeff": 1, "exps": [1, 0]}]])
    return VectorFieldSystem(n=2, d=2, fields=[V1, V2], x0=np.zeros(2), name="grushin")


def elliptic(n: int = 2) -> VectorFieldSystem:
    """Constant orthonormal fields V_i = e_i (elliptic at every point)."""
    fields = [VectorField.constant([1.0 if i == j else 0.0 for i in range(n)]) for j in range(n)]
    return VectorFieldSystem(n=n, d=n, fields=fields, x0=np.zeros(n), name=f"elliptic{n}")


def additive1d() -> VectorFieldSystem:
    """n = d = 1, V1 = 1: the solution is x0 + B_t."""
    V1 = VectorField.from_arrays(1, [[{"coeff": 1, "exps": [0]}]])
    return VectorFieldSystem(n=1, d=1, fields=[V1], x0=np.zeros(1), name="additive1d")


def linear1d() -> VectorFieldSystem:
    """n = d = 1, V1(x) = x: the solution is x0 * exp(B_t)."""
    V1 = VectorField.from_arrays(1, [[{"coeff": 1, "exps": [1]}]])
    return VectorFieldSystem(n=1, d=1, fields=[V1], x0=np.ones(1), name="linear1d")


def rank_deficient() -> VectorFieldSystem:
    """n = 2, V1 = e1, V2 = 0: the span never leaves the x-axis."""
    V1 = VectorField.from_arrays(2, [[{"coeff": 1, "exps": [0, 0]}], []])
    V2 = VectorField.zero(2)
    return VectorFieldSystem(n=2, d=2, fields=[V1, V2], x0=np.zeros(2), name="rank_deficient")


def quadratic2d() -> VectorFieldSystem:
    """Non-nilpotent test system: V1 = (1, 0), V2 = (0, x1^2)."""
    V1 = VectorField.from_arrays(2, [[{"coeff": 1, "exps": [0, 0]}], []])
    V2 = VectorField.from_arrays(2, [[], [{"coeff": 1, "exps": [2, 0]}]])
    return VectorFieldSystem(n=2, d=2, fields=[V1, V2], x0=np.zeros(2), name="quadratic2d")


BUILTIN_SYSTEMS = {
    "heisenberg": heisenberg,
    "grushin": grushin,
    "elliptic2d": lambda: elliptic(2),
    "elliptic3d": lambda: elliptic(3),
    "additive1d": additive1d,
    "linear1d": linear1d,
    "rank_deficient": rank_deficient,
    "quadratic2d": quadratic2d,
}
