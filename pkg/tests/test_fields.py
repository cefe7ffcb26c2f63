"""Polynomial algebra, vector fields, packing, JSON round-trips."""

import json
from fractions import Fraction

import numpy as np
import pytest

from fbmlab.fields import (
    BUILTIN_SYSTEMS,
    Poly,
    VectorField,
    VectorFieldSystem,
    conjugate_linear,
    eval_fields_batch,
    eval_vectorfield_batch,
    heisenberg,
    lie_bracket,
    load_system,
    rotate_system,
    save_system,
)


class TestPoly:
    def test_exact_integer_arithmetic(self):
        p = Poly(2, {(1, 0): 2, (0, 2): -3})
        q = Poly(2, {(1, 0): -2, (0, 0): 5})
        s = p + q
        assert s.terms == {(0, 2): -3, (0, 0): 5}
        prod = p * q
        assert prod.terms[(2, 0)] == -4
        assert isinstance(prod.terms[(2, 0)], int)

    def test_fraction_coefficients_preserved(self):
        p = Poly(1, {(1,): Fraction(1, 3)})
        q = p * p
        assert q.terms[(2,)] == Fraction(1, 9)

    def test_diff(self):
        p = Poly(2, {(2, 1): 3})
        assert p.diff(0).terms == {(1, 1): 6}
        assert p.diff(1).terms == {(2, 0): 3}
        assert p.diff(0).diff(0).diff(0).is_zero

    def test_eval(self):
        p = Poly(2, {(1, 2): 2.0, (0, 0): 1.0})
        assert p([3.0, 2.0]) == pytest.approx(1.0 + 2.0 * 3.0 * 4.0)


class TestVectorField:
    def test_linear_field(self):
        V = VectorField([Poly(2, {(1, 0): 1}), Poly(2, {(0, 1): 1})])
        x = np.array([2.0, 3.0])
        assert np.allclose(V.evaluate(x), x)
        assert np.allclose(V.evaluate_jacobian(x), np.eye(2))

    def test_monomial_readoff(self):
        # V = (1, x1) at (0.5, 7)
        V = VectorField([Poly(2, {(0, 0): 1}), Poly(2, {(1, 0): 1})])
        assert np.allclose(V.evaluate([0.5, 7.0]), [1.0, 0.5])
        assert np.allclose(V.evaluate_jacobian([0.5, 7.0]), [[0, 0], [1, 0]])

    def test_jacobian_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        comps = [Poly(3, {tuple(rng.integers(0, 3, 3)): float(rng.standard_normal())
                          for _ in range(4)}) for _ in range(3)]
        V = VectorField(comps)
        for _ in range(5):
            x = rng.standard_normal(3)
            J = V.evaluate_jacobian(x)
            eps = 1e-6
            for i in range(3):
                b = np.zeros(3)
                b[i] = eps
                fd = (V.evaluate(x + b) - V.evaluate(x - b)) / (2 * eps)
                assert np.max(np.abs(fd - J[:, i])) <= 1e-6 * max(1.0, np.max(np.abs(J)))


class TestBatchEvaluation:
    def test_matches_pointwise(self):
        sys = heisenberg()
        rng = np.random.default_rng(0)
        X = rng.standard_normal((50, 3))
        drift, diff = eval_fields_batch(sys, X)
        assert np.allclose(drift, 0.0)
        for p in range(50):
            for j in range(2):
                assert np.allclose(diff[p, :, j], sys.fields[j].evaluate(X[p]))

    def test_single_field(self):
        sys = heisenberg()
        X = np.random.default_rng(1).standard_normal((20, 3))
        out = eval_vectorfield_batch(sys.fields[1], X)
        for p in range(20):
            assert np.allclose(out[p], sys.fields[1].evaluate(X[p]))


class TestSystemPack:
    def test_pack_roundtrip_evaluation(self):
        sys = heisenberg()
        pack = sys.pack()
        assert pack.n == 3 and pack.d == 2
        assert pack.fe.shape[1] == 3
        # jacobian terms: only V2 has a nonconstant component
        assert (pack.jc != 0).sum() == 1

    def test_json_roundtrip(self, tmp_path):
        sys = heisenberg()
        f = tmp_path / "sys.json"
        save_system(sys, f)
        back = load_system(f)
        assert back.n == sys.n and back.d == sys.d
        assert np.allclose(back.x0, sys.x0)
        x = np.array([0.3, -1.2, 0.5])
        for a, b in zip(back.fields, sys.fields):
            assert np.allclose(a.evaluate(x), b.evaluate(x))

    def test_builtin_lookup(self):
        for name in BUILTIN_SYSTEMS:
            s = load_system(name)
            assert s.n >= 1

    def test_missing_file_error_names_path(self):
        with pytest.raises(FileNotFoundError, match="no/such/file"):
            load_system("no/such/file.json")

    def test_dimension_validation(self):
        V1 = VectorField([Poly(2, {(0, 0): 1}), Poly(2)])
        with pytest.raises(ValueError):
            VectorFieldSystem(n=2, d=2, fields=[V1])


class TestLinearTransforms:
    def test_conjugation_consistency(self):
        # transformed field evaluated at Q x equals Q times original at x
        sys = heisenberg()
        rng = np.random.default_rng(4)
        Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        W = conjugate_linear(sys.fields[1], Q)
        for _ in range(5):
            x = rng.standard_normal(3)
            assert np.allclose(W.evaluate(Q @ x), Q @ sys.fields[1].evaluate(x), atol=1e-12)

    def test_rotate_system(self):
        sys = heisenberg()
        Q, _ = np.linalg.qr(np.random.default_rng(7).standard_normal((3, 3)))
        rot = rotate_system(sys, Q)
        assert np.allclose(rot.x0, Q @ sys.x0)
        assert rot.d == sys.d


class TestLieBracket:
    def test_self_bracket_vanishes(self):
        V = heisenberg().fields[1]
        assert lie_bracket(V, V).is_zero

    def test_hand_oracle(self):
        # V = d/dx, W = x1 d/dy: DW V = (0, 1), DV W = 0
        V = VectorField([Poly(2, {(0, 0): 1}), Poly(2)])
        W = VectorField([Poly(2), Poly(2, {(1, 0): 1})])
        b = lie_bracket(V, W)
        assert b.components[0].is_zero
        assert b.components[1].terms == {(0, 0): 1}

    def test_dimension_mismatch(self):
        V = VectorField([Poly(2, {(0, 0): 1}), Poly(2)])
        W = VectorField([Poly(1, {(0,): 1})])
        with pytest.raises(ValueError):
            lie_bracket(V, W)
