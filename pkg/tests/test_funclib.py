import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from wsmpc.data import TimeSeries
from wsmpc.errors import DimensionMismatch, NonFiniteOutput
from wsmpc.funclib import (FunctionLibrary, Term, TermTag, build_drone_rotational_library,
                           build_drone_translational_library, build_poly_library, evaluate,
                           format_model)
from wsmpc.plants import QUAD
from wsmpc.rotations import quat_to_rotmat


class TestPolyLibrary:
    def test_one_dim_degree_two(self):
        assert build_poly_library(1, 0, 2).names == ("1", "x1", "x1^2")

    def test_linear_two_by_two(self):
        assert build_poly_library(2, 2, 1).names == ("1", "x1", "x2", "u1", "u2")

    @pytest.mark.parametrize("D,V,deg", [(3, 1, 2), (2, 1, 3), (4, 0, 2), (1, 1, 5)])
    def test_term_count(self, D, V, deg):
        lib = build_poly_library(D, V, deg)
        # enumerate exponent vectors independently
        n = sum(1 for e in np.ndindex(*([deg + 1] * (D + V))) if sum(e) <= deg)
        assert len(lib) == n == math.comb(D + V + deg, deg)

    def test_deterministic_order(self):
        assert build_poly_library(3, 1, 3).names == build_poly_library(3, 1, 3).names

    def test_lorenz_fixed_point_product(self):
        lib = build_poly_library(3, 1, 2)
        x = np.array([[-np.sqrt(72), -np.sqrt(72), 27.0]])
        row = lib.evaluate(x, np.zeros((1, 1)))[0]
        assert row[lib.names.index("x1*x2")] == pytest.approx(72.0, rel=1e-14)

    def test_small_examples(self):
        lib = build_poly_library(1, 0, 1)
        th = lib.evaluate(np.array([[2.0], [5.0]]), np.zeros((2, 0)))
        assert np.array_equal(th, [[1, 2], [1, 5]])
        lib = build_poly_library(1, 1, 2)
        th = lib.evaluate(np.array([[3.0]]), np.array([[4.0]]))[0]
        assert th[lib.names.index("x1*u1")] == 12.0

    @given(arrays(float, (4, 3), elements=st.floats(-3, 3)), st.floats(-2, 2))
    def test_homogeneity(self, Z, alpha):
        lib = build_poly_library(2, 1, 3)
        base = lib.evaluate(Z[:, :2], Z[:, 2:])
        scaled = lib.evaluate(alpha * Z[:, :2], alpha * Z[:, 2:])
        deg = lib.exponent_matrix().sum(axis=1)
        assert np.allclose(scaled, base * alpha ** deg, rtol=1e-12, atol=1e-12)

    @given(arrays(float, (8, 3), elements=st.floats(-5, 5)), st.integers(0, 7), st.integers(1, 8))
    def test_rowwise(self, Z, a, n):
        lib = build_poly_library(2, 1, 2)
        full = lib.evaluate(Z[:, :2], Z[:, 2:])
        b = min(a + n, 8)
        assert np.array_equal(lib.evaluate(Z[a:b, :2], Z[a:b, 2:]), full[a:b])


class TestErrors:
    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            build_poly_library(2, 1, 2).evaluate(np.zeros((3, 3)), np.zeros((3, 1)))

    def test_nonfinite(self):
        lib = build_poly_library(1, 0, 2).with_custom("inv", lambda X, U: np.full(X.shape[0], np.nan))
        with pytest.raises(NonFiniteOutput):
            lib.evaluate(np.array([[0.0]]), np.zeros((1, 0)))

    def test_duplicate_names(self):
        t = Term("a", TermTag("constant", (0,)))
        with pytest.raises(ValueError):
            FunctionLibrary([t, t], 1, 0)

    def test_negative_exponent(self):
        with pytest.raises(ValueError):
            TermTag("monomial", (-1,))


def test_custom_term_and_timeseries_evaluate():
    lib = build_poly_library(1, 1, 1).with_custom("sin", lambda X, U: np.sin(X[:, 0]))
    ts = TimeSeries.from_arrays([[0.5], [1.0]], [[2.0], [3.0]], 0.1)
    th = evaluate(lib, ts)
    assert th.shape == (2, 4)
    assert np.allclose(th[:, -1], np.sin([0.5, 1.0]))
    with pytest.raises(ValueError):
        lib.to_dict()


def test_serialization_round_trip():
    lib = build_drone_translational_library()
    back = FunctionLibrary.from_dict(lib.to_dict())
    assert back.names == lib.names and back.feature == lib.feature


class TestDroneLibraries:
    def test_translational_identity_quaternion(self):
        lib = build_drone_translational_library()
        th = lib.evaluate(np.zeros((1, 3)), np.array([[1.0, 0, 0, 0, 1.0]]))[0]
        assert np.array_equal(th[:3], [0, 0, 1])
        assert th[lib.names.index("1")] == 1.0
        assert np.all(th[4:] == 0)

    def test_translational_hover(self):
        lib = build_drone_translational_library()
        mg = QUAD.mass * QUAD.g
        th = lib.evaluate(np.zeros((1, 3)), np.array([[1.0, 0, 0, 0, mg]]))[0]
        assert th[2] == mg

    @given(arrays(float, 4, elements=st.floats(-1, 1)), st.floats(0.1, 20))
    def test_translational_rotation_column(self, q, F):
        if np.linalg.norm(q) < 1e-3:
            return
        q = q / np.linalg.norm(q)
        th = build_drone_translational_library().evaluate(np.zeros((1, 3)),
                                                          np.append(q, F)[None])[0]
        assert np.allclose(th[:3], quat_to_rotmat(q)[:, 2] * F, atol=1e-12)

    def test_rotational_examples(self):
        lib = build_drone_rotational_library()
        assert lib.names[:6] == ("Mx", "My", "Mz", "p*q", "p*r", "q*r")
        th = lib.evaluate(np.array([[1.0, 1.0, 0.0]]), np.zeros((1, 3)))[0]
        assert np.array_equal(th[3:6], [1, 0, 0])
        th = lib.evaluate(np.zeros((1, 3)), np.array([[1.0, 2.0, 3.0]]))[0]
        assert np.array_equal(th[:3], [1, 2, 3])

    def test_declared_sizes(self):
        assert len(build_drone_translational_library()) == 13
        assert len(build_drone_rotational_library()) == 13


def test_format_model():
    lib = build_poly_library(1, 1, 1)
    text = format_model(lib, np.array([[0.0], [-1.23456789], [2.0]]))
    assert text == "dx1/dt = -1.23457*x1 + 2*u1"
    assert format_model(lib, np.zeros((3, 1))) == "dx1/dt = 0"
