import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from artifact.liealg import (
    ChartError,
    FrameError,
    TrackParams,
    assemble,
    bracket,
    build_jordan_basis,
    catalog_frame,
    decompose_near_identity,
    expm,
    frame_residuals,
    group_distance,
    verify_sl2_triple,
)

U2 = np.array([[0.0, 1.0], [0.0, 0.0]])
A2 = np.diag([0.5, -0.5])
UB2 = np.array([[0.0, 0.0], [1.0, 0.0]])


def embed3(X):
    M = np.zeros((3, 3))
    M[:2, :2] = X
    return M


@pytest.fixture(scope="module")
def sl3():
    return catalog_frame("sl3")


def test_standard_triple_passes():
    assert verify_sl2_triple(U2, A2, UB2)["pass"]


def test_scaled_u_fails():
    rep = verify_sl2_triple(2 * U2, A2, UB2)
    assert not rep["pass"]
    assert rep["residuals"]["[U,Ubar]-2A"] == pytest.approx(np.linalg.norm(2 * A2))


def test_embedded_triple_passes():
    U, A, Ub = (embed3(X) for X in (U2, A2, UB2))
    # oracle: explicit matrix products
    assert np.allclose(A @ U - U @ A, U)
    assert np.allclose(A @ Ub - Ub @ A, -Ub)
    assert np.allclose(U @ Ub - Ub @ U, 2 * A)
    assert verify_sl2_triple(U, A, Ub)["pass"]


def test_dimension_mismatch_raises():
    with pytest.raises(FrameError):
        verify_sl2_triple(U2, embed3(A2), UB2)


def test_sl2_has_no_modules():
    assert catalog_frame("sl2").modules == ()


def test_sl2xsl2_three_trivial_modules():
    fr = catalog_frame("sl2xsl2")
    assert fr.module_dims == [0, 0, 0]


def _brute_string_dims(U, A):
    """Independent oracle: weights of ad(A) on ker(ad U) within the trace-orthogonal complement."""
    n = 3
    basis = []
    for i in range(n):
        for j in range(n):
            if i != j:
                E = np.zeros((n, n))
                E[i, j] = 1
                basis.append(E)
    basis.append(np.diag([1.0, -1.0, 0.0]))
    basis.append(np.diag([0.0, 1.0, -1.0]))
    B = np.stack([b.ravel() for b in basis], axis=1)
    triple = [U, A, U.T]
    K = np.array([[np.trace(x @ b) for b in basis] for x in triple])
    # complement m = {X : tr(X S) = 0 for S in triple}
    _, s, vt = np.linalg.svd(K)
    M = vt[np.sum(s > 1e-10):].T
    adU = np.column_stack([np.linalg.lstsq(B, (U @ (B @ m).reshape(n, n) - (B @ m).reshape(n, n) @ U).ravel(), rcond=None)[0] for m in M.T])
    # highest-weight vectors: kernel of ad U restricted to m
    _, s, vt = np.linalg.svd(adU)
    ker = vt[np.sum(s > 1e-10):].T
    dims = []
    for v in ker.T:
        X = (B @ (M @ v)).reshape(n, n)
        w = A @ X - X @ A
        lam = np.sum(w * X) / np.sum(X * X)
        dims.append(int(round(2 * lam)))
    return sorted(dims)


def test_sl3_module_dims(sl3):
    oracle = _brute_string_dims(embed3(U2), embed3(A2))
    assert oracle == [0, 1, 1]
    assert sorted(sl3.module_dims) == oracle


def test_sl3_frame_residuals(sl3):
    res = frame_residuals(sl3)
    assert max(res.values()) < 1e-10


def test_non_triple_rejected():
    with pytest.raises(FrameError):
        build_jordan_basis((2 * U2, A2, UB2), (2,))


def test_identity_seed_rejected():
    with pytest.raises(FrameError):
        build_jordan_basis((np.eye(2), A2, UB2), (2,))


def test_decompose_identity(sl3):
    p = decompose_near_identity(np.eye(3), sl3)
    assert np.allclose(p.vector(), 0, atol=1e-14)


def test_decompose_u(sl3):
    p = decompose_near_identity(sl3.u(0.1).matrix, sl3)
    assert p.u == pytest.approx(0.1, abs=1e-12)
    assert np.allclose(p.vector()[:-1], 0, atol=1e-12)


def _module_index(frame, d):
    return next(i for i, m in enumerate(frame.modules) if m.d == d)


def test_decompose_round_trip_construction(sl3):
    i = _module_index(sl3, 1)
    E0 = sl3.modules[i].basis[0]
    g = expm(0.05 * E0) @ expm(0.02 * sl3.A.matrix)
    p = decompose_near_identity(g, sl3)
    want = TrackParams.zeros(sl3)
    c = list(want.c)
    c[i] = np.array([0.05, 0.0])
    want = want.with_(c=tuple(c), a=0.02)
    assert np.allclose(p.vector(), want.vector(), atol=1e-10)


def test_distance_identity(sl3):
    assert group_distance(np.eye(3), sl3) == pytest.approx(0, abs=1e-14)


def test_distance_ubar(sl3):
    assert group_distance(sl3.ubar(0.03).matrix, sl3) == pytest.approx(0.03, abs=1e-12)


def test_distance_mixed(sl3):
    i = _module_index(sl3, 1)
    E0 = sl3.modules[i].basis[0]
    g = expm(0.02 * E0) @ sl3.a(0.01).matrix @ sl3.u(0.01).matrix
    # oracle: d_m = 0.02, d_s = |a| + |u| = 0.02
    assert group_distance(g, sl3) == pytest.approx(0.02, abs=1e-10)


def test_far_element_raises(sl3):
    with pytest.raises(ChartError):
        decompose_near_identity(sl3.u(40.0).matrix, sl3)


@pytest.mark.parametrize("name", ["sl2", "sl2xsl2", "sl3"])
def test_round_trip_random_algebra(name):
    fr = catalog_frame(name)
    rng = np.random.default_rng(1)
    n = len(fr.basis)
    worst = 0.0
    for _ in range(1000):
        v = rng.normal(size=n)
        v *= rng.uniform(0, 0.1) / np.linalg.norm(fr.from_coords(v))
        g = expm(fr.from_coords(v))
        p = decompose_near_identity(g, fr)
        worst = max(worst, float(np.abs(assemble(p, fr).matrix - g).max()))
        q = decompose_near_identity(assemble(p, fr).matrix, fr)
        worst = max(worst, float(np.abs(q.vector() - p.vector()).max()))
    assert worst < 1e-8


def test_jordan_exponential_polynomial(sl3):
    for mod in sl3.modules:
        top = mod.basis[mod.d]
        for s in (0.3, 1.7, 4.0):
            Y = sl3.u(s).matrix @ top @ sl3.u(-s).matrix
            coef = sl3.coords(Y)
            k0 = sum(m.d + 1 for m in sl3.modules[: sl3.modules.index(mod)])
            assert coef[k0] == pytest.approx(s ** mod.d / math.factorial(mod.d), abs=1e-9)


def test_weight_ladder(sl3):
    A = sl3.A.matrix
    for mod in sl3.modules:
        w = []
        for E in mod.basis:
            X = bracket(A, E)
            w.append(np.sum(X * E) / np.sum(E * E))
        assert np.allclose(np.diff(w), -1.0, atol=1e-10)


@given(
    a=st.floats(-0.1, 0.1),
    ub=st.floats(-0.1, 0.1),
    u=st.floats(-0.1, 0.1),
    c=st.lists(st.floats(-0.1, 0.1), min_size=5, max_size=5),
)
def test_round_trip_params_sl3(a, ub, u, c):
    fr = catalog_frame("sl3")
    p = TrackParams.from_vector(np.array(c + [a, ub, u]), fr)
    q = decompose_near_identity(assemble(p, fr).matrix, fr)
    assert np.allclose(q.vector(), p.vector(), atol=1e-9)
    assert group_distance(assemble(p, fr).matrix, fr) == pytest.approx(p.distance, abs=1e-9)


@given(t=st.floats(-0.2, 0.2), s=st.floats(-0.2, 0.2))
def test_u_one_parameter_group(t, s):
    fr = catalog_frame("sl2xsl2")
    lhs = (fr.u(t) @ fr.u(s)).matrix
    assert np.allclose(lhs, fr.u(t + s).matrix, atol=1e-13)
