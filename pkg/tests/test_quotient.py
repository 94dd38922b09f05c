import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from artifact.liealg import GroupElement, catalog_frame
from artifact.quotient import (
    LatticeSpec,
    QuotientPoint,
    check_FBR,
    check_IC,
    flow_a,
    flow_u,
    halfplane_point,
    injectivity_radius,
    quotient_distance,
    reduce,
    reduce_sl2,
    sample_haar,
    shortest_vector,
    translate,
)

FR = catalog_frame("sl2")


def pt(M):
    return QuotientPoint.from_matrix(np.asarray(M, dtype=float))


def gauss_oracle(z: complex) -> complex:
    """Textbook reduction of a half-plane point: translate, then invert while |z| < 1."""
    for _ in range(1000):
        z = z - math.floor(z.real + 0.5)
        if abs(z) < 1 - 1e-12:
            z = -1 / z
        else:
            return z
    raise AssertionError


def lagrange_gauss(b1, b2):
    b1, b2 = np.array(b1, float), np.array(b2, float)
    if b1 @ b1 > b2 @ b2:
        b1, b2 = b2, b1
    while True:
        mu = round((b1 @ b2) / (b1 @ b1))
        b2 = b2 - mu * b1
        if b2 @ b2 >= b1 @ b1:
            return math.sqrt(b1 @ b1)
        b1, b2 = b2, b1


haar = st.integers(0, 10_000).map(lambda s: sample_haar(1, np.random.default_rng(s))[0])


def test_flow_u_zero():
    p = sample_haar(1, np.random.default_rng(3))[0]
    assert quotient_distance(flow_u(p, 0.0), p) < 1e-12


def test_flow_commutation():
    p = sample_haar(1, np.random.default_rng(4))[0]
    s, t = 0.3, 0.7
    lhs = flow_a(flow_u(p, s), t)
    rhs = flow_u(flow_a(p, t), s * math.exp(-t))
    assert quotient_distance(lhs, rhs) < 1e-10


def test_flow_u_integer_shear_returns_identity():
    q = flow_u(QuotientPoint.identity(), 1.0)
    assert q.matrix[0, 1] == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(q.matrix, np.eye(2), atol=1e-12)


def test_reduce_identity():
    assert np.allclose(reduce(QuotientPoint.identity()).matrix, np.eye(2))


def test_reduce_shear():
    q = reduce(pt(FR.u(1.3).matrix))
    # oracle: u^{1.3} = T u^{0.3}, so the reduced rep is u^{0.3}
    assert np.allclose(q.matrix, FR.u(0.3).matrix, atol=1e-12)
    assert q.matrix[0, 1] == pytest.approx(0.3)


def test_reduce_small_point():
    # rep whose point g.i is 0.1 + 0.1i (row-lattice convention: g = n(x) a(y))
    y, x = 0.1, 0.1
    g = np.array([[math.sqrt(y), x / math.sqrt(y)], [0.0, 1 / math.sqrt(y)]])
    z0 = halfplane_point(g)
    assert z0 == pytest.approx(0.1 + 0.1j)
    z = halfplane_point(reduce(pt(g)).matrix)
    assert abs(z) >= 1 - 1e-12 and abs(z.real) <= 0.5 + 1e-12
    assert z == pytest.approx(gauss_oracle(z0), abs=1e-10)


@given(haar, st.integers(-3, 3), st.integers(-3, 3))
def test_reduce_idempotent_and_invariant(p, n, m):
    r = reduce(p)
    assert np.allclose(reduce(r).matrix, r.matrix, atol=1e-10)
    gamma = np.array([[1, n], [0, 1]]) @ np.array([[1, 0], [m, 1]])
    q = translate(p, gamma)
    assert quotient_distance(p, q) < 1e-9


def test_distance_self():
    p = sample_haar(1, np.random.default_rng(5))[0]
    assert quotient_distance(p, p) < 1e-12


def test_distance_shear_translate():
    p = sample_haar(1, np.random.default_rng(6))[0]
    assert quotient_distance(p, translate(p, [[1, 2], [0, 1]])) < 1e-9


def test_distance_a_perturbation():
    p = QuotientPoint.identity()
    q = p.right(FR.a(0.02))
    # 0.02 is far below the injectivity radius at the identity (0.25)
    assert injectivity_radius(p) > 0.02
    assert quotient_distance(p, q) == pytest.approx(0.02, abs=1e-9)


def test_distance_far_is_inf_sentinel():
    p = QuotientPoint.identity()
    q = p.right(FR.a(6.0))
    assert quotient_distance(p, q) == math.inf


@given(haar, haar)
def test_distance_symmetric(p, q):
    d1, d2 = quotient_distance(p, q), quotient_distance(q, p)
    if math.isfinite(d1) or math.isfinite(d2):
        assert d1 == pytest.approx(d2, abs=1e-9)


def test_triangle_inequality_small_perturbations():
    rng = np.random.default_rng(7)
    checked = 0
    for p in sample_haar(60, rng):
        r = injectivity_radius(p)
        q = p.right(FR.a(rng.uniform(-1, 1) * r / 8) @ FR.u(rng.uniform(-1, 1) * r / 8))
        s = q.right(FR.ubar(rng.uniform(-1, 1) * r / 8))
        dpq, dqs, dps = quotient_distance(p, q), quotient_distance(q, s), quotient_distance(p, s)
        # chart distance is a local pseudo-metric: triangle up to a quadratic term
        assert dps <= dpq + dqs + 2 * dpq * dqs + 1e-9
        checked += 1
    assert checked == 60


def test_injectivity_unit_lattice():
    assert injectivity_radius(QuotientPoint.identity()) == pytest.approx(0.25)


def test_injectivity_decays_into_cusp():
    ts = np.linspace(0.5, 8, 16)
    radii = [injectivity_radius(QuotientPoint.identity().right(FR.a(t))) for t in ts]
    # oracle: rows of a^t are (e^{t/2}, 0), (0, e^{-t/2}); the shortest is e^{-t/2}
    for t, r in zip(ts, radii):
        g = FR.a(t).matrix
        assert lagrange_gauss(g[0], g[1]) == pytest.approx(math.exp(-t / 2))
        assert r == pytest.approx(0.25 * math.exp(-t))
    assert all(np.diff(radii) < 0)


@given(haar)
def test_shortest_vector_matches_oracle(p):
    g = p.matrix
    assert shortest_vector(g) == pytest.approx(lagrange_gauss(g[0], g[1]), rel=1e-9)


def test_injectivity_translate_invariant():
    p = sample_haar(1, np.random.default_rng(8))[0]
    q = translate(p, [[2, 1], [1, 1]])
    assert injectivity_radius(p) == pytest.approx(injectivity_radius(q))


def test_ic_compact_point_true():
    # the identity u-orbit has period 1, so m must stay below 1/2
    rep = check_IC(QuotientPoint.identity(), rho=0.01, m=0.2)
    assert rep.verdict is True
    assert check_IC(QuotientPoint.identity(), rho=0.01, m=0.6).verdict is False


def test_ic_cusp_point_false():
    p = QuotientPoint.identity().right(FR.a(6.0))
    rep = check_IC(p, rho=0.05, m=1.0)
    assert rep.verdict is False
    gamma = np.array(rep.details["witness"]["gamma"])
    # oracle: confirm the witness really folds the orbit back
    x = p.matrix
    best = math.inf
    for t1 in np.arange(-1.0, 1.01, 0.1):
        for t2 in np.arange(-1.0, 1.01, 0.01):
            H = np.linalg.inv(x @ FR.u(t1).matrix) @ gamma @ x @ FR.u(t2).matrix
            if np.abs(H - np.eye(2)).max() < 0.5:
                from artifact.liealg import group_distance

                best = min(best, group_distance(H, FR))
    assert best <= 0.05 + 1e-3
    assert abs(round(np.linalg.det(gamma))) == 1 and not np.allclose(np.abs(gamma), np.eye(2))


def test_ic_rho_zero_vacuous():
    p = QuotientPoint.identity().right(FR.a(6.0))
    assert check_IC(p, rho=0.0, m=1.0).verdict is True


def _rotation(th):
    return np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])


def fbr_scan_oracle(g, T0, c, r0, Tmax, step):
    ts = np.arange(0, Tmax + step / 2, step)
    rad = []
    for t in ts:
        h = g @ np.diag([math.exp(t / 2), math.exp(-t / 2)])
        rad.append(0.25 * lagrange_gauss(h[0], h[1]) ** 2)
    rad = np.array(rad)
    for T in ts[ts >= T0 - 1e-12]:
        w = (ts >= c * T - 1e-12) & (ts <= T + 1e-12)
        if not np.any(rad[w] >= r0):
            return False
    return True


def test_fbr_rotation_point_true():
    g = _rotation(1.0)
    p = pt(g)
    rep = check_FBR(p, T0=1.0, c=0.5, r0=0.05, Tmax=10.0)
    assert rep.verdict is True
    assert fbr_scan_oracle(g, 1.0, 0.5, 0.05, 10.0, 0.25) is True


def test_fbr_identity_coset_false_scan():
    # the pure-cusp geodesic never returns, the scan oracle agrees
    p = QuotientPoint.identity()
    assert check_FBR(p, T0=1.0, c=0.5, r0=0.05, Tmax=10.0).verdict is False
    assert fbr_scan_oracle(np.eye(2), 1.0, 0.5, 0.05, 10.0, 0.25) is False


def test_fbr_r0_above_max_false():
    p = sample_haar(1, np.random.default_rng(9))[0]
    assert check_FBR(p, T0=1.0, c=0.5, r0=10.0, Tmax=5.0).verdict is False


@given(haar)
def test_fbr_c_zero_weaker(p):
    if check_FBR(p, 1.0, 0.5, 0.02, 6.0).verdict:
        assert check_FBR(p, 1.0, 0.0, 0.02, 6.0).verdict


@given(haar, st.floats(0.0, 2.0))
def test_fbr_backward_shift(p, s):
    if check_FBR(p, 1.0, 0.5, 0.02, 6.0, grid=0.25).verdict:
        s = round(s * 4) / 4
        q = p.right(FR.a(-s))
        assert check_FBR(q, 1.0 + s, 0.5, 0.02, 6.0 + s, grid=0.25).verdict


@given(haar, st.floats(-2, 2), st.floats(-1, 1))
def test_renormalization_property(p, s, t):
    lhs = flow_a(flow_u(p, s), t)
    rhs = flow_u(flow_a(p, t), s * math.exp(-t))
    assert quotient_distance(lhs, rhs) < 1e-9


def test_product_lattice_distance_is_max():
    lat = LatticeSpec.product(2)
    p = QuotientPoint.identity(lat)
    fr = lat.default_frame()
    q = p.right(GroupElement((FR.a(0.01).matrix, FR.u(0.03).matrix)))
    assert quotient_distance(p, q, fr) == pytest.approx(0.03, abs=1e-9)


def test_lattice_spec_validation():
    with pytest.raises(ValueError):
        LatticeSpec(enum_radius=0.5)
    with pytest.raises(ValueError):
        LatticeSpec(kind="SL3Z")


def test_reduce_sl2_fundamental_domain():
    rng = np.random.default_rng(10)
    for _ in range(200):
        g = rng.normal(size=(2, 2))
        if np.linalg.det(g) < 0:
            g[0] *= -1
        g /= math.sqrt(np.linalg.det(g))
        z = halfplane_point(reduce_sl2(g))
        assert abs(z.real) <= 0.5 + 1e-9 and abs(z) >= 1 - 1e-9
