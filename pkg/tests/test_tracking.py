import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from artifact.liealg import TrackParams, catalog_frame, expm
from artifact.tracking import (
    OutOfTrackingInterval,
    TrackState,
    closed_form_suite,
    l_eps,
    r_m_polys,
    r_m_value,
    r_s_value,
    sublevel_components,
    track_q,
    tracking_bounds_suite,
)

SL2 = catalog_frame("sl2")
SL3 = catalog_frame("sl3")


def state(a=0.0, ub=0.0, u=0.0, c=None, frame=SL2):
    c = tuple(np.zeros(m.d + 1) for m in frame.modules) if c is None else c
    return TrackState(TrackParams(c, a, ub, u), frame)


def matrix_oracle(a, ub, u, s, q):
    """Parameters (a', ubar', u') of u^{-s} g u^{q} from the 2x2 product."""
    U = lambda t: np.array([[1.0, t], [0.0, 1.0]])
    g = np.diag([math.exp(a / 2), math.exp(-a / 2)]) @ np.array([[1.0, 0.0], [ub, 1.0]]) @ U(u)
    M = U(-s) @ g @ U(q)
    return 2 * math.log(M[0, 0]), M[1, 0] * M[0, 0], M[0, 1] / M[0, 0]


def bisect(f, lo, hi, it=200):
    flo = f(lo)
    for _ in range(it):
        mid = 0.5 * (lo + hi)
        if (f(mid) > 0) == (flo > 0):
            lo, flo = mid, f(mid)
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_q_identity():
    assert track_q(state(), 3.3) == pytest.approx((3.3, 0.0, 0.0))


def test_q_ubar_example():
    q, a_s, ub_s = track_q(state(ub=0.001), 100.0)
    a_m, ub_m, u_m = matrix_oracle(0.0, 0.001, 0.0, 100.0, q)
    assert q == pytest.approx(100 / 0.9, abs=1e-9)
    assert a_m == pytest.approx(a_s, abs=1e-9)
    assert ub_m == pytest.approx(ub_s, abs=1e-9)
    assert u_m == pytest.approx(0.0, abs=1e-9)


def test_q_pole():
    st_ = state(ub=0.01)
    q1 = track_q(st_, 99.0)[0]
    q2 = track_q(st_, 99.999)[0]
    assert q2 > q1 > 0  # q = s/(1 - ubar s) blows up at the pole
    with pytest.raises(OutOfTrackingInterval):
        track_q(st_, 100.0)


@given(st.floats(-0.2, 0.2), st.floats(-0.2, 0.2), st.floats(-0.2, 0.2), st.floats(0, 0.99))
def test_q_matrix_identity(a, ub, u, frac):
    st_ = state(a, ub, u)
    hi = min(st_.tracking_interval()[1], 50.0)
    s = frac * hi
    q, a_s, ub_s = track_q(st_, s)
    a_m, ub_m, u_m = matrix_oracle(a, ub, u, s, q)
    assert a_m == pytest.approx(a_s, abs=1e-8)
    assert ub_m == pytest.approx(ub_s, abs=1e-8)
    assert abs(u_m) <= 1e-8


def test_closed_form_suite():
    rep = closed_form_suite(n=300)
    assert rep["max_error"] <= 1e-9


def test_tracking_interval_contains_M():
    rng = np.random.default_rng(20)
    for _ in range(200):
        M = rng.uniform(1, 50)
        d = rng.uniform(0, min(0.5, 1 / (2 * M)))
        a, ub, u = rng.dirichlet(np.ones(3)) * d * rng.choice([-1, 1], 3)
        lo, hi = state(a, ub, u).tracking_interval()
        assert lo < -M and hi > M


def test_rm_zero():
    for P in r_m_polys(state(frame=SL3)):
        assert np.all(P == 0)


def _idx(frame, d):
    return next(i for i, m in enumerate(frame.modules) if m.d == d)


def test_rm_string_push_down():
    i = _idx(SL3, 1)
    c = [np.zeros(m.d + 1) for m in SL3.modules]
    c[i][1] = 0.1
    P = r_m_polys(state(c=tuple(c), frame=SL3))[i]
    # brute force: coefficient of E_0 in exp(-s adU) (0.1 E_1)
    for s in (0.5, 2.0, 7.0):
        X = 0.1 * SL3.modules[i].basis[1]
        Y = SL3.u(-s).matrix @ X @ SL3.u(s).matrix
        k0 = sum(m.d + 1 for m in SL3.modules[:i])
        assert SL3.coords(Y)[k0] == pytest.approx(-0.1 * s, abs=1e-12)
        assert np.polynomial.polynomial.polyval(s, P) == pytest.approx(-0.1 * s, abs=1e-12)


def test_rm_matches_adjoint_random():
    rng = np.random.default_rng(21)
    for _ in range(50):
        c = tuple(rng.uniform(-0.1, 0.1, m.d + 1) for m in SL3.modules)
        st_ = state(c=c, frame=SL3)
        X = SL3.from_coords(np.concatenate(list(c) + [np.zeros(3)]))
        s = rng.uniform(-5, 5)
        Y = SL3.u(-s).matrix @ X @ SL3.u(s).matrix
        co = SL3.coords(Y)
        k = 0
        for P, m in zip(r_m_polys(st_), SL3.modules):
            assert co[k] == pytest.approx(np.polynomial.polynomial.polyval(s, P), abs=1e-10)
            # |r_m| <= d_m(e, u^{-s} g_m u^s)
            assert abs(co[k]) <= np.abs(co[: SL3.n_m]).max() + 1e-12
            k += m.d + 1


def test_rs_zero():
    assert np.all(r_s_value(state(), np.linspace(0, 100, 11)) == 0)


def test_rs_arithmetic():
    assert float(r_s_value(state(ub=1e-4), 50.0)) == pytest.approx(0.25)


@given(st.floats(-0.2, 0.2), st.floats(-0.01, 0.01), st.floats(-0.2, 0.2), st.floats(0, 0.95))
def test_rs_delay_relation(a, ub, u, frac):
    st_ = state(a, ub, u)
    s = frac * min(st_.tracking_interval()[1], 100.0)
    q = track_q(st_, s)[0]
    e = math.exp(a) - ub * s
    assert abs(q - s + u) * e == pytest.approx(abs(float(r_s_value(st_, s))), abs=1e-9)


def test_l_eps_zero():
    assert l_eps(state(), 0.01, 0.2) == math.inf


def test_l_eps_linear():
    i = _idx(SL3, 1)
    c = [np.zeros(m.d + 1) for m in SL3.modules]
    c[i][1] = 0.1
    assert l_eps(state(c=tuple(c), frame=SL3), 0.01, 0.2) == pytest.approx(0.1, abs=1e-12)


def test_l_eps_quadratic_bisection():
    st_ = state(ub=1e-6)
    val = l_eps(st_, 0.01, 0.2)
    g = lambda s: 1e-6 * s * s - (s ** 0.8 + 0.01)
    ref = bisect(g, 1.0, 1e6)
    assert g(ref * (1 - 1e-6)) < 0 < g(ref * (1 + 1e-6))
    assert val == pytest.approx(ref, rel=1e-9)


def test_sublevel_zero():
    sub = sublevel_components(state(), 0.01, 0.2, 16.0, 50.0)
    assert sub.components == [(0.0, 50.0)]


def test_sublevel_linear():
    i = _idx(SL3, 1)
    c = [np.zeros(m.d + 1) for m in SL3.modules]
    c[i][1] = 0.1
    sub = sublevel_components(state(c=tuple(c), frame=SL3), 0.01, 0.2, 1.0, 5.0)
    assert len(sub) == 1
    assert sub.components[0] == pytest.approx((0.0, 0.1), abs=1e-12)


def scan_components(mask, s):
    comps, start = [], None
    for k, ok in enumerate(mask):
        if ok and start is None:
            start = s[k]
        if not ok and start is not None:
            comps.append((start, s[k - 1]))
            start = None
    if start is not None:
        comps.append((start, s[-1]))
    return comps


def test_sublevel_two_components_scan():
    # r_s = ubar s^2 + s(1 - e^a) changes sign when a > 0 and ubar > 0
    a, ub, eps, eta, kt, smax = math.log(2.0), 0.1, 0.01, 0.5, 1.0, 20.0
    st_ = state(a, ub)
    sub = sublevel_components(st_, eps, eta, kt, smax)
    s = np.arange(0.0, smax + 1e-12, 1e-4)
    mask = np.abs(ub * s * s + s * (1 - math.exp(a))) <= kt * (s ** (1 - eta) + eps)
    ref = scan_components(mask, s)
    assert len(ref) == 2 == len(sub)
    for (l0, h0), (l1, h1) in zip(ref, sub.components):
        assert l1 == pytest.approx(l0, abs=1.5e-4)
        assert h1 == pytest.approx(h0, abs=1.5e-4)
    assert len(sub) <= SL2.D


def test_sublevel_rejects_infinite():
    with pytest.raises(ValueError):
        sublevel_components(state(), 0.01, 0.2, 1.0, math.inf)


def test_tracking_bounds_property():
    rep = tracking_bounds_suite(n=1000)
    assert rep["accepted"] == 1000
    assert rep["violations"] == []


@given(st.integers(0, 10_000))
def test_rm_le_dm(seed):
    rng = np.random.default_rng(seed)
    c = tuple(rng.uniform(-0.1, 0.1, m.d + 1) for m in SL3.modules)
    st_ = state(c=c, frame=SL3)
    s = rng.uniform(0, 3)
    X = SL3.from_coords(np.concatenate(list(c) + [np.zeros(3)]))
    Y = SL3.u(-s).matrix @ expm(X) @ SL3.u(s).matrix
    from artifact.liealg import decompose_near_identity

    d_m = decompose_near_identity(Y, SL3).d_m
    assert r_m_value(st_, np.array([s]))[0] <= d_m + 1e-10
