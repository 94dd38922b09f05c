import math

import numpy as np
import pytest

from artifact.liealg import GroupElement, expm
from artifact.quotient import LatticeSpec, QuotientPoint, flow_u, quotient_distance, reduce, sample_haar
from artifact.rigidity import (
    ConfigurationRejected,
    TransportInconsistent,
    check_normalises,
    cohomology_residual,
    normaliser_scale,
    normaliser_transport,
    psi_t_convergence,
    sample_good_points,
)
from artifact.timechange import (
    Conjugacy,
    TimeChange,
    build_coboundary_conjugacy,
    observable_sup,
    siegel_observable,
    zero_observable,
)

SL1 = LatticeSpec()
SL2x2 = LatticeSpec.product(2)


@pytest.fixture(scope="module")
def cob():
    f = siegel_observable().scaled(0.2)
    alpha, psi = build_coboundary_conjugacy(f)
    return f, alpha, psi


def centraliser_elem(eps=0.01):
    fr = SL2x2.default_frame()
    return GroupElement.from_matrix(expm(eps * fr.modules[0].basis[0]), fr.dims)


def test_good_set_identity_high_retention():
    unit = TimeChange.unit()
    gs = sample_good_points(unit, unit, Conjugacy.identity(), 0.05, 150, seed=1)
    assert gs.retention >= 0.9
    assert gs.condition_rates()["continuity"] == 1.0
    assert gs.condition_rates()["deviation"] == 1.0


def test_good_set_coboundary_retention(cob):
    _, alpha, psi = cob
    gs = sample_good_points(alpha, TimeChange.unit(), psi, 0.05, 1000, seed=0)
    assert gs.retention >= 1 - 2 * 0.05
    assert all(g.continuity and g.deviation for g in gs.points if g.passed)


def test_good_set_omega_zero_flagged():
    unit = TimeChange.unit()
    gs = sample_good_points(unit, unit, Conjugacy.identity(), 0.0, 20, seed=2)
    assert not gs.target_met
    assert any("omega = 0" in f for f in gs.flags)


def test_good_set_rejects_low_retention(cob):
    _, alpha, psi = cob
    with pytest.raises(ConfigurationRejected):
        sample_good_points(alpha, TimeChange.unit(), psi, 0.05, 30, rho=1e-9, seed=3)


def test_good_set_budget_validation():
    unit = TimeChange.unit()
    with pytest.raises(ValueError):
        sample_good_points(unit, unit, Conjugacy.identity(), 0.05, 0)


def test_transport_identity():
    fr = SL1.default_frame()
    g = fr.a(0.01)
    pts = sample_haar(4, np.random.default_rng(40))
    tr = normaliser_transport(Conjugacy.identity(), g, pts)
    assert np.allclose(tr.Phi.matrix, g.matrix, atol=1e-9)
    assert all(abs(b) < 1e-9 for _, b in tr.beta)
    assert tr.c == pytest.approx(math.exp(-0.01))


def test_normaliser_scale_of_a():
    fr = SL1.default_frame()
    c, res = normaliser_scale(fr.a(0.01), fr)
    # Ad(a^tau) U = e^{tau} U, so a^tau u^{c t} a^{-tau} = u^t needs c = e^{-tau}
    M = fr.a(0.01).matrix @ fr.u(c * 2.0).matrix @ fr.a(-0.01).matrix
    assert np.allclose(M, fr.u(2.0).matrix, atol=1e-12)
    assert res < 1e-12


def test_transport_centraliser(cob):
    f, alpha, psi = cob
    g = centraliser_elem()
    pts = sample_haar(4, np.random.default_rng(41), SL2x2)
    tr = normaliser_transport(psi, g, pts, alpha, TimeChange.unit())
    assert tr.c == pytest.approx(1.0, abs=1e-12)
    assert check_normalises(tr.Phi, tr.c, tr.frame) < 1e-8
    for i, p in enumerate(pts):
        # explicit formula: beta = f(x g) - c f(x)
        assert tr.beta_of(i) == pytest.approx(f(reduce(p.right(g))) - tr.c * f(p), abs=1e-9)
    assert tr.max_cocycle_residual <= 1e-6
    assert np.allclose(tr.Phi.matrix, g.matrix, atol=1e-8)


def test_transport_a_with_coboundary(cob):
    f, alpha, psi = cob
    fr = SL1.default_frame()
    g = fr.a(0.01)
    pts = sample_haar(4, np.random.default_rng(42))
    tr = normaliser_transport(psi, g, pts, alpha, TimeChange.unit())
    assert tr.c == pytest.approx(math.exp(-0.01), abs=1e-12)
    for i, p in enumerate(pts):
        assert tr.beta_of(i) == pytest.approx(f(reduce(p.right(g))) - tr.c * f(p), abs=1e-9)
    assert tr.max_cocycle_residual <= 1e-6
    assert check_normalises(tr.Phi, tr.c, tr.frame) < 1e-8


def test_transport_rejects_non_normaliser():
    fr = SL1.default_frame()
    with pytest.raises(ValueError):
        normaliser_transport(Conjugacy.identity(), fr.ubar(0.01), sample_haar(2, np.random.default_rng(43)))


def test_transport_inconsistent_detected():
    # psi is not a conjugacy: a point-dependent non-unipotent twist
    fr = SL1.default_frame()

    def twist(p):
        h = float(p.matrix[0, 0])
        return reduce(p.right(fr.a(0.01 * math.sin(5 * h))))

    psi = Conjugacy(twist, "custom")
    with pytest.raises(TransportInconsistent):
        normaliser_transport(psi, fr.a(0.01), sample_haar(6, np.random.default_rng(44)))


def test_cohomology_identity_g(cob):
    f, alpha, psi = cob
    fr = SL1.default_frame()
    e = GroupElement.identity((2,))
    pts = sample_haar(2, np.random.default_rng(45))
    tr = normaliser_transport(psi, e, pts, alpha, TimeChange.unit(), t_check=())
    rep = cohomology_residual(alpha, TimeChange.unit(), psi, tr, e, pts[0], [1.0, 10.0])
    assert rep["max_residual"] <= 1e-9
    for _, lhs, rhs, _ in rep["rows"]:
        assert abs(lhs) <= 1e-9 and abs(rhs) <= 1e-9


def test_cohomology_centraliser(cob):
    _, alpha, psi = cob
    g = centraliser_elem()
    pts = sample_haar(2, np.random.default_rng(46), SL2x2)
    unit = TimeChange.unit()
    tr = normaliser_transport(psi, g, pts, alpha, unit, t_check=())
    rep = cohomology_residual(alpha, unit, psi, tr, g, pts[0], np.linspace(5, 100, 20))
    assert rep["max_residual"] <= 1e-5


def test_cohomology_a_direction_explicit_f(cob):
    # alpha2 = 1: alpha1(x) and alpha1(x a^0.01) cohomologous with the explicit transfer function
    f, alpha, psi = cob
    fr = SL1.default_frame()
    g = fr.a(0.01)
    unit = TimeChange.unit()
    pts = sample_haar(2, np.random.default_rng(47))
    tr = normaliser_transport(psi, g, pts, alpha, unit, t_check=())
    rep = cohomology_residual(alpha, unit, psi, tr, g, pts[1], np.linspace(5, 100, 20))
    assert rep["max_residual"] <= 1e-5


def test_psi_t_algebraic_zero():
    fr = SL2x2.default_frame()
    g0 = centraliser_elem()
    psi = Conjugacy.algebraic(g0)
    rep = psi_t_convergence(psi, sample_haar(4, np.random.default_rng(48), SL2x2), [1, 2, 4])
    assert max(max(c) for c in rep.curves) <= 1e-9


def test_psi_t_coboundary_bound(cob):
    f, _, psi = cob
    sup_f = observable_sup(f)
    pts = sample_haar(10, np.random.default_rng(49))
    rep = psi_t_convergence(psi, pts, [2, 4, 6, 8, 10, 12], sup_f=sup_f)
    assert rep.max_ratio <= 1 + 1e-3
    assert rep.monotone_trend
    assert rep.pooled_rate < 0


def test_psi_t_equivariance(cob):
    _, _, psi = cob
    rep = psi_t_convergence(psi, sample_haar(5, np.random.default_rng(50)), [2, 4, 6])
    assert rep.equivariance <= 1e-8


def test_beta_bounded_by_s_n(cob):
    f, alpha, psi = cob
    fr = SL1.default_frame()
    g = fr.a(0.01)
    gs = sample_good_points(alpha, TimeChange.unit(), psi, 0.05, 40, seed=5)
    kept = gs.retained[:6]
    tr = normaliser_transport(psi, g, kept, alpha, TimeChange.unit(), t_check=())
    assert max(abs(b) for _, b in tr.beta) <= gs.s_n
