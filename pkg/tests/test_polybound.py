import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from artifact.polybound import (
    IntervalCollection,
    b_separation_violations,
    check_coeff_bounds,
    coefficient_suite,
    kappa_prime,
    norm_equivalence_constant,
    random_bclose_instance,
    solovay_estimate_theta,
    solovay_find_block,
    solovay_suite,
)


def brute_kappa1(n=401):
    """Grid search over c0 + c1 s with sup_[0,1] |P| <= 1."""
    s = np.linspace(0, 1, 201)
    best = 0.0
    for c0, c1 in itertools.product(np.linspace(-1, 1, n), np.linspace(-3, 3, n)):
        if np.abs(c0 + c1 * s).max() <= 1 + 1e-12:
            best = max(best, abs(c0), abs(c1))
    return best


def test_kappa0():
    assert norm_equivalence_constant(0) == 1.0


def test_kappa1_range():
    oracle = brute_kappa1()
    assert oracle == pytest.approx(2.0, abs=0.02)
    k1 = norm_equivalence_constant(1)
    assert 2.0 <= k1 <= 4.0
    assert k1 >= oracle


def test_kappa_nondecreasing():
    ks = [norm_equivalence_constant(k) for k in range(9)]
    assert all(b >= a for a, b in zip(ks, ks[1:]))


def test_kappa_chebyshev_lower_bound():
    # T_k shifted to [0,1] has sup 1, so kappa_k is at least its largest coefficient
    for k in range(1, 7):
        T = np.polynomial.chebyshev.Chebyshev.basis(k, domain=[0, 1]).convert(kind=np.polynomial.Polynomial)
        assert norm_equivalence_constant(k) >= np.abs(T.coef).max() * (1 - 1e-9)


def test_kappa_prime_formula():
    for k in range(4):
        assert kappa_prime(k) == pytest.approx(norm_equivalence_constant(k) * 2**k * (k + 1))


def test_kappa_bad_degree():
    with pytest.raises(ValueError):
        norm_equivalence_constant(9)


def test_zero_polynomial_passes():
    rep = check_coeff_bounds([0.0, 0.0], [(0.0, 10.0)], 1.0, 0.1, 0.2, 0.05)
    assert rep.passed


def test_single_interval_random_polynomials():
    rng = np.random.default_rng(22)
    eta, C = 0.2, 1.0
    for _ in range(1000):
        L = float(10 ** rng.uniform(0, 3))
        k = int(rng.integers(0, 4))
        c = rng.normal(size=k + 1) / L ** np.arange(k + 1)
        s = np.linspace(0, L, 2000)
        c *= C * L ** (1 - eta) / np.abs(np.polynomial.polynomial.polyval(s, c)).max() * (1 - 1e-9)
        # envelope max(eps, C s^{1-eta}) may be below C L^{1-eta} near 0; keep the polynomial inside it
        env = np.maximum(0.1, C * s ** (1 - eta))
        scale = min(1.0, float((env / np.maximum(np.abs(np.polynomial.polynomial.polyval(s, c)), 1e-300)).min()))
        c *= scale * (1 - 1e-6)
        rep = check_coeff_bounds(c, [(0.0, L)], C, 0.1, eta, 0.05)
        if rep.status == "hypothesis-failed":
            continue
        assert rep.passed
        kk = norm_equivalence_constant(k)
        for i, ci in enumerate(c):
            # oracle: rescaling to [0,1] gives sup <= 1, so each coefficient is at most kappa_k
            assert abs(ci) <= kk * C * L ** (-i + 1 - eta) * (1 + 1e-9)


def test_adversarial_two_intervals_exact_gap():
    b, eta, C, eps = 0.1, 0.2, 1.0, 0.1
    for k in (1, 2, 3):
        for s1 in (5.0, 50.0, 500.0):
            gap = s1 ** (1 + b)
            ivs = [(0.0, s1), (s1 + gap, 2 * (s1 + gap))]
            T = np.polynomial.chebyshev.Chebyshev.basis(k, domain=[0.0, s1]).convert(kind=np.polynomial.Polynomial)
            c = T.coef
            worst = 0.0
            for a, e in ivs:
                s = np.linspace(a, e, 4000)
                worst = max(worst, float((np.abs(np.polynomial.polynomial.polyval(s, c)) / np.maximum(eps, C * s ** (1 - eta))).max()))
            c = c / worst * (1 - 1e-6)
            rep = check_coeff_bounds(c, ivs, C, eps, eta, b)
            assert rep.hypotheses["b_close"]
            assert rep.status == "pass", rep.per_coefficient


def test_gap_too_large_is_hypothesis_failure():
    ivs = [(0.0, 10.0), (10.0 + 10.0 ** 1.1 + 1.0, 40.0)]
    rep = check_coeff_bounds([0.0, 0.01], ivs, 1.0, 0.1, 0.2, 0.1)
    assert rep.status == "hypothesis-failed"
    assert not rep.hypotheses["b_close"]


def test_unbounded_is_hypothesis_failure():
    rep = check_coeff_bounds([100.0], [(0.0, 10.0)], 1.0, 0.1, 0.2, 0.1)
    assert rep.status == "hypothesis-failed"
    assert not rep.hypotheses["bounded"]


def test_coefficient_suite_no_failures():
    rep = coefficient_suite(n=300)
    assert rep["failures"] == []
    assert rep["checked"] > 250


@given(st.integers(0, 100_000))
def test_random_bclose_never_fails(seed):
    rng = np.random.default_rng(seed)
    c, ivs = random_bclose_instance(rng)
    assert check_coeff_bounds(c, ivs, 1.0, 0.1, 0.2, 0.05).status != "bound-failed"


def test_solovay_single_member():
    coll = IntervalCollection.of((0, 100), [(2.5, 97.5)])
    res = solovay_find_block(coll, 0.1, 0.1)
    assert res.found and res.member == (2.5, 97.5)


def test_solovay_separation_violation():
    coll = IntervalCollection.of((0, 100), [(1.0, 50.0), (50.5, 99.0)])
    assert b_separation_violations(coll, 0.1)
    res = solovay_find_block(coll, 0.1, 0.1)
    assert res.status == "hypothesis-failed"
    assert "b-separation" in res.failed


def test_solovay_randomized_suite():
    rep = solovay_suite(1000, b=0.1, theta=0.01, seed=3)
    assert rep["accepted"] == 1000
    assert rep["counterexamples"] == []


@given(st.integers(0, 10_000))
def test_solovay_found_member_is_long(seed):
    from artifact.polybound import generate_solovay_collection

    coll = generate_solovay_collection(np.random.default_rng(seed), 0.1)
    res = solovay_find_block(coll, 0.1, 0.05)
    if res.found:
        assert res.member[1] - res.member[0] >= 0.75 * coll.length


def test_theta_deterministic_and_positive():
    a = solovay_estimate_theta(0.1, 500, seed=5)
    b = solovay_estimate_theta(0.1, 500, seed=5)
    assert a == b
    assert a["theta"] > 0
    assert a["rigorous"] is False


def test_theta_nonincreasing_in_trials():
    thetas = [solovay_estimate_theta(0.1, n, seed=5)["theta"] for n in (50, 200, 800)]
    assert thetas[0] >= thetas[1] >= thetas[2]


def test_theta_rejects_zero_trials():
    with pytest.raises(ValueError):
        solovay_estimate_theta(0.1, 0)


def test_interval_collection_validation():
    with pytest.raises(ValueError):
        IntervalCollection.of((0, 10), [(5, 6), (4, 7)])
    with pytest.raises(ValueError):
        IntervalCollection.of((0, 10), [(5, 11)])
