"""Coefficient bounds for polynomials bounded on b-close intervals, and Solovay's interval lemma.

``norm_equivalence_constant`` solves the extremal coefficient problem as a
linear program over a discretised sup-norm constraint.  Because the discrete
constraint set contains the continuous one, the LP optimum is already an upper
bound; a tiny relative inflation absorbs solver tolerance.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog

N_LP_NODES = 4001
LP_INFLATION = 1.0 + 1e-7
N_CHECK_NODES = 64


# ---------------------------------------------------------------- intervals


@dataclass(frozen=True)
class IntervalCollection:
    ambient: tuple
    members: tuple

    def __post_init__(self):
        lo, hi = self.ambient
        if not hi > lo:
            raise ValueError("ambient interval must have positive length")
        prev = -math.inf
        for a, b in self.members:
            if not b >= a:
                raise ValueError(f"malformed member [{a}, {b}]")
            if a <= prev:
                raise ValueError("members must be sorted and pairwise disjoint")
            if a < lo or b > hi:
                raise ValueError(f"member [{a}, {b}] not contained in the ambient interval")
            prev = b

    @classmethod
    def of(cls, ambient, members) -> "IntervalCollection":
        return cls(tuple(map(float, ambient)), tuple((float(a), float(b)) for a, b in members))

    @property
    def length(self) -> float:
        return self.ambient[1] - self.ambient[0]

    def lengths(self) -> np.ndarray:
        return np.array([b - a for a, b in self.members])

    def density(self) -> float:
        return float(self.lengths().sum()) / self.length

    def complement(self) -> list:
        out = []
        cur = self.ambient[0]
        for a, b in self.members:
            if a > cur:
                out.append((cur, a))
            cur = b
        if self.ambient[1] > cur:
            out.append((cur, self.ambient[1]))
        return out

    def contains(self, s: float) -> bool:
        return any(a <= s <= b for a, b in self.members)

    def to_dict(self) -> dict:
        return {"ambient": list(self.ambient), "members": [list(m) for m in self.members]}


def b_separation_violations(coll: IntervalCollection, b: float, limit: int = 5) -> list:
    """Pairs violating ``d(J', J'') >= min(|J'|, |J''|)^{1+b}``."""
    M = np.array(coll.members, dtype=float).reshape(-1, 2)
    n = len(M)
    if n < 2:
        return []
    lens = M[:, 1] - M[:, 0]
    i, j = np.triu_indices(n, 1)
    dist = M[j, 0] - M[i, 1]
    need = np.minimum(lens[i], lens[j]) ** (1 + b)
    bad = np.nonzero(dist < need)[0]
    return [(int(i[k]), int(j[k])) for k in bad[:limit]]


def is_b_close(intervals: Sequence[tuple], b: float) -> bool:
    """Consecutive gaps satisfy ``s_{j+1} - sbar_j <= sbar_j^{1+b}``."""
    for (s0, e0), (s1, e1) in zip(intervals[:-1], intervals[1:]):
        if s1 - e0 > e0 ** (1 + b) + 1e-12 * max(1.0, e0):
            return False
    return True


# ---------------------------------------------------------------- coefficient bounds


@lru_cache(maxsize=None)
def norm_equivalence_constant(k: int, dim: int = 1) -> float:
    """Upper bound on ``max |c_i|`` over degree-``k`` polynomials with ``sup_[0,1] |P| <= 1``.

    With the max-coordinate norm on ``R^dim`` the vector case reduces to the
    scalar one, so ``dim`` only gets validated.
    """
    if k < 0 or k > 8:
        raise ValueError("degree must lie in 0..8")
    if dim < 1:
        raise ValueError("dim must be positive")
    if k == 0:
        return 1.0
    x = 0.5 * (1 - np.cos(np.pi * np.arange(N_LP_NODES) / (N_LP_NODES - 1)))
    V = np.vander(x, k + 1, increasing=True)
    A_ub = np.vstack([V, -V])
    b_ub = np.ones(2 * N_LP_NODES)
    best = 0.0
    for i in range(k + 1):
        for sgn in (1.0, -1.0):
            c = np.zeros(k + 1)
            c[i] = -sgn
            res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * (k + 1), method="highs")
            if res.status != 0:
                raise RuntimeError(f"LP failed for k={k}, i={i}: {res.message}")
            best = max(best, -res.fun)
    return best * LP_INFLATION


def kappa_prime(k: int, dim: int = 1) -> float:
    return norm_equivalence_constant(k, dim) * 2.0**k * (k + 1)


def coefficient_bound(i: int, k: int, h: int, C: float, eta: float, b: float, s_bar_h: float, dim: int = 1) -> float:
    kk = norm_equivalence_constant(k, dim)
    kp = kappa_prime(k, dim)
    return C * kk * kp ** (h - 1) * s_bar_h ** (-i + 1 - eta + (h - 1) * k * b)


def _cheb_nodes(a: float, b: float, n: int = N_CHECK_NODES) -> np.ndarray:
    t = np.cos(np.pi * (2 * np.arange(n) + 1) / (2 * n))
    return np.concatenate([[a, b], 0.5 * (a + b) + 0.5 * (b - a) * t])


def _poly_norm(coeffs: np.ndarray, s: np.ndarray) -> np.ndarray:
    c = np.asarray(coeffs, dtype=float)
    if c.ndim == 1:
        c = c[:, None]
    vals = np.stack([np.polynomial.polynomial.polyval(s, c[:, j]) for j in range(c.shape[1])])
    return np.abs(vals).max(axis=0)


@dataclass
class CoeffBoundReport:
    status: str  # "pass" | "bound-failed" | "hypothesis-failed"
    per_coefficient: list = field(default_factory=list)
    hypotheses: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == "pass"


def check_coeff_bounds(coeffs, intervals: Sequence[tuple], C: float, eps: float, eta: float, b: float, rtol: float = 1e-9) -> CoeffBoundReport:
    """Check ``|c_i| <= C kappa_k kappa_k'^{h-1} sbar_h^{-i+1-eta+(h-1)kb}`` under verified hypotheses.

    ``coeffs`` are ascending, scalar or shape ``(k+1, dim)`` with the max norm.
    """
    c = np.asarray(coeffs, dtype=float)
    if c.ndim == 1:
        c = c[:, None]
    nz = np.nonzero(np.abs(c).max(axis=1) > 0)[0]
    k = int(nz[-1]) if len(nz) else 0
    dim = c.shape[1]
    ivs = [tuple(map(float, iv)) for iv in intervals]
    h = len(ivs)
    hyp = {}
    hyp["nonempty"] = h >= 1
    hyp["starts_at_zero"] = h >= 1 and ivs[0][0] == 0.0
    hyp["ordered"] = all(a <= bb for a, bb in ivs) and all(ivs[j][1] < ivs[j + 1][0] for j in range(h - 1))
    hyp["sbar1_ge_1"] = h >= 1 and ivs[0][1] >= 1.0
    hyp["eps_small"] = h >= 1 and eps <= C * ivs[0][1] ** (1 - eta) * (1 + 1e-12)
    hyp["b_close"] = is_b_close(ivs, b)
    bounded = True
    worst = 0.0
    for a, bb in ivs:
        s = _cheb_nodes(a, bb)
        env = np.maximum(eps, C * s ** (1 - eta))
        ratio = float((_poly_norm(c, s) / env).max())
        worst = max(worst, ratio)
        bounded &= ratio <= 1 + rtol
    hyp["bounded"] = bool(bounded)
    consts = {"k": k, "h": h, "kappa_k": norm_equivalence_constant(k, dim), "kappa_k_prime": kappa_prime(k, dim), "max_envelope_ratio": worst}
    if not all(hyp.values()):
        return CoeffBoundReport("hypothesis-failed", [], hyp, consts)
    sh = ivs[-1][1]
    rows = []
    ok = True
    for i in range(c.shape[0]):
        mag = float(np.abs(c[i]).max())
        bound = coefficient_bound(i, k, h, C, eta, b, sh, dim)
        good = mag <= bound * (1 + rtol)
        ok &= good
        rows.append({"i": i, "abs": mag, "bound": bound, "pass": bool(good)})
    return CoeffBoundReport("pass" if ok else "bound-failed", rows, hyp, consts)


def random_bclose_instance(rng: np.random.Generator, k_max: int = 3, h_max: int = 3, b: float = 0.05, eta: float = 0.2, C: float = 1.0, eps: float = 0.1, dense: int = 4000):
    """Random polynomial and b-close intervals, rescaled so it touches its envelope."""
    h = int(rng.integers(1, h_max + 1))
    sb = float(10 ** rng.uniform(0, 3))
    ivs = [(0.0, sb)]
    for _ in range(h - 1):
        e = ivs[-1][1]
        gap = rng.uniform(0.05, 1.0) * e ** (1 + b)
        start = e + gap
        ivs.append((start, start + float(10 ** rng.uniform(-1, 0.5)) * start))
    k = int(rng.integers(0, k_max + 1))
    coeffs = rng.normal(size=k + 1) / np.maximum(1.0, sb) ** np.arange(k + 1)
    if rng.uniform() < 0.3:
        # Chebyshev-like: equioscillating on the first interval
        T = np.polynomial.chebyshev.Chebyshev.basis(k, domain=[0.0, sb]).convert(kind=np.polynomial.Polynomial)
        coeffs = T.coef
    worst = 0.0
    for a, bb in ivs:
        s = np.concatenate([np.linspace(a, bb, dense), _cheb_nodes(a, bb)])
        env = np.maximum(eps, C * s ** (1 - eta))
        worst = max(worst, float((np.abs(np.polynomial.polynomial.polyval(s, coeffs)) / env).max()))
    if worst > 0:
        coeffs = coeffs / worst * (1 - 1e-9)
    return coeffs, ivs


# ---------------------------------------------------------------- Solovay


@dataclass
class SolovayResult:
    status: str  # "found" | "none" | "hypothesis-failed"
    member: Optional[tuple] = None
    failed: list = field(default_factory=list)
    density: float = 0.0

    @property
    def found(self) -> bool:
        return self.status == "found"


def solovay_hypotheses(coll: IntervalCollection, b: float, theta: float) -> list:
    failed = []
    if b_separation_violations(coll, b, limit=1):
        failed.append("b-separation")
    if not coll.density() > 1 - theta:
        failed.append("density")
    if any(hi - lo < 1 for lo, hi in coll.complement()):
        failed.append("complement-gaps")
    return failed


def solovay_find_block(coll: IntervalCollection, b: float, theta: float) -> SolovayResult:
    """Check the three hypotheses, then return a member of length >= 3/4 |I| if any."""
    failed = solovay_hypotheses(coll, b, theta)
    dens = coll.density()
    if failed:
        return SolovayResult("hypothesis-failed", None, failed, dens)
    L = coll.length
    for m in sorted(coll.members, key=lambda m: m[0] - m[1]):
        if m[1] - m[0] >= 0.75 * L:
            return SolovayResult("found", m, [], dens)
    return SolovayResult("none", None, [], dens)


def _fill(rng: np.random.Generator, lo: float, hi: float, big_len: float, b: float, out: list) -> None:
    """Greedily place small members in ``[lo, hi]`` respecting the minimal separation from a big neighbour."""
    pos = lo
    while True:
        ell = float(10 ** rng.uniform(-1, math.log10(max(hi - lo, 1.0) + 1)))
        gap = max(1.0, ell ** (1 + b))
        start = pos + gap
        end = start + ell
        if end + max(1.0, ell ** (1 + b)) > hi:
            break
        out.append((start, end))
        pos = end


def generate_solovay_collection(rng: np.random.Generator, b: float = 0.1) -> IntervalCollection:
    """Random collection biased toward the density regime of the lemma."""
    L = float(10 ** rng.uniform(3, 6))
    f = rng.uniform(0.70, 0.98) if rng.uniform() < 0.3 else rng.uniform(0.98, 1.0)
    main = f * L
    left_room = rng.uniform() * (L - main)
    a0 = left_room
    members: list = []
    _fill(rng, 0.0, a0, main, b, members)
    members.append((a0, a0 + main))
    _fill(rng, a0 + main, L, main, b, members)
    members.sort()
    return IntervalCollection.of((0.0, L), members)


def solovay_suite(trials: int, b: float = 0.1, theta: float = 0.01, seed: int = 0, max_draws: Optional[int] = None, falsifier_path: Optional[Path] = None) -> dict:
    """Draw until ``trials`` hypothesis-satisfying collections were tested."""
    rng = np.random.default_rng(seed)
    accepted = draws = 0
    counterexamples = []
    limit = max_draws or 200 * trials
    while accepted < trials and draws < limit:
        draws += 1
        coll = generate_solovay_collection(rng, b)
        res = solovay_find_block(coll, b, theta)
        if res.status == "hypothesis-failed":
            continue
        accepted += 1
        if res.status != "found":
            counterexamples.append(coll.to_dict())
    if counterexamples and falsifier_path is not None:
        Path(falsifier_path).write_text(json.dumps({"b": b, "theta": theta, "seed": seed, "counterexamples": counterexamples}, indent=1))
    return {"accepted": accepted, "draws": draws, "counterexamples": counterexamples}


def _adversarial_collection(rng: np.random.Generator, b: float) -> IntervalCollection:
    """Collection with no member reaching 3/4 of the ambient length, packed as densely as separation allows."""
    L = float(10 ** rng.uniform(0.5, 4))
    n_big = int(rng.integers(1, 4))
    fr = rng.dirichlet(np.ones(n_big)) * rng.uniform(0.3, 0.7499)
    members: list = []
    pos = 0.0
    bigs = sorted((f * L for f in fr), reverse=bool(rng.integers(0, 2)))
    lead = rng.uniform(1.0, 3.0) if rng.uniform() < 0.5 else 0.0
    if lead:
        pos = lead
    for k, ell in enumerate(bigs):
        if members:
            prev = members[-1][1] - members[-1][0]
            pos = members[-1][1] + max(1.0, min(prev, ell) ** (1 + b))
        if pos + ell > L:
            break
        members.append((pos, pos + ell))
    if not members:
        return IntervalCollection.of((0.0, L), [])
    tail_lo = members[-1][1]
    extra: list = []
    ell = 1.0
    cur = tail_lo
    while True:
        ell = float(rng.uniform(0.05, 2.0))
        start = cur + max(1.0, ell ** (1 + b))
        if start + ell > L - 1.0:
            break
        extra.append((start, start + ell))
        cur = start + ell
    ms = members + extra
    # stretch the last member to absorb leftover room, keeping the 3/4 cap
    last = ms[-1]
    room = L - 1.0 - last[1] if L - last[1] >= 1.0 else 0.0
    ext = min(room, 0.7499 * L - (last[1] - last[0]))
    if ext > 0:
        ms[-1] = (last[0], last[1] + ext)
    return IntervalCollection.of((0.0, L), ms)


def solovay_estimate_theta(b: float, trials: int, seed: int = 0, grid: float = 1e-3) -> dict:
    """Empirical (non-rigorous) estimate of theta(b).

    Searches collections satisfying separation and gap hypotheses without a
    3/4 member; the estimate is the largest grid theta whose density
    threshold none of them exceeds.  Prefix-consistent in ``trials``, so the
    estimate is nonincreasing as trials grow.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    best = 0.0
    best_coll = None
    for _ in range(trials):
        coll = _adversarial_collection(rng, b)
        if not coll.members:
            continue
        if b_separation_violations(coll, b, 1) or any(hi - lo < 1 for lo, hi in coll.complement()):
            continue
        if max(coll.lengths()) >= 0.75 * coll.length:
            continue
        d = coll.density()
        if d > best:
            best, best_coll = d, coll
    theta = math.floor((1.0 - best) / grid + 1e-9) * grid
    return {"theta": theta, "max_density_without_block": best, "witness": best_coll.to_dict() if best_coll else None, "trials": trials, "seed": seed, "rigorous": False}


def coefficient_suite(n: int = 1000, b: float = 0.05, eta: float = 0.2, seed: int = 0, k_max: int = 3, h_max: int = 3) -> dict:
    """Random polynomials on b-close interval families; counts bound failures."""
    rng = np.random.default_rng(seed)
    failures, skipped = [], 0
    for _ in range(n):
        coeffs, ivs = random_bclose_instance(rng, k_max, h_max, b, eta)
        rep = check_coeff_bounds(coeffs, ivs, 1.0, 0.1, eta, b)
        if rep.status == "hypothesis-failed":
            skipped += 1
        elif rep.status != "pass":
            failures.append({"coeffs": list(map(float, coeffs)), "intervals": ivs, "rows": rep.per_coefficient})
    return {"n": n, "checked": n - skipped, "skipped": skipped, "failures": failures}
