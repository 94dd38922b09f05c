"""Relative-position geometry along two unipotent orbits.

Closed-form tracking ``q(s), a(s), ubar(s)``, the divergence functionals
``r_m`` and ``r_s``, the first-exit length ``l_eps`` and sub-level components.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from math import factorial
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .liealg import Sl2Frame, TrackParams

S_CAP = 1e15


class OutOfTrackingInterval(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TrackState:
    params: TrackParams
    frame: Sl2Frame

    @property
    def a(self) -> float:
        return self.params.a

    @property
    def ubar(self) -> float:
        return self.params.ubar

    @property
    def u(self) -> float:
        return self.params.u

    def tracking_interval(self) -> tuple:
        """``{s : e^a - ubar s > 0}`` as an open interval (possibly unbounded)."""
        ea, ub = math.exp(self.a), self.ubar
        if ub > 0:
            return (-math.inf, ea / ub)
        if ub < 0:
            return (ea / ub, math.inf)
        return (-math.inf, math.inf)


def track_q(state: TrackState, s: float) -> tuple:
    """Return ``(q(s), a(s), ubar(s))`` with ``u^{-s} g_s u^{q(s)} = exp(a(s)A) exp(ubar(s)Ubar)``."""
    ea = math.exp(state.a)
    e = ea - state.ubar * s
    if not e > 0:
        raise OutOfTrackingInterval(f"s={s} outside the interval of maximal tracking")
    q = s / e - state.u
    a_s = -state.a + 2.0 * math.log(e)
    ub_s = state.ubar * e / ea
    return q, a_s, ub_s


def track_q_array(a: np.ndarray, ubar: np.ndarray, u: np.ndarray, s: np.ndarray):
    """Vectorised ``track_q``; entries outside the tracking interval become nan."""
    ea = np.exp(a)
    e = ea - ubar * s
    with np.errstate(invalid="ignore", divide="ignore"):
        ok = e > 0
        es = np.where(ok, e, np.nan)
        return s / es - u, -a + 2 * np.log(es), ubar * es / ea


def r_s_value(state: TrackState, s):
    return state.ubar * np.asarray(s) ** 2 + np.asarray(s) * (1.0 - math.exp(state.a))


def shift_m_coeffs(c: np.ndarray, delta: float) -> np.ndarray:
    """Jordan coordinates of ``Ad(u^{-delta}) xi`` for one module: ``sum_{k>=j} c_k (-delta)^{k-j}/(k-j)!``."""
    c = np.asarray(c, dtype=float)
    n = len(c)
    out = np.zeros(n)
    for j in range(n):
        out[j] = sum(c[k] * (-delta) ** (k - j) / factorial(k - j) for k in range(j, n))
    return out


def r_m_polys(state: TrackState) -> list:
    """Per module, ascending coefficients of ``r(s) = sum_k c_k (-1)^k s^k / k!``."""
    return [
        np.array([ck * (-1) ** k / factorial(k) for k, ck in enumerate(np.asarray(c, dtype=float))])
        for c in state.params.c
    ]


def r_m_value(state: TrackState, s) -> np.ndarray:
    """``max over modules |r_m_iota(s)|`` (vectorised in ``s``)."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    for P in r_m_polys(state):
        out = np.maximum(out, np.abs(np.polynomial.polynomial.polyval(s, P)))
    return out


def _poly_crossings(P: np.ndarray, level: float, lo: float, hi: float) -> list:
    """Real roots of ``P(s) = +-level`` inside (lo, hi)."""
    out = []
    for sign in (1.0, -1.0):
        Q = np.array(P, dtype=float)
        Q[0] -= sign * level
        Q = np.trim_zeros(Q, "b")
        if len(Q) <= 1:
            continue
        for r in np.roots(Q[::-1]):
            if abs(r.imag) <= 1e-9 * max(1.0, abs(r.real)) and lo < r.real < hi:
                out.append(_polish_poly_root(Q, r.real))
    return out


def _polish_poly_root(Q: np.ndarray, x: float) -> float:
    dQ = np.polynomial.polynomial.polyder(Q)
    for _ in range(3):
        d = np.polynomial.polynomial.polyval(x, dQ)
        if d == 0:
            break
        x -= np.polynomial.polynomial.polyval(x, Q) / d
    return float(x)


def _rs_crossings(state: TrackState, eta: float, scale: float, eps: float, lo: float, hi: float) -> list:
    """Zeros in (lo, hi) of ``h(s) = sigma r_s(s) - scale (s^{1-eta} + eps)`` for sigma = +-1.

    ``h''`` is monotone, so ``h`` has at most three monotone pieces: split at
    the zero of ``h''`` and at the zeros of ``h'``, then bracket each piece.
    """
    ub, k1 = state.ubar, 1.0 - math.exp(state.a)
    roots = []
    for sigma in (1.0, -1.0):
        def h(s):
            return sigma * (ub * s * s + k1 * s) - scale * (s ** (1 - eta) + eps)

        def dh(s):
            return sigma * (2 * ub * s + k1) - scale * (1 - eta) * s ** (-eta)

        pts = [lo, hi]
        if sigma * ub < 0 and eta > 0:
            s_star = (scale * eta * (1 - eta) / (-2 * sigma * ub)) ** (1.0 / (1 + eta))
            if lo < s_star < hi:
                pts.append(s_star)
        pts.sort()
        crit = []
        for x0, x1 in zip(pts[:-1], pts[1:]):
            a0 = max(x0, 1e-300) if x0 == 0 else x0
            f0, f1 = dh(a0), dh(x1)
            if f0 * f1 < 0:
                crit.append(brentq(dh, a0, x1, xtol=1e-14, rtol=1e-15, maxiter=500))
        brk = sorted(set(pts + crit))
        for x0, x1 in zip(brk[:-1], brk[1:]):
            f0, f1 = h(x0), h(x1)
            if f0 == 0 and x0 > lo:
                roots.append(x0)
            if f0 * f1 < 0:
                roots.append(brentq(h, x0, x1, xtol=1e-12, rtol=1e-15))
    return roots


def _good_mask(state: TrackState, s: np.ndarray, eta: float, lvl_m: float, scale_s: float, eps: float) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    good = r_m_value(state, s) <= lvl_m
    rs = np.abs(r_s_value(state, s))
    return good & (rs <= scale_s * (np.abs(s) ** (1 - eta) + eps))


def l_eps_parts(state: TrackState, eps: float, eta: float) -> tuple:
    """``(l_eps(g_m), l_eps(g_s))``; +inf when the functional never exits."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    lm = _first_exit(state, eps, eta, which="m")
    ls = _first_exit(state, eps, eta, which="s")
    return lm, ls


def l_eps(state: TrackState, eps: float, eta: float) -> float:
    lm, ls = l_eps_parts(state, eps, eta)
    return min(lm, ls)


def _first_exit(state: TrackState, eps: float, eta: float, which: str) -> float:
    if which == "m":
        bps = []
        for P in r_m_polys(state):
            bps += _poly_crossings(P, eps, 0.0, S_CAP)

        def bad(s):
            return r_m_value(state, np.array([s]))[0] > eps
    else:
        bps = _rs_crossings(state, eta, 1.0, eps, 0.0, S_CAP)

        def bad(s):
            return abs(float(r_s_value(state, s))) > s ** (1 - eta) + eps
    if bad(0.0):
        return 0.0
    bps = sorted(set(b for b in bps if b > 0))
    edges = bps + [S_CAP]
    for k, b in enumerate(bps):
        nxt = edges[k + 1]
        probe = b + min(1e-9 * max(1.0, b), 0.5 * (nxt - b))
        if bad(probe):
            return b
    return math.inf


@dataclass
class SubLevelSet:
    components: list
    eps: float
    eta: float
    kappa_tilde: float
    s_max: float
    flags: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.components)

    def locate(self, s: float, tol: float = 1e-9) -> Optional[int]:
        for i, (lo, hi) in enumerate(self.components):
            if lo - tol <= s <= hi + tol:
                return i
        return None

    def to_csv_rows(self) -> list:
        return [(i, lo, hi) for i, (lo, hi) in enumerate(self.components)]


def sublevel_components(state: TrackState, eps: float, eta: float, kappa_tilde: float, s_max: float) -> SubLevelSet:
    """Components in ``[0, s_max]`` of ``{|r_m| <= k eps} and {|r_s| <= k (s^{1-eta} + eps)}``."""
    if not math.isfinite(s_max) or s_max < 0:
        raise ValueError("s_max must be finite and non-negative")
    lvl = kappa_tilde * eps
    bps = [0.0, float(s_max)]
    for P in r_m_polys(state):
        bps += _poly_crossings(P, lvl, 0.0, s_max)
    bps += _rs_crossings(state, eta, kappa_tilde, eps, 0.0, s_max)
    bps = sorted(set(bps))
    comps: list = []
    flags: list = []
    for x0, x1 in zip(bps[:-1], bps[1:]):
        if x1 - x0 <= 0:
            continue
        if _good_mask(state, np.array([0.5 * (x0 + x1)]), eta, lvl, kappa_tilde, eps)[0]:
            if comps and abs(comps[-1][1] - x0) <= 1e-12 * max(1.0, x0):
                comps[-1][1] = x1
            else:
                comps.append([x0, x1])
    out = [(float(a), float(b)) for a, b in comps]
    # isolated touching points are measure-zero; only report them
    for b in bps:
        if not any(a - 1e-12 <= b <= c + 1e-12 for a, c in out) and _good_mask(state, np.array([b]), eta, lvl, kappa_tilde, eps)[0]:
            flags.append(f"isolated point {b:.12g} ignored")
    if len(out) > state.frame.D:
        msg = f"{len(out)} components exceed the bound D={state.frame.D}"
        flags.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return SubLevelSet(out, eps, eta, kappa_tilde, float(s_max), flags)


def transported_params(params: TrackParams, delta: float, delta_p: float) -> TrackParams:
    """Parameters of ``u^{-delta} g u^{delta_p}`` in closed form (requires ``delta`` in the tracking interval)."""
    ea = math.exp(params.a)
    e = ea - params.ubar * delta
    if not e > 0:
        raise OutOfTrackingInterval(f"delta={delta} outside the interval of maximal tracking")
    q = delta / e - params.u
    c = tuple(shift_m_coeffs(ci, delta) for ci in params.c)
    return TrackParams(c, -params.a + 2.0 * math.log(e), params.ubar * e / ea, delta_p - q)


def transported_distance(params: TrackParams, delta, delta_p) -> np.ndarray:
    """Vectorised ``d(e, u^{-delta} g u^{delta_p})``; ``inf`` outside the tracking interval."""
    delta = np.asarray(delta, dtype=float)
    delta_p = np.asarray(delta_p, dtype=float)
    ea = math.exp(params.a)
    e = ea - params.ubar * delta
    with np.errstate(invalid="ignore", divide="ignore"):
        es = np.where(e > 0, e, np.nan)
        ds = np.abs(-params.a + 2.0 * np.log(es)) + np.abs(params.ubar * es / ea) + np.abs(delta_p - (delta / es - params.u))
    dm = np.zeros_like(delta)
    for ci in params.c:
        ci = np.asarray(ci, dtype=float)
        n = len(ci)
        for j in range(n):
            val = np.zeros_like(delta)
            for k in range(j, n):
                val = val + ci[k] * (-delta) ** (k - j) / factorial(k - j)
            dm = np.maximum(dm, np.abs(val))
    out = np.maximum(dm, ds)
    return np.where(np.isfinite(out), out, np.inf)


# ---------------------------------------------------------------- randomized suites


def closed_form_suite(n: int = 1000, seed: int = 0, delta: float = 0.2) -> dict:
    """Compare ``track_q`` with the direct product ``u^{-s} g u^{q(s)}`` on random draws.

    The product is formed in extended precision: near the end of the tracking
    interval ``q(s)`` is large and a double-precision product loses digits.
    """
    from .liealg import catalog_frame

    fr = catalog_frame("sl2")
    L = np.longdouble

    def U(t):
        return np.array([[1, t], [0, 1]], dtype=L)

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        a, ub, u = rng.uniform(-delta, delta, 3)
        st = TrackState(TrackParams((), a, ub, u), fr)
        lo, hi = st.tracking_interval()
        hi = min(hi, 1e3)
        s = rng.uniform(0.0, 0.999 * hi) if hi > 0 else 0.0
        q, a_s, ub_s = track_q(st, s)
        ea = np.exp(L(a) / 2)
        g = np.array([[ea, 0], [0, 1 / ea]], dtype=L) @ np.array([[1, 0], [ub, 1]], dtype=L) @ U(L(u))
        M = U(-L(s)) @ g @ U(L(q))
        # M = exp(aA) exp(ubar Ubar) u^u  =>  a = 2 log M00, ubar = M10 M00, u = M01 / M00
        a_m, ub_m, u_m = float(2 * np.log(M[0, 0])), float(M[1, 0] * M[0, 0]), float(M[0, 1] / M[0, 0])
        worst = max(worst, abs(a_m - a_s), abs(ub_m - ub_s), abs(u_m))
    return {"n": n, "max_error": worst}


def tracking_bounds_suite(n: int = 1000, seed: int = 0, delta_max: float = 0.05, grid: int = 200) -> dict:
    """Inequalities for ``s`` in ``[0, s0]`` when ``d(x, y) <= delta1`` and ``d(x u^s0, y u^t0) <= delta2``."""
    from .liealg import catalog_frame

    fr = catalog_frame("sl2")
    rng = np.random.default_rng(seed)
    violations = []
    accepted = draws = 0
    while accepted < n and draws < 50 * n:
        draws += 1
        d1 = rng.uniform(0.0, delta_max)
        w_ = rng.dirichlet(np.ones(3)) * d1 * rng.uniform()
        a, ub, u = w_ * rng.choice([-1.0, 1.0], 3)
        st = TrackState(TrackParams((), a, ub, u), fr)
        hi = st.tracking_interval()[1]
        s0 = rng.uniform(0.0, min(hi, 10.0 / max(abs(ub), 1e-6)))
        if not s0 < hi:
            continue
        q0, a0, ub0 = track_q(st, s0)
        t0 = q0 + rng.uniform(-0.01, 0.01)
        d2 = abs(a0) + abs(ub0) + abs(q0 - t0)
        if not (d2 < min(0.5, math.log(2)) and d1 < math.log(2)):
            continue
        accepted += 1
        s = np.linspace(0.0, s0, grid)
        _, a_s, ub_s = track_q_array(np.full(grid, a), np.full(grid, ub), np.full(grid, u), s)
        e = math.exp(a) - ub * s
        M = max(d1, d2)
        checks = {
            "ubar s": np.abs(ub * s) <= 3 * (d1 + d2) * (1 + 1e-12),
            "a(s)": np.abs(a_s) <= (11 * d1 + 6 * d2) * (1 + 1e-12),
            "ubar(s)": np.abs(ub_s) <= 13 * d1 * (1 + 1e-12) + 1e-300,
            "sandwich": (1 - 8 * M <= e) & (e <= 1 + 8 * M),
        }
        for k, ok in checks.items():
            if not np.all(ok):
                violations.append({"check": k, "a": a, "ubar": ub, "u": u, "s0": s0, "t0": t0})
    return {"accepted": accepted, "draws": draws, "violations": violations}
