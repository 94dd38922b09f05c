"""Good-set sampling, normaliser transport and the renormalised conjugacies ``psi_t``."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .blocks import renormalized_conjugacy
from .liealg import ChartError, GroupElement, Sl2Frame, TrackParams, assemble, decompose_near_identity
from .quotient import (
    LatticeSpec,
    QuotientPoint,
    check_FBR,
    check_IC,
    flow_u,
    lift_near,
    quotient_distance,
    reduce,
    sample_haar,
)
from .timechange import Conjugacy, TimeChange, xi, z, _u

# wide chart for transport elements, which carry an O(sup|f|) unipotent part
TRANSPORT_CHART = 2.0


class ConfigurationRejected(ValueError):
    pass


class TransportInconsistent(RuntimeError):
    pass


# ---------------------------------------------------------------- good set


@dataclass
class GoodPoint:
    point: QuotientPoint
    image: QuotientPoint
    continuity: bool
    deviation: bool
    ic: Optional[bool]
    fbr: Optional[bool]
    modulus: float
    max_deviation: float

    @property
    def passed(self) -> bool:
        return bool(self.continuity and self.deviation and self.ic and self.fbr)


@dataclass
class GoodSetParams:
    omega: float
    m0: float
    rho: float
    T0: float
    r0: float
    points: list
    retention: float
    target: float
    s_n: float
    C: float
    eta_emp: float
    flags: list = field(default_factory=list)

    @property
    def retained(self) -> list:
        return [g.point for g in self.points if g.passed]

    @property
    def target_met(self) -> bool:
        return self.retention >= self.target and self.omega > 0

    def condition_rates(self) -> dict:
        n = max(len(self.points), 1)
        return {
            "continuity": sum(g.continuity for g in self.points) / n,
            "deviation": sum(g.deviation for g in self.points) / n,
            "ic": sum(bool(g.ic) for g in self.points) / n,
            "fbr": sum(bool(g.fbr) for g in self.points) / n,
        }

    def constants(self) -> dict:
        return {
            "omega": self.omega, "m0": self.m0, "rho": self.rho, "T0": self.T0, "r0": self.r0,
            "C": self.C, "eta_emp": self.eta_emp, "s_n": self.s_n, "retention": self.retention, "target": self.target,
        }

    def rows(self) -> list:
        return [
            (i, g.continuity, g.deviation, g.ic, g.fbr, g.modulus, g.max_deviation, g.passed)
            for i, g in enumerate(self.points)
        ]


def deviation_profile(p: QuotientPoint, alpha: TimeChange, t_grid: Sequence[float], tol: float = 1e-8) -> np.ndarray:
    """``|xi(p, t) - t|`` at the (increasing, positive) grid times, in one pass along the orbit."""
    t_grid = np.asarray(sorted(t_grid), dtype=float)
    if alpha.is_unit:
        return np.zeros(len(t_grid))
    from . import kernels

    g = kernels.reduce_basis(p.rep.factors[0])
    out = np.zeros(len(t_grid))
    acc, pos, idx = 0.0, 0.0, 0
    seg_tol = tol / max(1.0, t_grid[-1])
    while idx < len(t_grid):
        nxt = min(pos + 1.0, t_grid[idx])
        h = nxt - pos
        if h > 0:
            acc += alpha.segment_integral(g, 0.0, h, p, seg_tol)
            g = kernels.reduce_basis(g @ _u(h))
            pos = nxt
        while idx < len(t_grid) and pos >= t_grid[idx] - 1e-12:
            out[idx] = abs(acc - t_grid[idx])
            idx += 1
    return out


def _perturbations(frame: Sl2Frame, k: int, delta: float, rng: np.random.Generator) -> list:
    out = []
    n = len(frame.basis)
    for _ in range(k):
        v = rng.normal(size=n)
        v *= delta / np.abs(v).max()
        out.append(GroupElement.from_matrix(_expm_coords(frame, v), frame.dims))
    return out


def _expm_coords(frame: Sl2Frame, v: np.ndarray) -> np.ndarray:
    from .liealg import expm

    return expm(frame.from_coords(v))


def sample_good_points(
    alpha1: TimeChange,
    alpha2: TimeChange,
    psi: Conjugacy,
    omega: float,
    budget: int,
    rho: float = 0.005,
    m0: float = 50.0,
    eta_emp: float = 0.05,
    t_factors: Sequence[float] = (1.0, 2.0, 4.0),
    m_ic: float = 1.0,
    T0: float = 1.0,
    c_fbr: float = 0.5,
    r0: float = 0.005,
    T_fbr: float = 4.0,
    delta_uc: float = 1e-3,
    n_uc: int = 2,
    lattice: Optional[LatticeSpec] = None,
    seed: int = 0,
    check_ic: bool = True,
) -> GoodSetParams:
    """Monte-Carlo good set.

    A point is kept when all four checks pass: ``psi`` moves ``delta_uc``
    perturbations by at most ``rho``; both time changes deviate from the
    unit flow by at most ``C^-4 t^(1-eta_emp)`` on the grid ``m0 * t_factors``;
    the image satisfies IC(rho, m_ic) and FBR(T0, c_fbr, r0).
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if not 0 <= omega < 1:
        raise ValueError("omega must lie in [0, 1)")
    lat = lattice or LatticeSpec()
    frame = lat.default_frame()
    rng = np.random.default_rng(seed)
    pts = sample_haar(budget, rng, lat)
    C = max(alpha1.C_alpha, alpha2.C_alpha, 1.0)
    grid = [m0 * f for f in t_factors]
    thresh = np.array([C ** -4 * t ** (1 - eta_emp) for t in grid])
    flags = []
    if omega == 0:
        flags.append("omega = 0: retention target 1 is not attainable by sampling")
    out = []
    max_dev = 0.0
    for p in pts:
        img = psi(p)
        mod = 0.0
        for h in _perturbations(frame, n_uc, delta_uc, rng):
            mod = max(mod, quotient_distance(psi(reduce(p.right(h))), img))
        cont = mod <= rho
        d1 = deviation_profile(p, alpha1, grid)
        d2 = deviation_profile(img, alpha2, grid)
        dev = bool(np.all(d1 <= thresh) and np.all(d2 <= thresh))
        md = float(max(d1.max(), d2.max()))
        ic = fbr = None
        if cont and dev:
            ic = bool(check_IC(img, rho, m_ic, frame=frame)) if check_ic else True
            if ic:
                fbr = bool(check_FBR(img, T0, c_fbr, r0, T_fbr, frame=frame))
        gp = GoodPoint(p, img, cont, dev, ic, fbr, float(mod), md)
        if gp.passed:
            max_dev = max(max_dev, md)
        out.append(gp)
    retention = sum(g.passed for g in out) / len(out)
    res = GoodSetParams(omega, m0, rho, T0, r0, out, retention, 1 - omega, 2.0 * max_dev, C, eta_emp, flags)
    if retention < 0.5:
        raise ConfigurationRejected(f"retention {retention:.3f} below 0.5; condition rates {res.condition_rates()}")
    if retention < 1 - omega:
        flags.append(f"retention {retention:.4f} below target {1 - omega:.4f}")
    return res


# ---------------------------------------------------------------- normaliser transport


def normaliser_scale(g: GroupElement, frame: Sl2Frame) -> tuple:
    """``(c, residual)`` with ``Ad(g) U = U / c``; ``residual`` is the part of ``Ad(g) U`` off the line of ``U``."""
    G = g.matrix
    v = frame.coords(G @ frame.U.matrix @ np.linalg.inv(G))
    e = frame.coords(frame.U.matrix)
    lam = float(v @ e / (e @ e))
    res = float(np.abs(v - lam * e).max())
    return (1.0 / lam if lam != 0 else math.inf), res


def _project_normaliser(params: TrackParams, frame: Sl2Frame) -> TrackParams:
    # one Gauss-Newton step on the off-U part of Ad(Phi)U, u-coordinate frozen
    e = frame.coords(frame.U.matrix)

    def resid(th):
        P = TrackParams.from_vector(np.concatenate([th, [0.0]]), frame)
        G = assemble(P, frame).matrix
        v = frame.coords(G @ frame.U.matrix @ np.linalg.inv(G))
        return v - (v @ e / (e @ e)) * e

    th = params.vector()[:-1]
    r = resid(th)
    if np.abs(r).max() == 0:
        return params.with_(u=0.0)
    h = 1e-7
    J = np.stack([(resid(th + h * np.eye(len(th))[i]) - r) / h for i in range(len(th))], axis=1)
    th = th - np.linalg.lstsq(J, r, rcond=None)[0]
    return TrackParams.from_vector(np.concatenate([th, [0.0]]), frame)


@dataclass
class TransportResult:
    Phi: GroupElement
    Phi_params: TrackParams
    c: float
    beta: list  # (sample index, beta)
    spread: float
    normaliser_residual: float
    cocycle_residuals: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    frame: Optional[Sl2Frame] = None

    @property
    def max_cocycle_residual(self) -> float:
        return max((r[-1] for r in self.cocycle_residuals), default=0.0)

    def beta_of(self, i: int) -> float:
        return dict(self.beta)[i]

    def rows(self) -> list:
        return list(self.cocycle_residuals)


def _transport_rel(psi: Conjugacy, g: GroupElement, p: QuotientPoint, frame: Sl2Frame, radius: float, left=None):
    """Nearest ``rel`` with ``psi(p g) = psi(p) [left] rel``, as near-identity parameters."""
    img = reduce(psi(p))
    base = img.rep if left is None else img.rep @ left
    cands = lift_near(base, psi(reduce(p.right(g))), radius, frame)
    if not cands:
        raise TransportInconsistent("no lift of psi(x g) near psi(x)")
    d, _, rel = cands[0]
    # a second lift inside the standard chart would make beta ambiguous
    n_close = sum(1 for c in cands[1:] if c[0] <= 0.5)
    return decompose_near_identity(rel, frame), n_close


def transport_beta(psi: Conjugacy, g: GroupElement, Phi: GroupElement, p: QuotientPoint, frame: Sl2Frame, radius: float = 1.5, tol: float = 1e-6) -> float:
    """``beta(p)`` with ``psi(p g) = psi(p) Phi u^beta``."""
    P, _ = _transport_rel(psi, g, p, frame, radius, left=Phi)
    off = max(P.d_m, abs(P.a) + abs(P.ubar))
    if off > tol:
        raise TransportInconsistent(f"non-unipotent transport component {off:.3e} at a sample")
    return P.u


def normaliser_transport(
    psi: Conjugacy,
    g1: GroupElement,
    samples: Sequence[QuotientPoint],
    alpha1: Optional[TimeChange] = None,
    alpha2: Optional[TimeChange] = None,
    t_check: Sequence[float] = (0.5, 1.0, 2.0),
    radius: float = 1.5,
    tol: float = 1e-6,
    quad_tol: float = 1e-10,
) -> TransportResult:
    """Estimate ``Phi`` with ``psi(x g1) = psi(x) Phi u^{beta(x)}`` and check the transport cocycle."""
    if not samples:
        raise ValueError("need at least one sample")
    lat = samples[0].lattice
    frame = lat.default_frame().with_chart_radius(TRANSPORT_CHART)
    c, nres = normaliser_scale(g1, frame)
    if nres > 1e-8:
        raise ValueError(f"g1 does not normalise u (residual {nres:.3e})")
    if not 0.5 < c < 2:
        raise ValueError(f"normaliser scale c={c:.4g} outside (1/2, 2)")
    try:
        if decompose_near_identity(g1, frame).distance >= lat.default_frame().chart_radius:
            raise ValueError("g1 too far from the identity")
    except ChartError as exc:
        raise ValueError("g1 too far from the identity") from exc
    alpha1 = alpha1 or TimeChange.unit()
    alpha2 = alpha2 or TimeChange.unit()
    flags = []
    vecs = []
    for p in samples:
        P, n = _transport_rel(psi, g1, p, frame, radius)
        if n:
            flags.append("second lift inside the chart; nearest used")
        vecs.append(P.vector()[:-1])
    V = np.array(vecs)
    med = np.median(V, axis=0)
    spread = float(np.abs(V - med).max())
    if spread > tol:
        raise TransportInconsistent(f"non-unipotent part varies by {spread:.3e} across samples")
    Pp = _project_normaliser(TrackParams.from_vector(np.concatenate([med, [0.0]]), frame), frame)
    Phi = assemble(Pp, frame)
    cP, resP = normaliser_scale(Phi, frame)
    beta = [(i, transport_beta(psi, g1, Phi, p, frame, radius, tol)) for i, p in enumerate(samples)]
    res = TransportResult(Phi, Pp, c, beta, spread, resP, [], sorted(set(flags)), frame)
    # beta(x u^t) - beta(x) = z(x g, ct) - c z(x, t)
    for i, p in enumerate(samples):
        b0 = beta[i][1]
        pg = reduce(p.right(g1))
        for t in t_check:
            bt = transport_beta(psi, g1, Phi, flow_u(p, t), frame, radius, tol)
            lhs = bt - b0
            rhs = z(pg, c * t, psi, alpha1, alpha2, quad_tol) - c * z(p, t, psi, alpha1, alpha2, quad_tol)
            res.cocycle_residuals.append((i, float(t), lhs, rhs, abs(lhs - rhs)))
    return res


def check_normalises(Phi: GroupElement, c: float, frame: Sl2Frame, ts: Sequence[float] = (0.5, 1.0, 3.0)) -> float:
    """``max_t |Phi u^{ct} Phi^-1 - u^t|``."""
    G = Phi.matrix
    return max(
        float(np.abs(G @ frame.u(c * t).matrix @ np.linalg.inv(G) - frame.u(t).matrix).max()) for t in ts
    )


# ---------------------------------------------------------------- cohomology


def transfer_function(alpha2: TimeChange, psi: Conjugacy, transport: TransportResult, g: GroupElement, p: QuotientPoint, tol: float = 1e-10) -> float:
    """``f(x) = (1/c) int_0^{beta(x)} alpha2(psi(x) Phi u^s) ds``."""
    fr = transport.frame
    b = transport_beta(psi, g, transport.Phi, p, fr)
    base = reduce(psi(p).right(transport.Phi))
    return xi(base, b, alpha2, tol) / transport.c


def cohomology_residual(
    alpha1: TimeChange,
    alpha2: TimeChange,
    psi: Conjugacy,
    transport: TransportResult,
    g: GroupElement,
    x: QuotientPoint,
    t_grid: Sequence[float],
    tol: float = 1e-10,
) -> dict:
    """Max over ``t`` of ``|int_0^t alpha1(x u^s g) ds - int_0^z alpha2(psi(x) u^s Phi) ds - (f(x u^t) - f(x))|``."""
    c = transport.c
    Phi = transport.Phi
    xg = reduce(x.right(g))
    base = reduce(psi(x).right(Phi))
    f0 = transfer_function(alpha2, psi, transport, g, x, tol)
    rows = []
    for t in t_grid:
        t = float(t)
        lhs1 = xi(xg, c * t, alpha1, tol) / c
        zt = z(x, t, psi, alpha1, alpha2, tol)
        lhs2 = xi(base, c * zt, alpha2, tol) / c
        rhs = transfer_function(alpha2, psi, transport, g, flow_u(x, t), tol) - f0
        rows.append((t, lhs1 - lhs2, rhs, abs(lhs1 - lhs2 - rhs)))
    return {"max_residual": max((r[-1] for r in rows), default=0.0), "rows": rows, "f0": f0}


# ---------------------------------------------------------------- psi_t


@dataclass
class DecayReport:
    t_grid: list
    curves: list  # per sample: distances on the grid
    rates: list
    pooled_rate: float
    bound: list
    max_ratio: float
    monotone_trend: bool
    equivariance: float
    flags: list = field(default_factory=list)

    def rows(self) -> list:
        return [(i, t, d) for i, cv in enumerate(self.curves) for t, d in zip(self.t_grid, cv)]


def psi_t_convergence(
    psi: Conjugacy,
    samples: Sequence[QuotientPoint],
    t_grid: Sequence[float],
    zeta: Optional[Callable[[QuotientPoint], QuotientPoint]] = None,
    sup_f: Optional[float] = None,
    equivariance_times: Sequence[float] = (0.7, 3.0),
) -> DecayReport:
    """Distances ``d(psi_t(x), zeta(x))`` with a log-linear decay fit per sample.

    ``zeta`` defaults to the algebraic part of ``psi`` (its offset, or the identity).
    """
    if zeta is None:
        off = psi.offset
        zeta = (lambda p: reduce(p.right(off))) if off is not None else (lambda p: reduce(p))
    if sup_f is None:
        sup_f = psi.sup_transfer()
    t_grid = [float(t) for t in t_grid]
    curves, rates = [], []
    for p in samples:
        zp = zeta(p)
        curves.append([quotient_distance(renormalized_conjugacy(psi, p, t), zp) for t in t_grid])
    flags = []
    late = [i for i, t in enumerate(t_grid) if t >= 2]
    ts = np.array([t_grid[i] for i in late])

    def rate(ys):
        pos = ys > 1e-300
        if pos.sum() < 2:
            return -math.inf
        return float(np.polyfit(ts[pos], np.log(ys[pos]), 1)[0])

    # single curves follow |f(x a^-t)|, which need not decrease; the sample maximum does
    rates = [rate(np.array([cv[i] for i in late])) for cv in curves]
    pooled = rate(np.array([max(cv[i] for cv in curves) for i in late])) if curves else -math.inf
    trend = pooled < 0
    bound = [sup_f * math.exp(-t) for t in t_grid]
    ratios = [cv[i] / bound[i] for cv in curves for i in range(len(t_grid)) if bound[i] > 0]
    max_ratio = max(ratios, default=0.0)
    if not trend:
        flags.append("sample-maximum distance does not decrease beyond t = 2")
    eq = 0.0
    for p in samples:
        for t in equivariance_times:
            eq = max(eq, quotient_distance(zeta(flow_u(p, t)), flow_u(zeta(p), t)))
    return DecayReport(t_grid, curves, rates, pooled, bound, float(max_ratio), trend, float(eq), flags)
