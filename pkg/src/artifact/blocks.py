"""Blocks along two shadowing orbits, their equivalence, superblocks and the Basic Lemma pipeline."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from math import factorial
from typing import Callable, Optional

import numpy as np

from . import kernels
from .liealg import (
    ChartError,
    GroupElement,
    Sl2Frame,
    TrackParams,
    assemble,
    decompose_near_identity,
)
from .polybound import (
    IntervalCollection,
    is_b_close,
    kappa_prime,
    norm_equivalence_constant,
    solovay_estimate_theta,
    solovay_find_block,
)
from .quotient import (
    QuotientPoint,
    check_FBR,
    check_IC,
    LatticeSpec,
    flow_a,
    sample_haar,
    lift_near,
    quotient_distance,
)
from .timechange import Conjugacy, SiegelObservable, build_coboundary_conjugacy, siegel_observable
from .tracking import (
    OutOfTrackingInterval,
    TrackState,
    l_eps,
    sublevel_components,
    track_q,
    transported_distance,
    transported_params,
)

LIFT_SLACK = 1e-9


class BlockError(RuntimeError):
    """A hypothesis of the block recursion fails at a specific time ``r``."""

    def __init__(self, msg: str, r: float):
        super().__init__(f"{msg} at r={r:.9g}")
        self.r = r


class LiftAmbiguity(BlockError):
    pass


class BlockInvariantError(RuntimeError):
    pass


# ---------------------------------------------------------------- time maps


def _tau_vec(tau: Callable, r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    try:
        out = np.asarray(tau(r), dtype=float)
        if out.shape == r.shape:
            return out
    except (TypeError, ValueError):
        pass
    return np.array([float(tau(float(v))) for v in r.ravel()]).reshape(r.shape)


class IdentityTau:
    def __call__(self, r):
        return np.asarray(r, dtype=float) if np.ndim(r) else float(r)


@dataclass
class TrackingTau:
    """``tau(r) = q(r) - q(0)`` for ``y = x g``: the reparametrisation that keeps the u-offset fixed."""

    params: TrackParams
    frame: Sl2Frame

    def __call__(self, r):
        st = TrackState(self.params, self.frame)
        q0 = track_q(st, 0.0)[0]
        if np.ndim(r):
            return np.array([track_q(st, float(v))[0] - q0 for v in np.ravel(r)]).reshape(np.shape(r))
        return track_q(st, float(r))[0] - q0


@dataclass
class CoboundaryTau:
    """``tau(r) = r + F(x u^r) - F(x)``: the time map between ``x u^r`` and its coboundary image."""

    F: SiegelObservable
    x: QuotientPoint

    def __post_init__(self):
        self._g = self.x.rep.factors[0]
        self._k = self.F._k(self.x)
        self._f0 = self._eval(np.zeros(1))[0]

    def _eval(self, r: np.ndarray) -> np.ndarray:
        r = np.atleast_1d(np.asarray(r, dtype=float))
        G = np.empty((len(r), 2, 2))
        G[:, 0, 0] = self._g[0, 0]
        G[:, 1, 0] = self._g[1, 0]
        G[:, 0, 1] = self._g[0, 0] * r + self._g[0, 1]
        G[:, 1, 1] = self._g[1, 0] * r + self._g[1, 1]
        b = self.F.bump
        f, _, _ = kernels.siegel_eval(G, b.center, b.width, b.amplitude, self.F.primitive)
        return self._k * f

    def F_along(self, r):
        return self._eval(r)

    def __call__(self, r):
        out = np.atleast_1d(np.asarray(r, dtype=float)) + self._eval(r) - self._f0
        return out if np.ndim(r) else float(out[0])


# ---------------------------------------------------------------- blocks


@dataclass
class Block:
    index: int
    s: float
    s_bar: float
    t: float
    t_bar: float
    x_lift: GroupElement
    y_lift: GroupElement
    rel: TrackParams  # parameters of x_lift^{-1} y_lift
    rel_matrix: GroupElement
    l_eps: float
    d0: float
    flags: list = field(default_factory=list)

    @property
    def interval(self) -> tuple:
        return (self.s, self.s_bar)

    @property
    def length(self) -> float:
        return self.s_bar - self.s


def _sup_scan(P: TrackParams, s: float, t: float, hi: float, A: IntervalCollection, tau, rho: float, step: float, tol: float) -> float:
    """``sup {r in A cap [s, hi] : d(e, u^{-(r-s)} g u^{tau(r)-t}) <= rho}``, scanning members right to left."""
    lvl = rho * (1 + LIFT_SLACK) + LIFT_SLACK
    pieces = [(max(lo, s), min(up, hi)) for lo, up in A.members if up >= s and lo <= hi]
    for lo, up in reversed(pieces):
        n = max(2, int(math.ceil((up - lo) / step)) + 1)
        r = np.linspace(lo, up, n)
        D = transported_distance(P, r - s, _tau_vec(tau, r) - t)
        ok = np.nonzero(D <= lvl)[0]
        if len(ok) == 0:
            continue
        i = ok[-1]
        if i == n - 1:
            return float(up)
        a, b = float(r[i]), float(r[i + 1])
        while b - a > tol:
            c = 0.5 * (a + b)
            dc = transported_distance(P, np.array([c - s]), _tau_vec(tau, np.array([c])) - t)[0]
            if dc <= lvl:
                a = c
            else:
                b = c
        return a
    return s


def _member_of(A: IntervalCollection, r: float, tol: float) -> Optional[tuple]:
    for lo, up in A.members:
        if lo - tol <= r <= up + tol:
            return (lo, up)
    return None


def build_blocks(
    x: QuotientPoint,
    y: QuotientPoint,
    tau,
    A_set: IntervalCollection,
    rho: float,
    eps: float,
    eta: float,
    frame: Optional[Sl2Frame] = None,
    step: Optional[float] = None,
    tol: float = 1e-6,
    m: Optional[float] = None,
    max_blocks: int = 10000,
) -> list:
    """Maximal blocks along ``x u^r`` and ``y u^{tau(r)}`` for ``r`` in ``A_set``.

    Lifts: ``x_j = x u^{s_j}`` on a single orbit lift and ``y_j`` the unique
    lift of ``y u^{tau(s_j)}`` within ``rho`` of ``x_j``.  When ``m`` is given
    the block invariants are asserted (:class:`BlockInvariantError`).
    """
    fr = frame or x.lattice.default_frame()
    if not A_set.members or not A_set.contains(0.0):
        raise ValueError("A_set must contain 0")
    step = step or min(rho / 4, 0.05)
    lam = A_set.members[-1][1]
    blocks: list = []
    s = 0.0
    while True:
        if len(blocks) >= max_blocks:
            raise BlockError("block budget exhausted", s)
        t = float(_tau_vec(tau, np.array([s]))[0])
        xj = x.rep @ fr.u(s)
        yq = QuotientPoint(y.rep @ fr.u(t), y.lattice)
        lifts = lift_near(xj, yq, rho * (1 + LIFT_SLACK) + LIFT_SLACK, fr)
        if not lifts:
            raise BlockError("no lift of y u^tau within rho (condition on A fails)", s)
        if len(lifts) > 1:
            raise LiftAmbiguity(f"{len(lifts)} lifts within rho (injectivity condition violated)", s)
        d0, ylift, H = lifts[0]
        P = decompose_near_identity(H, fr)
        le = l_eps(TrackState(P, fr), eps, eta)
        hi = min(lam, s + le)
        sb = _sup_scan(P, s, t, hi, A_set, tau, rho, step, tol)
        tb = float(_tau_vec(tau, np.array([sb]))[0])
        blk = Block(len(blocks), s, sb, t, tb, xj, ylift, P, H, le, d0)
        blocks.append(blk)
        if sb >= lam - 1e-12:
            break
        mem = _member_of(A_set, sb, 1e-12)
        if mem is not None and sb < mem[1] - 1e-12:
            nxt = sb  # inf {r > sbar : r in A} when sbar is interior to A
            if sb - s <= 1e-12:
                nxt = sb + step
                blk.flags.append(f"zero-length block; advanced by {step:g}")
        else:
            later = [lo for lo, _ in A_set.members if lo > sb]
            if not later:
                break
            nxt = later[0]
        s = float(nxt)
    if m is not None:
        viol = check_block_invariants(blocks, m, eps, eta, rho, fr, A_set, x)
        if viol:
            raise BlockInvariantError("; ".join(viol[:5]))
    return blocks


def _relative_transport(bj: Block, bk: Block, frame: Sl2Frame) -> Optional[GroupElement]:
    """``x_k^{-1} y_j u^{t_k - t_j}`` built from exact transported parameters."""
    try:
        T = transported_params(bj.rel, bk.s - bj.s, bk.t - bj.t)
    except OutOfTrackingInterval:
        return None
    return assemble(T, frame)


def block_equiv(b1: Block, b2: Block, tol: float = 1e-6, frame: Optional[Sl2Frame] = None) -> bool:
    """``y_k = y_j u^{t_k - t_j}`` up to ``tol`` in group distance."""
    if b1.index == b2.index:
        return True
    bj, bk = (b1, b2) if b1.s <= b2.s else (b2, b1)
    fr = frame
    if fr is None:
        raise ValueError("frame required")
    M = _relative_transport(bj, bk, fr)
    if M is None:
        return False
    D = np.linalg.solve(M.matrix, bk.rel_matrix.matrix)
    if np.abs(D - np.eye(len(D))).max() > 1.0:
        return False
    try:
        return decompose_near_identity(D, fr).distance <= tol
    except ChartError:
        return False


def equivalence_matrix(blocks: list, frame: Sl2Frame, tol: float = 1e-6) -> np.ndarray:
    n = len(blocks)
    E = np.eye(n, dtype=bool)
    for j in range(n):
        for k in range(j + 1, n):
            E[j, k] = E[k, j] = block_equiv(blocks[j], blocks[k], tol, frame)
    return E


def equivalence_classes(E: np.ndarray) -> list:
    cls = [-1] * len(E)
    nxt = 0
    for i in range(len(E)):
        if cls[i] < 0:
            for k in np.nonzero(E[i])[0]:
                cls[int(k)] = nxt
            nxt += 1
    return cls


def check_block_invariants(blocks: list, m: float, eps: float, eta: float, rho: float, frame: Sl2Frame, A_set: Optional[IntervalCollection] = None, x: Optional[QuotientPoint] = None) -> list:
    """Violated block invariants as human-readable strings (empty when all hold)."""
    viol = []
    E = equivalence_matrix(blocks, frame)
    for b in blocks:
        if b.d0 > rho * (1 + LIFT_SLACK) + LIFT_SLACK:
            viol.append(f"J{b.index}: d(x_j, y_j)={b.d0:.3g} > rho")
        if b.s_bar - b.s > b.l_eps * (1 + 1e-12) + 1e-9:
            viol.append(f"J{b.index}: length exceeds l_eps")
        if x is not None:
            ref = (x.rep @ frame.u(b.s)).matrix
            if np.abs(ref - b.x_lift.matrix).max() > 1e-9 * max(1.0, np.abs(ref).max()):
                viol.append(f"J{b.index}: x-lift off the orbit lift")
    for j, bj in enumerate(blocks):
        for k in range(j + 1, len(blocks)):
            bk = blocks[k]
            ds, dt = bk.s - bj.s_bar, bk.t - bj.t_bar
            if E[j, k]:
                if bk.s - bj.s < bj.l_eps * (1 - 1e-9) - 1e-9:
                    viol.append(f"J{j}~J{k}: spacing below l_eps")
                if not bk.s - bj.s > m:
                    viol.append(f"J{j}~J{k}: spacing {bk.s - bj.s:.4g} <= m")
            else:
                if not max(ds, dt) > m:
                    viol.append(f"J{j}!~J{k}: max delay {max(ds, dt):.4g} <= m")
                in_A = A_set is None or A_set.contains(bj.s_bar)
                if in_A and ds > 0 and abs(dt - ds) > 4 * ds ** (1 - eta) + 1e-9:
                    viol.append(f"J{j}!~J{k}: delay mismatch {abs(dt - ds):.4g}")
    return viol


# ---------------------------------------------------------------- superblocks


@dataclass
class Superblock:
    index: int
    s: float
    s_bar: float
    members: list
    leader: int
    components: list  # absolute intervals of the covering sub-level components
    component_ids: list
    flags: list = field(default_factory=list)

    @property
    def h(self) -> int:
        return len(self.components)

    @property
    def interval(self) -> tuple:
        return (self.s, self.s_bar)

    @property
    def length(self) -> float:
        return self.s_bar - self.s


def superblocks(
    blocks: list,
    b: float,
    eps: float,
    eta: float,
    kappa_tilde: float,
    frame: Sl2Frame,
    E: Optional[np.ndarray] = None,
) -> list:
    """Merge equivalent blocks lying in a b-close chain of sub-level components of the leader."""
    n = len(blocks)
    if E is None:
        E = equivalence_matrix(blocks, frame)
    out: list = []
    i = 0
    while i < n:
        lead = blocks[i]
        fol = [k for k in range(i + 1, n) if E[i, k]]
        if not fol:
            out.append(Superblock(len(out), lead.s, lead.s_bar, [i], i, [lead.interval], [0]))
            i += 1
            continue
        flags = []
        s_max = blocks[fol[-1]].s_bar - lead.s
        sub = sublevel_components(TrackState(lead.rel, frame), eps, eta, kappa_tilde, s_max)
        comps = sub.components
        loc = {}
        for k in [i] + fol:
            lo, hi = blocks[k].s - lead.s, blocks[k].s_bar - lead.s
            c1, c2 = sub.locate(lo, 1e-7), sub.locate(hi, 1e-7)
            if c1 is None or c1 != c2:
                flags.append(f"kappa_tilde too small: J{k} not inside one sub-level component")
            else:
                loc[k] = c1
        chain_end = 0
        while chain_end + 1 < len(comps) and is_b_close(comps[chain_end : chain_end + 2], b):
            chain_end += 1
        inside = [loc[k] for k in fol if k in loc and loc[k] <= chain_end]
        if not inside or loc.get(i) != 0:
            out.append(Superblock(len(out), lead.s, lead.s_bar, [i], i, [lead.interval], [0], flags))
            i += 1
            continue
        kbar = max(inside)
        jbar = max(k for k in fol if loc.get(k) == kbar)
        used = [(lo + lead.s, hi + lead.s) for lo, hi in comps[: kbar + 1]]
        out.append(Superblock(len(out), lead.s, blocks[jbar].s_bar, list(range(i, jbar + 1)), i, used, list(range(kbar + 1)), flags))
        i = jbar + 1
    return out


def verify_superblocks(sbs: list, blocks: list, b: float, m: float, frame: Sl2Frame, E: np.ndarray, A_set: Optional[IntervalCollection] = None) -> dict:
    """Independent re-check of the four superblock properties; returns ``{item: (ok, detail)}``."""
    items = {}
    hulls = [sb.interval for sb in sbs]

    def covered(lo, hi):
        return any(a - 1e-9 <= lo and hi <= c + 1e-9 for a, c in hulls)

    bad = [bl.index for bl in blocks if not covered(bl.s, bl.s_bar)]
    if A_set is not None:
        blk = [bl.interval for bl in blocks]
        for lo, hi in A_set.members:
            grid = np.linspace(lo, hi, 33)
            if not all(any(a - 1e-9 <= r <= c + 1e-9 for a, c in blk) for r in grid):
                bad.append(f"A member {lo:.4g}..{hi:.4g}")
    items["cover"] = (not bad, bad)
    d2 = []
    for sb in sbs:
        rel = [(lo - sb.s, hi - sb.s) for lo, hi in sb.components]
        ok = sb.h <= frame.D and is_b_close(rel, b) and abs(sb.s - blocks[sb.members[0]].s) < 1e-12 and abs(sb.s_bar - blocks[sb.members[-1]].s_bar) < 1e-12
        if not ok:
            d2.append(sb.index)
    items["decomposition"] = (not d2, d2)
    d3, d4 = [], []
    for p in range(len(sbs)):
        for q in range(p + 1, len(sbs)):
            gap = sbs[q].s - sbs[p].s_bar
            L = min(sbs[p].length, sbs[q].length)
            if E[sbs[p].leader, sbs[q].leader] and gap < L ** (1 + b) - 1e-9:
                d3.append((p, q))
            if q == p + 1 and gap < m / 5:
                d4.append((p, q, gap))
    items["equivalent-b-separated"] = (not d3, d3)
    items["gaps"] = (not d4, d4)
    return items


# ---------------------------------------------------------------- a-push


def push_a_distance(x_lift: GroupElement, y_lift: GroupElement, frame: Sl2Frame, L: float, r: float, eta: float, kappa: float, eps: float = 0.1) -> dict:
    """Compare ``d(x a^T, y a^T)``, ``T = (1+r) log L``, with ``3 kappa (L^{-1/2+(r+eta)/2} + L^{-eta/2+r})``."""
    if not (0 < r < 1 and L > 1):
        raise ValueError("need 0 < r < 1 and L > 1")
    g = np.linalg.solve(x_lift.matrix, y_lift.matrix)
    P = decompose_near_identity(g, frame)
    pre = {
        "u": abs(P.u) <= eps * (1 + 1e-12),
        "a": abs(P.a) <= kappa * L ** (-eta / 2) * (1 + 1e-12),
        "ubar": abs(P.ubar) <= kappa * L ** (-1 - eta / 2) * (1 + 1e-12),
        "c": all(
            abs(c[j]) <= kappa * eps * L ** (-j + eta / 2) * (1 + 1e-12) for c in P.c for j in range(len(c))
        ),
    }
    T = (1 + r) * math.log(L)
    dm = 0.0
    for c, w in zip(P.c, frame.weights()):
        if len(c):
            dm = max(dm, float(np.max(np.abs(np.asarray(c) * np.exp(-w * T)))))
    ds = abs(P.a) + math.exp(T) * abs(P.ubar) + math.exp(-T) * abs(P.u)
    lhs = max(dm, ds)
    rhs = 3 * kappa * (L ** (-0.5 + (r + eta) / 2) + L ** (-eta / 2 + r))
    # direct matrix cross-check when the conjugate is still inside the chart
    direct = None
    try:
        conj = frame.a(-T) @ GroupElement.from_matrix(g, frame.dims) @ frame.a(T)
        direct = decompose_near_identity(conj, frame).distance
    except ChartError:
        pass
    status = "ok" if all(pre.values()) else "hypothesis-failed"
    return {
        "status": status,
        "preconditions": pre,
        "T": T,
        "lhs": lhs,
        "lhs_direct": direct,
        "rhs": rhs,
        "holds": lhs <= rhs,
        "slack": rhs - lhs,
        "d_m": dm,
        "d_s": ds,
    }


def renormalized_conjugacy(psi: Conjugacy, p: QuotientPoint, t: float) -> QuotientPoint:
    """``psi_t(p) = psi(p a^{-t}) a^t``."""
    return flow_a(psi(flow_a(p, -t)), t)


# ---------------------------------------------------------------- Basic Lemma pipeline


@lru_cache(maxsize=None)
def default_theta(b: float, trials: int = 1000, seed: int = 0) -> float:
    return float(solovay_estimate_theta(b, trials, seed)["theta"])


def basic_lemma_kappa(frame: Sl2Frame, kappa_tilde: float) -> float:
    """Constant for the four parameter bounds from the polynomial coefficient bounds.

    Degree ``K = max(2, max d)``; ``kappa = 2 kappa_tilde K! kappa_K kappa_K'^{D-1}``.
    """
    K = max(2, frame.max_d)
    return 2.0 * kappa_tilde * factorial(K) * norm_equivalence_constant(K) * kappa_prime(K) ** (frame.D - 1)


def max_b(frame: Sl2Frame, eta: float) -> float:
    """Supremum of admissible ``b``: ``eta / (2 D max d)``."""
    return eta / (2 * frame.D * max(1, frame.max_d))


@dataclass
class BasicLemmaConfig:
    rho: float
    eps: float = 0.1
    eta: float = 0.2
    b: Optional[float] = None
    theta: Optional[float] = None
    m: float = 5.0
    kappa: Optional[float] = None
    kappa_tilde: float = 16.0
    n_ic_samples: int = 40
    n_fbr_samples: int = 4
    fbr: tuple = (1.0, 0.5, 0.05)  # (T0, c, r0)
    step: Optional[float] = None
    tol: float = 1e-6
    verify_tol: float = 1e-6
    seed: int = 0

    def resolved(self, frame: Sl2Frame) -> "BasicLemmaConfig":
        b = self.b if self.b is not None else 0.5 * max_b(frame, self.eta)
        theta = self.theta if self.theta is not None else default_theta(round(b, 12))
        kappa = self.kappa if self.kappa is not None else basic_lemma_kappa(frame, self.kappa_tilde)
        return BasicLemmaConfig(**{**self.__dict__, "b": b, "theta": theta, "kappa": kappa})

    def validate(self, frame: Sl2Frame) -> list:
        errs = []
        if not 0 < self.eps < 0.1 + 1e-12:
            errs.append("eps must lie in (0, 0.1]")
        if not 0 < self.rho <= self.eps / 2:
            errs.append("rho must lie in (0, eps/2]")
        if not 0 < self.eta < 1:
            errs.append("eta must lie in (0, 1)")
        if self.b is not None and not 0 < self.b < max_b(frame, self.eta):
            errs.append(f"b must lie in (0, eta/(2 D max d)) = (0, {max_b(frame, self.eta):.4g})")
        if self.theta is not None and not 0 < self.theta < 1:
            errs.append("theta must lie in (0, 1)")
        if self.m <= 0:
            errs.append("m must be positive")
        return errs


def standing_assumption_ok(rho: float, eps: float, eta: float, m: float, frame: Sl2Frame) -> bool:
    """Worst case over ``d(g, e) <= rho``: both divergence functionals stay below threshold on ``[0, m]``."""
    rs = rho * m * m + m * (math.exp(rho) - 1)
    rm = rho * sum(m ** k / factorial(k) for k in range(frame.max_d + 1))
    return rs <= m ** (1 - eta) + eps and rm <= eps


@dataclass
class BasicLemmaOutput:
    found: bool
    s_bar: Optional[float]
    g: Optional[TrackParams]
    bound_report: dict
    failed: list
    stage: str
    hypotheses: dict = field(default_factory=dict)
    blocks: list = field(default_factory=list)
    superblocks: list = field(default_factory=list)
    classes: list = field(default_factory=list)
    superblock_items: dict = field(default_factory=dict)
    solovay: Optional[object] = None
    winner: Optional[int] = None
    verification: Optional[float] = None
    constants: dict = field(default_factory=dict)

    def block_rows(self) -> list:
        rows = []
        comp = {}
        for sb in self.superblocks:
            for k in sb.members:
                comp[k] = sb.index
        for bl in self.blocks:
            rows.append((bl.index, bl.s, bl.s_bar, bl.t, bl.t_bar, self.classes[bl.index] if self.classes else -1, comp.get(bl.index, -1)))
        return rows

    def superblock_rows(self) -> list:
        return [(sb.index, sb.s, sb.s_bar, self.classes[sb.leader] if self.classes else -1, ";".join(map(str, sb.component_ids)), ";".join(map(str, sb.members))) for sb in self.superblocks]

    def manifest(self) -> dict:
        return {
            "found": self.found,
            "stage": self.stage,
            "failed": self.failed,
            "s_bar": self.s_bar,
            "g": None if self.g is None else {"c": [list(map(float, c)) for c in self.g.c], "a": self.g.a, "ubar": self.g.ubar, "u": self.g.u},
            "bounds": self.bound_report,
            "hypotheses": self.hypotheses,
            "superblock_items": {k: {"ok": bool(v[0]), "detail": [str(d) for d in v[1]]} for k, v in self.superblock_items.items()},
            "solovay": None if self.solovay is None else {"status": self.solovay.status, "density": self.solovay.density, "failed": self.solovay.failed},
            "n_blocks": len(self.blocks),
            "n_superblocks": len(self.superblocks),
            "verification_distance": self.verification,
            "constants": self.constants,
        }


def bound_report(g: TrackParams, lam: float, eps: float, eta: float, kappa: float) -> dict:
    rep = {
        "u": {"value": abs(g.u), "bound": eps},
        "a": {"value": abs(g.a), "bound": kappa * lam ** (-eta / 2)},
        "ubar": {"value": abs(g.ubar), "bound": kappa * lam ** (-1 - eta / 2)},
    }
    for i, c in enumerate(g.c):
        for j, cj in enumerate(np.asarray(c, dtype=float)):
            rep[f"c[{i}][{j}]"] = {"value": abs(float(cj)), "bound": kappa * eps * lam ** (-j + eta / 2)}
    for v in rep.values():
        v["pass"] = bool(v["value"] <= v["bound"])
    return rep


def _check_hypotheses(x, y, tau, A: IntervalCollection, cfg: BasicLemmaConfig, frame: Sl2Frame) -> dict:
    lam = A.ambient[1]
    rng = np.random.default_rng(cfg.seed)
    hyp = {}
    hyp["contains-endpoints"] = A.contains(0.0) and A.contains(lam)
    hyp["lambda>m"] = lam > cfg.m
    dens = A.density()
    hyp["density"] = dens > 1 - cfg.theta / 8
    hyp["standing-assumption"] = standing_assumption_ok(cfg.rho, cfg.eps, cfg.eta, cfg.m, frame)
    # sample points of A: both ends of every member plus random interior points
    pts = sorted({lo for lo, _ in A.members} | {hi for _, hi in A.members})
    L = A.length
    if cfg.n_ic_samples > 0 and L > 0:
        u = rng.uniform(0, L, cfg.n_ic_samples)
        cum = np.cumsum([0.0] + [hi - lo for lo, hi in A.members])
        for v in u:
            k = int(np.searchsorted(cum, v, side="right") - 1)
            k = min(k, len(A.members) - 1)
            pts.append(A.members[k][0] + (v - cum[k]))
    pts = np.array(sorted(pts))
    taus = _tau_vec(tau, pts)
    # condition (3): quotient distance below rho
    dmax = 0.0
    for r, t in zip(pts, taus):
        d = quotient_distance(QuotientPoint(x.rep @ frame.u(float(r)), x.lattice), QuotientPoint(y.rep @ frame.u(float(t)), y.lattice), frame)
        dmax = max(dmax, d)
    hyp["close-orbits"] = dmax < cfg.rho
    # condition (4) on a sample of pairs r < r'
    worst = -math.inf
    grid = np.linspace(0, lam, 257)
    tg = _tau_vec(tau, grid)
    for r, t in zip(pts, taus):
        sel = (grid - r > cfg.m) | (tg - t > cfg.m)
        sel &= grid > r
        if sel.any():
            dr = grid[sel] - r
            ex = np.abs((tg[sel] - t) - dr) - 4 * dr ** (1 - cfg.eta)
            worst = max(worst, float(ex.max()))
    hyp["holder-time-map"] = worst <= 1e-9
    # injectivity condition at sampled points of A (exhaustive check per point)
    ic_bad = []
    ic_pts = pts if len(pts) <= cfg.n_ic_samples + 2 * len(A.members) else pts[:: max(1, len(pts) // cfg.n_ic_samples)]
    for r in ic_pts:
        rep = check_IC(QuotientPoint(x.rep @ frame.u(float(r)), x.lattice), cfg.rho, cfg.m, frame=frame)
        if rep.verdict is not True:
            ic_bad.append(float(r))
    hyp["injectivity"] = not ic_bad
    fbr_pass = 0
    T0, c, r0 = cfg.fbr
    for r in pts[:: max(1, len(pts) // max(1, cfg.n_fbr_samples))][: cfg.n_fbr_samples]:
        if check_FBR(QuotientPoint(x.rep @ frame.u(float(r)), x.lattice), T0, c, r0, 8 * T0 + 8, frame=frame).verdict:
            fbr_pass += 1
    details = {
        "density": dens,
        "density_threshold": 1 - cfg.theta / 8,
        "max_orbit_distance": dmax,
        "holder_excess": worst,
        "ic_failures": ic_bad,
        "ic_samples": int(len(ic_pts)),
        "fbr_pass": fbr_pass,
        "fbr_samples": min(cfg.n_fbr_samples, len(pts)),
    }
    return {"flags": hyp, "details": details}


def basic_lemma_pipeline(x: QuotientPoint, y: QuotientPoint, tau, A_set: IntervalCollection, config: BasicLemmaConfig, frame: Optional[Sl2Frame] = None) -> BasicLemmaOutput:
    """Blocks, superblocks and Solovay's lemma; on success extract and re-verify ``g``."""
    fr = frame or x.lattice.default_frame()
    errs = config.validate(fr)
    if errs:
        raise ValueError("; ".join(errs))
    cfg = config.resolved(fr)
    lam = A_set.ambient[1]
    consts = {k: v for k, v in cfg.__dict__.items() if k != "fbr"}
    consts.update({"fbr": list(cfg.fbr), "lambda": lam, "D": fr.D, "max_d": fr.max_d, "frame": fr.name})

    def fail(stage, failed, **kw):
        return BasicLemmaOutput(False, None, None, {}, failed, stage, constants=consts, **kw)

    hyp = _check_hypotheses(x, y, tau, A_set, cfg, fr)
    failed = [k for k, v in hyp["flags"].items() if not v]
    if failed:
        return fail("hypotheses", failed, hypotheses=hyp)
    try:
        blocks = build_blocks(x, y, tau, A_set, cfg.rho, cfg.eps, cfg.eta, fr, cfg.step, cfg.tol)
    except BlockError as exc:
        return fail("blocks", [str(exc)], hypotheses=hyp)
    E = equivalence_matrix(blocks, fr)
    classes = equivalence_classes(E)
    viol = check_block_invariants(blocks, cfg.m, cfg.eps, cfg.eta, cfg.rho, fr, A_set, x)
    if viol:
        return fail("block-invariants", viol, hypotheses=hyp, blocks=blocks, classes=classes)
    sbs = superblocks(blocks, cfg.b, cfg.eps, cfg.eta, cfg.kappa_tilde, fr, E)
    items = verify_superblocks(sbs, blocks, cfg.b, cfg.m, fr, E, A_set)
    sb_flags = [f for sb in sbs for f in sb.flags]
    common = dict(hypotheses=hyp, blocks=blocks, superblocks=sbs, classes=classes, superblock_items=items)
    if sb_flags:
        return fail("superblocks", sb_flags, **common)
    bad_items = [k for k, v in items.items() if not v[0]]
    if bad_items:
        return fail("superblocks", [f"item:{k}" for k in bad_items], **common)
    coll = IntervalCollection.of((0.0, lam), [sb.interval for sb in sbs])
    sol = solovay_find_block(coll, cfg.b, cfg.theta)
    if not sol.found:
        label = [f"solovay:{f}" for f in sol.failed] or ["solovay:no-long-superblock"]
        return fail("solovay", label, solovay=sol, **common)
    win = next(sb for sb in sbs if abs(sb.s - sol.member[0]) < 1e-12 and abs(sb.s_bar - sol.member[1]) < 1e-12)
    lead = blocks[win.leader]
    g = lead.rel
    rep = bound_report(g, lam, cfg.eps, cfg.eta, cfg.kappa)
    # never trust the search: rebuild x u^s g and y u^{tau(s)} and compare on the quotient
    left = QuotientPoint(x.rep @ fr.u(lead.s) @ lead.rel_matrix, x.lattice)
    right = QuotientPoint(y.rep @ fr.u(lead.t), y.lattice)
    dv = quotient_distance(left, right, fr)
    ok_bounds = all(v["pass"] for v in rep.values())
    out = BasicLemmaOutput(
        ok_bounds and dv <= cfg.verify_tol,
        lead.s,
        g,
        rep,
        [],
        "done",
        solovay=sol,
        winner=win.index,
        verification=dv,
        constants=consts,
        **common,
    )
    if not ok_bounds:
        out.failed = ["bounds:" + k for k, v in rep.items() if not v["pass"]]
    if dv > cfg.verify_tol:
        out.failed.append(f"verification distance {dv:.3g}")
    return out


# ---------------------------------------------------------------- coboundary testbed


def orbit_heights(x: QuotientPoint, r: np.ndarray) -> np.ndarray:
    """Cusp height ``1/lambda_1^2`` of the first factor along ``x u^r``."""
    g = x.rep.factors[0]
    out = np.empty(len(r))
    for i, t in enumerate(r):
        B = kernels.reduce_basis(g @ np.array([[1.0, t], [0.0, 1.0]]))
        out[i] = 1.0 / float(B[0] @ B[0])
    return out


def ic_risk_mask(x: QuotientPoint, r: np.ndarray, rho: float, m: float) -> np.ndarray:
    """Times where the parabolic lattice element fixing some primitive ``w`` nearly lies on the flow segment.

    That element is ``I + N``, ``N = [[-w1 w2, -w2^2], [w1^2, w1 w2]]`` in
    the local frame, so it is ``rho``-close to ``u^{-w2^2}`` when
    ``w1^2 + 2|w1 w2| <= rho`` after flowing ``w2`` by at most ``m``.
    A cheap screen, not a certificate.
    """
    g = x.rep.factors[0]
    R = math.sqrt(2 * m) + m * math.sqrt(1.1 * rho)
    out = np.zeros(len(r), dtype=bool)
    for i, t in enumerate(r):
        W = kernels.candidates(g @ np.array([[1.0, t], [0.0, 1.0]]), R, True)
        if not len(W):
            continue
        W = W[W[:, 0] ** 2 < 1.1 * rho]
        if not len(W):
            continue
        # I + N with N = [[-w1 w2, -w2^2], [w1^2, w1 w2]]; the flow moves w2 -> w1 t + w2
        w1, w2 = W[:, 0], W[:, 1]
        s_opt = np.clip(-w2 / np.where(w1 == 0, np.inf, w1), -m, m)
        w2s = w1 * s_opt + w2
        off = w1 ** 2 + 2 * np.abs(w1 * w2s)
        out[i] = bool(np.any((off <= 1.1 * rho) & (w2s ** 2 <= 2 * m)))
    return out


def ic_risk_fraction(x: QuotientPoint, r: np.ndarray, rho: float, m: float) -> float:
    return float(np.mean(ic_risk_mask(x, r, rho, m)))


def ic_good_set(x: QuotientPoint, lam: float, rho: float, m: float, frame: Optional[Sl2Frame] = None, cell: float = 1.0) -> tuple:
    """Union of grid cells ``[k, k+cell]`` whose two ends pass the injectivity check.

    Inconclusive checks count as failures.  Returns ``(IntervalCollection, bad_times)``.
    """
    fr = frame or x.lattice.default_frame()
    n = int(round(lam / cell))
    grid = np.linspace(0.0, lam, n + 1)
    good = np.array([check_IC(QuotientPoint(x.rep @ fr.u(float(r)), x.lattice), rho, m, frame=fr).verdict is True for r in grid])
    members = []
    for k in range(n):
        if good[k] and good[k + 1]:
            if members and abs(members[-1][1] - grid[k]) < 1e-12:
                members[-1][1] = grid[k + 1]
            else:
                members.append([grid[k], grid[k + 1]])
    isolated = [float(grid[k]) for k in range(n + 1) if good[k] and not any(lo <= grid[k] <= hi for lo, hi in members)]
    for r in isolated:
        members.append([r, r])
    members.sort()
    return IntervalCollection.of((0.0, lam), [tuple(mm) for mm in members]), [float(r) for r in grid[~good]]


@dataclass
class Testbed:
    x: QuotientPoint
    y: QuotientPoint
    tau: object
    A: IntervalCollection
    F: SiegelObservable
    offset: GroupElement
    frame: Sl2Frame
    seed: int
    ic_bad: list

    def true_relative(self, s: float) -> GroupElement:
        """Ground truth ``x_s^{-1} y_s = u^{F(x u^s)} g0`` at orbit time ``s``."""
        f = float(self.tau.F_along(np.array([s]))[0])
        return self.frame.u(f) @ self.offset


def coboundary_testbed(
    lam: float = 1000.0,
    rho: float = 0.005,
    m: float = 5.0,
    amplitude: float = 1e-3,
    offset: tuple = ("u", 0.003),
    seed: int = 0,
    n_candidates: int = 32,
    module: int = 0,
) -> Testbed:
    """Two orbits related by a coboundary conjugacy composed with a commuting offset.

    ``offset = ("u", u0)`` uses a single modular surface and ``g0 = u^{u0}``;
    ``("c", c0)`` uses the product of two copies and ``g0 = exp(c0 E)`` with
    ``E`` the invariant vector of Jordan module ``module`` (second factor).
    The base point is the seeded Haar candidate with the smallest
    :func:`ic_risk_fraction`; the good set is the IC-good grid.
    """
    kind, val = offset
    lat = LatticeSpec() if kind == "u" else LatticeSpec.product(2)
    fr = lat.default_frame()
    if kind == "u":
        g0 = fr.u(val)
    elif kind == "c":
        from .liealg import expm

        E = fr.modules[module].basis[0]
        g0 = GroupElement.from_matrix(expm(val * np.asarray(E)), fr.dims)
    else:
        raise ValueError("offset kind must be 'u' or 'c'")
    F = siegel_observable().scaled(amplitude)
    rng = np.random.default_rng(seed)
    cands = sample_haar(n_candidates, rng, lat)
    grid = np.linspace(0.0, lam, int(4 * lam) + 1)
    scores = [ic_risk_fraction(p, grid, rho, m) for p in cands]
    x = cands[int(np.argmin(scores))]
    _, psi = build_coboundary_conjugacy(F, offset=g0)
    f0 = F(x)
    y = QuotientPoint(x.rep @ fr.u(f0) @ g0, lat)
    tau = CoboundaryTau(F, x)
    A, bad = ic_good_set(x, lam, rho, m, fr)
    return Testbed(x, y, tau, A, F, g0, fr, seed, bad)
