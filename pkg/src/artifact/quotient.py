"""Points of SL(2,Z)^k \\ SL(2,R)^k: reduction, flows, distance, injectivity radius, IC/FBR.

The lattice acts on the left; the lattice attached to a representative ``g``
is the row lattice ``Z^2 g``, which is invariant under ``g -> gamma g``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .liealg import (
    ChartError,
    GroupElement,
    Sl2Frame,
    catalog_frame,
    decompose_near_identity,
)

DEFAULT_INJ_CONSTANT = 0.25
S_MAT = np.array([[0.0, -1.0], [1.0, 0.0]])


@dataclass(frozen=True)
class LatticeSpec:
    kind: str = "SL2Z"
    factors: int = 1
    enum_radius: float = 8.0

    def __post_init__(self):
        if self.enum_radius < 1:
            raise ValueError("enumeration radius must be >= 1")
        if self.kind not in ("SL2Z", "SL2Z^k"):
            raise ValueError(f"unsupported lattice kind {self.kind!r}")
        if self.kind == "SL2Z" and self.factors != 1:
            raise ValueError("SL2Z has one factor; use SL2Z^k for products")

    @classmethod
    def product(cls, k: int, enum_radius: float = 8.0) -> "LatticeSpec":
        return cls("SL2Z" if k == 1 else "SL2Z^k", k, enum_radius)

    @property
    def dims(self) -> tuple:
        return (2,) * self.factors

    def default_frame(self) -> Sl2Frame:
        return _default_frame(self.factors)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "factors": self.factors, "enum_radius": self.enum_radius}


@lru_cache(maxsize=None)
def _default_frame(k: int) -> Sl2Frame:
    if k == 1:
        return catalog_frame("sl2")
    if k == 2:
        return catalog_frame("sl2xsl2")
    from .liealg import block_diag, build_jordan_basis

    U = np.array([[0.0, 1.0], [0.0, 0.0]])
    A = np.diag([0.5, -0.5])
    Ub = U.T.copy()
    z = [np.zeros((2, 2))] * (k - 1)
    seed = tuple(block_diag([X] + z) for X in (U, A, Ub))
    return build_jordan_basis(seed, (2,) * k, name=f"sl2^{k}")


@dataclass(frozen=True, eq=False)
class QuotientPoint:
    rep: GroupElement
    lattice: LatticeSpec = field(default_factory=LatticeSpec)

    @classmethod
    def from_matrix(cls, M, lattice: Optional[LatticeSpec] = None) -> "QuotientPoint":
        M = np.asarray(M, dtype=float)
        lat = lattice or LatticeSpec.product(M.shape[0] // 2)
        return cls(GroupElement.from_matrix(M, lat.dims), lat)

    @classmethod
    def identity(cls, lattice: Optional[LatticeSpec] = None) -> "QuotientPoint":
        lat = lattice or LatticeSpec()
        return cls(GroupElement.identity(lat.dims), lat)

    @property
    def matrix(self) -> np.ndarray:
        return self.rep.matrix

    def right(self, g: GroupElement) -> "QuotientPoint":
        return QuotientPoint(self.rep @ g, self.lattice)

    def to_dict(self) -> dict:
        return {"lattice": self.lattice.to_dict(), "rep": [np.asarray(f).ravel().tolist() for f in self.rep.factors]}

    @classmethod
    def from_dict(cls, d: dict) -> "QuotientPoint":
        lat = LatticeSpec(**d["lattice"])
        return cls(GroupElement(tuple(np.array(f, dtype=float).reshape(2, 2) for f in d["rep"])), lat)


# ---------------------------------------------------------------- reduction


def reduce_sl2(g: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Representative ``gamma g`` whose point ``gamma g . i`` lies in the standard fundamental domain."""
    g = np.array(g, dtype=float)
    for _ in range(10000):
        a, b, c, d = g[0, 0], g[0, 1], g[1, 0], g[1, 1]
        den = c * c + d * d
        x = (a * c + b * d) / den
        y = 1.0 / den
        n = -math.ceil(x - 0.5 - tol)
        if n:
            g = np.array([[1.0, n], [0.0, 1.0]]) @ g
            x += n
        r2 = x * x + y * y
        if r2 < 1.0 - tol or (abs(r2 - 1.0) <= tol and x < -tol):
            g = S_MAT @ g
            continue
        break
    if g[1, 1] < 0 or (g[1, 1] == 0 and g[1, 0] < 0):
        g = -g
    return g


def halfplane_point(g: np.ndarray) -> complex:
    a, b, c, d = g[0, 0], g[0, 1], g[1, 0], g[1, 1]
    return (a * 1j + b) / (c * 1j + d)


def reduce(p: QuotientPoint) -> QuotientPoint:
    return QuotientPoint(GroupElement(tuple(reduce_sl2(f) for f in p.rep.factors)), p.lattice)


def translate(p: QuotientPoint, gamma) -> QuotientPoint:
    """Change representative ``rep -> gamma rep`` (same coset)."""
    if isinstance(gamma, GroupElement):
        gs = gamma.factors
    elif np.asarray(gamma).ndim == 2:
        gs = (np.asarray(gamma, dtype=float),)
    else:
        gs = tuple(np.asarray(x, dtype=float) for x in gamma)
    for gm in gs:
        if np.abs(gm - np.round(gm)).max() > 0 or abs(round(np.linalg.det(gm)) - 1) != 0:
            raise ValueError("gamma must be an integer matrix of determinant 1")
    return QuotientPoint(GroupElement(tuple(x @ f for x, f in zip(gs, p.rep.factors))), p.lattice)


def flow_u(p: QuotientPoint, t: float, frame: Optional[Sl2Frame] = None) -> QuotientPoint:
    fr = frame or p.lattice.default_frame()
    return reduce(p.right(fr.u(t)))


def flow_a(p: QuotientPoint, t: float, frame: Optional[Sl2Frame] = None) -> QuotientPoint:
    fr = frame or p.lattice.default_frame()
    return reduce(p.right(fr.a(t)))


def same_point(p: QuotientPoint, q: QuotientPoint, tol: float = 1e-9) -> bool:
    return quotient_distance(p, q) <= tol


# ---------------------------------------------------------------- enumeration


@lru_cache(maxsize=8)
def enumerate_gamma(radius: float) -> np.ndarray:
    """All integer matrices of determinant 1 with entries bounded by ``radius``."""
    R = int(math.floor(radius))
    r = np.arange(-R, R + 1)
    a, b, c = np.meshgrid(r, r, r, indexing="ij")
    a, b, c = a.ravel(), b.ravel(), c.ravel()
    out = []
    for dv in r:
        mask = a * dv - b * c == 1
        k = int(mask.sum())
        if k:
            out.append(np.stack([a[mask], b[mask], c[mask], np.full(k, dv)], axis=1))
    G = np.concatenate(out).reshape(-1, 2, 2).astype(float)
    G.setflags(write=False)
    return G


def _is_pm_identity(G: np.ndarray) -> np.ndarray:
    return (G[:, 0, 1] == 0) & (G[:, 1, 0] == 0) & (np.abs(G[:, 0, 0]) == 1)


def sl2_distance_batch(H: np.ndarray) -> np.ndarray:
    """Closed-form ``|a| + |ubar| + |u|`` for a stack of SL(2) matrices (inf when p <= 0)."""
    p, q, r = H[..., 0, 0], H[..., 0, 1], H[..., 1, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        ok = p > 0
        ps = np.where(ok, p, 1.0)
        d = np.abs(2.0 * np.log(ps)) + np.abs(r * ps) + np.abs(q / ps)
    return np.where(ok, d, np.inf)


def _factor_candidates(P: np.ndarray, Q: np.ndarray, radius: float, bound: float = 4.0):
    G = enumerate_gamma(radius)
    H = np.linalg.solve(P, G @ Q)
    dev = np.abs(H - np.eye(2)).max(axis=(1, 2))
    keep = dev < bound
    return G[keep], H[keep]


def _is_standard_product(frame: Sl2Frame) -> bool:
    return frame.name in ("sl2", "sl2xsl2") or frame.name.startswith("sl2^")


def log_sl2(H: np.ndarray) -> np.ndarray:
    """Principal logarithm of an SL(2) matrix with trace > -2 (closed form)."""
    c = 0.5 * (H[0, 0] + H[1, 1])
    if c > 1 + 1e-12:
        th = math.acosh(c)
        f = th / math.sinh(th)
    elif c < 1 - 1e-12:
        th = math.acos(max(-1.0, c))
        f = th / math.sin(th) if th > 0 else 1.0
    else:
        e = c - 1.0
        f = 1.0 - e / 3.0
    return f * (H - c * np.eye(2))


def factor_distances(H: np.ndarray, i: int, frame: Sl2Frame, nf: int) -> np.ndarray:
    """Distance contribution of factor ``i`` for a stack of 2x2 matrices (standard product frames).

    Factor 0 carries the sl2 triple (closed-form ``|a| + |ubar| + |u|``);
    the other factors are pure m-directions (max Jordan coordinate of the log).
    """
    if i == 0:
        # the coordinate distance is not inverse-symmetric; take the smaller ordering
        Hi = np.stack([H[..., 1, 1], -H[..., 0, 1], -H[..., 1, 0], H[..., 0, 0]], axis=-1).reshape(H.shape)
        return np.minimum(sl2_distance_batch(H), sl2_distance_batch(Hi))
    out = np.full(len(H), np.inf)
    n_m = frame.n_m
    for j, h in enumerate(H):
        if h[0, 0] + h[1, 1] <= -2 + 1e-9 or np.abs(h - np.eye(2)).max() > 4.0:
            continue
        X = np.zeros((2 * nf, 2 * nf))
        X[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] = log_sl2(h)
        out[j] = float(np.abs(frame.coords(X)[:n_m]).max())
    return out


def quotient_distance(p: QuotientPoint, q: QuotientPoint, frame: Optional[Sl2Frame] = None) -> float:
    """Minimum of the group distance over enumerated lattice translates; ``inf`` outside the chart."""
    if p.lattice.factors != q.lattice.factors:
        raise ValueError("points live on different quotients")
    fr = frame or p.lattice.default_frame()
    R = p.lattice.enum_radius
    nf = p.lattice.factors
    pr, qr = reduce(p), reduce(q)
    if _is_standard_product(fr):
        best = 0.0
        for i, (P, Q) in enumerate(zip(pr.rep.factors, qr.rep.factors)):
            _, H = _factor_candidates(P, Q, R)
            d = factor_distances(H, i, fr, nf).min() if len(H) else math.inf
            best = max(best, float(d))
        return best if best < fr.chart_radius else math.inf
    per = [_factor_candidates(P, Q, R)[1] for P, Q in zip(pr.rep.factors, qr.rep.factors)]
    if any(len(h) == 0 for h in per):
        return math.inf
    best = math.inf
    for combo in product(*per):
        g = GroupElement(combo)
        for h in (g, g.inv()):
            try:
                best = min(best, decompose_near_identity(h, fr).distance)
            except ChartError:
                continue
    return best


def lift_near(x_lift: GroupElement, y: QuotientPoint, radius: float, frame: Sl2Frame) -> list:
    """All lifts ``gamma y`` within ``radius`` of ``x_lift``, nearest first.

    Returns ``(distance, lift, rel)`` triples where ``rel = x_lift^{-1} lift``
    is computed from reduced representatives (well conditioned).
    """
    nf = y.lattice.factors
    xr = reduce(QuotientPoint(x_lift, y.lattice)).rep
    # x_red = gamma_x x_lift with gamma_x integral
    gam_x = [np.round(rf @ np.linalg.inv(xf)) for xf, rf in zip(x_lift.factors, xr.factors)]
    yr = reduce(y).rep
    per = []
    for i, (P, Q) in enumerate(zip(xr.factors, yr.factors)):
        G, H = _factor_candidates(P, Q, y.lattice.enum_radius)
        if _is_standard_product(frame):
            d = factor_distances(H, i, frame, nf)
            keep = d <= radius
            G, H = G[keep], H[keep]
        per.append((G, H))
    out = []
    for combo in product(*[range(len(c[0])) for c in per]):
        H = tuple(per[i][1][k] for i, k in enumerate(combo))
        try:
            d = decompose_near_identity(GroupElement(H), frame).distance
        except ChartError:
            continue
        if d <= radius:
            lift = tuple(np.linalg.solve(gam_x[i], per[i][0][k] @ yr.factors[i]) for i, k in enumerate(combo))
            out.append((d, GroupElement(lift), GroupElement(H)))
    out.sort(key=lambda t: t[0])
    return out


# ---------------------------------------------------------------- injectivity radius


def shortest_vector(g: np.ndarray) -> float:
    B = kernels.reduce_basis(np.asarray(g, dtype=float))
    return float(np.hypot(B[0, 0], B[0, 1]))


def injectivity_radius(p: QuotientPoint, c: float = DEFAULT_INJ_CONSTANT, frame: Optional[Sl2Frame] = None) -> float:
    """Proxy ``c * lambda_1^2`` clamped to the chart radius; min over factors."""
    fr = frame or p.lattice.default_frame()
    lam = min(shortest_vector(f) for f in p.rep.factors)
    return min(c * lam * lam, fr.chart_radius)


def sample_haar(n: int, rng: np.random.Generator, lattice: Optional[LatticeSpec] = None) -> list:
    """Haar-random points: half-plane point in the fundamental domain, uniform angle."""
    lat = lattice or LatticeSpec()
    pts = []
    for _ in range(n):
        fs = []
        for _k in range(lat.factors):
            while True:
                x = rng.uniform(-0.5, 0.5)
                y = (math.sqrt(3) / 2) / (1.0 - rng.uniform())
                if x * x + y * y >= 1.0:
                    break
            th = rng.uniform(0, math.pi)
            sy = math.sqrt(y)
            n_ = np.array([[sy, x / sy], [0.0, 1.0 / sy]])
            k = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
            fs.append(n_ @ k)
        pts.append(QuotientPoint(GroupElement(tuple(fs)), lat))
    return pts


def calibrate_injectivity_constant(n_samples: int = 200, seed: int = 0) -> dict:
    """Measure ``min over gamma != +-I of d(g, gamma g) / (2 lambda_1^2)`` on Haar samples.

    Only finite distances (displacements inside the chart) contribute.
    """
    rng = np.random.default_rng(seed)
    G = enumerate_gamma(8.0)
    G = G[~_is_pm_identity(G)]
    ratios = []
    for p in sample_haar(n_samples, rng):
        g = reduce(p).rep.factors[0]
        H = np.linalg.solve(g, G @ g)
        d = sl2_distance_batch(H)
        d = d[d < 0.5]
        if d.size:
            lam = shortest_vector(g)
            ratios.append(float(d.min()) / (2 * lam * lam))
    return {"samples": n_samples, "finite": len(ratios), "min_ratio": min(ratios) if ratios else math.inf}


# ---------------------------------------------------------------- IC / FBR


@dataclass
class ConditionReport:
    verdict: Optional[bool]  # None means inconclusive
    grid_step: float
    details: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return bool(self.verdict)


def _opnorm(M: np.ndarray) -> float:
    return float(np.linalg.norm(M, 2))


def _unorm(t: float) -> float:
    t = abs(t)
    return 0.5 * (t + math.sqrt(t * t + 4))


def _flow_min_sl2(H: np.ndarray, t1: np.ndarray, m: float) -> np.ndarray:
    """min over t2 in [-m, m] of the sl2 distance of ``u^{-t1} H u^{t2}``; shape (len(H), len(t1))."""
    p = H[:, 0, 0][:, None]
    q = H[:, 0, 1][:, None]
    r = H[:, 1, 0][:, None]
    s = H[:, 1, 1][:, None]
    T = t1[None, :]
    P1 = p - T * r
    with np.errstate(divide="ignore", invalid="ignore"):
        ok = P1 > 0
        Ps = np.where(ok, P1, 1.0)
        base = np.abs(2 * np.log(Ps)) + np.abs(r * Ps)
        t2 = np.clip(-(q - T * s) / Ps, -m, m)
        uu = np.abs(t2 + (q - T * s) / Ps)
    return np.where(ok, base + uu, np.inf)


def integer_near_segment(M0: np.ndarray, M1: np.ndarray, s0: float, s1: float, delta: float, budget: int = 2_000_000):
    """Determinant-one integer matrices within ``delta`` (max-entry) of ``M0 + s M1`` for some s in [s0, s1].

    Returns ``None`` when the search would exceed ``budget`` box cells.
    """
    span = float(np.abs(M1).max()) * (s1 - s0)
    n = max(1, int(math.ceil(span / 0.5)))
    ss = np.linspace(s0, s1, n + 1)
    pad = delta + float(np.abs(M1).max()) * (s1 - s0) / (2 * n)
    w = int(math.floor(pad)) + 1
    if (n + 1) * (2 * w + 1) ** 4 > budget:
        return None
    off = np.arange(-w, w + 1)
    grid = np.stack(np.meshgrid(off, off, off, off, indexing="ij"), -1).reshape(-1, 4)
    found = set()
    for s_ in ss:
        C = (M0 + s_ * M1).ravel()
        base = np.round(C)
        cand = base[None, :] + grid
        ok = np.abs(cand - C[None, :]).max(axis=1) <= pad
        cand = cand[ok]
        det = cand[:, 0] * cand[:, 3] - cand[:, 1] * cand[:, 2]
        for row in cand[det == 1]:
            found.add(tuple(row.astype(int)))
    if not found:
        return np.zeros((0, 2, 2))
    return np.array(sorted(found), dtype=float).reshape(-1, 2, 2)


def lattice_points_in_rect(Y: np.ndarray, lo, hi, budget: int = 2_000_000) -> Optional[np.ndarray]:
    """Integer ``k`` with ``lo <= k @ Y <= hi`` coordinatewise (rows of ``Y`` form the basis)."""
    R = kernels.reduce_basis(Y)
    T = np.round(R @ np.linalg.inv(Y))
    y1, y2 = R[0], R[1]
    det = y1[0] * y2[1] - y1[1] * y2[0]
    corners = np.array([[lo[0], lo[1]], [lo[0], hi[1]], [hi[0], lo[1]], [hi[0], hi[1]]])
    k2c = (y1[0] * corners[:, 1] - y1[1] * corners[:, 0]) / det
    k2 = np.arange(math.ceil(k2c.min() - 1e-9), math.floor(k2c.max() + 1e-9) + 1, dtype=float)
    if len(k2) > budget:
        return None
    a = np.full(len(k2), -np.inf)
    b = np.full(len(k2), np.inf)
    for j in range(2):
        if abs(y1[j]) > 0:
            e0 = (lo[j] - k2 * y2[j]) / y1[j]
            e1 = (hi[j] - k2 * y2[j]) / y1[j]
            a = np.maximum(a, np.minimum(e0, e1))
            b = np.minimum(b, np.maximum(e0, e1))
        else:
            ok = (k2 * y2[j] >= lo[j]) & (k2 * y2[j] <= hi[j])
            b = np.where(ok, b, -np.inf)
    a = np.ceil(a - 1e-9)
    b = np.floor(b + 1e-9)
    cnt = np.maximum(b - a + 1, 0)
    if cnt.sum() > budget:
        return None
    out = [np.stack([np.arange(a[i], b[i] + 1), np.full(int(cnt[i]), k2[i])], 1) for i in range(len(k2)) if cnt[i] > 0]
    if not out:
        return np.zeros((0, 2))
    K = np.concatenate(out)
    return np.round(K @ T)


def gamma_near_flow(xf: np.ndarray, yf: np.ndarray, m: float, beta: float, budget: int = 2_000_000) -> Optional[np.ndarray]:
    """All ``gamma`` in SL(2,Z) with ``gamma y = x u^{t1} b u^{-t2}`` possible for ``|t_i| <= m``, ``||b - I|| <= beta``.

    Row ``i`` of ``gamma y`` is a point of the lattice ``Z^2 y`` within
    ``|x_i| ||u^m||^2 beta`` of the segment ``{x_i u^s : |s| <= 2m}``; rows are
    enumerated separately in 2D and paired by the determinant.
    """
    um2 = _unorm(m) ** 2
    rows = []
    for i in range(2):
        xi = xf[i]
        r = float(np.hypot(*xi)) * um2 * beta
        v = np.array([xi[0] * -2 * m + xi[1], xi[0] * 2 * m + xi[1]])
        K = lattice_points_in_rect(yf, (xi[0] - r, v.min() - r), (xi[0] + r, v.max() + r), budget)
        if K is None:
            return None
        rows.append(K)
    K1, K2 = rows
    if len(K1) * len(K2) > budget:
        return None
    if not len(K1) or not len(K2):
        return np.zeros((0, 2, 2))
    det = K1[:, None, 0] * K2[None, :, 1] - K1[:, None, 1] * K2[None, :, 0]
    i, j = np.nonzero(det == 1)
    return np.stack([K1[i], K2[j]], 1)


def _m_distance_batch(H: np.ndarray, factor: int, nfac: int, fr: Sl2Frame) -> np.ndarray:
    out = np.full(len(H), np.inf)
    for j, h in enumerate(H):
        if np.abs(h - np.eye(2)).max() > 4.0:
            continue
        parts = [np.eye(2)] * nfac
        parts[factor] = h
        try:
            out[j] = decompose_near_identity(GroupElement(tuple(parts)), fr).distance
        except ChartError:
            pass
    return out


def check_IC(
    p: QuotientPoint,
    rho: float,
    m: float,
    grid: float = 0.1,
    n_ball: int = 4,
    seed: int = 0,
    frame: Optional[Sl2Frame] = None,
) -> ConditionReport:
    """Sampled injectivity condition IC(rho, m).

    A violating gamma maps each row of ``x`` into a thin tube around its flow
    segment; all lattice points there are enumerated, so the verdict is
    decisive unless that search exceeds its budget (``None``).
    The orbit time ``t1`` runs over the grid; ``t2`` is minimised exactly.
    """
    fr = frame or p.lattice.default_frame()
    if rho <= 0:
        return ConditionReport(True, grid, {"reason": "rho = 0"})
    if rho >= fr.chart_radius:
        raise ValueError("rho must be below the chart radius")
    rng = np.random.default_rng(seed)
    nf = p.lattice.factors
    t1 = np.arange(-m, m + 0.5 * grid, grid) if m > 0 else np.zeros(1)
    x = reduce(p).rep
    ys = [x]
    for _ in range(n_ball):
        v = rng.uniform(-1, 1, 3)
        v *= 0.999 * rho / max(np.abs(v).sum(), 1e-300)
        ys.append(x @ fr.a(v[0]) @ fr.ubar(v[1]) @ fr.u(v[2]))
    if nf == 1:
        # cheap pass over the fixed box first: finds cusp fold-backs fast
        G = enumerate_gamma(p.lattice.enum_radius)
        G = G[~_is_pm_identity(G)]
        for y in ys:
            d = _flow_min_sl2(np.linalg.solve(x.factors[0], G @ y.factors[0]), t1, m).min(axis=1)
            k = int(np.argmin(d))
            if d[k] <= rho:
                w = {"factor": 0, "gamma": G[k].astype(int).tolist()}
                return ConditionReport(False, grid, {"min_distance": float(d[k]), "witness": w})
    best, witness, n_cand = math.inf, None, 0
    for y in ys:
        yinv = [np.linalg.inv(f) for f in y.factors]
        dists, masks, gams = [], [], []
        for i in range(nf):
            xf = x.factors[i]
            if i == 0:
                G = gamma_near_flow(xf, y.factors[0], m, math.exp(rho) - 1)
            else:
                delta = _opnorm(xf) * (math.exp(3 * rho) - 1) * _opnorm(yinv[i])
                G = integer_near_segment(xf @ yinv[i], np.zeros((2, 2)), 0.0, 0.0, delta)
            if G is None:
                return ConditionReport(None, grid, {"reason": "candidate search over budget", "factor": i})
            n_cand += len(G)
            H = np.linalg.solve(xf, G @ y.factors[i]) if len(G) else np.zeros((0, 2, 2))
            if i == 0:
                d = _flow_min_sl2(H, t1, m).min(axis=1) if len(G) else np.zeros(0)
            else:
                d = factor_distances(H, i, fr, nf) if _is_standard_product(fr) else _m_distance_batch(H, i, nf, fr)
            dists.append(d)
            gams.append(G)
            masks.append(~_is_pm_identity(G) if len(G) else np.zeros(0, bool))
        for i in range(nf):
            nt = np.where(masks[i], dists[i], np.inf)
            if nt.size == 0 or not np.isfinite(nt.min()):
                continue
            k = int(np.argmin(nt))
            others = [dists[j].min() if dists[j].size else np.inf for j in range(nf) if j != i]
            cand = max([nt[k]] + others)
            if cand < best:
                best, witness = float(cand), {"factor": i, "gamma": gams[i][k].astype(int).tolist()}
    details = {"min_distance": best, "witness": witness, "candidates": n_cand}
    return ConditionReport(not best <= rho, grid, details)


def check_FBR(
    p: QuotientPoint,
    T0: float,
    c: float,
    r0: float,
    Tmax: float,
    grid: float = 0.25,
    inj_c: float = DEFAULT_INJ_CONSTANT,
    frame: Optional[Sl2Frame] = None,
) -> ConditionReport:
    """Frequently-bounded-radius check on a time grid."""
    if T0 > Tmax:
        raise ValueError("T0 must not exceed Tmax")
    if not 0 <= c <= 1:
        raise ValueError("c must lie in [0, 1]")
    fr = frame or p.lattice.default_frame()
    ts = np.arange(0.0, Tmax + 0.5 * grid, grid)
    x = reduce(p)
    radii = np.array([injectivity_radius(x.right(fr.a(float(t))), inj_c, fr) for t in ts])
    good = radii >= r0
    Ts = ts[ts >= T0 - 1e-12]
    failures = []
    for T in Ts:
        window = (ts >= c * T - 1e-12) & (ts <= T + 1e-12)
        if not np.any(good & window):
            failures.append(float(T))
    return ConditionReport(not failures, grid, {"first_failure": failures[0] if failures else None, "max_radius": float(radii.max())})
