"""Time-changes of the unipotent flow, their cocycles and the coboundary testbed.

The workhorse observable is a primitive Siegel-type lattice sum
``f(Gamma g) = sum_{v primitive} phi(|v g|)`` with a smooth bump ``phi``.
Orbit integrals run through the compiled kernel in unit segments, reducing
the representative between segments so matrix entries stay bounded.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from . import kernels
from .liealg import expm
from .quotient import QuotientPoint, flow_u, reduce, sample_haar

DEFAULT_TOL = 1e-9
PRIMITIVE_DENSITY = 6.0 / math.pi**2


class QuadratureError(RuntimeError):
    pass


class InconsistentBound(RuntimeError):
    """A computed value fell outside the Lipschitz bracket implied by ``C_alpha``."""


class PositivityError(ValueError):
    pass


def _u(t: float) -> np.ndarray:
    return np.array([[1.0, t], [0.0, 1.0]])


@dataclass(frozen=True)
class BumpSpec:
    center: float = 1.0
    width: float = 0.5
    amplitude: float = 0.5

    def __post_init__(self):
        if self.width <= 0 or self.center - self.width <= 0:
            raise ValueError("bump support must lie inside (0, R)")

    @property
    def radius(self) -> float:
        return self.center + self.width

    def phi(self, r):
        z = (np.asarray(r, dtype=float) - self.center) / self.width
        with np.errstate(divide="ignore", over="ignore"):
            v = self.amplitude * np.exp(-1.0 / (1.0 - z * z))
        return np.where(np.abs(z) < 1, v, 0.0)

    def radial_integral(self) -> float:
        """``2 pi int phi(r) r dr``, the mean of the full lattice sum."""
        lo, hi = self.center - self.width, self.center + self.width
        val, _ = integrate.quad(lambda r: float(self.phi(r)) * r, lo, hi, epsabs=1e-14, epsrel=1e-13, limit=200)
        return 2 * math.pi * val


@dataclass(frozen=True, eq=False)
class SiegelObservable:
    """``coef * modulator(p) * sum phi(|v g_0|)`` over primitive (or all) lattice vectors of factor 0.

    ``modulator`` must be invariant under the unipotent flow (it may depend
    on the other factors of a product quotient).
    """

    bump: BumpSpec = field(default_factory=BumpSpec)
    coef: float = 1.0
    primitive: bool = True
    modulator: Optional[Callable[[QuotientPoint], float]] = None

    def _k(self, p: QuotientPoint) -> float:
        return self.coef * (self.modulator(p) if self.modulator is not None else 1.0)

    def derivatives(self, p: QuotientPoint) -> tuple:
        """``(f, D_U f, D_U^2 f)`` at ``p``."""
        b = self.bump
        f, df, d2f = kernels.siegel_eval(p.rep.factors[0], b.center, b.width, b.amplitude, self.primitive)
        k = self._k(p)
        return k * float(f[0]), k * float(df[0]), k * float(d2f[0])

    def __call__(self, p: QuotientPoint) -> float:
        return self.derivatives(p)[0]

    def du(self, p: QuotientPoint) -> float:
        return self.derivatives(p)[1]

    def scaled(self, c: float) -> "SiegelObservable":
        return SiegelObservable(self.bump, self.coef * c, self.primitive, self.modulator)

    def exact_mean(self) -> float:
        """Haar mean for the single-factor observable (Siegel mean value formula)."""
        if self.modulator is not None:
            raise ValueError("mean of a modulated observable is not available in closed form")
        dens = PRIMITIVE_DENSITY if self.primitive else 1.0
        return self.coef * dens * self.bump.radial_integral()

    def orbit_integral(self, p: QuotientPoint, t: float, c0: float = 0.0, tol: float = DEFAULT_TOL) -> float:
        """``int_0^t (c0 + f(p u^r)) dr``."""
        k = self._k(p)
        return _segmented_integral(p.rep.factors[0], t, self.bump, self.primitive, c0, k, 0.0, tol)

    def to_dict(self) -> dict:
        b = self.bump
        return {"center": b.center, "width": b.width, "amplitude": b.amplitude, "coef": self.coef, "primitive": self.primitive}


def siegel_observable(phi: Optional[BumpSpec] = None, primitive: bool = True) -> SiegelObservable:
    return SiegelObservable(phi or BumpSpec(), 1.0, primitive)


def zero_observable() -> SiegelObservable:
    return SiegelObservable(BumpSpec(), 0.0)


def _segmented_integral(g0: np.ndarray, t: float, bump: BumpSpec, primitive: bool, c0, cf, cdf, tol) -> float:
    """Integral along ``g0 u^r`` for r in [0, t], unit segments with reduction in between."""
    if t == 0:
        return 0.0
    n = int(math.ceil(abs(t)))
    h = t / n
    seg_tol = tol / max(1.0, abs(t))
    g = kernels.reduce_basis(np.asarray(g0, dtype=float))
    total = 0.0
    step = _u(h)
    for k in range(n):
        val, _, ok = kernels.orbit_integral(g, 0.0, h, bump.center, bump.width, bump.amplitude, primitive, c0, cf, cdf, seg_tol)
        if not ok:
            raise QuadratureError(f"quadrature did not converge on segment {k} ([{k * h:.6g}, {(k + 1) * h:.6g}])")
        total += val
        g = kernels.reduce_basis(g @ step)
    return total


# ---------------------------------------------------------------- time changes


@dataclass(frozen=True, eq=False)
class TimeChange:
    """``alpha = c0 + cf f + cdf D_U f`` for a Siegel observable ``f``, or an arbitrary callable.

    The bump terms may carry a flow-invariant ``modulator``.
    """

    C_alpha: float
    mean: float = 1.0
    c0: float = 1.0
    cf: float = 0.0
    cdf: float = 0.0
    bump: Optional[BumpSpec] = None
    primitive: bool = True
    modulator: Optional[Callable[[QuotientPoint], float]] = None
    func: Optional[Callable[[QuotientPoint], float]] = None
    name: str = "custom"

    @classmethod
    def unit(cls) -> "TimeChange":
        return cls(C_alpha=1.0, name="unit")

    @property
    def is_unit(self) -> bool:
        return self.func is None and self.c0 == 1.0 and self.cf == 0.0 and self.cdf == 0.0

    def coeffs(self, p: QuotientPoint) -> tuple:
        m = self.modulator(p) if self.modulator is not None else 1.0
        return self.c0, self.cf * m, self.cdf * m

    def evaluate(self, p: QuotientPoint) -> float:
        if self.func is not None:
            return float(self.func(p))
        if self.bump is None or (self.cf == 0 and self.cdf == 0):
            return self.c0
        c0, cf, cdf = self.coeffs(p)
        f, df, _ = kernels.siegel_eval(p.rep.factors[0], self.bump.center, self.bump.width, self.bump.amplitude, self.primitive)
        return c0 + cf * float(f[0]) + cdf * float(df[0])

    __call__ = evaluate

    def derivative_along_U(self, p: QuotientPoint) -> float:
        if self.func is not None or self.bump is None:
            raise NotImplementedError("derivative available for lattice-sum time changes only")
        _, cf, cdf = self.coeffs(p)
        _, df, d2f = kernels.siegel_eval(p.rep.factors[0], self.bump.center, self.bump.width, self.bump.amplitude, self.primitive)
        return cf * float(df[0]) + cdf * float(d2f[0])

    def segment_integral(self, g: np.ndarray, r0: float, r1: float, p: QuotientPoint, tol: float) -> float:
        """``int_{r0}^{r1} alpha(g u^r) dr`` with ``g`` a representative carrying the coefficients of ``p``."""
        if self.func is not None:
            lat = p.lattice

            def fa(r):
                rep = p.rep.factors
                q = QuotientPoint.from_matrix(
                    _block([g @ _u(r)] + list(rep[1:])), lat
                )
                return self.func(q)

            val, err = integrate.quad(fa, r0, r1, epsabs=tol, epsrel=0, limit=200)
            if err > 10 * tol:
                raise QuadratureError(f"generic quadrature error {err:.3e} on [{r0}, {r1}]")
            return val
        c0, cf, cdf = self.coeffs(p)
        if self.bump is None or (cf == 0 and cdf == 0):
            return c0 * (r1 - r0)
        b = self.bump
        val, _, ok = kernels.orbit_integral(g, r0, r1, b.center, b.width, b.amplitude, self.primitive, c0, cf, cdf, tol)
        if not ok:
            raise QuadratureError(f"quadrature did not converge on [{r0:.6g}, {r1:.6g}]")
        return val

    def point_value(self, g: np.ndarray, r: float, p: QuotientPoint) -> float:
        if self.func is not None:
            return float(self.func(QuotientPoint.from_matrix(_block([g @ _u(r)] + list(p.rep.factors[1:])), p.lattice)))
        c0, cf, cdf = self.coeffs(p)
        if self.bump is None or (cf == 0 and cdf == 0):
            return c0
        b = self.bump
        f, df, _ = kernels.siegel_eval(g @ _u(r), b.center, b.width, b.amplitude, self.primitive)
        return c0 + cf * float(f[0]) + cdf * float(df[0])

    def to_dict(self) -> dict:
        d = {"name": self.name, "C_alpha": self.C_alpha, "mean": self.mean, "c0": self.c0, "cf": self.cf, "cdf": self.cdf}
        if self.bump is not None:
            d["bump"] = {"center": self.bump.center, "width": self.bump.width, "amplitude": self.bump.amplitude}
        return d


def _block(fs: Sequence[np.ndarray]) -> np.ndarray:
    n = 2 * len(fs)
    M = np.zeros((n, n))
    for i, f in enumerate(fs):
        M[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] = f
    return M


def sample_range(obs: SiegelObservable, n: int = 2000, seed: int = 0, lattice=None) -> dict:
    """Sampled extremes of ``f``, ``D_U f`` and ``D_U^2 f`` over Haar points (a Sobolev-norm proxy)."""
    rng = np.random.default_rng(seed)
    pts = sample_haar(n, rng, lattice)
    vals = np.array([obs.derivatives(p) for p in pts])
    return {
        "n": n,
        "f": (float(vals[:, 0].min()), float(vals[:, 0].max())),
        "du": (float(vals[:, 1].min()), float(vals[:, 1].max())),
        "du2": (float(vals[:, 2].min()), float(vals[:, 2].max())),
        "sup_abs": float(np.abs(vals[:, 0]).max()),
    }


SAFETY = 1.25


def observable_sup(obs: SiegelObservable, n: int = 2000, seed: int = 0, modulator_sup: Optional[float] = None) -> float:
    """``sup |obs|`` from dense Haar sampling of the lattice sum, polished by local optimisation.

    The lattice sum only depends on the first factor; a flow-invariant
    modulator contributes ``modulator_sup`` (default 1, i.e. ``|h| <= 1``).
    """
    if obs.coef == 0:
        return 0.0
    from scipy.optimize import minimize

    b = obs.bump
    base = SiegelObservable(b, 1.0, obs.primitive)
    rng = np.random.default_rng(seed)
    pts = sample_haar(n, rng, None)
    vals = np.array([base(p) for p in pts])
    best = float(vals.max())

    def neg(v, M0):
        X = np.array([[v[0], v[1]], [v[1], -v[0]]])
        f, _, _ = kernels.siegel_eval(M0 @ expm(X), b.center, b.width, b.amplitude, obs.primitive)
        return -float(f[0])

    # the sum is right-K-invariant, so symmetric perturbations suffice
    for i in np.argsort(vals)[-5:]:
        M0 = pts[i].rep.factors[0]
        res = minimize(neg, [0.0, 0.0], args=(M0,), method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14})
        best = max(best, -float(res.fun))
    msup = 1.0 if modulator_sup is None else float(modulator_sup)
    return abs(obs.coef) * msup * best


def time_change_from_observable(
    obs: SiegelObservable, c0: float, cf: float, cdf: float, n_samples: int = 2000, seed: int = 0, margin: float = 0.05, name: str = "siegel"
) -> TimeChange:
    """``alpha = c0 + cf f + cdf D_U f`` with ``C_alpha`` from sampled extremes times a safety factor."""
    rng_info = sample_range(SiegelObservable(obs.bump, 1.0, obs.primitive), n_samples, seed)
    lo = c0
    hi = c0
    for a_ in (rng_info["f"][0], rng_info["f"][1]):
        for b_ in (rng_info["du"][0], rng_info["du"][1]):
            v = c0 + cf * obs.coef * a_ + cdf * obs.coef * b_
            lo, hi = min(lo, v), max(hi, v)
    if lo <= margin:
        raise PositivityError(f"time change not positive with margin {margin}: sampled minimum {lo:.4g}")
    C = SAFETY * max(hi, 1.0 / lo)
    mean = c0 + cf * obs.exact_mean() if obs.modulator is None else c0
    return TimeChange(C, mean, c0, cf * obs.coef, cdf * obs.coef, obs.bump, obs.primitive, obs.modulator, name=name)


# ---------------------------------------------------------------- cocycles


def xi(p: QuotientPoint, t: float, alpha: TimeChange, tol: float = DEFAULT_TOL) -> float:
    """``int_0^t alpha(p u^r) dr``."""
    if t == 0:
        return 0.0
    if alpha.is_unit:
        return float(t)
    n = int(math.ceil(abs(t)))
    h = t / n
    seg_tol = tol / max(1.0, abs(t))
    g = kernels.reduce_basis(p.rep.factors[0])
    step = _u(h)
    total = 0.0
    for _ in range(n):
        total += alpha.segment_integral(g, 0.0, h, p, seg_tol)
        g = kernels.reduce_basis(g @ step)
    return total


def w(p: QuotientPoint, t: float, alpha: TimeChange, tol: float = DEFAULT_TOL) -> float:
    """Inverse of ``xi(p, .)``: the ``s`` with ``xi(p, s) = t``."""
    if t == 0:
        return 0.0
    if alpha.is_unit:
        return float(t)
    sgn = 1.0 if t > 0 else -1.0
    target = abs(t)
    n_est = max(1.0, abs(t) * alpha.C_alpha)
    seg_tol = tol / n_est
    g = kernels.reduce_basis(p.rep.factors[0])
    step = _u(sgn)
    s = 0.0
    acc = 0.0
    for _ in range(int(math.ceil(abs(t) * alpha.C_alpha)) + 2):
        seg = sgn * alpha.segment_integral(g, 0.0, sgn, p, seg_tol)
        if acc + seg >= target:
            break
        acc += seg
        s += 1.0
        g = kernels.reduce_basis(g @ step)
    else:
        raise InconsistentBound("w exceeded the Lipschitz bracket; C_alpha is inconsistent")
    rem = target - acc
    lo, hi = 0.0, 1.0
    r = min(1.0, rem / max(alpha.point_value(g, 0.0, p), 1e-12))
    for _ in range(100):
        F = sgn * alpha.segment_integral(g, 0.0, sgn * r, p, seg_tol) - rem
        if abs(F) <= 0.1 * tol:
            break
        if F > 0:
            hi = r
        else:
            lo = r
        d = alpha.point_value(g, sgn * r, p)
        nr = r - F / d if d > 0 else 0.5 * (lo + hi)
        if not lo < nr < hi:
            nr = 0.5 * (lo + hi)
        if hi - lo < 1e-15:
            break
        r = nr
    out = sgn * (s + r)
    C = alpha.C_alpha
    if not (abs(t) / C - 1e-9 <= abs(out) <= abs(t) * C + 1e-9):
        raise InconsistentBound(f"w={out} outside the bracket [{t / C}, {t * C}]")
    return out


# ---------------------------------------------------------------- conjugacies


@dataclass(frozen=True, eq=False)
class Conjugacy:
    """A constructible conjugacy ``p -> p u^{F(p)} g0`` (coboundary, algebraic or both)."""

    map: Callable[[QuotientPoint], QuotientPoint]
    kind: str
    transfer: Optional[SiegelObservable] = None
    offset: Optional[object] = None  # GroupElement

    def __call__(self, p: QuotientPoint) -> QuotientPoint:
        return self.map(p)

    @classmethod
    def identity(cls) -> "Conjugacy":
        return cls(lambda p: p, "identity")

    @classmethod
    def algebraic(cls, g0) -> "Conjugacy":
        return cls(lambda p: reduce(p.right(g0)), "algebraic", None, g0)

    def then(self, other: "Conjugacy") -> "Conjugacy":
        first = self

        def m(p):
            return other.map(first.map(p))

        return Conjugacy(m, "composed", self.transfer or other.transfer, other.offset or self.offset)

    def sup_transfer(self, n: int = 2000, seed: int = 0) -> float:
        if self.transfer is None:
            return 0.0
        return observable_sup(self.transfer, n, seed)


def build_coboundary_conjugacy(
    f: SiegelObservable, margin: float = 0.05, n_samples: int = 2000, seed: int = 0, offset=None
) -> tuple:
    """Time change ``alpha = 1 + D_U f`` and its conjugacy to the unit flow, ``psi(p) = p u^{f(p)}`` (times ``offset``)."""
    if f.coef == 0:
        alpha = TimeChange.unit()
    else:
        alpha = time_change_from_observable(f, 1.0, 0.0, 1.0, n_samples, seed, margin, name="coboundary")
        alpha = TimeChange(alpha.C_alpha, 1.0, 1.0, 0.0, f.coef, f.bump, f.primitive, f.modulator, name="coboundary")

    def m(p):
        fp = f(p) if f.coef != 0 else 0.0
        q = p.right(_u_elem(p, fp))
        if offset is not None:
            q = q.right(offset)
        return reduce(q)

    return alpha, Conjugacy(m, "coboundary", f, offset)


def _u_elem(p: QuotientPoint, t: float):
    from .liealg import GroupElement

    fs = [_u(t)] + [np.eye(2)] * (p.lattice.factors - 1)
    return GroupElement(tuple(fs))


def z(p: QuotientPoint, t: float, psi: Conjugacy, alpha1: TimeChange, alpha2: TimeChange, tol: float = DEFAULT_TOL) -> float:
    """``w_2(psi(p), xi_1(p, t))``."""
    return w(psi(p), xi(p, t, alpha1, tol), alpha2, tol)


def time_changed_flow(p: QuotientPoint, s: float, alpha: TimeChange, tol: float = DEFAULT_TOL) -> QuotientPoint:
    """``p u^{w(p, s)}``."""
    return flow_u(p, w(p, s, alpha, tol))


# ---------------------------------------------------------------- deviations


@dataclass
class DeviationReport:
    slope: float
    intercept: float
    residual: float
    t_grid: list
    sup_abs: list
    degenerate: bool = False
    zero_mean_ok: bool = True
    mean: float = 0.0
    rows: list = field(default_factory=list)

    @property
    def eta_emp(self) -> float:
        return 1.0 - self.slope


def deviation_exponent(
    p_samples: Sequence[QuotientPoint],
    obs: SiegelObservable,
    t_grid: Sequence[float],
    c0: Optional[float] = None,
    tol: float = 1e-7,
    fit_range: Optional[tuple] = None,
) -> DeviationReport:
    """Log-log slope of ``sup_p |int_0^t (obs + c0)(p u^s) ds|`` against ``t``.

    ``c0`` defaults to minus the exact mean, which makes the integrand zero-mean.
    """
    t_grid = sorted(float(t) for t in t_grid)
    if len(t_grid) < 3:
        raise ValueError("need at least three grid points")
    if c0 is None:
        c0 = -obs.exact_mean() if obs.coef != 0 else 0.0
    mean = c0 + (obs.exact_mean() if obs.coef != 0 else 0.0)
    zero_mean_ok = abs(mean) <= 0.01
    T = t_grid[-1]
    sup = np.zeros(len(t_grid))
    b = obs.bump
    for p in p_samples:
        g = kernels.reduce_basis(p.rep.factors[0])
        k = obs._k(p)
        acc, pos = 0.0, 0.0
        idx = 0
        seg_tol = tol / max(1.0, T)
        while idx < len(t_grid):
            nxt = min(pos + 1.0, t_grid[idx])
            h = nxt - pos
            if h > 0:
                val, _, ok = kernels.orbit_integral(g, 0.0, h, b.center, b.width, b.amplitude, obs.primitive, c0, k, 0.0, seg_tol)
                if not ok:
                    raise QuadratureError(f"quadrature failed near t={pos}")
                acc += val
                g = kernels.reduce_basis(g @ _u(h))
                pos = nxt
            while idx < len(t_grid) and pos >= t_grid[idx] - 1e-12:
                sup[idx] = max(sup[idx], abs(acc))
                idx += 1
    rows = [(t, s) for t, s in zip(t_grid, sup)]
    if fit_range is not None:
        sel = [i for i, t in enumerate(t_grid) if fit_range[0] <= t <= fit_range[1]]
    else:
        sel = list(range(len(t_grid)))
    if np.all(sup[sel] <= 1e-300):
        return DeviationReport(math.nan, math.nan, math.nan, t_grid, sup.tolist(), True, zero_mean_ok, mean, rows)
    x = np.log(np.array(t_grid)[sel])
    y = np.log(np.maximum(sup[sel], 1e-300))
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return DeviationReport(float(coef[0]), float(coef[1]), resid, t_grid, sup.tolist(), False, zero_mean_ok, mean, rows)


# ---------------------------------------------------------------- randomized suite


def cocycle_suite(n: int = 200, t_max: float = 1000.0, seed: int = 0, amplitude: float = 0.2, tol: float = 1e-11) -> dict:
    """Inverse pair, cocycle law and Lipschitz bracket for ``xi``, ``w`` and ``z`` on the coboundary pair.

    Times are drawn with ``|s|, |t| <= t_max / 2`` so every evaluated time stays within ``t_max``.
    ``tol`` is the quadrature tolerance; it sits well below the residuals one
    wants to certify since errors accumulate over unit segments.
    """
    f = siegel_observable().scaled(amplitude)
    alpha, psi = build_coboundary_conjugacy(f, seed=seed)
    unit = TimeChange.unit()
    rng = np.random.default_rng(seed)
    pts = sample_haar(n, rng)
    C = alpha.C_alpha
    worst = {"inverse": 0.0, "cocycle_xi": 0.0, "cocycle_z": 0.0}
    bracket_violations = 0
    for p in pts:
        s, t = rng.uniform(-t_max / 2, t_max / 2, 2)
        x_st = xi(p, s + t, alpha, tol)
        x_s = xi(p, s, alpha, tol)
        ps = flow_u(p, s)
        x_t = xi(ps, t, alpha, tol)
        worst["cocycle_xi"] = max(worst["cocycle_xi"], abs(x_st - x_s - x_t))
        worst["inverse"] = max(worst["inverse"], abs(w(p, x_st, alpha, tol) - (s + t)))
        z_st = w(psi(p), x_st, unit, tol)
        z_s = w(psi(p), x_s, unit, tol)
        z_t = z(ps, t, psi, alpha, unit, tol)
        worst["cocycle_z"] = max(worst["cocycle_z"], abs(z_st - z_s - z_t))
        for v, T in ((x_st, s + t), (x_s, s), (x_t, t)):
            if not abs(T) / C - 1e-9 <= abs(v) <= abs(T) * C + 1e-9:
                bracket_violations += 1
    return {"n": n, "max_residual": worst, "bracket_violations": bracket_violations, "C_alpha": C}
