"""Matrix Lie group and Lie algebra core.

Group and algebra elements are lists of square factors (block-diagonal for
product groups).  An :class:`Sl2Frame` carries an sl(2)-triple ``(U, A, Ubar)``
together with a Jordan basis ``E[j, iota]`` of the ad-invariant complement ``m``,
normalised so that ``ad(U) E_j = E_{j-1}`` and ``ad(A) E_j = (d/2 - j) E_j``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.linalg

DEFAULT_CHART_RADIUS = 0.5


class ChartError(RuntimeError):
    """Raised when an element lies outside the decomposition chart."""


class FrameError(ValueError):
    """Raised when a frame seed fails validation."""


# ---------------------------------------------------------------- matrices

_PADE8 = (
    1.0,
    1.0 / 2.0,
    7.0 / 60.0,
    1.0 / 60.0,
    1.0 / 624.0,
    1.0 / 9360.0,
    1.0 / 205920.0,
    1.0 / 7207200.0,
    1.0 / 518918400.0,
)


def expm(X: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a [8/8] Pade approximant."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    norm = np.abs(X).sum(axis=0).max() if n else 0.0
    s = 0
    if norm > 0.5:
        s = int(np.ceil(np.log2(norm / 0.5)))
    Y = X / (2.0**s)
    eye = np.eye(n)
    P = np.zeros_like(Y)
    Q = np.zeros_like(Y)
    Yk = eye.copy()
    for k, ck in enumerate(_PADE8):
        if k:
            Yk = Yk @ Y
        P = P + ck * Yk
        Q = Q + ((-1) ** k) * ck * Yk
    E = np.linalg.solve(Q, P)
    for _ in range(s):
        E = E @ E
    return E


def block_diag(factors: Sequence[np.ndarray]) -> np.ndarray:
    return scipy.linalg.block_diag(*factors) if factors else np.zeros((0, 0))


def split_blocks(M: np.ndarray, dims: Sequence[int]) -> tuple[np.ndarray, ...]:
    out = []
    k = 0
    for n in dims:
        out.append(np.array(M[k : k + n, k : k + n], dtype=float))
        k += n
    return tuple(out)


def bracket(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return X @ Y - Y @ X


# ---------------------------------------------------------------- elements


@dataclass(frozen=True, eq=False)
class GroupElement:
    factors: tuple

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(np.asarray(f, dtype=float) for f in self.factors))

    @classmethod
    def identity(cls, dims: Sequence[int]) -> "GroupElement":
        return cls(tuple(np.eye(n) for n in dims))

    @classmethod
    def from_matrix(cls, M: np.ndarray, dims: Sequence[int]) -> "GroupElement":
        return cls(split_blocks(np.asarray(M, dtype=float), dims))

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.shape[0] for f in self.factors)

    @cached_property
    def matrix(self) -> np.ndarray:
        return block_diag(self.factors)

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        return GroupElement(tuple(a @ b for a, b in zip(self.factors, other.factors)))

    def inv(self) -> "GroupElement":
        return GroupElement(tuple(np.linalg.inv(f) for f in self.factors))

    def determinants(self) -> list[float]:
        return [float(np.linalg.det(f)) for f in self.factors]


@dataclass(frozen=True, eq=False)
class AlgebraElement:
    factors: tuple

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(np.asarray(f, dtype=float) for f in self.factors))

    @classmethod
    def from_matrix(cls, M: np.ndarray, dims: Sequence[int]) -> "AlgebraElement":
        return cls(split_blocks(np.asarray(M, dtype=float), dims))

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.shape[0] for f in self.factors)

    @cached_property
    def matrix(self) -> np.ndarray:
        return block_diag(self.factors)

    def exp(self) -> GroupElement:
        return GroupElement(tuple(expm(f) for f in self.factors))

    def traces(self) -> list[float]:
        return [float(np.trace(f)) for f in self.factors]


def _as_matrix(x) -> np.ndarray:
    if isinstance(x, (GroupElement, AlgebraElement)):
        return x.matrix
    return np.asarray(x, dtype=float)


# ---------------------------------------------------------------- triples


def verify_sl2_triple(U, A, Ubar, tol: float = 1e-10) -> dict:
    """Check ``[A,U]=U``, ``[A,Ubar]=-Ubar`` and ``[U,Ubar]=2A`` in Frobenius norm."""
    U, A, Ubar = (_as_matrix(x) for x in (U, A, Ubar))
    if not (U.shape == A.shape == Ubar.shape) or U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise FrameError(f"dimension mismatch: {U.shape}, {A.shape}, {Ubar.shape}")
    res = {
        "[A,U]-U": float(np.linalg.norm(bracket(A, U) - U)),
        "[A,Ubar]+Ubar": float(np.linalg.norm(bracket(A, Ubar) + Ubar)),
        "[U,Ubar]-2A": float(np.linalg.norm(bracket(U, Ubar) - 2 * A)),
    }
    return {"pass": all(v <= tol for v in res.values()), "residuals": res}


def ambient_basis(dims: Sequence[int]) -> list[np.ndarray]:
    """Basis of the product of sl(n_i): off-diagonal units then diagonal differences."""
    N = sum(dims)
    basis = []
    off = 0
    for n in dims:
        for i in range(n):
            for j in range(n):
                if i != j:
                    M = np.zeros((N, N))
                    M[off + i, off + j] = 1.0
                    basis.append(M)
        for k in range(n - 1):
            M = np.zeros((N, N))
            M[off + k, off + k] = 1.0
            M[off + k + 1, off + k + 1] = -1.0
            basis.append(M)
        off += n
    return basis


def _rref_rows(V: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Reduced row echelon form of the row space of ``V`` (deterministic basis)."""
    R = np.array(V, dtype=float)
    rows, cols = R.shape
    r = 0
    for c in range(cols):
        if r >= rows:
            break
        p = r + int(np.argmax(np.abs(R[r:, c])))
        if abs(R[p, c]) < tol:
            continue
        R[[r, p]] = R[[p, r]]
        R[r] /= R[r, c]
        for i in range(rows):
            if i != r:
                R[i] -= R[i, c] * R[r]
        r += 1
    return R[:r]


def _null_space(M: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    if M.shape[0] == 0:
        return np.eye(M.shape[1])
    return scipy.linalg.null_space(M, rcond=tol)


@dataclass(frozen=True, eq=False)
class JordanModule:
    d: int
    basis: tuple  # E_0 .. E_d as full (block-diagonal) matrices


@dataclass(frozen=True, eq=False)
class Sl2Frame:
    dims: tuple
    U: AlgebraElement
    A: AlgebraElement
    Ubar: AlgebraElement
    modules: tuple
    name: str = "custom"
    chart_radius: float = DEFAULT_CHART_RADIUS

    @property
    def jordan(self) -> tuple:
        return self.modules

    @property
    def module_dims(self) -> list[int]:
        return [m.d for m in self.modules]

    @property
    def n_m(self) -> int:
        return sum(m.d + 1 for m in self.modules)

    @property
    def D(self) -> int:
        """Component-count bound ``2 * prod max(d_iota, 1)``."""
        return 2 * int(np.prod([max(m.d, 1) for m in self.modules])) if self.modules else 2

    @property
    def max_d(self) -> int:
        return max((m.d for m in self.modules), default=0)

    def with_chart_radius(self, r: float) -> "Sl2Frame":
        return Sl2Frame(self.dims, self.U, self.A, self.Ubar, self.modules, self.name, r)

    # full basis: E's (module-major), then A, Ubar, U
    @cached_property
    def basis(self) -> list[np.ndarray]:
        out = [E for mod in self.modules for E in mod.basis]
        return out + [self.A.matrix, self.Ubar.matrix, self.U.matrix]

    @cached_property
    def _coord_pinv(self) -> np.ndarray:
        B = np.stack([b.ravel() for b in self.basis], axis=1)
        return np.linalg.pinv(B)

    def coords(self, X: np.ndarray) -> np.ndarray:
        return self._coord_pinv @ np.asarray(X, dtype=float).ravel()

    def from_coords(self, v: np.ndarray) -> np.ndarray:
        return np.tensordot(np.asarray(v, dtype=float), np.stack(self.basis), axes=1)

    @cached_property
    def _ad_tensor(self) -> np.ndarray:
        # T[k] = coordinate matrix of ad(B_k)
        n = len(self.basis)
        T = np.zeros((n, n, n))
        for k, Bk in enumerate(self.basis):
            for i, Bi in enumerate(self.basis):
                T[k, :, i] = self.coords(bracket(Bk, Bi))
        return T

    def ad_matrix(self, v: np.ndarray) -> np.ndarray:
        return np.tensordot(v, self._ad_tensor, axes=1)

    def weights(self) -> list[np.ndarray]:
        return [np.array([m.d / 2 - j for j in range(m.d + 1)]) for m in self.modules]

    # one-parameter subgroups
    def u(self, t: float) -> GroupElement:
        return _nilpotent_exp(self.U, t)

    def ubar(self, t: float) -> GroupElement:
        return _nilpotent_exp(self.Ubar, t)

    def a(self, t: float) -> GroupElement:
        return AlgebraElement(tuple(t * f for f in self.A.factors)).exp()

    def to_dict(self) -> dict:
        return {
            "group": self.name,
            "dims": list(self.dims),
            "U": np.round(self.U.matrix, 12).tolist(),
            "A": np.round(self.A.matrix, 12).tolist(),
            "Ubar": np.round(self.Ubar.matrix, 12).tolist(),
            "chart_radius": self.chart_radius,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Sl2Frame":
        dims = tuple(d["dims"])
        seed = tuple(AlgebraElement.from_matrix(np.array(d[k]), dims) for k in ("U", "A", "Ubar"))
        fr = build_jordan_basis(seed, dims, name=d.get("group", "custom"))
        return fr.with_chart_radius(float(d.get("chart_radius", DEFAULT_CHART_RADIUS)))


def _nilpotent_exp(X: AlgebraElement, t: float) -> GroupElement:
    out = []
    for f in X.factors:
        n = f.shape[0]
        term = np.eye(n)
        acc = np.eye(n)
        for k in range(1, n + 1):
            term = term @ (t * f) / k
            if not term.any():
                break
            acc = acc + term
        out.append(acc)
    return GroupElement(tuple(out))


def build_jordan_basis(frame_seed, ambient: Sequence[int], name: str = "custom", cond_max: float = 1e8) -> Sl2Frame:
    """Build the Jordan basis of the complement of ``span{U, A, Ubar}``.

    ``ambient`` lists the factor sizes, e.g. ``(2, 2)`` for sl(2) + sl(2).
    The complement is the trace-form orthogonal of the triple, which is an
    ad-invariant submodule.  Lowest-weight vectors are found weight by weight,
    orthonormalised, and pushed up with ad(U).
    """
    dims = tuple(int(n) for n in ambient)
    U, A, Ub = (AlgebraElement.from_matrix(_as_matrix(x), dims) for x in frame_seed)
    rep = verify_sl2_triple(U, A, Ub, tol=1e-9)
    if not rep["pass"]:
        raise FrameError(f"not an sl(2)-triple: {rep['residuals']}")
    for X in (U, A, Ub):
        if max(abs(t) for t in X.traces()) > 1e-9:
            raise FrameError("triple elements must be traceless per factor")

    amb = ambient_basis(dims)
    n = len(amb)
    Bm = np.stack([b.ravel() for b in amb], axis=1)
    pinv = np.linalg.pinv(Bm)

    def co(X):
        return pinv @ X.ravel()

    def ad(X):
        return np.stack([co(bracket(X, b)) for b in amb], axis=1)

    adU, adA, adUb = ad(U.matrix), ad(A.matrix), ad(Ub.matrix)
    if np.abs(np.linalg.matrix_power(adU, n + 1)).max() > 1e-9:
        raise FrameError("ad(U) is not nilpotent on the ambient algebra")

    K = np.array([[np.trace(bi @ bj) for bj in amb] for bi in amb])
    s_co = np.stack([co(X.matrix) for X in (U, A, Ub)], axis=0)
    M = _null_space(s_co @ K)  # columns: basis of m in ambient coords
    dim_m = M.shape[1]

    modules = []
    used = 0
    for d in range(0, 2 * n + 1):
        if used >= dim_m:
            break
        cond = np.vstack([adUb @ M, (adA + (d / 2.0) * np.eye(n)) @ M])
        Y = _null_space(cond)
        if Y.shape[1] == 0:
            continue
        mats = np.stack([(M @ y) for y in Y.T], axis=0)
        full = np.stack([np.tensordot(v, np.stack(amb), axes=1).ravel() for v in mats])
        R = _rref_rows(full)
        Q = []
        for r in R:
            v = r.copy()
            for q in Q:
                v -= (q @ v) * q
            v /= np.linalg.norm(v)
            Q.append(v)
        N = sum(dims)
        for q in Q:
            Ed = q.reshape(N, N)
            chain = [Ed]
            for _ in range(d):
                chain.append(bracket(U.matrix, chain[-1]))
            chain = chain[::-1]
            modules.append(JordanModule(d=d, basis=tuple(chain)))
            used += d + 1
    if used != dim_m:
        raise FrameError(f"Jordan strings cover {used} of {dim_m} dimensions")

    frame = Sl2Frame(dims, U, A, Ub, tuple(modules), name)
    Bfull = np.stack([b.ravel() for b in frame.basis], axis=1)
    sv = np.linalg.svd(Bfull, compute_uv=False)
    if sv[-1] <= 0 or sv[0] / sv[-1] > cond_max or Bfull.shape[1] != n:
        raise FrameError("numerically defective Jordan basis")
    return frame


def frame_residuals(frame: Sl2Frame) -> dict:
    """Bracket and ladder residuals for a frame."""
    out = dict(verify_sl2_triple(frame.U, frame.A, frame.Ubar)["residuals"])
    U, A = frame.U.matrix, frame.A.matrix
    ladder = 0.0
    weight = 0.0
    for mod in frame.modules:
        E = mod.basis
        ladder = max(ladder, float(np.linalg.norm(bracket(U, E[0]))))
        for j in range(1, mod.d + 1):
            ladder = max(ladder, float(np.linalg.norm(bracket(U, E[j]) - E[j - 1])))
        for j in range(mod.d + 1):
            weight = max(weight, float(np.linalg.norm(bracket(A, E[j]) - (mod.d / 2 - j) * E[j])))
    out["ladder"] = ladder
    out["weight"] = weight
    return out


# ---------------------------------------------------------------- catalog


def _sl2_seed():
    U = np.array([[0.0, 1.0], [0.0, 0.0]])
    A = np.diag([0.5, -0.5])
    Ub = np.array([[0.0, 0.0], [1.0, 0.0]])
    return U, A, Ub


def catalog_frame(name: str) -> Sl2Frame:
    key = name.lower().replace(" ", "")
    U, A, Ub = _sl2_seed()
    if key == "sl2":
        return build_jordan_basis((U, A, Ub), (2,), name="sl2")
    if key in ("sl2xsl2", "sl2+sl2", "sl2(+)sl2"):
        z = np.zeros((2, 2))
        seed = tuple(block_diag([X, z]) for X in (U, A, Ub))
        return build_jordan_basis(seed, (2, 2), name="sl2xsl2")
    if key == "sl3":
        seed = []
        for X in (U, A, Ub):
            M = np.zeros((3, 3))
            M[:2, :2] = X
            seed.append(M)
        return build_jordan_basis(tuple(seed), (3,), name="sl3")
    raise KeyError(f"unknown frame {name!r}; known: sl2, sl2xsl2, sl3")


CATALOG = ("sl2", "sl2xsl2", "sl3")


# ---------------------------------------------------------------- decomposition


@dataclass(frozen=True, eq=False)
class TrackParams:
    c: tuple  # per module: array of c_{j, iota}, j = 0..d
    a: float = 0.0
    ubar: float = 0.0
    u: float = 0.0

    @classmethod
    def zeros(cls, frame: Sl2Frame) -> "TrackParams":
        return cls(tuple(np.zeros(m.d + 1) for m in frame.modules))

    def vector(self) -> np.ndarray:
        parts = [np.asarray(x, dtype=float) for x in self.c]
        return np.concatenate(parts + [np.array([self.a, self.ubar, self.u])])

    @classmethod
    def from_vector(cls, v: np.ndarray, frame: Sl2Frame) -> "TrackParams":
        c = []
        k = 0
        for m in frame.modules:
            c.append(np.array(v[k : k + m.d + 1], dtype=float))
            k += m.d + 1
        return cls(tuple(c), float(v[k]), float(v[k + 1]), float(v[k + 2]))

    def with_(self, **kw) -> "TrackParams":
        d = {"c": self.c, "a": self.a, "ubar": self.ubar, "u": self.u}
        d.update(kw)
        return TrackParams(**d)

    @property
    def d_m(self) -> float:
        return max((float(np.max(np.abs(x))) for x in self.c if len(x)), default=0.0)

    @property
    def d_s(self) -> float:
        return abs(self.a) + abs(self.ubar) + abs(self.u)

    @property
    def distance(self) -> float:
        return max(self.d_m, self.d_s)


def assemble(params: TrackParams, frame: Sl2Frame) -> GroupElement:
    """``exp(sum c E) exp(aA) exp(ubar Ubar) u^u``."""
    n_m = frame.n_m
    X = frame.from_coords(np.concatenate([params.vector()[:n_m], np.zeros(3)]))
    gm = GroupElement.from_matrix(expm(X), frame.dims)
    return gm @ frame.a(params.a) @ frame.ubar(params.ubar) @ frame.u(params.u)


def _log_near_identity(G: np.ndarray) -> np.ndarray:
    Y = G - np.eye(G.shape[0])
    if np.abs(Y).max() < 0.3:
        acc = np.zeros_like(Y)
        P = np.eye(G.shape[0])
        for k in range(1, 40):
            P = P @ Y
            acc = acc + ((-1) ** (k + 1)) * P / k
        return acc
    L = scipy.linalg.logm(G)
    return np.real(L)


def _phi_series(adX: np.ndarray) -> np.ndarray:
    # sum_{n>=0} (-adX)^n / (n+1)!
    n = adX.shape[0]
    term = np.eye(n)
    acc = np.eye(n)
    for k in range(1, 40):
        term = term @ (-adX) / (k + 1)
        acc = acc + term
        if np.abs(term).max() < 1e-18:
            break
    return acc


def _Ad(frame: Sl2Frame, g: np.ndarray) -> np.ndarray:
    gi = np.linalg.inv(g)
    return np.stack([frame.coords(g @ b @ gi) for b in frame.basis], axis=1)


def decompose_near_identity(g, frame: Sl2Frame, tol: float = 1e-13, max_iter: int = 60) -> TrackParams:
    """Solve ``g = exp(sum c E) exp(aA) exp(ubar Ubar) u^u`` by damped Newton.

    Raises :class:`ChartError` when the iteration fails or the solution lies
    outside the chart radius of ``frame``.
    """
    G = _as_matrix(g)
    N = G.shape[0]
    if not np.all(np.isfinite(G)):
        raise ChartError("non-finite element")
    n_m = frame.n_m
    try:
        theta = frame.coords(_log_near_identity(G))
    except Exception as exc:  # pragma: no cover - logm failure
        raise ChartError(str(exc)) from exc
    if not np.all(np.isfinite(theta)) or np.abs(theta).max() > 4 * frame.chart_radius + 1:
        raise ChartError("element far from identity")
    Am, Ubm, Um = frame.A.matrix, frame.Ubar.matrix, frame.U.matrix
    eye = np.eye(N)

    def build(th):
        X = frame.from_coords(np.concatenate([th[:n_m], np.zeros(3)]))
        eX = expm(X)
        ea = expm(th[n_m] * Am)
        eub = expm(th[n_m + 1] * Ubm)
        eu = expm(th[n_m + 2] * Um)
        return X, eX, ea, eub, eu

    def residual(th):
        X, eX, ea, eub, eu = build(th)
        Mx = eX @ ea @ eub @ eu
        R = np.linalg.solve(Mx, G) - eye
        r = frame.coords(R - R @ R / 2 + R @ R @ R / 3)
        return r, (X, eX, ea, eub, eu)

    r, parts = residual(theta)
    rn = np.abs(r).max()
    for _ in range(max_iter):
        if rn < tol:
            break
        X, eX, ea, eub, eu = parts
        n = len(frame.basis)
        J = np.zeros((n, n))
        S = ea @ eub @ eu
        if n_m:
            phi = _phi_series(frame.ad_matrix(np.concatenate([theta[:n_m], np.zeros(3)])))
            AdSi = _Ad(frame, np.linalg.inv(S))
            J[:, :n_m] = AdSi @ phi[:, :n_m]
        S2 = eub @ eu
        J[:, n_m] = frame.coords(np.linalg.solve(S2, Am @ S2))
        J[:, n_m + 1] = frame.coords(np.linalg.solve(eu, Ubm @ eu))
        J[:, n_m + 2] = frame.coords(Um)
        try:
            step = np.linalg.solve(J, r)
        except np.linalg.LinAlgError as exc:
            raise ChartError("singular Jacobian") from exc
        lam = 1.0
        while True:
            cand = theta + lam * step
            r2, p2 = residual(cand)
            n2 = np.abs(r2).max()
            if n2 < rn or lam < 1e-4:
                break
            lam *= 0.5
        theta, r, parts, rn = cand, r2, p2, n2
    if not np.isfinite(rn) or rn > 1e-11:
        raise ChartError(f"decomposition did not converge (residual {rn:.3e})")
    params = TrackParams.from_vector(theta, frame)
    if params.distance >= frame.chart_radius:
        raise ChartError(f"outside decomposition chart (d={params.distance:.4g})")
    return params


def group_distance(g, frame: Sl2Frame) -> float:
    """``max(max |c|, |a| + |ubar| + |u|)`` from the near-identity decomposition."""
    return decompose_near_identity(g, frame).distance


def pair_distance(g, h, frame: Sl2Frame) -> float:
    G, H = _as_matrix(g), _as_matrix(h)
    return group_distance(np.linalg.solve(G, H), frame)


def sl2_params(M: np.ndarray) -> tuple[float, float, float] | None:
    """Closed-form ``(a, ubar, u)`` with ``M = exp(aA) exp(ubar Ubar) u^u`` in SL(2)."""
    p, q, r = M[0, 0], M[0, 1], M[1, 0]
    if p <= 0:
        return None
    return 2.0 * np.log(p), r * p, q / p
