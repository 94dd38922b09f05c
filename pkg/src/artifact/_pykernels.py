"""Pure-Python/numpy versions of the lattice-sum kernels.

Same algorithms and signatures as the compiled ``_ckernels`` module; selected
automatically when the extension is not built.
"""
from __future__ import annotations

import math

import numpy as np

# Gauss-Kronrod 7/15 on [-1, 1]
XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
NODES = np.concatenate([-XGK[:-1], XGK[::-1]])
WK = np.concatenate([WGK[:-1], WGK[::-1]])
WG15 = np.zeros(15)
for _i, _w in zip((1, 3, 5), WG[:3]):
    WG15[_i] = _w
    WG15[14 - _i] = _w
WG15[7] = WG[3]


def reduce_basis(g: np.ndarray) -> np.ndarray:
    """Lagrange-Gauss reduction of the row lattice; returns ``gamma @ g`` with gamma in SL(2,Z)."""
    b1 = np.array(g[0], dtype=float)
    b2 = np.array(g[1], dtype=float)
    det0 = b1[0] * b2[1] - b1[1] * b2[0]
    if b1 @ b1 > b2 @ b2:
        b1, b2 = b2, b1
    for _ in range(200):
        mu = round((b1 @ b2) / (b1 @ b1))
        b2 = b2 - mu * b1
        if b2 @ b2 >= b1 @ b1:
            break
        b1, b2 = b2, b1
    det1 = b1[0] * b2[1] - b1[1] * b2[0]
    if det1 * det0 < 0:
        b2 = -b2
    return np.array([b1, b2])


def candidates(g: np.ndarray, radius: float, primitive: bool = True) -> np.ndarray:
    """All (primitive) lattice vectors ``v g`` of norm below ``radius``."""
    B = reduce_basis(g)
    b1, b2 = B[0], B[1]
    n1 = math.sqrt(b1 @ b1)
    det = abs(b1[0] * b2[1] - b1[1] * b2[0])
    h = det / n1
    mu = (b1 @ b2) / (n1 * n1)
    K2 = int(math.floor(radius / h))
    out = []
    for k2 in range(-K2, K2 + 1):
        rem = radius * radius - (k2 * h) ** 2
        if rem < 0:
            continue
        half = math.sqrt(rem) / n1
        c = -k2 * mu
        for k1 in range(int(math.ceil(c - half)), int(math.floor(c + half)) + 1):
            if k1 == 0 and k2 == 0:
                continue
            if primitive and math.gcd(k1, k2) != 1:
                continue
            out.append(k1 * b1 + k2 * b2)
    return np.array(out).reshape(-1, 2)


def _bump_terms(n, center, width, amp):
    z = (n - center) / width
    inside = np.abs(z) < 1.0
    zz = np.where(inside, z, 0.0)
    den = 1.0 - zz * zz
    q = np.where(inside, -1.0 / den, -np.inf)
    phi = amp * np.exp(q)
    dq = -2.0 * zz / (den * den)
    d2q = -2.0 / (den * den) - 8.0 * zz * zz / (den * den * den)
    phi1 = np.where(inside, phi * dq / width, 0.0)
    phi2 = np.where(inside, phi * (dq * dq + d2q) / (width * width), 0.0)
    return np.where(inside, phi, 0.0), phi1, phi2


def _eval_on_vectors(W: np.ndarray, r: np.ndarray, center, width, amp):
    """Lattice sums over vectors ``W`` pushed by ``u^r``: returns f, D_U f, D_U^2 f."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if W.shape[0] == 0:
        z = np.zeros_like(r)
        return z, z.copy(), z.copy()
    x = W[:, 0][None, :]
    y = W[:, 1][None, :] + x * r[:, None]
    n = np.hypot(x, y)
    phi, phi1, phi2 = _bump_terms(n, center, width, amp)
    n1 = x * y / n
    n2 = x**4 / n**3
    f = phi.sum(axis=1)
    df = (phi1 * n1).sum(axis=1)
    d2f = (phi2 * n1 * n1 + phi1 * n2).sum(axis=1)
    return f, df, d2f


def _opnorm_u(t: float) -> float:
    t = abs(t)
    return 0.5 * (t + math.sqrt(t * t + 4.0))


def siegel_eval(G: np.ndarray, center: float, width: float, amp: float, primitive: bool = True):
    """Observable value and first two U-derivatives at each 2x2 matrix in ``G``."""
    G = np.asarray(G, dtype=float).reshape(-1, 2, 2)
    R = center + width
    out = np.zeros((3, G.shape[0]))
    for i, g in enumerate(G):
        W = candidates(g, R * (1 + 1e-12), primitive)
        f, df, d2f = _eval_on_vectors(W, np.zeros(1), center, width, amp)
        out[:, i] = f[0], df[0], d2f[0]
    return out[0], out[1], out[2]


def orbit_integral(g, t0, t1, center, width, amp, primitive, c0, cf, cdf, tol, max_intervals=20000):
    """Adaptive G7-K15 integral of ``c0 + cf f + cdf D_U f`` along ``g u^r``, r in [t0, t1].

    Returns ``(value, n_evals, converged)``.
    """
    g = np.asarray(g, dtype=float)
    if t1 == t0:
        return 0.0, 0, True
    span = max(abs(t0), abs(t1))
    W = candidates(g, (center + width) * _opnorm_u(span) * (1 + 1e-12), primitive)
    L = abs(t1 - t0)

    def F(r):
        f, df, _ = _eval_on_vectors(W, r, center, width, amp)
        return c0 + cf * f + cdf * df

    total = 0.0
    nevals = 0
    ok = True
    pending = [(t0, t1)]
    while pending:
        a = np.array([p[0] for p in pending])
        b = np.array([p[1] for p in pending])
        mid = 0.5 * (a + b)
        hw = 0.5 * (b - a)
        R = (mid[:, None] + hw[:, None] * NODES[None, :]).ravel()
        vals = F(R).reshape(len(pending), 15)
        nevals += R.size
        K = (vals * WK).sum(axis=1) * hw
        Gs = (vals * WG15).sum(axis=1) * hw
        err = np.abs(K - Gs)
        loc = tol * np.abs(b - a) / L
        good = (err <= loc) | (np.abs(hw) < 1e-12)
        if np.any(~good & (np.abs(hw) < 1e-12)):
            ok = False
        total += float(np.sum(K[good]))
        nxt = []
        for i in np.nonzero(~good)[0]:
            nxt.append((a[i], mid[i]))
            nxt.append((mid[i], b[i]))
        if len(nxt) > max_intervals:
            total += float(np.sum(K[~good]))
            ok = False
            break
        pending = nxt
    return total, nevals, ok
