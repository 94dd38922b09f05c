# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled lattice-sum kernels (mirrors ``_pykernels``)."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, exp, fabs, floor, ceil, round as cround

cnp.import_array()

cdef double XGK[8]
cdef double WGK[8]
cdef double WG[4]
XGK[:] = [0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
          0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
          0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
          0.207784955007898467600689403773245, 0.0]
WGK[:] = [0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
          0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
          0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
          0.204432940075298892414161999234649, 0.209482141084727828012999174891714]
WG[:] = [0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
         0.381830050505118944950369775488975, 0.417959183673469387755102040816327]

cdef enum:
    MAXV = 4096
    STACK = 512


cdef long _gcd(long a, long b) nogil:
    if a < 0:
        a = -a
    if b < 0:
        b = -b
    while b:
        a, b = b, a % b
    return a


cdef void _reduce(double* g, double* out) nogil:
    cdef double b1x = g[0], b1y = g[1], b2x = g[2], b2y = g[3]
    cdef double tx, ty, mu, det0, det1
    cdef int it
    det0 = b1x * b2y - b1y * b2x
    if b1x * b1x + b1y * b1y > b2x * b2x + b2y * b2y:
        tx, ty = b1x, b1y
        b1x, b1y = b2x, b2y
        b2x, b2y = tx, ty
    for it in range(200):
        mu = cround((b1x * b2x + b1y * b2y) / (b1x * b1x + b1y * b1y))
        b2x = b2x - mu * b1x
        b2y = b2y - mu * b1y
        if b2x * b2x + b2y * b2y >= b1x * b1x + b1y * b1y:
            break
        tx, ty = b1x, b1y
        b1x, b1y = b2x, b2y
        b2x, b2y = tx, ty
    det1 = b1x * b2y - b1y * b2x
    if det1 * det0 < 0:
        b2x = -b2x
        b2y = -b2y
    out[0] = b1x
    out[1] = b1y
    out[2] = b2x
    out[3] = b2y


cdef int _candidates(double* g, double radius, bint primitive, double* W) nogil:
    cdef double B[4]
    cdef double n1, det, h, mu, rem, half, c
    cdef long K2, k1, k2, lo, hi
    cdef int n = 0
    _reduce(g, B)
    n1 = sqrt(B[0] * B[0] + B[1] * B[1])
    det = fabs(B[0] * B[3] - B[1] * B[2])
    h = det / n1
    mu = (B[0] * B[2] + B[1] * B[3]) / (n1 * n1)
    K2 = <long> floor(radius / h)
    for k2 in range(-K2, K2 + 1):
        rem = radius * radius - (k2 * h) * (k2 * h)
        if rem < 0:
            continue
        half = sqrt(rem) / n1
        c = -k2 * mu
        lo = <long> ceil(c - half)
        hi = <long> floor(c + half)
        for k1 in range(lo, hi + 1):
            if k1 == 0 and k2 == 0:
                continue
            if primitive and _gcd(k1, k2) != 1:
                continue
            if n >= MAXV:
                return -1
            W[2 * n] = k1 * B[0] + k2 * B[2]
            W[2 * n + 1] = k1 * B[1] + k2 * B[3]
            n += 1
    return n


cdef inline void _point(double* W, int nv, double r, double center, double width, double amp,
                        double* f, double* df, double* d2f) nogil:
    cdef int i
    cdef double x, y, nn, z, den, phi, dq, d2q, phi1, phi2, n1, n2
    f[0] = 0.0
    df[0] = 0.0
    d2f[0] = 0.0
    for i in range(nv):
        x = W[2 * i]
        y = W[2 * i + 1] + x * r
        nn = sqrt(x * x + y * y)
        z = (nn - center) / width
        if fabs(z) >= 1.0:
            continue
        den = 1.0 - z * z
        phi = amp * exp(-1.0 / den)
        dq = -2.0 * z / (den * den)
        d2q = -2.0 / (den * den) - 8.0 * z * z / (den * den * den)
        phi1 = phi * dq / width
        phi2 = phi * (dq * dq + d2q) / (width * width)
        n1 = x * y / nn
        n2 = x * x * x * x / (nn * nn * nn)
        f[0] += phi
        df[0] += phi1 * n1
        d2f[0] += phi2 * n1 * n1 + phi1 * n2


def reduce_basis(g):
    cdef double[::1] gv = np.ascontiguousarray(g, dtype=np.float64).ravel()
    cdef double out[4]
    _reduce(&gv[0], out)
    return np.array([[out[0], out[1]], [out[2], out[3]]])


def candidates(g, double radius, bint primitive=True):
    cdef double[::1] gv = np.ascontiguousarray(g, dtype=np.float64).ravel()
    cdef double W[2 * MAXV]
    cdef int n = _candidates(&gv[0], radius, primitive, &W[0])
    if n < 0:
        raise OverflowError("too many lattice vectors in the enumeration ball")
    return np.array([W[i] for i in range(2 * n)], dtype=np.float64).reshape(-1, 2)


def siegel_eval(G, double center, double width, double amp, bint primitive=True):
    cdef double[:, ::1] Gv = np.ascontiguousarray(G, dtype=np.float64).reshape(-1, 4)
    cdef Py_ssize_t m = Gv.shape[0], i
    cdef double W[2 * MAXV]
    cdef double[::1] f = np.empty(m), df = np.empty(m), d2f = np.empty(m)
    cdef double R = (center + width) * (1 + 1e-12)
    cdef int nv
    for i in range(m):
        nv = _candidates(&Gv[i, 0], R, primitive, &W[0])
        if nv < 0:
            raise OverflowError("too many lattice vectors in the enumeration ball")
        _point(&W[0], nv, 0.0, center, width, amp, &f[i], &df[i], &d2f[i])
    return np.asarray(f), np.asarray(df), np.asarray(d2f)


cdef double _integrand(double* W, int nv, double r, double center, double width, double amp,
                       double c0, double cf, double cdf) nogil:
    cdef double f, df, d2f
    _point(W, nv, r, center, width, amp, &f, &df, &d2f)
    return c0 + cf * f + cdf * df


def orbit_integral(g, double t0, double t1, double center, double width, double amp,
                   bint primitive, double c0, double cf, double cdf, double tol,
                   int max_intervals=20000):
    """Adaptive G7-K15 integral; returns ``(value, n_evals, converged)``.

    Segments whose enumeration ball overflows the vector buffer are split in
    half, each half rebased to start at time 0.
    """
    res = _orbit_integral(g, t0, t1, center, width, amp, primitive, c0, cf, cdf, tol, max_intervals)
    if res is not None:
        return res
    cdef double mid = 0.5 * (t0 + t1)
    total, nevals, ok = 0.0, 0, True
    G = np.asarray(g, dtype=np.float64).reshape(2, 2)
    for a, b in ((t0, mid), (mid, t1)):
        ga = G @ np.array([[1.0, a], [0.0, 1.0]])
        v, n, o = orbit_integral(ga, 0.0, b - a, center, width, amp, primitive, c0, cf, cdf, 0.5 * tol, max_intervals)
        total += v
        nevals += n
        ok = ok and o
    return total, nevals, ok


def _orbit_integral(g, double t0, double t1, double center, double width, double amp,
                    bint primitive, double c0, double cf, double cdf, double tol,
                    int max_intervals):
    cdef double[::1] gv = np.ascontiguousarray(g, dtype=np.float64).ravel()
    cdef double W[2 * MAXV]
    cdef double span, radius, L, a, b, mid, hw, K, Gs, v, total = 0.0
    cdef int nv, k, top, done = 0
    cdef long nevals = 0
    cdef bint ok = True
    cdef double sa[STACK]
    cdef double sb[STACK]
    if t1 == t0:
        return 0.0, 0, True
    span = max(fabs(t0), fabs(t1))
    radius = (center + width) * 0.5 * (span + sqrt(span * span + 4.0)) * (1 + 1e-12)
    nv = _candidates(&gv[0], radius, primitive, &W[0])
    if nv < 0:
        return None
    L = fabs(t1 - t0)
    top = 0
    sa[0] = t0
    sb[0] = t1
    top = 1
    with nogil:
        while top > 0:
            top -= 1
            a = sa[top]
            b = sb[top]
            mid = 0.5 * (a + b)
            hw = 0.5 * (b - a)
            K = 0.0
            Gs = 0.0
            for k in range(7):
                v = _integrand(&W[0], nv, mid - hw * XGK[k], center, width, amp, c0, cf, cdf)
                K += WGK[k] * v
                if k % 2 == 1:
                    Gs += WG[k // 2] * v
                v = _integrand(&W[0], nv, mid + hw * XGK[k], center, width, amp, c0, cf, cdf)
                K += WGK[k] * v
                if k % 2 == 1:
                    Gs += WG[k // 2] * v
            v = _integrand(&W[0], nv, mid, center, width, amp, c0, cf, cdf)
            K += WGK[7] * v
            Gs += WG[3] * v
            nevals += 15
            K *= hw
            Gs *= hw
            if fabs(K - Gs) <= tol * fabs(b - a) / L or fabs(hw) < 1e-12:
                if fabs(hw) < 1e-12 and fabs(K - Gs) > tol * fabs(b - a) / L:
                    ok = False
                total += K
                continue
            done += 1
            if top + 2 > STACK or done > max_intervals:
                ok = False
                total += K
                continue
            sa[top] = mid
            sb[top] = b
            top += 1
            sa[top] = a
            sb[top] = mid
            top += 1
    return total, nevals, ok
