"""Numerical building blocks: Gaussian tail, adaptive quadrature, scalar roots
and 1-D line search."""
import math
from dataclasses import dataclass

import numpy as np

from . import kernels

TRUNC = 8.0  # integrate E[g(V)] on [-8 sigma, 8 sigma]; lost tail mass ~1.2e-15


class NumericalError(RuntimeError):
    """Raised when an iterative numerical routine fails to meet its tolerance."""

    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


class BracketError(ValueError):
    pass


@dataclass(frozen=True)
class Tolerances:
    root_abs: float = 1e-12
    quad_rel: float = 1e-10
    search_abs: float = 1e-9
    quad_abs: float = 1e-15

    def __post_init__(self):
        for name in ("root_abs", "quad_rel", "search_abs", "quad_abs"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


DEFAULT_TOL = Tolerances()


def q_function(z):
    """Gaussian tail probability Pr(Z > z) for standard normal Z.

    Accepts scalars or arrays; non-finite input raises ValueError.
    """
    arr = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("q_function needs finite input")
    if arr.ndim == 0:
        return 0.5 * math.erfc(float(arr) / kernels.SQRT2)
    return kernels.q_np(arr)


def normal_pdf(v, sigma=1.0):
    v = np.asarray(v, dtype=float)
    return np.exp(-0.5 * (v / sigma) ** 2) / (math.sqrt(2.0 * math.pi) * sigma)


# Gauss-Kronrod 7/15 pair on [-1, 1]
_XK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0])
_WK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327])

NODES = np.concatenate([-_XK[:-1], _XK[::-1]])
W15 = np.concatenate([_WK[:-1], _WK[::-1]])
W7 = np.zeros(15)
# Gauss nodes are the odd-indexed Kronrod abscissae (1, 3, 5 and the centre)
for k, w in zip((1, 3, 5), _WG[:3]):
    W7[k] = w
    W7[14 - k] = w
W7[7] = _WG[3]


def _panel_rule(fun, a, b):
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    x = mid[:, None] + half[:, None] * NODES[None, :]
    vals = np.asarray(fun(x.ravel()), dtype=float)
    extra = vals.shape[1:]
    vals = vals.reshape((a.size, 15) + extra)
    if not np.all(np.isfinite(vals)):
        raise NumericalError("integrand returned non-finite values")
    hk = half.reshape((-1,) + (1,) * len(extra))
    k15 = np.tensordot(W15, vals, axes=([0], [1])) * hk
    g7 = np.tensordot(W7, vals, axes=([0], [1])) * hk
    return k15, np.abs(k15 - g7)


def fixed_rule(fun, edges):
    """Non-adaptive 15-point Kronrod rule on each panel between sorted edges.

    Returns per-panel integrals (shape (n_panels, ...)).
    """
    edges = np.asarray(edges, dtype=float)
    a, b = edges[:-1], edges[1:]
    val, _ = _panel_rule(fun, a, b)
    return val


def integrate(fun, lo, hi, tol=DEFAULT_TOL, points=None, min_panels=16, max_panels=400_000):
    """Adaptive G7/K15 integral of a vectorized fun over [lo, hi].

    fun maps a 1-D array of abscissae to an array whose leading axis matches
    (extra trailing axes give vector-valued integrals). Known kinks and jumps
    should be passed in ``points`` so that no panel straddles them.
    """
    if not hi > lo:
        raise ValueError("integrate needs lo < hi")
    cuts = [np.linspace(lo, hi, min_panels + 1)]
    if points is not None:
        p = np.asarray(points, dtype=float).ravel()
        cuts.append(p[(p > lo) & (p < hi)])
    edges = np.unique(np.concatenate(cuts))
    a, b = edges[:-1], edges[1:]
    val, err = _panel_rule(fun, a, b)
    for _ in range(200):
        total = val.sum(axis=0)
        etot = err.sum(axis=0)
        target = np.maximum(tol.quad_rel * np.abs(total), tol.quad_abs)
        if np.all(etot <= target):
            return total
        # panel score: worst component relative to the whole budget
        score = (err / target).reshape(err.shape[0], -1).max(axis=1)
        split = score >= min(1.0 / a.size, score.max())
        split &= (b - a) > 1e-14 * max(abs(lo), abs(hi), 1.0)
        if not np.any(split) or a.size + split.sum() > max_panels:
            break
        sa, sb = a[split], b[split]
        mid = 0.5 * (sa + sb)
        na = np.concatenate([sa, mid])
        nb = np.concatenate([mid, sb])
        nval, nerr = _panel_rule(fun, na, nb)
        keep = ~split
        a = np.concatenate([a[keep], na])
        b = np.concatenate([b[keep], nb])
        val = np.concatenate([val[keep], nval])
        err = np.concatenate([err[keep], nerr])
    raise NumericalError("adaptive quadrature did not converge", best=val.sum(axis=0))


def gaussian_expectation(g, sigma, tol=DEFAULT_TOL, points=None):
    """E[g(V)] for V ~ N(0, sigma^2), truncated to [-8 sigma, 8 sigma].

    g must be vectorized; vector-valued g (trailing axes) is supported.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    L = TRUNC * sigma

    def weighted(v):
        gv = np.asarray(g(v), dtype=float)
        w = normal_pdf(v, sigma)
        if gv.ndim == 0:
            gv = np.full(v.shape, float(gv))
        return gv * w.reshape((-1,) + (1,) * (gv.ndim - 1))

    return integrate(weighted, -L, L, tol, points=points)


def solve_exp_growth_root(c, sigma_w, tol=DEFAULT_TOL):
    """Unique u >= 0 with u * exp(u^2 / (2 sigma_w^2)) = c."""
    if not (c >= 0 and math.isfinite(c)):
        raise ValueError("c must be finite and non-negative")
    if not sigma_w > 0:
        raise ValueError("sigma_w must be positive")
    if c == 0:
        return 0.0
    u = float(kernels.exp_growth_root(np.array([math.log(c)]), sigma_w)[0])
    # one polishing Newton step on the direct residual for moderate c
    r = u * math.exp(0.5 * u * u / sigma_w**2) - c
    if abs(r) > tol.root_abs * max(1.0, c):
        d = math.exp(0.5 * u * u / sigma_w**2) * (1.0 + u * u / sigma_w**2)
        u = max(u - r / d, 0.0)
    return u


def exp_growth_residual(u, c, sigma_w):
    return u * math.exp(0.5 * u * u / sigma_w**2) - c


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_min(h, lo, hi, tol=DEFAULT_TOL, seeds=1):
    """Minimize h on [lo, hi] by golden section.

    With seeds > 1 the interval is cut into equal pieces, each searched, and
    the best result (endpoints included) kept.
    """
    if not hi > lo:
        raise ValueError("golden_section_min needs lo < hi")
    cands = [(h(lo), lo), (h(hi), hi)]
    edges = np.linspace(lo, hi, seeds + 1)
    for a, b in zip(edges[:-1], edges[1:]):
        x, fx = _golden(h, float(a), float(b), tol.search_abs)
        cands.append((fx, x))
    fbest, xbest = min(cands, key=lambda t: (t[0], abs(t[1] - lo)))
    return xbest, fbest


def _golden(h, a, b, xtol):
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = h(c), h(d)
    while b - a > xtol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = h(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = h(d)
    x = 0.5 * (a + b)
    fx = h(x)
    best = min([(fx, x), (fc, c), (fd, d)])
    return best[1], best[0]


def bisect_monotone(h, lo, hi, tol=DEFAULT_TOL, max_iter=400):
    """Root of a monotone function bracketed by [lo, hi]."""
    flo, fhi = h(lo), h(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if flo * fhi > 0:
        raise BracketError("endpoints do not bracket a root")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = h(mid)
        if abs(fm) <= tol.root_abs or (hi - lo) <= tol.search_abs:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)
