"""Hot per-point kernels, in a numba flavour and a plain numpy flavour.

The numba versions are used when numba imports cleanly and the environment
variable ``ZDJSCC_NO_NUMBA`` is unset (or "0"). Both flavours are always
importable so tests and the benchmark can compare them directly.

All kernels work on standardized quantities and return float64 arrays.
"""
import math
import os

import numpy as np
from scipy.special import erfc

SQRT2 = math.sqrt(2.0)
INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False


def _flag_disabled():
    return os.environ.get("ZDJSCC_NO_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")


USE_NUMBA = HAVE_NUMBA and not _flag_disabled()


# ---------------------------------------------------------------- numpy flavour

def q_np(z):
    return 0.5 * erfc(np.asarray(z, dtype=float) / SQRT2)


def _cell_np(lo, hi):
    # Pr(lo <= Z < hi) for standard normal Z, arranged to avoid cancellation
    # when both bounds sit on the same side of zero.
    upper = q_np(lo) - q_np(hi)
    lower = q_np(-hi) - q_np(-lo)
    mid = 1.0 - q_np(hi) - q_np(-lo)
    return np.where(lo >= 0.0, upper, np.where(hi <= 0.0, lower, mid))


def klevel_probs_np(f, edges, sigma):
    f = np.asarray(f, dtype=float)
    lo = (edges[:-1][None, :] - f[:, None]) / sigma
    hi = (edges[1:][None, :] - f[:, None]) / sigma
    return _cell_np(lo, hi)


def klevel_dprobs_np(f, edges, sigma):
    # d/df of each cell probability: the exponential difference of the
    # K-level gradient divided by sqrt(2 pi) sigma
    f = np.asarray(f, dtype=float)
    e = np.exp(-0.5 * ((edges[None, :] - f[:, None]) / sigma) ** 2)
    return (e[:, :-1] - e[:, 1:]) * (INV_SQRT2PI / sigma)


def onebit_probs_np(f, sigmas, signs):
    # signs[j, i] = (-1)^(b_j(i)+1); Pr(j|f) = prod_i Q(signs[j,i] f / sigma_i)
    f = np.asarray(f, dtype=float)
    arg = signs[None, :, :] * (f[:, None, None] / sigmas[None, None, :])
    return np.prod(q_np(arg), axis=2)


def onebit_dprobs_np(f, sigmas, signs):
    f = np.asarray(f, dtype=float)
    n_out, nb = signs.shape
    arg = signs[None, :, :] * (f[:, None, None] / sigmas[None, None, :])
    qs = q_np(arg)
    dens = np.exp(-0.5 * (f[:, None] / sigmas[None, :]) ** 2) * (INV_SQRT2PI / sigmas[None, :])
    out = np.zeros((f.size, n_out))
    for k in range(nb):
        others = np.prod(np.delete(qs, k, axis=2), axis=2)
        out += -signs[None, :, k] * dens[:, k][:, None] * others
    return out


def exp_growth_root_np(log_c, sigma):
    """Vectorized root of u*exp(u^2/(2 sigma^2)) = exp(log_c), u >= 0."""
    log_c = np.asarray(log_c, dtype=float)
    out = np.zeros(log_c.shape)
    live = np.isfinite(log_c)
    if not np.any(live):
        return out
    L = log_c[live]
    s2 = sigma * sigma
    hi = np.where(L <= 0.0, np.exp(np.minimum(L, 0.0)),
                  np.maximum(1.0, sigma * np.sqrt(2.0 * np.maximum(L, 0.0))))
    lo = np.zeros_like(L)
    u = hi.copy()
    for _ in range(200):
        phi = np.log(u) + 0.5 * u * u / s2 - L
        neg = phi < 0.0
        lo = np.where(neg, u, lo)
        hi = np.where(neg, hi, u)
        step = phi / (1.0 / u + u / s2)
        nxt = u - step
        bad = ~((nxt > lo) & (nxt < hi))
        nxt = np.where(bad, np.where(lo > 0.0, 0.5 * (lo + hi), 0.5 * hi), nxt)
        done = np.abs(nxt - u) <= 4e-16 * np.maximum(nxt, 1e-300)
        u = nxt
        if np.all(done):
            break
    out[live] = u
    return out


def onebit_outcome_np(z):
    # z: (n, N) observations; bits are 1 for z < 0, outcome j = 2^N - value(bits)
    n, nb = z.shape
    weights = 1 << np.arange(nb - 1, -1, -1)
    val = ((z < 0.0).astype(np.int64) * weights[None, :]).sum(axis=1)
    return (1 << nb) - val


def klevel_outcome_np(z, thresholds):
    return np.searchsorted(thresholds, z, side="right") + 1


# ---------------------------------------------------------------- numba flavour

if HAVE_NUMBA:
    _jit = numba.njit(cache=True, fastmath=False)

    @_jit
    def _q1(z):
        return 0.5 * math.erfc(z / 1.4142135623730951)

    @_jit
    def _cell1(lo, hi):
        if lo >= 0.0:
            return _q1(lo) - _q1(hi)
        if hi <= 0.0:
            return _q1(-hi) - _q1(-lo)
        return 1.0 - _q1(hi) - _q1(-lo)

    @_jit
    def klevel_probs_nb(f, edges, sigma):
        n = f.shape[0]
        k = edges.shape[0] - 1
        out = np.empty((n, k))
        for i in range(n):
            for j in range(k):
                out[i, j] = _cell1((edges[j] - f[i]) / sigma, (edges[j + 1] - f[i]) / sigma)
        return out

    @_jit
    def klevel_dprobs_nb(f, edges, sigma):
        n = f.shape[0]
        k = edges.shape[0] - 1
        c = 0.3989422804014327 / sigma
        out = np.empty((n, k))
        e = np.empty(k + 1)
        for i in range(n):
            for j in range(k + 1):
                t = (edges[j] - f[i]) / sigma
                e[j] = math.exp(-0.5 * t * t)
            for j in range(k):
                out[i, j] = (e[j] - e[j + 1]) * c
        return out

    @_jit
    def onebit_probs_nb(f, sigmas, signs):
        n = f.shape[0]
        m, nb = signs.shape
        out = np.empty((n, m))
        for i in range(n):
            for j in range(m):
                p = 1.0
                for b in range(nb):
                    p *= _q1(signs[j, b] * f[i] / sigmas[b])
                out[i, j] = p
        return out

    @_jit
    def onebit_dprobs_nb(f, sigmas, signs):
        n = f.shape[0]
        m, nb = signs.shape
        out = np.zeros((n, m))
        for i in range(n):
            for j in range(m):
                acc = 0.0
                for k in range(nb):
                    t = f[i] / sigmas[k]
                    term = -signs[j, k] * math.exp(-0.5 * t * t) * 0.3989422804014327 / sigmas[k]
                    for b in range(nb):
                        if b != k:
                            term *= _q1(signs[j, b] * f[i] / sigmas[b])
                    acc += term
                out[i, j] = acc
        return out

    @_jit
    def exp_growth_root_nb(log_c, sigma):
        n = log_c.shape[0]
        out = np.zeros(n)
        s2 = sigma * sigma
        for i in range(n):
            L = log_c[i]
            if not np.isfinite(L):
                out[i] = 0.0
                continue
            if L <= 0.0:
                hi = math.exp(L)
            else:
                hi = max(1.0, sigma * math.sqrt(2.0 * L))
            lo = 0.0
            u = hi
            for _ in range(200):
                phi = math.log(u) + 0.5 * u * u / s2 - L
                if phi < 0.0:
                    lo = u
                else:
                    hi = u
                nxt = u - phi / (1.0 / u + u / s2)
                if not (nxt > lo and nxt < hi):
                    if lo > 0.0:
                        nxt = 0.5 * (lo + hi)
                    else:
                        nxt = 0.5 * hi
                if abs(nxt - u) <= 4e-16 * max(nxt, 1e-300):
                    u = nxt
                    break
                u = nxt
            out[i] = u
        return out

    @_jit
    def onebit_outcome_nb(z):
        n, nb = z.shape
        out = np.empty(n, dtype=np.int64)
        top = 1 << nb
        for i in range(n):
            val = 0
            for b in range(nb):
                val = val * 2 + (1 if z[i, b] < 0.0 else 0)
            out[i] = top - val
        return out

    @_jit
    def klevel_outcome_nb(z, thresholds):
        n = z.shape[0]
        out = np.empty(n, dtype=np.int64)
        for i in range(n):
            j = 0
            while j < thresholds.shape[0] and z[i] >= thresholds[j]:
                j += 1
            out[i] = j + 1
        return out


# ---------------------------------------------------------------- dispatch

def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"


def klevel_probs(f, edges, sigma):
    if USE_NUMBA:
        return klevel_probs_nb(_f64(np.atleast_1d(f)), _f64(edges), float(sigma))
    return klevel_probs_np(np.atleast_1d(f), _f64(edges), float(sigma))


def klevel_dprobs(f, edges, sigma):
    if USE_NUMBA:
        return klevel_dprobs_nb(_f64(np.atleast_1d(f)), _f64(edges), float(sigma))
    return klevel_dprobs_np(np.atleast_1d(f), _f64(edges), float(sigma))


def onebit_probs(f, sigmas, signs):
    if USE_NUMBA:
        return onebit_probs_nb(_f64(np.atleast_1d(f)), _f64(sigmas), _f64(signs))
    return onebit_probs_np(np.atleast_1d(f), _f64(sigmas), _f64(signs))


def onebit_dprobs(f, sigmas, signs):
    if USE_NUMBA:
        return onebit_dprobs_nb(_f64(np.atleast_1d(f)), _f64(sigmas), _f64(signs))
    return onebit_dprobs_np(np.atleast_1d(f), _f64(sigmas), _f64(signs))


def exp_growth_root(log_c, sigma):
    log_c = np.asarray(log_c, dtype=float)
    shape = log_c.shape
    flat = _f64(log_c.ravel())
    if USE_NUMBA:
        return exp_growth_root_nb(flat, float(sigma)).reshape(shape)
    return exp_growth_root_np(flat, float(sigma)).reshape(shape)


def onebit_outcome(z):
    if USE_NUMBA:
        return onebit_outcome_nb(_f64(z))
    return onebit_outcome_np(np.asarray(z, dtype=float))


def klevel_outcome(z, thresholds):
    if USE_NUMBA:
        return klevel_outcome_nb(_f64(z), _f64(thresholds))
    return klevel_outcome_np(np.asarray(z, dtype=float), _f64(thresholds))
