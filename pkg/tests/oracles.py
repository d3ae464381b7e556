"""Independent reference computations used by the tests.

Nothing here calls the gradient, decoder, or closed-form code under test.
"""
import math

import mpmath
import numpy as np

from zdjscc.math_kernel import Tolerances, integrate, normal_pdf

mpmath.mp.dps = 40



def q_mp(z):
    """Gaussian tail from mpmath's erfc at 40 digits."""
    return float(mpmath.erfc(mpmath.mpf(z) / mpmath.sqrt(2)) / 2)


def density(link, v_hat, lam, criterion, D):
    """Pointwise Lagrangian density F(f, v) built from transition probabilities only."""
    v_hat = np.asarray(v_hat, dtype=float)

    def F(f, v):
        P = link.probs(f)
        if criterion == "mse":
            cost = (v[:, None] - v_hat[None, :]) ** 2
        else:
            cost = np.abs(v[:, None] - v_hat[None, :]) >= math.sqrt(D)
        return np.sum(P * cost, axis=1) + lam * f * f

    return F


def fd_gradient(mapping, link, v_hat, lam, v0, criterion="mse", D=None, h=None, width=None):
    """Central difference of the quadrature Lagrangian in the direction of a narrow hat.

    L[f +- h phi] differ only on the support of phi, so the difference is
    integrated there alone; dividing by 2 h E-weight of phi gives the
    pointwise functional derivative at v0.
    """
    sig_v = link.source.sigma_v
    h = 1e-5 * min(link.channel.noise_sigmas) if h is None else h
    if width is None:
        width = 1e-3 * float(np.min(np.diff(mapping.v_grid)))
    F = density(link, v_hat, lam, criterion, D)

    def phi(v):
        return np.maximum(0.0, 1.0 - np.abs(v - v0) / width)

    def diff(v):
        f = mapping(v)
        return normal_pdf(v, sig_v) * (F(f + h * phi(v), v) - F(f - h * phi(v), v))

    lo, hi = v0 - width, v0 + width
    # F differences carry roundoff near 1e-16 / h, so ask for about 1e-9 in the derivative
    tol = Tolerances(quad_rel=1e-9, quad_abs=1e-9 * h * width * normal_pdf(v0, sig_v))
    num = float(integrate(diff, lo, hi, tol, points=[v0], min_panels=8))
    den = 2.0 * h * float(integrate(lambda v: normal_pdf(v, sig_v) * phi(v), lo, hi, tol, points=[v0],
                                    min_panels=8))
    return num / den


def rel_err(a, b, floor=1e-8):
    return abs(a - b) / max(abs(b), floor)


def lloyd_max(K, iters=2000):
    """Reference K-level Lloyd-Max quantizer of N(0,1) by plain iteration (scipy-free)."""
    pts = np.linspace(-1.5, 1.5, K)
    for _ in range(iters):
        t = np.concatenate([[-np.inf], 0.5 * (pts[1:] + pts[:-1]), [np.inf]])
        phi = np.array([0.0 if np.isinf(x) else math.exp(-x * x / 2) / math.sqrt(2 * math.pi) for x in t])
        cdf = np.array([0.0 if x == -np.inf else 1.0 if x == np.inf else 1 - q_mp(x) for x in t])
        pts = (phi[:-1] - phi[1:]) / (cdf[1:] - cdf[:-1])
    t = np.concatenate([[-np.inf], 0.5 * (pts[1:] + pts[:-1]), [np.inf]])
    phi = np.array([0.0 if np.isinf(x) else math.exp(-x * x / 2) / math.sqrt(2 * math.pi) for x in t])
    cdf = np.array([0.0 if x == -np.inf else 1.0 if x == np.inf else 1 - q_mp(x) for x in t])
    mass = cdf[1:] - cdf[:-1]
    return 1.0 - float(np.sum(mass * pts * pts)), pts
