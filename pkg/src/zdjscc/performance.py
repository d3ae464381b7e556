"""Analytical performance: distortion and outage by quadrature, closed-form
baselines, and reference bounds."""
import math
from dataclasses import dataclass

import numpy as np

from .math_kernel import DEFAULT_TOL, gaussian_expectation, golden_section_min, q_function


class DegeneratePowerError(ValueError):
    pass


@dataclass(frozen=True)
class EvalResult:
    value: float
    power: float
    snr: float
    criterion: str


def mse_eval(mapping, table, link, tol=DEFAULT_TOL):
    """Mean squared error E[(V - V_hat)^2] for any mapping/table pair."""
    vh = np.asarray(table.v_hat, dtype=float)

    def g(v):
        P = link.probs(mapping(v))
        return np.sum(P * (v[:, None] - vh[None, :]) ** 2, axis=1)

    d = float(gaussian_expectation(g, link.source.sigma_v, tol, points=mapping.kinks))
    p = float(mapping.mean_power)
    return EvalResult(d, p, link.snr(p), "mse")


def mse_orthogonal(mapping, table, link, tol=DEFAULT_TOL):
    """sigma_v^2 - sum_j Pr(j) v_hat_j^2; equals the MSE when v_hat are conditional means."""
    vh = np.asarray(table.v_hat, dtype=float)
    pj = gaussian_expectation(lambda v: link.probs(mapping(v)), link.source.sigma_v, tol,
                              points=mapping.kinks)
    return link.source.sigma_v**2 - float(np.dot(pj, vh * vh))


def covered(v, v_hat, D):
    """Boolean (n, J) matrix: v strictly inside the sqrt(D)-window of v_hat_j."""
    return np.abs(np.asarray(v)[:, None] - np.asarray(v_hat)[None, :]) < math.sqrt(D)


def dop_eval(mapping, table, link, D, tol=DEFAULT_TOL):
    """Distortion outage probability Pr((V - V_hat)^2 >= D)."""
    if not D > 0:
        raise ValueError("D must be positive")
    vh = np.asarray(table.v_hat, dtype=float)
    r = math.sqrt(D)
    pts = np.concatenate([np.asarray(mapping.kinks, dtype=float), vh - r, vh + r])

    def g(v):
        P = link.probs(mapping(v))
        return np.sum(P * covered(v, vh, D), axis=1)

    hit = float(gaussian_expectation(g, link.source.sigma_v, tol, points=pts))
    p = float(mapping.mean_power)
    return EvalResult(min(max(1.0 - hit, 0.0), 1.0), p, link.snr(p), "dop")


def source_outage_prob(points, D, sigma_v=1.0):
    """Pr(V farther than sqrt(D) from every point); the noiseless-channel outage."""
    r = math.sqrt(D)
    iv = sorted((p - r, p + r) for p in np.atleast_1d(points))
    merged = []
    for lo, hi in iv:
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    inside = sum(q_function(lo / sigma_v) - q_function(hi / sigma_v) for lo, hi in merged)
    return 1.0 - inside


def _ratio(gamma):
    return 1.0 if math.isinf(gamma) else gamma / (gamma + 1.0)


def mse_linear_closed(gamma, sigma_v=1.0):
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    return sigma_v**2 * (1.0 - (2.0 / math.pi) * _ratio(gamma))


def mse_bpsk_closed(gamma, sigma_v=1.0):
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    k = 1.0 if math.isinf(gamma) else 1.0 - 2.0 * q_function(math.sqrt(gamma))
    return sigma_v**2 * (1.0 - (2.0 / math.pi) * k * k)


def pam_cell_probs(thresholds, sigma_v=1.0):
    edges = np.concatenate([[-np.inf], np.asarray(thresholds, dtype=float), [np.inf]])
    z = edges / sigma_v
    return np.array([_upper_tail(a) - _upper_tail(b) for a, b in zip(z[:-1], z[1:])])


def _upper_tail(z):
    if np.isinf(z):
        return 1.0 if z < 0 else 0.0
    return q_function(z)


def pam_levels(M):
    return np.array([2 * l - 1 - M for l in range(1, M + 1)], dtype=float)


def mse_pam_thresholds(thresholds, gamma, sigma_v=1.0, tol=DEFAULT_TOL):
    """MSE of symmetric M-ary digital transmission through the one-bit ADC.

    thresholds are the M-1 source thresholds; symbol l is sent as A(2l-1-M)
    with A normalizing the average power to gamma (unit noise).
    """
    thr = np.asarray(thresholds, dtype=float)
    M = thr.size + 1
    k = pam_levels(M)
    probs = pam_cell_probs(thr, sigma_v)
    den = float(np.sum(k * k * probs))
    if den <= 1e-300:
        raise DegeneratePowerError("all probability mass on the zero symbol")
    s = k * math.sqrt(gamma / den)
    edges = np.concatenate([[-np.inf], thr, [np.inf]])
    # partial first moments of each source cell, by quadrature
    moments = gaussian_expectation(
        lambda v: v[:, None] * ((v[:, None] >= edges[None, :-1]) & (v[:, None] < edges[None, 1:])),
        sigma_v, tol, points=thr)
    corr = 2.0 * float(np.sum(q_function(s) * moments))
    return sigma_v**2 - corr * corr


def mse_pam3(c, gamma, sigma_v=1.0):
    """Three-level scheme with source thresholds -c, +c and middle symbol 0."""
    qc = q_function(c / sigma_v)
    if qc <= 0:
        return sigma_v**2
    kappa = 1.0 - 2.0 * q_function(math.sqrt(gamma / (2.0 * qc)))
    return sigma_v**2 * (1.0 - (2.0 / math.pi) * math.exp(-(c / sigma_v) ** 2) * kappa * kappa)


def pam3_best_threshold(gamma, sigma_v=1.0, tol=DEFAULT_TOL):
    c, d = golden_section_min(lambda c: mse_pam3(c, gamma, sigma_v), 0.0, 6.0 * sigma_v, tol, seeds=8)
    return c, d


def mse_pam_closed(M, thresholds=None, gamma=1.0, sigma_v=1.0, tol=DEFAULT_TOL):
    """M-ary baseline; for M = 3 without thresholds the threshold is line-searched."""
    if M == 3 and thresholds is None:
        return pam3_best_threshold(gamma, sigma_v, tol)[1]
    if thresholds is None:
        if M == 2:
            thresholds = [0.0]
        else:
            raise ValueError("thresholds required for M > 3")
    if len(thresholds) != M - 1:
        raise ValueError("need M-1 thresholds")
    return mse_pam_thresholds(thresholds, gamma, sigma_v, tol)


def dop_onebit_closed(a, u, D, sigma_v, sigma_w, lam):
    """Outage Lagrangian of the three-level one-bit construction with offset a."""
    r = math.sqrt(D)
    q_in = q_function(a / sigma_v)
    q_out = q_function((2.0 * r - a) / sigma_v)
    return 2.0 * q_out + 2.0 * (q_function(u / sigma_w) + lam * u * u) * (q_in - q_out)


def shannon_opta(gamma, sigma_v=1.0):
    return sigma_v**2 / (1.0 + gamma)


def low_snr_slope(curve, gamma0=1e-4):
    """Central difference of curve(gamma) at gamma0 with half-width gamma0."""
    return (curve(2.0 * gamma0) - curve(0.0)) / (2.0 * gamma0)
