"""Decoder tables: conditional means (MSE) and window maximizers (outage)."""
import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .math_kernel import DEFAULT_TOL, fixed_rule, gaussian_expectation, integrate, normal_pdf, _golden
from .model import outcome_bits

EMPTY_CELL = 1e-14


@dataclass
class DecoderTable:
    v_hat: np.ndarray
    criterion: str = "mse"
    D: Optional[float] = None
    cell_probs: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.v_hat = np.asarray(self.v_hat, dtype=float)
        if not np.all(np.isfinite(self.v_hat)):
            raise ValueError("decoder table entries must be finite")
        if self.criterion not in ("mse", "dop"):
            raise ValueError("criterion must be 'mse' or 'dop'")
        if self.criterion == "dop" and not (self.D and self.D > 0):
            raise ValueError("an outage table needs D > 0")

    def __len__(self):
        return self.v_hat.size

    def decode(self, j):
        return self.v_hat[np.asarray(j) - 1]

    def to_csv(self, path, link):
        labels = link.outcome_labels()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["j", "symbol", "v_hat"])
            for j, (lab, x) in enumerate(zip(labels, self.v_hat), start=1):
                w.writerow([j, lab, repr(float(x))])


def transition_prob(v, j, mapping, link):
    """Pr(outcome j | V = v) for the given mapping and front end."""
    if not 1 <= j <= link.n_outcomes:
        raise ValueError("outcome index out of range")
    return link.probs(mapping(np.atleast_1d(v)))[:, j - 1].reshape(np.shape(v))


def transition_matrix(v, mapping, link):
    return link.probs(mapping(np.atleast_1d(np.asarray(v, dtype=float))))


def mmse_table(mapping, link, tol=DEFAULT_TOL):
    """Conditional means E[V | outcome j], zero for (numerically) empty outcomes."""
    J = link.n_outcomes

    def g(v):
        P = link.probs(mapping(v))
        return np.concatenate([P * v[:, None], P], axis=1)

    I = gaussian_expectation(g, link.source.sigma_v, tol, points=mapping.kinks)
    num, den = I[:J], I[J:]
    safe = den >= EMPTY_CELL
    v_hat = np.where(safe, num / np.where(safe, den, 1.0), 0.0)
    return DecoderTable(v_hat, "mse", cell_probs=den)


def dop_table(mapping, link, D, tol=DEFAULT_TOL, span=4.0, per_sigma=400):
    """Per outcome, the centre t maximizing Pr(|V - t| < sqrt(D), outcome j).

    Dense scan over t in [-span sigma, span sigma] with step sigma/per_sigma,
    then golden-section refinement around the best scan point. Ties go to the
    smallest |t|.
    """
    if not D > 0:
        raise ValueError("D must be positive")
    sig = link.source.sigma_v
    r = math.sqrt(D)
    J = link.n_outcomes
    t = np.linspace(-span * sig, span * sig, int(2 * span * per_sigma) + 1)
    kinks = np.asarray(mapping.kinks, dtype=float)
    lo_all, hi_all = t[0] - r, t[-1] + r
    kinks = kinks[(kinks > lo_all) & (kinks < hi_all)]
    edges = np.unique(np.concatenate([t - r, t + r, kinks]))

    def dens(v):
        return link.probs(mapping(v)) * normal_pdf(v, sig)[:, None]

    panels = fixed_rule(dens, edges)
    cum = np.vstack([np.zeros((1, J)), np.cumsum(panels, axis=0)])
    i_lo = np.searchsorted(edges, t - r)
    i_hi = np.searchsorted(edges, t + r)
    win = cum[i_hi] - cum[i_lo]

    totals = gaussian_expectation(lambda v: link.probs(mapping(v)), sig, tol, points=mapping.kinks)
    v_hat = np.zeros(J)
    for j in range(J):
        if totals[j] < EMPTY_CELL:
            continue
        w = win[:, j]
        wmax = w.max()
        near = np.flatnonzero(w >= wmax - 1e-13 * max(wmax, 1e-300))
        k = near[np.argmin(np.abs(t[near]))]

        def neg_window(c, j=j):
            lo, hi = c - r, c + r
            pts = kinks[(kinks > lo) & (kinks < hi)]
            return -float(integrate(lambda v: dens(v)[:, j], lo, hi, tol, points=pts, min_panels=4))

        a = t[max(k - 1, 0)]
        b = t[min(k + 1, t.size - 1)]
        x, fx = _golden(neg_window, a, b, tol.search_abs)
        # keep the scan point unless refinement strictly improves on it
        v_hat[j] = x if -fx > -neg_window(t[k]) + 1e-15 else t[k]
    return DecoderTable(v_hat, "dop", D=D, cell_probs=totals)


@dataclass
class CollapseReport:
    ok: bool
    values: np.ndarray
    max_spread: float
    n_distinct: int

    def raise_if_violated(self):
        if not self.ok:
            raise AssertionError(f"equal-noise symmetry violated (spread {self.max_spread:.3g})")


def collapse_equal_noise(table, N, atol=1e-8):
    """Group v_hat by the number of ones in the outcome bits."""
    v = np.asarray(table.v_hat, dtype=float)
    if v.size != 2**N:
        raise ValueError("table length does not match 2^N")
    groups = {}
    for j in range(1, 2**N + 1):
        groups.setdefault(sum(outcome_bits(j, N).bits), []).append(v[j - 1])
    spread = max(max(g) - min(g) for g in groups.values())
    values = np.array([np.mean(groups[k]) for k in sorted(groups)])
    srt = np.sort(v)
    n_distinct = 1 + int(np.sum(np.diff(srt) > atol))
    return CollapseReport(ok=spread <= atol, values=values, max_spread=float(spread), n_distinct=n_distinct)
