"""Numerically optimized encoders on a source grid.

The encoder is a vector of channel inputs at the grid nodes. With the decoder
table held fixed the Lagrangian separates into independent per-node terms, so
the descent below keeps one step size per node and backtracks each node on
its own; every accepted move lowers that node's term, hence the total.

The optimizer integrates with the nodal rule sum_i c_i F(f_i, v_i), where
c_i is the Gaussian mass of the hat function at node i. Its gradient with
respect to f_i is then exactly c_i times the pointwise gradient computed
below, and table updates under MSE use the same rule so every round is
monotone.
"""
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .decoder import DecoderTable, EMPTY_CELL, dop_table
from .encoder_design import (CalibrationError, GridMapping, PowerSaturationError, calibrate_lambda, default_grid,
                             linear_encoder, mapping_power)
from .math_kernel import DEFAULT_TOL, NODES, W15, normal_pdf
from .performance import covered

# Weight of the coverage sum in the outage gradient. A weight of 1 is what the
# outage Lagrangian differentiates to (checked against finite differences in
# the tests) and what the stationarity form f = G / (2 lambda) implies.
DOP_G_WEIGHT = 1.0


@dataclass
class GradientField:
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError("non-finite gradient")

    @property
    def sup(self):
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


@dataclass
class DescentConfig:
    step_mu: float = 0.0  # 0 means 0.1 * (smallest noise variance)
    max_iters: int = 2000
    grad_tol: float = 1e-6
    backtracking: float = 0.5
    max_backtracks: int = 60
    growth: float = 2.0
    # accept a step when it removes at least this fraction of mu * grad^2; plain
    # decrease lets the grown step sit at the edge of stability and zig-zag
    sufficient: float = 0.25
    max_rounds: int = 50
    round_tol: float = 1e-8

    def __post_init__(self):
        if self.step_mu < 0:
            raise ValueError("step_mu must be positive (or 0 for the default)")
        if not 0 < self.backtracking < 1:
            raise ValueError("backtracking factor must lie in (0, 1)")
        if not 0 <= self.sufficient < 1:
            raise ValueError("sufficient-decrease fraction must lie in [0, 1)")

    def mu0(self, link):
        return self.step_mu if self.step_mu > 0 else 0.1 * min(link.channel.noise_sigmas) ** 2


# ---------------------------------------------------------------- gradients

def _mse_part(v, vh, dp):
    return np.sum(vh[None, :] * (2.0 * v[:, None] - vh[None, :]) * dp, axis=1)


def _dop_part(v, vh, dp, D):
    cov = covered(v, vh, D)
    g = np.sum(dp * cov, axis=1)
    n = cov.sum(axis=1)
    g[(n == 0) | (n == vh.size)] = 0.0
    return DOP_G_WEIGHT * g


def grad_mse_klevel_values(v, f, v_hat, edges, sigma_w, lam):
    s = float(sigma_w)
    e = np.exp(-0.5 * ((np.asarray(edges)[None, :] - f[:, None]) / s) ** 2)
    xi = e[:, :-1] - e[:, 1:]
    return 2.0 * lam * f - _mse_part(v, v_hat, xi) / (math.sqrt(2.0 * math.pi) * s)


def theta(f, sigmas, signs):
    """Derivative of each N-branch outcome probability with respect to f."""
    from . import kernels

    return kernels.onebit_dprobs(f, np.asarray(sigmas, dtype=float), signs)


def grad_mse_multibit_values(v, f, v_hat, sigmas, signs, lam):
    return 2.0 * lam * f - _mse_part(v, v_hat, theta(f, sigmas, signs))


def grad_dop_klevel_values(v, f, v_hat, edges, sigma_w, lam, D):
    s = float(sigma_w)
    e = np.exp(-0.5 * ((np.asarray(edges)[None, :] - f[:, None]) / s) ** 2)
    xi = (e[:, :-1] - e[:, 1:]) / (math.sqrt(2.0 * math.pi) * s)
    return 2.0 * lam * f - _dop_part(v, v_hat, xi, D)


def grad_dop_multibit_values(v, f, v_hat, sigmas, signs, lam, D):
    return 2.0 * lam * f - _dop_part(v, v_hat, theta(f, sigmas, signs), D)


def _signs(N):
    from .model import outcome_bits

    return np.array([[1.0 if b else -1.0 for b in outcome_bits(j, N).bits] for j in range(1, 2**N + 1)])


def grad_mse_klevel(mapping, table, quantizer, sigma_w, lam):
    return GradientField(grad_mse_klevel_values(mapping.v_grid, mapping.f_values, table.v_hat,
                                                quantizer.edges, sigma_w, lam))


def grad_mse_multibit(mapping, table, channel, lam):
    return GradientField(grad_mse_multibit_values(mapping.v_grid, mapping.f_values, table.v_hat,
                                                  channel.noise_sigmas, _signs(channel.n_branches), lam))


def grad_dop_klevel(mapping, table, quantizer, sigma_w, lam, D):
    return GradientField(grad_dop_klevel_values(mapping.v_grid, mapping.f_values, table.v_hat,
                                                quantizer.edges, sigma_w, lam, D))


def grad_dop_multibit(mapping, table, channel, lam, D):
    return GradientField(grad_dop_multibit_values(mapping.v_grid, mapping.f_values, table.v_hat,
                                                  channel.noise_sigmas, _signs(channel.n_branches), lam, D))


# ---------------------------------------------------------------- nodal Lagrangian

def hat_weights(v_grid, sigma_v):
    """Gaussian mass of each hat basis function; the tails go to the end nodes."""
    v = np.asarray(v_grid, dtype=float)
    a, b = v[:-1], v[1:]
    half = 0.5 * (b - a)
    x = 0.5 * (a + b)[:, None] + half[:, None] * NODES[None, :]
    p = normal_pdf(x, sigma_v) * (W15[None, :] * half[:, None])
    rise = np.sum(p * (x - a[:, None]), axis=1) / (b - a)
    fall = np.sum(p * (b[:, None] - x), axis=1) / (b - a)
    w = np.zeros(v.size)
    w[1:] += rise
    w[:-1] += fall
    from .math_kernel import q_function

    w[0] += q_function(-v[0] / sigma_v)
    w[-1] += q_function(v[-1] / sigma_v)
    return w


class GridLagrangian:
    """Per-node Lagrangian terms F(f_i, v_i) for a fixed decoder table."""

    def __init__(self, link, v_grid, weights, v_hat, lam, criterion="mse", D=None):
        self.link = link
        self.v = np.asarray(v_grid, dtype=float)
        self.c = np.asarray(weights, dtype=float)
        self.v_hat = np.asarray(v_hat, dtype=float)
        self.lam = float(lam)
        self.criterion = criterion
        self.D = D
        if criterion == "mse":
            self._cost = (self.v[:, None] - self.v_hat[None, :]) ** 2
        elif criterion == "dop":
            self._cost = ~covered(self.v, self.v_hat, D)
        else:
            raise ValueError("criterion must be 'mse' or 'dop'")

    def density(self, f, idx=None):
        cost = self._cost if idx is None else self._cost[idx]
        P = self.link.probs(f)
        return np.sum(P * cost, axis=1) + self.lam * f * f

    def value(self, f):
        return float(np.dot(self.c, self.density(f)))

    def gradient(self, f, idx=None):
        v = self.v if idx is None else self.v[idx]
        link = self.link
        if link.multibit:
            sig, signs = link.channel.noise_sigmas, link.signs()
            if self.criterion == "mse":
                return grad_mse_multibit_values(v, f, self.v_hat, sig, signs, self.lam)
            return grad_dop_multibit_values(v, f, self.v_hat, sig, signs, self.lam, self.D)
        edges, s = link.quantizer.edges, link.sigma_w
        if self.criterion == "mse":
            return grad_mse_klevel_values(v, f, self.v_hat, edges, s, self.lam)
        return grad_dop_klevel_values(v, f, self.v_hat, edges, s, self.lam, self.D)


def nodal_mmse_table(link, v_grid, weights, f):
    P = link.probs(f) * weights[:, None]
    den = P.sum(axis=0)
    num = (P * np.asarray(v_grid)[:, None]).sum(axis=0)
    safe = den >= EMPTY_CELL
    return np.where(safe, num / np.where(safe, den, 1.0), 0.0)


# ---------------------------------------------------------------- descent

@dataclass
class DescentResult:
    f: np.ndarray
    trace: list  # (iteration, Lagrangian, sup |grad|)
    converged: bool
    stalled: int = 0


def descend(f0, lagr, cfg=DescentConfig(), mu0=None):
    """First-order descent f <- f - mu * grad with per-node Armijo backtracking."""
    f = np.array(f0.f_values if isinstance(f0, GridMapping) else f0, dtype=float)
    mu0 = cfg.mu0(lagr.link) if mu0 is None else mu0
    mu = np.full(f.size, mu0)
    mu_max = mu0 * 1e6
    F = lagr.density(f)
    g = lagr.gradient(f)
    trace = []
    stalled = np.zeros(f.size, dtype=bool)
    converged = False
    for it in range(cfg.max_iters + 1):
        gmax = float(np.max(np.abs(g)))
        trace.append((it, float(np.dot(lagr.c, F)), gmax))
        if gmax < cfg.grad_tol:
            converged = True
            break
        if it == cfg.max_iters:
            break
        act = np.flatnonzero(np.abs(g) >= cfg.grad_tol)
        cand = f[act] - mu[act] * g[act]
        Fc = lagr.density(cand, act)
        g2 = cfg.sufficient * g[act] ** 2
        ok = Fc <= F[act] - mu[act] * g2
        todo = np.flatnonzero(~ok)
        for _ in range(cfg.max_backtracks):
            if todo.size == 0:
                break
            sel = act[todo]
            mu[sel] *= cfg.backtracking
            cand[todo] = f[sel] - mu[sel] * g[sel]
            Fc[todo] = lagr.density(cand[todo], sel)
            good = Fc[todo] <= F[sel] - mu[sel] * g2[todo]
            ok[todo[good]] = True
            todo = todo[~good]
        moved = act[ok]
        f[moved] = cand[ok]
        F[moved] = Fc[ok]
        mu[moved] = np.minimum(mu[moved] * cfg.growth, mu_max)
        stuck = act[~ok]
        stalled[stuck] = True
        mu[stuck] = mu0
        if moved.size == 0:
            break
        g[moved] = lagr.gradient(f[moved], moved)
    return DescentResult(f, trace, converged, int(stalled.sum()))


# ---------------------------------------------------------------- alternation

@dataclass
class AlternateResult:
    mapping: GridMapping
    table: DecoderTable
    lagrangian: float
    converged: bool
    rounds: list = field(default_factory=list)  # Lagrangian after each round
    trace: list = field(default_factory=list)   # concatenated descent traces


def _table_for(link, v_grid, weights, f, criterion, D, tol):
    if criterion == "mse":
        return nodal_mmse_table(link, v_grid, weights, f)
    m = GridMapping(v_grid, f)
    return dop_table(m, link, D, tol).v_hat


def alternate(mapping0, link, lam, criterion="mse", D=None, cfg=DescentConfig(), v_hat0=None,
              tol=DEFAULT_TOL):
    """Alternate encoder descent (table fixed) and table rebuilds (encoder fixed)."""
    v = np.asarray(mapping0.v_grid, dtype=float)
    w = hat_weights(v, link.source.sigma_v)
    f = np.array(mapping0.f_values, dtype=float)
    vh = np.asarray(v_hat0, dtype=float) if v_hat0 is not None else _table_for(link, v, w, f, criterion, D, tol)
    best = None
    rounds, trace = [], []
    prev = math.inf
    converged = False
    for r in range(cfg.max_rounds):
        lagr = GridLagrangian(link, v, w, vh, lam, criterion, D)
        res = descend(f, lagr, cfg)
        f = res.f
        trace.extend((len(trace) + i, L, gm) for i, L, gm in res.trace)
        vh_new = _table_for(link, v, w, f, criterion, D, tol)
        L = GridLagrangian(link, v, w, vh_new, lam, criterion, D).value(f)
        if criterion == "dop":
            # the outage table comes from the continuous objective; keep whichever
            # table scores better on the nodal Lagrangian
            L_old = lagr.value(f)
            if L_old < L:
                vh_new, L = vh, L_old
        rounds.append(L)
        if best is None or L < best[0]:
            best = (L, f.copy(), vh_new.copy())
        vh = vh_new
        if abs(prev - L) < cfg.round_tol:
            converged = True
            break
        prev = L
    L, fb, vb = best
    m = GridMapping(v, fb, info={"scheme": "noe", "lambda": lam, "criterion": criterion})
    m.with_power(link.source.sigma_v, tol)
    tab = DecoderTable(vb, criterion, D=D if criterion == "dop" else None)
    return AlternateResult(m, tab, L, converged, rounds, trace)


def initial_spread(link, scale):
    """Reconstruction points proportional to the conditional means of a linear map."""
    lin = linear_encoder(1.0, link.source, default_grid(link.source, 401))
    w = hat_weights(lin.v_grid, link.source.sigma_v)
    vh = nodal_mmse_table(link, lin.v_grid, w, lin.f_values)
    top = np.max(np.abs(vh))
    return vh * (scale / top) if top > 0 else vh


@dataclass
class NcrPoint:
    lam: float
    mapping: GridMapping
    table: DecoderTable
    lagrangian: float
    converged: bool


def default_schedule(n=20, hi=1e3, lo=1e-3):
    return np.geomspace(hi, lo, n)


def spread_scale(link, criterion, D):
    """Half-width of the reconstruction set used to seed a table.

    Outage designs are seeded at the high-SNR spacing of 2 sqrt(D) between
    effective points (N+1 of them for N one-bit branches, K for one K-level
    ADC); MSE designs at the source standard deviation.
    """
    if criterion != "dop":
        return link.source.sigma_v
    n_eff = link.channel.n_branches + 1 if link.multibit else link.quantizer.K
    return math.sqrt(D) * (n_eff - 1)


def ncr_run(schedule, link, criterion="mse", D=None, cfg=DescentConfig(), v_grid=None, tol=DEFAULT_TOL,
            restart=True):
    """Continuation over a descending lambda schedule with warm starts.

    With restart=True every lambda is also solved from the previous mapping
    paired with a freshly spread table, and the lower Lagrangian is kept;
    this lets outage designs leave the collapsed all-points-at-zero state.
    """
    sched = np.asarray(schedule, dtype=float)
    if np.any(np.diff(sched) >= 0):
        raise ValueError("lambda schedule must be strictly descending")
    grid = default_grid(link.source) if v_grid is None else np.asarray(v_grid, dtype=float)
    cur = GridMapping(grid, np.zeros(grid.size))
    # the all-zero encoder and all-zero table are a fixed point of the
    # alternation, so the first table is seeded with small distinct points
    scale = 0.1 * (math.sqrt(D) if criterion == "dop" else link.source.sigma_v)
    vh = initial_spread(link, scale)
    wide = initial_spread(link, spread_scale(link, criterion, D))
    out = []
    for lam in sched:
        res = alternate(cur, link, lam, criterion, D, cfg, v_hat0=vh, tol=tol)
        if restart:
            alt = alternate(cur, link, lam, criterion, D, cfg, v_hat0=wide, tol=tol)
            if alt.lagrangian < res.lagrangian:
                res = alt
        out.append(NcrPoint(float(lam), res.mapping, res.table, res.lagrangian, res.converged))
        cur, vh = res.mapping, res.table.v_hat
    return out


# ---------------------------------------------------------------- power-matched designs

def noe_at_power(link, power, criterion="mse", D=None, cfg=DescentConfig(), v_grid=None,
                 lam0=None, tol=DEFAULT_TOL, rtol=1e-4, start=None):
    """NOE design whose mean power matches ``power``; lambda found by bisection.

    Each solve warm-starts from the previous one. MSE starts from the linear
    encoder at the target power.

    At high SNR the optimized power can level off below the target (extra
    amplitude buys nothing once the channel is nearly noiseless); the design
    with the largest power is then returned with info["power_limited"] set.
    It still satisfies the power constraint E[f^2] <= P.
    """
    grid = default_grid(link.source) if v_grid is None else np.asarray(v_grid, dtype=float)
    if start is not None:
        init = (start.mapping, start.table.v_hat) if hasattr(start, "table") else (start, None)
    elif criterion == "mse":
        lin = linear_encoder(power, link.source, grid)
        init = (GridMapping(grid, lin.f_values.copy()), None)
    else:
        init = (GridMapping(grid, np.zeros(grid.size)), initial_spread(link, 0.1 * math.sqrt(D)))
    solved = {}
    wide = initial_spread(link, spread_scale(link, criterion, D)) if criterion == "dop" else None

    def designer(lam):
        # warm start from the closest solved point on the higher-power side
        # (smaller lambda); a collapsed zero encoder would never recover
        below = [k for k in solved if k < lam]
        m0, vh0 = (solved[max(below)].mapping, solved[max(below)].table.v_hat) if below else init
        res = alternate(m0, link, lam, criterion, D, cfg, v_hat0=vh0, tol=tol)
        if criterion == "dop":
            alt = alternate(m0, link, lam, criterion, D, cfg, v_hat0=wide, tol=tol)
            if alt.lagrangian < res.lagrangian:
                res = alt
        solved[lam] = res
        return res.mapping

    if lam0 is None:
        # low-SNR slope of the linear encoder as a first guess
        g = link.snr(power)
        inv = sum(1.0 / (s * s) for s in link.channel.noise_sigmas)
        lam0 = (2.0 / math.pi) * inv / (1.0 + g) ** 2 if criterion == "mse" else 0.1
    try:
        lam, m = calibrate_lambda(designer, power, tol, lam0=lam0, rtol=rtol, strict=False)
    except PowerSaturationError as exc:
        lam, m = exc.best
        m.info["power_limited"] = True
    except CalibrationError:
        # power jumps across the target (the design switched between local
        # optima); keep the strongest design that still meets the constraint
        feasible = [k for k in solved if solved[k].mapping.mean_power <= power * (1.0 + 1e-3)]
        if not feasible:
            raise
        lam = max(feasible, key=lambda k: solved[k].mapping.mean_power)
        solved[lam].mapping.info["power_limited"] = True
    return solved[lam]


@dataclass
class StepSearchResult:
    d: float
    design: AlternateResult
    value: float
    scanned: list  # (d, value) for every step size tried, ascending d


def design_value(result, link, criterion="mse", D=None, tol=DEFAULT_TOL):
    """Distortion (MSE) or outage probability of a design with its optimal table."""
    from .decoder import mmse_table
    from .performance import dop_eval, mse_eval

    m = result.mapping
    if criterion == "mse":
        return mse_eval(m, mmse_table(m, link, tol), link, tol).value
    return dop_eval(m, dop_table(m, link, D, tol), link, D, tol).value


def noe_step_search(K, power, source=None, sigma_w=1.0, criterion="mse", D=None, d_range=None,
                    n_scan=6, log_tol=0.05, cfg=DescentConfig(), v_grid=None, tol=DEFAULT_TOL):
    """NOE design for a K-level uniform ADC with the step d line-searched.

    A coarse geometric scan over d_range is refined by golden section in
    log d around the best scan point. Every d gets a power-matched design.
    """
    from .math_kernel import Tolerances, _golden
    from .model import ChannelSpec, Link, SourceSpec, uniform_midtread_quantizer

    source = source or SourceSpec()
    if d_range is None:
        d_range = (0.25 * sigma_w, sigma_w + math.sqrt(power))
    lo, hi = (math.log(x) for x in d_range)
    if not hi > lo:
        raise ValueError("d_range must be ascending")
    seen = {}

    def run(x):
        if x not in seen:
            d = math.exp(x)
            link = Link(source, ChannelSpec((sigma_w,)), uniform_midtread_quantizer(K, d))
            res = noe_at_power(link, power, criterion, D, cfg, v_grid, tol=tol)
            seen[x] = (res, design_value(res, link, criterion, D, tol))
        return seen[x][1]

    xs = np.linspace(lo, hi, n_scan)
    vals = [run(x) for x in xs]
    k = int(np.argmin(vals))
    a, b = xs[max(k - 1, 0)], xs[min(k + 1, n_scan - 1)]
    if b - a > log_tol:
        _golden(run, float(a), float(b), log_tol)
    xbest = min(seen, key=lambda x: (seen[x][1], x))
    scanned = sorted((math.exp(x), v[1]) for x, v in seen.items())
    return StepSearchResult(math.exp(xbest), seen[xbest][0], seen[xbest][1], scanned)


def write_trace_csv(path, trace):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "lagrangian", "max_abs_grad"])
        for it, L, g in trace:
            w.writerow([it, repr(float(L)), repr(float(g))])
