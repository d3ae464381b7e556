"""Encoder mappings and their constructions."""
import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels
from .decoder import DecoderTable
from .math_kernel import DEFAULT_TOL, NumericalError, gaussian_expectation, golden_section_min, q_function, solve_exp_growth_root
from .performance import DegeneratePowerError, dop_onebit_closed, pam_cell_probs, pam_levels

GRID_POINTS = 2001
GRID_HALF_WIDTH = 6.0


class CalibrationError(NumericalError):
    pass


class PowerSaturationError(CalibrationError):
    """Lowering lambda stopped raising the power before the target was reached.

    ``best`` holds (lambda, design) for the highest power found.
    """


def default_grid(source, n=GRID_POINTS, half_width=GRID_HALF_WIDTH):
    return np.linspace(-half_width * source.sigma_v, half_width * source.sigma_v, n)


def mapping_power(mapping, sigma_v, tol=DEFAULT_TOL):
    return float(gaussian_expectation(lambda v: mapping(v) ** 2, sigma_v, tol, points=mapping.kinks))


@dataclass
class GridMapping:
    """Encoder sampled on a source grid.

    Off-grid values use linear interpolation, saturating outside the grid.
    When ``exact`` is set (closed-form designs) it is used for evaluation
    instead, and ``exact_kinks`` lists where it is not smooth.
    """
    v_grid: np.ndarray
    f_values: np.ndarray
    mean_power: float = float("nan")
    exact: Optional[Callable] = field(default=None, repr=False, compare=False)
    exact_kinks: tuple = ()
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.v_grid = np.asarray(self.v_grid, dtype=float)
        self.f_values = np.asarray(self.f_values, dtype=float)
        if self.v_grid.shape != self.f_values.shape or self.v_grid.ndim != 1:
            raise ValueError("grid and values must be 1-D of equal length")
        if np.any(np.diff(self.v_grid) <= 0):
            raise ValueError("grid must be strictly ascending")

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        if self.exact is not None:
            return self.exact(v)
        return np.interp(v, self.v_grid, self.f_values)

    @property
    def kinks(self):
        if self.exact is not None:
            return np.asarray(self.exact_kinks, dtype=float)
        return self.v_grid

    def detached(self):
        """Same samples, evaluated purely by interpolation."""
        return GridMapping(self.v_grid, self.f_values.copy(), self.mean_power, info=dict(self.info))

    def with_power(self, sigma_v, tol=DEFAULT_TOL):
        self.mean_power = mapping_power(self, sigma_v, tol)
        return self

    def to_csv(self, path):
        write_mapping_csv(path, self.v_grid, self.f_values)


@dataclass
class PiecewiseConstantMapping:
    """Step mapping: values[k] on [breakpoints[k-1], breakpoints[k])."""
    breakpoints: np.ndarray
    values: np.ndarray
    mean_power: float = float("nan")
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.breakpoints = np.asarray(self.breakpoints, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.size != self.breakpoints.size + 1:
            raise ValueError("need one more value than breakpoints")
        if np.any(np.diff(self.breakpoints) < 0):
            raise ValueError("breakpoints must be ascending")

    def __call__(self, v):
        idx = np.searchsorted(self.breakpoints, np.asarray(v, dtype=float), side="right")
        return self.values[idx]

    @property
    def kinks(self):
        return self.breakpoints

    def exact_power(self, sigma_v):
        probs = pam_cell_probs_loose(self.breakpoints, sigma_v)
        return float(np.sum(self.values**2 * probs))

    def sample(self, v_grid):
        return GridMapping(v_grid, self(v_grid), self.mean_power, info=dict(self.info))

    def to_csv(self, path, v_grid):
        write_mapping_csv(path, v_grid, self(v_grid))


def pam_cell_probs_loose(breakpoints, sigma_v):
    # like pam_cell_probs but tolerates repeated breakpoints (empty regions)
    z = np.concatenate([[-np.inf], np.asarray(breakpoints, dtype=float), [np.inf]]) / sigma_v
    tail = np.array([1.0 if np.isneginf(x) else 0.0 if np.isposinf(x) else q_function(x) for x in z])
    return tail[:-1] - tail[1:]


def write_mapping_csv(path, v, f):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["v", "f"])
        for a, b in zip(v, f):
            w.writerow([repr(float(a)), repr(float(b))])


# ---------------------------------------------------------------- one-bit MSE optimum

def prop1_values(v, lam, sigma_w):
    """Odd root of f exp(f^2 / 2 sigma_w^2) = v / (sqrt(2 pi) sigma_w lam)."""
    v = np.asarray(v, dtype=float)
    with np.errstate(divide="ignore"):
        log_c = np.log(np.abs(v)) - math.log(math.sqrt(2.0 * math.pi) * sigma_w * lam)
    return np.sign(v) * kernels.exp_growth_root(log_c, sigma_w)


def prop1_encoder(lam, source, sigma_w, v_grid=None, tol=DEFAULT_TOL):
    if not lam > 0 or not sigma_w > 0:
        raise ValueError("lambda and sigma_w must be positive")
    grid = default_grid(source) if v_grid is None else np.asarray(v_grid, dtype=float)

    def exact(v):
        return prop1_values(v, lam, sigma_w)

    m = GridMapping(grid, exact(grid), exact=exact, exact_kinks=(0.0,),
                    info={"scheme": "prop1", "lambda": lam})
    return m.with_power(source.sigma_v, tol)


def prop1_mse_multiplier(lam, v_hat_pos):
    """Multiplier of the plain MSE Lagrangian at which the one-bit optimum is stationary.

    The implicit equation is the stationarity condition of -v_hat + lam*P;
    D = sigma^2 - v_hat^2 rescales the multiplier by 2 v_hat.
    """
    return 2.0 * v_hat_pos * lam


def calibrate_lambda(designer, target_power, tol=DEFAULT_TOL, lam0=1.0, rtol=1e-9,
                     max_doublings=60, max_iter=200, strict=True, log_designer=None):
    """Find lambda whose design has mean power target_power (bisection on log lambda).

    designer(lam) must return a mapping with ``mean_power``. Power must
    decrease as lambda grows; with strict=True a violation raises
    CalibrationError, otherwise bisection simply follows the sign of the
    power error (useful for designs with local optima).

    log_designer, when given, replaces designer and takes log(lambda); it
    lets the search go below the smallest positive double.
    """
    if not target_power > 0:
        raise ValueError("target power must be positive")
    cache = {}

    def power(x):
        if x not in cache:
            if log_designer is not None:
                cache[x] = log_designer(x)
            else:
                lam = math.exp(x)
                if lam == 0.0 or math.isinf(lam):
                    raise CalibrationError("lambda left the floating-point range")
                cache[x] = designer(lam)
        return cache[x].mean_power

    x0 = math.log(lam0)
    p0 = power(x0)
    if p0 == target_power:
        return lam0, cache[x0]
    direction = 1.0 if p0 > target_power else -1.0
    step = 1.0
    x1 = x0
    prev = p0
    for _ in range(max_doublings):
        x1 = x0 + direction * step
        if (power(x1) > target_power) != (p0 > target_power):
            break
        if not strict and direction < 0 and abs(power(x1) - prev) <= rtol * target_power:
            top = max(cache, key=lambda x: cache[x].mean_power)
            raise PowerSaturationError(
                f"power levels off at {cache[top].mean_power:.6g} below the target {target_power:.6g}",
                best=(math.exp(top), cache[top]))
        prev = power(x1)
        step *= 2.0
    else:
        raise CalibrationError("could not bracket the target power")
    lo, hi = min(x0, x1), max(x0, x1)  # power(lo) > target > power(hi)
    if strict and power(lo) < power(hi):
        raise CalibrationError("design power is not decreasing in lambda")
    best = min((lo, hi), key=lambda x: abs(power(x) - target_power))
    for _ in range(max_iter):
        if abs(power(best) - target_power) <= rtol * target_power or hi - lo <= 1e-14 * max(1.0, abs(lo)):
            break
        mid = 0.5 * (lo + hi)
        pm = power(mid)
        slack = rtol * target_power  # power differences below rtol count as noise
        if strict and not (power(hi) - slack <= pm <= power(lo) + slack):
            raise CalibrationError("design power is not monotone in lambda")
        if pm > target_power:
            lo = mid
        else:
            hi = mid
        if abs(pm - target_power) < abs(power(best) - target_power):
            best = mid
    if abs(power(best) - target_power) > 1e-3 * target_power:
        raise CalibrationError(f"calibration stalled at relative error "
                               f"{abs(power(best) - target_power) / target_power:.3g}")
    return math.exp(best), cache[best]


# ---------------------------------------------------------------- baselines

def linear_encoder(power, source, v_grid=None):
    if not power > 0:
        raise ValueError("power must be positive")
    grid = default_grid(source) if v_grid is None else np.asarray(v_grid, dtype=float)
    slope = math.sqrt(power) / source.sigma_v

    def exact(v):
        return slope * np.asarray(v, dtype=float)

    return GridMapping(grid, exact(grid), mean_power=float(power), exact=exact,
                       info={"scheme": "linear", "slope": slope})


def pam_encoder(M, thresholds, power, source):
    """Step mapping for M-ary digital transmission and its constellation."""
    thr = np.asarray(thresholds, dtype=float)
    if M < 2 or thr.size != M - 1:
        raise ValueError("need M >= 2 and M-1 thresholds")
    # equal thresholds are allowed: they leave a symbol unused (M=3 at c=0 is BPSK)
    if not np.all(np.isfinite(thr)) or np.any(np.diff(thr) < 0):
        raise ValueError("thresholds must be finite and ascending")
    probs = pam_cell_probs(thr, source.sigma_v)
    k = pam_levels(M)
    den = float(np.sum(k * k * probs))
    if den <= 1e-300:
        raise DegeneratePowerError("all probability mass on the zero symbol")
    A = math.sqrt(power / den)
    const = A * k
    m = PiecewiseConstantMapping(thr, const, mean_power=float(np.sum(const**2 * probs)),
                                 info={"scheme": f"pam:{M}", "amplitude": A})
    return m, const


def symmetric_pam_thresholds(M, sigma_v=1.0):
    """Equiprobable source thresholds (symmetric about zero)."""
    from scipy.special import ndtri

    return sigma_v * ndtri(np.arange(1, M) / M)


# ---------------------------------------------------------------- one-bit outage optimum

@dataclass
class DopDesign:
    mapping: PiecewiseConstantMapping
    v_hat: tuple  # (reconstruction for symbol 0, reconstruction for symbol 1)
    a_star: float
    u: float
    target_D: float
    lam: float
    log_lam: float = float("nan")

    def table(self):
        """Decoder table in cell order (cell 1 is z < 0)."""
        return DecoderTable(np.array([self.v_hat[1], self.v_hat[0]]), "dop", D=self.target_D)


def dop_onebit_design(lam, D, source, sigma_w, tol=DEFAULT_TOL, log_lam=None):
    """Three-level one-bit outage design; pass log_lam instead of lam for tiny multipliers."""
    if log_lam is None:
        if not lam > 0:
            raise ValueError("lambda must be positive")
        log_lam = math.log(lam)
    lam = math.exp(log_lam)
    if not D > 0:
        raise ValueError("D must be positive")
    r = math.sqrt(D)
    if lam > 0:
        u = solve_exp_growth_root(1.0 / (2.0 * math.sqrt(2.0 * math.pi) * sigma_w * lam), sigma_w, tol)
    else:
        log_c = -math.log(2.0 * math.sqrt(2.0 * math.pi) * sigma_w) - log_lam
        u = float(kernels.exp_growth_root(np.array([log_c]), sigma_w)[0])

    def obj(a):
        return dop_onebit_closed(a, u, D, source.sigma_v, sigma_w, lam)

    a_star, _ = golden_section_min(obj, 0.0, r, tol, seeds=8)
    bp = np.array([-2.0 * r + a_star, -a_star, a_star, 2.0 * r - a_star])
    vals = np.array([0.0, -u, 0.0, u, 0.0])
    m = PiecewiseConstantMapping(bp, vals, info={"scheme": "dop", "lambda": lam, "D": D})
    m.mean_power = m.exact_power(source.sigma_v)
    vh = r - a_star
    return DopDesign(m, (vh, -vh), a_star, u, D, lam, log_lam)
