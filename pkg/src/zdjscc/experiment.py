"""Experiment configuration and scheme construction shared by the CLI and tests.

A config is an INI file:

    [source]     sigma_v
    [channel]    noise_sigmas (comma list, one per branch)
    [quantizer]  K, d (a number or "optimize")
    [criterion]  kind (mse | dop), D
    [schemes]    names (comma list: prop1, linear, bpsk, pam:M, dop, noe)
    [points]     gamma_db (comma list) or lambda (comma list)
    [sim]        n_samples, seed, batch
    [grid]       points, half_width
"""
import configparser
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .decoder import dop_table, mmse_table
from .encoder_design import (calibrate_lambda, default_grid, dop_onebit_design, linear_encoder,
                             pam_encoder, prop1_encoder, symmetric_pam_thresholds)
from .math_kernel import DEFAULT_TOL
from .mc_sim import SimConfig
from .model import ChannelSpec, Link, SourceSpec, db_to_lin, one_bit_quantizer, uniform_midtread_quantizer
from .noe_optimizer import ncr_run, noe_at_power, noe_step_search
from .performance import dop_eval, mse_eval, pam3_best_threshold


class ConfigError(ValueError):
    pass


def _floats(text):
    return [float(x) for x in str(text).replace(";", ",").split(",") if x.strip()]


@dataclass
class ExperimentConfig:
    sigma_v: float = 1.0
    noise_sigmas: tuple = (1.0,)
    K: int = 2
    d: Optional[float] = None  # None means line-search the step
    criterion: str = "mse"
    D: Optional[float] = None
    schemes: tuple = ("prop1",)
    gamma_db: tuple = ()
    lam: tuple = ()
    sim: SimConfig = field(default_factory=SimConfig)
    grid_points: int = 2001
    grid_half_width: float = 6.0

    def __post_init__(self):
        if self.criterion not in ("mse", "dop"):
            raise ConfigError("criterion must be mse or dop")
        if self.criterion == "dop" and not (self.D and self.D > 0):
            raise ConfigError("criterion dop needs D > 0")
        if self.K < 2 or self.K % 2:
            raise ConfigError("K must be an even integer >= 2")
        if len(self.noise_sigmas) > 1 and self.K != 2:
            raise ConfigError("several branches need K = 2")
        if bool(self.gamma_db) == bool(self.lam):
            raise ConfigError("give exactly one of gamma_db or lambda")
        for s in self.schemes:
            check_scheme(s, self)

    @property
    def N(self):
        return len(self.noise_sigmas)

    def link(self, d=None):
        q = one_bit_quantizer() if self.K == 2 else uniform_midtread_quantizer(self.K, d if d else self.d or 1.0)
        return Link(SourceSpec(self.sigma_v), ChannelSpec(tuple(self.noise_sigmas)), q)

    def grid(self):
        return default_grid(SourceSpec(self.sigma_v), self.grid_points, self.grid_half_width)


def check_scheme(name, cfg):
    one_bit_single = cfg.N == 1 and cfg.K == 2
    base = name.split(":")[0]
    if base not in ("prop1", "linear", "bpsk", "pam", "dop", "noe"):
        raise ConfigError(f"unknown scheme {name!r}")
    if base in ("prop1", "bpsk", "pam", "dop") and not one_bit_single:
        raise ConfigError(f"scheme {name!r} needs a single branch with the one-bit ADC")
    if base == "prop1" and cfg.criterion != "mse":
        raise ConfigError("prop1 is the MSE design")
    if base == "dop" and cfg.criterion != "dop":
        raise ConfigError("dop is the outage design")
    if base == "pam":
        try:
            M = int(name.split(":")[1])
        except (IndexError, ValueError):
            raise ConfigError(f"bad PAM scheme {name!r}, use pam:M") from None
        if M < 2:
            raise ConfigError("PAM needs M >= 2")
    if base in ("bpsk", "pam", "linear") and cfg.lam:
        raise ConfigError(f"scheme {name!r} is specified by power, not lambda")
    if cfg.K > 2 and cfg.d is None and base != "noe":
        raise ConfigError("a fixed step d is required unless the scheme is noe")


def read_config(path):
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise ConfigError(f"cannot read config {path}")
    return config_from_parser(cp)


def config_from_parser(cp):
    def get(sec, key, default=None):
        return cp.get(sec, key, fallback=default) if cp.has_section(sec) else default

    try:
        d_text = get("quantizer", "d", "optimize")
        sim = SimConfig(int(float(get("sim", "n_samples", 1_000_000))), int(get("sim", "seed", 0)),
                        int(float(get("sim", "batch", 100_000))))
        D = get("criterion", "D")
        return ExperimentConfig(
            sigma_v=float(get("source", "sigma_v", 1.0)),
            noise_sigmas=tuple(_floats(get("channel", "noise_sigmas", "1.0"))),
            K=int(get("quantizer", "K", 2)),
            d=None if d_text.strip() == "optimize" else float(d_text),
            criterion=get("criterion", "kind", "mse").strip(),
            D=float(D) if D is not None else None,
            schemes=tuple(s.strip() for s in get("schemes", "names", "prop1").split(",") if s.strip()),
            gamma_db=tuple(_floats(get("points", "gamma_db", ""))),
            lam=tuple(_floats(get("points", "lambda", ""))),
            sim=sim,
            grid_points=int(get("grid", "points", 2001)),
            grid_half_width=float(get("grid", "half_width", 6.0)),
        )
    except ConfigError:
        raise
    except (ValueError, configparser.Error) as exc:
        raise ConfigError(str(exc)) from exc


def config_to_parser(cfg):
    cp = configparser.ConfigParser()
    cp["source"] = {"sigma_v": repr(cfg.sigma_v)}
    cp["channel"] = {"noise_sigmas": ", ".join(repr(s) for s in cfg.noise_sigmas)}
    cp["quantizer"] = {"K": str(cfg.K), "d": "optimize" if cfg.d is None else repr(cfg.d)}
    cp["criterion"] = {"kind": cfg.criterion}
    if cfg.D is not None:
        cp["criterion"]["D"] = repr(cfg.D)
    cp["schemes"] = {"names": ", ".join(cfg.schemes)}
    cp["points"] = {}
    if cfg.gamma_db:
        cp["points"]["gamma_db"] = ", ".join(repr(g) for g in cfg.gamma_db)
    if cfg.lam:
        cp["points"]["lambda"] = ", ".join(repr(x) for x in cfg.lam)
    cp["sim"] = {"n_samples": str(cfg.sim.n_samples), "seed": str(cfg.sim.seed), "batch": str(cfg.sim.batch)}
    cp["grid"] = {"points": str(cfg.grid_points), "half_width": repr(cfg.grid_half_width)}
    return cp


@dataclass
class Design:
    """A built encoder/decoder pair plus everything needed to report it."""
    scheme: str
    link: Link
    mapping: object
    table: object
    value: float
    power: float
    gamma_db: float
    lam: Optional[float] = None
    d: Optional[float] = None
    trace: list = field(default_factory=list)
    target_db: Optional[float] = None  # requested SNR; gamma_db is the achieved one


def _table(mapping, link, cfg, tol):
    if cfg.criterion == "mse":
        return mmse_table(mapping, link, tol)
    return dop_table(mapping, link, cfg.D, tol)


def _value(mapping, table, link, cfg, tol):
    if cfg.criterion == "mse":
        return mse_eval(mapping, table, link, tol).value
    return dop_eval(mapping, table, link, cfg.D, tol).value


def _finish(scheme, link, mapping, cfg, tol, table=None, lam=None, d=None, trace=()):
    table = table if table is not None else _table(mapping, link, cfg, tol)
    power = float(mapping.mean_power)
    g = link.snr(power)
    gdb = 10.0 * math.log10(g) if g > 0 else -math.inf
    return Design(scheme, link, mapping, table, _value(mapping, table, link, cfg, tol), power, gdb,
                  lam, d, list(trace))


def build_at_power(scheme, cfg, power, tol=DEFAULT_TOL):
    """Design `scheme` with mean power `power` on the configured front end."""
    link = cfg.link()
    src = link.source
    grid = cfg.grid()
    base = scheme.split(":")[0]
    if base == "linear":
        return _finish(scheme, link, linear_encoder(power, src, grid), cfg, tol)
    if base in ("bpsk", "pam"):
        M = 2 if base == "bpsk" else int(scheme.split(":")[1])
        if M == 3:
            c, _ = pam3_best_threshold(link.snr(power), cfg.sigma_v, tol)
            thr = [-c, c]
        else:
            thr = symmetric_pam_thresholds(M, cfg.sigma_v)
        m, _ = pam_encoder(M, thr, power, src)
        return _finish(scheme, link, m, cfg, tol)
    if base == "prop1":
        sw = link.sigma_w
        lam, m = calibrate_lambda(lambda l: prop1_encoder(l, src, sw, grid, tol), power, tol)
        return _finish(scheme, link, m, cfg, tol, lam=lam)
    if base == "dop":
        sw = link.sigma_w
        designs = {}

        def designer(x):
            designs[x] = dop_onebit_design(None, cfg.D, src, sw, tol, log_lam=x)
            return designs[x].mapping

        # the optimal split point comes from a golden search, which limits how
        # finely the power can be resolved
        calibrate_lambda(None, power, tol, lam0=0.1, rtol=1e-6, log_designer=designer)
        best = min(designs.values(), key=lambda d: abs(d.mapping.mean_power - power))
        return _finish(scheme, link, best.mapping, cfg, tol, table=best.table(), lam=best.lam)
    # noe
    if cfg.K > 2 and cfg.d is None:
        res = noe_step_search(cfg.K, power, src, link.sigma_w, cfg.criterion, cfg.D, v_grid=grid, tol=tol)
        link = cfg.link(res.d)
        r = res.design
        return _finish(scheme, link, r.mapping, cfg, tol, lam=r.mapping.info.get("lambda"), d=res.d,
                       trace=r.trace)
    r = noe_at_power(link, power, cfg.criterion, cfg.D, v_grid=grid, tol=tol)
    return _finish(scheme, link, r.mapping, cfg, tol, lam=r.mapping.info.get("lambda"),
                   d=link.quantizer.step, trace=r.trace)


def build_at_lambdas(scheme, cfg, tol=DEFAULT_TOL):
    """Designs at the configured multipliers (NOE runs them as one continuation)."""
    link = cfg.link()
    src = link.source
    grid = cfg.grid()
    base = scheme.split(":")[0]
    out = []
    if base == "noe":
        if cfg.K > 2 and cfg.d is None:
            raise ConfigError("a lambda schedule needs a fixed step d")
        sched = sorted(cfg.lam, reverse=True)
        for p in ncr_run(sched, link, cfg.criterion, cfg.D, v_grid=grid, tol=tol):
            out.append(_finish(scheme, link, p.mapping, cfg, tol, lam=p.lam))
        return out
    for lam in cfg.lam:
        if base == "prop1":
            out.append(_finish(scheme, link, prop1_encoder(lam, src, link.sigma_w, grid, tol), cfg, tol, lam=lam))
        elif base == "dop":
            des = dop_onebit_design(lam, cfg.D, src, link.sigma_w, tol)
            out.append(_finish(scheme, link, des.mapping, cfg, tol, table=des.table(), lam=lam))
        else:
            raise ConfigError(f"scheme {scheme!r} is specified by power, not lambda")
    return out


def build_all(scheme, cfg, tol=DEFAULT_TOL):
    if cfg.lam:
        return build_at_lambdas(scheme, cfg, tol)
    return [build_at_snr(scheme, cfg, g, tol) for g in cfg.gamma_db]


def build_at_snr(scheme, cfg, gamma_db, tol=DEFAULT_TOL):
    des = build_at_power(scheme, cfg, cfg.link().power_for_snr(float(db_to_lin(gamma_db))), tol)
    des.target_db = float(gamma_db)
    return des


def with_points(cfg, **changes):
    return replace(cfg, **changes)
