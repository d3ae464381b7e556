"""Seeded Monte Carlo simulation of the full link.

Each batch b draws from its own generator seeded by SeedSequence(seed,
spawn_key=(b,)), so results depend only on (seed, n_samples, batch) and not
on how many threads run the batches. Batch statistics are merged in batch
order with the pairwise mean/variance update.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .decoder import DecoderTable


@dataclass(frozen=True)
class SimConfig:
    n_samples: int = 1_000_000
    seed: int = 0
    batch: int = 100_000

    def __post_init__(self):
        if self.n_samples < 1 or self.batch < 1:
            raise ValueError("n_samples and batch must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")

    def batches(self):
        full, rest = divmod(self.n_samples, self.batch)
        return [self.batch] * full + ([rest] if rest else [])


@dataclass(frozen=True)
class SimEstimate:
    mean: float
    std_error: float
    n: int


@dataclass
class _Moments:
    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def of(cls, x):
        x = np.asarray(x, dtype=float)
        mu = float(x.mean())
        return cls(x.size, mu, float(np.sum((x - mu) ** 2)))

    def merge(self, other):
        if other.n == 0:
            return self
        if self.n == 0:
            return other
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        m2 = self.m2 + other.m2 + delta * delta * self.n * other.n / n
        return _Moments(n, mean, m2)

    def estimate(self):
        if self.n < 2:
            return SimEstimate(self.mean, float("nan"), self.n)
        var = self.m2 / (self.n - 1)
        return SimEstimate(self.mean, math.sqrt(var / self.n), self.n)


def _rng(cfg, b):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed, spawn_key=(b,))))


def _run(batch_fn, cfg, jobs):
    sizes = cfg.batches()
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(lambda b: batch_fn(_rng(cfg, b), sizes[b]), range(len(sizes))))
    else:
        parts = [batch_fn(_rng(cfg, b), n) for b, n in enumerate(sizes)]
    acc = _Moments()
    for p in parts:
        acc = acc.merge(p)
    return acc.estimate()


def simulate(mapping, table, link, criterion="mse", D=None, cfg=SimConfig(), jobs=1):
    """Monte Carlo estimate of the MSE or of the outage probability.

    V is drawn from the source, sent through the mapping, each branch adds
    its own noise, the ADC quantizes, and the table decodes.
    """
    if criterion not in ("mse", "dop"):
        raise ValueError("criterion must be 'mse' or 'dop'")
    if criterion == "dop" and not (D and D > 0):
        raise ValueError("outage simulation needs D > 0")
    if not isinstance(table, DecoderTable):
        table = DecoderTable(np.asarray(table, dtype=float), criterion, D)
    if len(table) != link.n_outcomes:
        raise ValueError("table length does not match the number of outcomes")
    sig_v = link.source.sigma_v
    sig_w = np.asarray(link.channel.noise_sigmas, dtype=float)

    def batch(rng, n):
        v = rng.standard_normal(n) * sig_v
        w = rng.standard_normal((n, sig_w.size)) * sig_w[None, :]
        z = mapping(v)[:, None] + w
        err = (v - table.decode(link.outcome(z))) ** 2
        return _Moments.of(err if criterion == "mse" else (err >= D).astype(float))

    return _run(batch, cfg, jobs)


def estimate_power(mapping, sigma_v=1.0, cfg=SimConfig(), jobs=1):
    def batch(rng, n):
        return _Moments.of(mapping(rng.standard_normal(n) * sigma_v) ** 2)

    return _run(batch, cfg, jobs)
