"""Source, channel and ADC front-end descriptions."""
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from . import kernels


@dataclass(frozen=True)
class SourceSpec:
    sigma_v: float = 1.0

    def __post_init__(self):
        if not self.sigma_v > 0:
            raise ValueError("sigma_v must be positive")


@dataclass(frozen=True)
class ChannelSpec:
    noise_sigmas: Tuple[float, ...] = (1.0,)

    def __post_init__(self):
        sig = tuple(float(s) for s in np.atleast_1d(self.noise_sigmas))
        if len(sig) < 1 or not all(s > 0 for s in sig):
            raise ValueError("need at least one branch with positive noise std")
        object.__setattr__(self, "noise_sigmas", sig)

    @property
    def n_branches(self):
        return len(self.noise_sigmas)

    @property
    def equal_noise(self):
        return len(set(self.noise_sigmas)) == 1


@dataclass(frozen=True)
class QuantizerSpec:
    """Scalar ADC: interior thresholds (ascending) and one label per cell.

    Cell j (1-based) is [z_(j-1), z_(j)) with z_(0) = -inf and z_(K) = +inf.
    """
    thresholds: Tuple[float, ...]
    levels: Tuple = ()

    def __post_init__(self):
        thr = tuple(float(t) for t in self.thresholds)
        if len(thr) < 1:
            raise ValueError("a quantizer needs at least one threshold")
        if any(b <= a for a, b in zip(thr[:-1], thr[1:])):
            raise ValueError("thresholds must be strictly ascending")
        object.__setattr__(self, "thresholds", thr)
        levels = tuple(self.levels) if self.levels else tuple(range(len(thr) + 1))
        if len(levels) != len(thr) + 1:
            raise ValueError("need exactly one label per cell")
        object.__setattr__(self, "levels", levels)

    @property
    def K(self):
        return len(self.thresholds) + 1

    @property
    def edges(self):
        return np.concatenate([[-np.inf], self.thresholds, [np.inf]])

    @property
    def is_one_bit(self):
        return self.thresholds == (0.0,)

    @property
    def step(self):
        """Uniform threshold spacing (None for one-bit or irregular spacing)."""
        if self.K < 3:
            return None
        gaps = np.diff(self.thresholds)
        return float(gaps[0]) if np.allclose(gaps, gaps[0]) else None


def one_bit_quantizer():
    # sign comparator: label 0 for z >= 0, label 1 for z < 0
    return QuantizerSpec(thresholds=(0.0,), levels=(1, 0))


def uniform_midtread_quantizer(K, d):
    if not d > 0:
        raise ValueError("step d must be positive")
    if K < 2 or K % 2:
        raise ValueError("K must be an even integer >= 2")
    if K == 2:
        return one_bit_quantizer()
    half = K // 2 - 1
    thr = tuple(d * k for k in range(-half, half + 1))
    return QuantizerSpec(thresholds=thr)


def quantize(z, spec):
    """Cell index j (1-based) with z in [z_(j-1), z_(j)); works on arrays."""
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("quantize needs finite input")
    j = np.searchsorted(np.asarray(spec.thresholds), z, side="right") + 1
    return int(j) if j.ndim == 0 else j


def adc_output(z, spec):
    """The label y_(j) the ADC emits for observation z."""
    j = quantize(z, spec)
    if np.ndim(j) == 0:
        return spec.levels[j - 1]
    return np.asarray(spec.levels)[np.asarray(j) - 1]


@dataclass(frozen=True)
class OutcomeIndex:
    j: int
    bits: Tuple[int, ...]


def outcome_bits(j, N):
    if N < 1 or not 1 <= j <= 2**N:
        raise ValueError(f"outcome index {j} outside [1, 2^{N}]")
    val = 2**N - j
    bits = tuple((val >> (N - 1 - k)) & 1 for k in range(N))
    return OutcomeIndex(j=j, bits=bits)


def outcome_from_bits(bits):
    N = len(bits)
    val = 0
    for b in bits:
        val = 2 * val + int(b)
    return 2**N - val


def snr(power, channel):
    if power < 0:
        raise ValueError("power must be non-negative")
    return channel.n_branches * power / sum(s * s for s in channel.noise_sigmas)


def power_for_snr(gamma, channel):
    return gamma * sum(s * s for s in channel.noise_sigmas) / channel.n_branches


def db_to_lin(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def lin_to_db(x):
    return 10.0 * np.log10(x)


@dataclass(frozen=True)
class Link:
    """A complete front end: source, N noisy branches, and the ADC.

    Two shapes are supported: one branch with a K-level ADC (outcomes are the
    K cells in ascending order), or N branches each with the one-bit ADC
    (outcome j carries the bits of 2^N - j, bit 1 meaning z < 0). For N = 1
    with the one-bit ADC both descriptions coincide.
    """
    source: SourceSpec
    channel: ChannelSpec
    quantizer: QuantizerSpec

    def __post_init__(self):
        if self.channel.n_branches > 1 and not self.quantizer.is_one_bit:
            raise ValueError("several branches are only supported with the one-bit ADC")

    @property
    def multibit(self):
        return self.channel.n_branches > 1

    @property
    def n_outcomes(self):
        if self.multibit:
            return 2 ** self.channel.n_branches
        return self.quantizer.K

    @property
    def sigma_w(self):
        return self.channel.noise_sigmas[0]

    def signs(self):
        """(-1)^(b_j(i)+1) for every outcome j and branch i."""
        N = self.channel.n_branches
        out = np.empty((2**N, N))
        for j in range(1, 2**N + 1):
            out[j - 1] = [1.0 if b else -1.0 for b in outcome_bits(j, N).bits]
        return out

    def probs(self, f):
        """Transition matrix Pr(outcome | channel input f), shape (n, J)."""
        f = np.atleast_1d(np.asarray(f, dtype=float))
        if self.multibit:
            return kernels.onebit_probs(f, np.array(self.channel.noise_sigmas), self.signs())
        return kernels.klevel_probs(f, self.quantizer.edges, self.sigma_w)

    def dprobs(self, f):
        """Derivative of the transition matrix with respect to f."""
        f = np.atleast_1d(np.asarray(f, dtype=float))
        if self.multibit:
            return kernels.onebit_dprobs(f, np.array(self.channel.noise_sigmas), self.signs())
        return kernels.klevel_dprobs(f, self.quantizer.edges, self.sigma_w)

    def outcome(self, z):
        """Outcome index (1-based) for observations z of shape (n, N)."""
        z = np.asarray(z, dtype=float)
        if self.multibit:
            return kernels.onebit_outcome(z)
        return kernels.klevel_outcome(z.reshape(-1), np.array(self.quantizer.thresholds))

    def outcome_labels(self):
        if self.multibit:
            N = self.channel.n_branches
            return ["".join(str(b) for b in outcome_bits(j, N).bits) for j in range(1, 2**N + 1)]
        return [str(y) for y in self.quantizer.levels]

    def snr(self, power):
        return snr(power, self.channel)

    def power_for_snr(self, gamma):
        return power_for_snr(gamma, self.channel)


def make_link(sigma_v=1.0, noise_sigmas=(1.0,), quantizer=None):
    return Link(SourceSpec(sigma_v), ChannelSpec(tuple(noise_sigmas)), quantizer or one_bit_quantizer())
