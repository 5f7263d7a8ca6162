"""Counter-based random numbers keyed by (seed, stream, i, j, t).

Every draw is a pure function of its key, so a photon arrival at pixel
(i, j) in frame t is the same no matter which policy, thread or evaluation
order asks for it.  This is what makes the shared-arrival-tape comparisons
possible without storing the tape.
"""
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_C1 = np.uint64(0xBF58476D1CE4E5B9)
_C2 = np.uint64(0x94D049BB133111EB)

# Stream ids keep independent uses of one seed from overlapping.
STREAM_ARRIVALS = 0
STREAM_NOISE = 1
STREAM_NOISE_AUX = 2
STREAM_BRACKET = 3


def _mix(z):
    # splitmix64 finalizer, wrapping uint64 arithmetic
    z = (z ^ (z >> np.uint64(30))) * _C1
    z = (z ^ (z >> np.uint64(27))) * _C2
    return z ^ (z >> np.uint64(31))


def hash_key(seed, stream, i, j, t):
    """64-bit hash of the key; broadcasts over array arguments."""
    with np.errstate(over="ignore"):
        z = _mix(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + _GOLDEN * np.uint64(stream + 1))
        for part in (i, j, t):
            part = np.asarray(part).astype(np.int64).astype(np.uint64)
            z = _mix((z + _GOLDEN) ^ part)
    return z


def uniform(seed, stream, i, j, t):
    """Uniform floats in [0, 1) with 53 bits of resolution."""
    h = hash_key(seed, stream, i, j, t)
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


@dataclass(frozen=True)
class RngSpec:
    """Seed for the counter-based generator.

    ``frame_uniforms(shape, t)`` returns the uniforms for every pixel of frame
    ``t``.  A pixel detects a photon in that frame iff its uniform exceeds
    ``exp(-H)``; the same uniform drives the Poisson count through the inverse
    CDF, so the Bernoulli and Poisson tapes are always consistent.
    """

    seed: int = 0
    stream: int = STREAM_ARRIVALS

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")

    def with_stream(self, stream):
        return RngSpec(self.seed, stream)

    def frame_uniforms(self, shape, t):
        ii, jj = np.indices(shape)
        return uniform(self.seed, self.stream, ii, jj, t)

    def uniforms(self, i, j, t):
        return uniform(self.seed, self.stream, i, j, t)


def bernoulli_from_uniform(u, H):
    """Detection indicator for exposure ``H``: P(1) = 1 - exp(-H)."""
    return u > np.exp(-np.asarray(H, dtype=float))


def poisson_from_uniform(u, H):
    """Poisson(H) photon counts by inverse CDF on the shared uniforms."""
    H = np.broadcast_to(np.asarray(H, dtype=float), np.shape(u))
    k = stats.poisson.ppf(u, H)
    # pin the zero/non-zero split to the Bernoulli rule so both tapes agree bit-exactly
    hit = bernoulli_from_uniform(u, H)
    k = np.where(hit, np.maximum(k, 1.0), 0.0)
    return k.astype(np.int64)


def normal_from_uniform(u):
    # keep away from the endpoints, ndtri(0) = -inf
    u = np.clip(u, 2.0**-54, 1.0 - 2.0**-53)
    return special.ndtri(u)
