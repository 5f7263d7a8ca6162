"""Observation model: flux images, Bernoulli binary frames and rate estimates.

Mask convention throughout the package: ``mask == 1`` means the pixel is
enabled for that frame.  (Tables that use "disabled = 1" are translated at
the boundary, see :mod:`photoninhibit.tally`.)
"""
from dataclasses import dataclass, field

import numpy as np

from .rng import RngSpec, bernoulli_from_uniform


@dataclass(frozen=True)
class FluxImage:
    """Per-pixel effective photon flux (photons per unit time, PDP folded in)."""

    flux: np.ndarray

    def __post_init__(self):
        flux = np.asarray(self.flux, dtype=np.float64)
        if flux.ndim != 2 or min(flux.shape) < 1:
            raise ValueError(f"flux must be a non-empty 2-D array, got shape {flux.shape}")
        if not np.all(np.isfinite(flux)):
            raise ValueError("flux contains non-finite values")
        if np.any(flux < 0):
            raise ValueError("flux must be non-negative")
        flux = flux.copy()
        flux.setflags(write=False)
        object.__setattr__(self, "flux", flux)

    @property
    def height(self):
        return self.flux.shape[0]

    @property
    def width(self):
        return self.flux.shape[1]

    @property
    def shape(self):
        return self.flux.shape

    @classmethod
    def from_image(cls, image, mean_ppp=1.0):
        """Scale a linear intensity image so its mean flux is ``mean_ppp`` per unit time."""
        image = np.asarray(image, dtype=np.float64)
        m = image.mean()
        if m <= 0:
            raise ValueError("image has zero mean intensity")
        return cls(image * (mean_ppp / m))

    def exposure(self, T):
        return self.flux * T


@dataclass(frozen=True)
class ExposureSchedule:
    """Per-frame exposure durations; the exposure is ``H(i, j, t) = flux * T_t``."""

    frame_times: tuple

    def __post_init__(self):
        times = tuple(float(x) for x in self.frame_times)
        if not times:
            raise ValueError("schedule needs at least one frame")
        if any(not np.isfinite(x) or x <= 0 for x in times):
            raise ValueError("frame durations must be finite and > 0")
        object.__setattr__(self, "frame_times", times)

    @classmethod
    def constant(cls, T, n_frames):
        return cls((float(T),) * int(n_frames))

    def __len__(self):
        return len(self.frame_times)

    def __getitem__(self, t):
        return self.frame_times[t]


@dataclass
class PhotonCube:
    """Binary detections ``frames[t, i, j]`` with the co-indexed enable mask."""

    frames: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=bool)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.frames.shape != self.mask.shape or self.frames.ndim != 3:
            raise ValueError("frames and mask must be (N, H, W) arrays of equal shape")
        if np.any(self.frames & ~self.mask):
            raise ValueError("detection recorded on a disabled pixel")

    @property
    def n_frames(self):
        return self.frames.shape[0]

    @property
    def shape(self):
        return self.frames.shape[1:]

    @classmethod
    def unmasked(cls, frames):
        frames = np.asarray(frames, dtype=bool)
        return cls(frames, np.ones_like(frames))


@dataclass
class RateEstimate:
    """Per-pixel binary-rate and exposure estimates.

    Unobserved pixels (no active measurements) carry NaN and ``observed=False``.
    ``saturated`` marks pixels whose rate hit the half-count clamp before the
    log transform.
    """

    rate: np.ndarray
    exposure: np.ndarray
    measurements: np.ndarray
    kind: str = "masked_ratio"
    observed: np.ndarray = field(default=None)
    saturated: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.observed is None:
            self.observed = np.asarray(self.measurements) > 0
        if self.saturated is None:
            self.saturated = np.zeros(np.shape(self.rate), dtype=bool)


def _check_flux(flux):
    if isinstance(flux, FluxImage):
        return flux.flux
    return FluxImage(flux).flux


def clamp_rate(rate, measurements):
    """Half-count clamp ``Y <= 1 - 1/(2W)``; returns (clamped, saturated flag)."""
    rate = np.asarray(rate, dtype=float)
    w = np.asarray(measurements, dtype=float)
    with np.errstate(divide="ignore"):
        ceiling = np.where(w > 0, 1.0 - 0.5 / np.maximum(w, 1e-300), 1.0)
    saturated = rate > ceiling
    return np.minimum(rate, ceiling), saturated


def rate_to_exposure(rate):
    """H = -ln(1 - Y); infinite at Y = 1."""
    with np.errstate(divide="ignore"):
        return -np.log1p(-np.asarray(rate, dtype=float))


def estimate_from_counts(detections, measurements, kind="masked_ratio"):
    """Rate and exposure estimates from per-pixel counts D and W."""
    d = np.asarray(detections, dtype=float)
    w = np.asarray(measurements, dtype=float)
    if np.any(d > w):
        raise ValueError("detections exceed measurements")
    observed = w > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        rate = np.where(observed, d / np.where(observed, w, 1.0), np.nan)
    clamped, saturated = clamp_rate(np.where(observed, rate, 0.0), w)
    exposure = np.where(observed, rate_to_exposure(clamped), np.nan)
    return RateEstimate(rate, exposure, w, kind, observed, saturated & observed)


def arrival_frame(flux, T, rng, t):
    """Pre-mask photon arrivals of frame ``t`` (the shared arrival tape)."""
    phi = _check_flux(flux)
    if not T > 0:
        raise ValueError("exposure time must be > 0")
    u = rng.frame_uniforms(phi.shape, t)
    return bernoulli_from_uniform(u, phi * T)


def sample_frame(flux, T, mask, rng, t):
    """One clocked binary frame: enabled pixels fire with probability 1 - exp(-flux*T).

    Parameters
    ----------
    flux : FluxImage or array_like
    T : float
        Frame exposure duration.
    mask : array_like of bool
        Enable bits for this frame; disabled pixels read 0.
    rng : RngSpec
    t : int
        Frame index, part of the random key.
    """
    phi = _check_flux(flux)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != phi.shape:
        raise ValueError(f"mask shape {mask.shape} does not match flux shape {phi.shape}")
    return arrival_frame(phi, T, rng, t) & mask


def sample_cube(flux, schedule, rng, mask=None):
    """Frames for a whole schedule under a fixed (precomputed) mask cube."""
    phi = _check_flux(flux)
    n = len(schedule)
    if mask is None:
        mask = np.ones((n,) + phi.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (n,) + phi.shape:
        raise ValueError("mask cube does not match schedule and flux")
    frames = np.empty_like(mask)
    for t in range(n):
        frames[t] = sample_frame(phi, schedule[t], mask[t], rng, t)
    return PhotonCube(frames, mask)


def estimate_rate(cube):
    """Masked-ratio estimate: Y = sum F / sum M per pixel, then H = -ln(1 - Y)."""
    d = cube.frames.sum(axis=0)
    w = cube.mask.sum(axis=0)
    return estimate_from_counts(d, w)


def expected_detections(H, W):
    """E[D] = W (1 - exp(-H))."""
    return np.asarray(W, dtype=float) * -np.expm1(-np.asarray(H, dtype=float))


def expected_inhibited_per_frame(H):
    """Mean photons lost to clocked recharge per frame: sum_{k>=2} (k-1) P(k; H) = H - 1 + exp(-H)."""
    H = np.asarray(H, dtype=float)
    # H + expm1(-H) keeps precision at small H
    return H + np.expm1(-H)
