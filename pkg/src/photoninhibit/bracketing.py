"""Exposure brackets, saturation look-ahead, SNR^2-weighted HDR merging and MLE lookup tables.

A bracket pass runs cycles ``i = 0..K-1`` in order; cycle ``i`` takes
``repeats[i]`` binary frames of duration ``times[i]``.  With look-ahead, if a
cycle collects ``>= thresholds[i]`` detections the pixel is disabled for the
rest of the pass; the state resets at the next pass.
"""
import csv
import itertools
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .model import RateEstimate, clamp_rate, rate_to_exposure
from .rng import STREAM_BRACKET, RngSpec, bernoulli_from_uniform

MLE_POINTS = 2000
MLE_PHI_MAX = 10.0


@dataclass(frozen=True)
class BracketSchedule:
    times: tuple
    repeats: tuple
    thresholds: tuple = None

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        repeats = tuple(int(w) for w in self.repeats)
        if not times or len(times) != len(repeats):
            raise ValueError("times and repeats must be non-empty and of equal length")
        if any(t <= 0 for t in times) or any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("cycle times must be positive and strictly increasing")
        if any(w < 1 for w in repeats):
            raise ValueError("each cycle needs at least one frame")
        thr = self.thresholds
        if thr is not None:
            thr = tuple(None if d is None else int(d) for d in thr)
            if len(thr) == len(times):
                # a threshold on the last cycle has nothing left to inhibit
                thr = thr[:-1]
            if len(thr) != len(times) - 1:
                raise ValueError("need one threshold per cycle except the last")
            for d, w in zip(thr, repeats):
                if d is not None and not 0 < d <= w:
                    raise ValueError("thresholds must satisfy 0 < d_i <= W_i")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "repeats", repeats)
        object.__setattr__(self, "thresholds", thr)

    @classmethod
    def geometric(cls, n_cycles=5, ratio=5.0, repeats=10, threshold=6, t0=1.0):
        times = tuple(t0 * ratio**k for k in range(n_cycles))
        thr = None if threshold is None else (threshold,) * (n_cycles - 1)
        return cls(times, (repeats,) * n_cycles, thr)

    @classmethod
    def fibonacci(cls):
        """{1, 1, 2, 3, 5, 8, 13, 21} with the two unit exposures merged into one cycle.

        Thresholds ``[2, 1, 1, 1, 1, 1]``: both unit frames firing, or any single
        longer frame firing, stops the pass.
        """
        return cls((1, 2, 3, 5, 8, 13, 21), (2, 1, 1, 1, 1, 1, 1), (2, 1, 1, 1, 1, 1))

    @property
    def n_cycles(self):
        return len(self.times)

    @property
    def pass_length(self):
        return sum(self.repeats)

    @property
    def has_thresholds(self):
        return self.thresholds is not None and any(d is not None for d in self.thresholds)

    def without_thresholds(self):
        return BracketSchedule(self.times, self.repeats, None)

    def threshold(self, i):
        if self.thresholds is None or i >= len(self.thresholds):
            return None
        return self.thresholds[i]

    def frame_cycles(self):
        """Cycle index of each frame within one pass."""
        return np.repeat(np.arange(self.n_cycles), self.repeats)

    def frame_times(self, passes=1):
        one = [self.times[c] for c in self.frame_cycles()]
        return tuple(one * int(passes))

    def cycle_end_frames(self):
        return np.cumsum(self.repeats) - 1


@dataclass
class BracketObservation:
    """Per-cycle detection counts and enable flags, shape ``(..., K)``."""

    counts: np.ndarray
    enabled: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        self.enabled = np.asarray(self.enabled, dtype=bool)
        if self.counts.shape != self.enabled.shape:
            raise ValueError("counts and enabled must share a shape")
        if np.any(self.counts[~self.enabled] != 0):
            raise ValueError("detections on an inhibited cycle")

    @property
    def detections(self):
        return self.counts.sum(axis=-1)

    def key(self):
        return tuple(int(c) for c in self.counts), tuple(bool(e) for e in self.enabled)


def run_lookahead(phi, schedule, rng=RngSpec(0, STREAM_BRACKET), passes=1):
    """Simulate bracket passes for one or many pixels, independently per pixel.

    ``phi`` may be a scalar or an array of pixel fluxes; the pixel's position in
    the flattened array is part of the random key, so running with or without
    thresholds reuses the same arrivals.  Returns counts/enabled of shape
    ``phi.shape + (passes, K)`` (scalar ``phi`` drops the leading axes).
    """
    phi_arr = np.atleast_1d(np.asarray(phi, dtype=float))
    if np.any(phi_arr < 0) or not np.all(np.isfinite(phi_arr)):
        raise ValueError("flux must be finite and >= 0")
    flat = phi_arr.ravel()
    pix = np.arange(flat.size)
    K = schedule.n_cycles
    L = schedule.pass_length
    counts = np.zeros((flat.size, passes, K), dtype=np.int64)
    enabled = np.zeros((flat.size, passes, K), dtype=bool)
    starts = np.concatenate([[0], np.cumsum(schedule.repeats)[:-1]])
    for p in range(passes):
        live = np.ones(flat.size, dtype=bool)
        for i in range(K):
            enabled[:, p, i] = live
            H = flat * schedule.times[i]
            frames = p * L + starts[i] + np.arange(schedule.repeats[i])
            u = rng.uniforms(pix[:, None], 0, frames[None, :])
            hits = bernoulli_from_uniform(u, H[:, None]).sum(axis=1)
            counts[:, p, i] = np.where(live, hits, 0)
            d = schedule.threshold(i)
            if d is not None:
                live = live & (counts[:, p, i] < d)
    shape = np.shape(phi) + (passes, K)
    return BracketObservation(counts.reshape(shape), enabled.reshape(shape))


def cycle_enable_probability(phi, schedule):
    """P(cycle i is enabled) for each flux; shape ``phi.shape + (K,)``."""
    phi = np.asarray(phi, dtype=float)
    p = np.ones(phi.shape)
    out = []
    for i in range(schedule.n_cycles):
        out.append(p.copy())
        d = schedule.threshold(i)
        if d is not None:
            Y = -np.expm1(-phi * schedule.times[i])
            p = p * stats.binom.cdf(d - 1, schedule.repeats[i], Y)
    return np.stack(out, axis=-1)


def expected_pass_detections(phi, schedule):
    """Exact E[detections per pass] under the schedule's look-ahead rule."""
    phi = np.asarray(phi, dtype=float)
    penable = cycle_enable_probability(phi, schedule)
    times = np.asarray(schedule.times)
    W = np.asarray(schedule.repeats, dtype=float)
    Y = -np.expm1(-phi[..., None] * times)
    return (penable * W * Y).sum(axis=-1)


def bracket_measurement_efficiency(phi, schedule):
    """HDR SNR_H^2 of the plain bracket per measurement.

    Equals the measurement efficiency evaluated at each cycle's exposure,
    averaged with the cycle repeat counts as weights.
    """
    from .metrics import measurement_efficiency

    phi = np.asarray(phi, dtype=float)
    W = np.asarray(schedule.repeats, dtype=float)
    H = phi[..., None] * np.asarray(schedule.times)
    return (W * measurement_efficiency(H)).sum(axis=-1) / W.sum()


def snr2_weight(H, W):
    """SNR_H^2 = H^2 W / (e^H - 1), with the H -> 0 limit 0."""
    H = np.asarray(H, dtype=float)
    W = np.asarray(W, dtype=float)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        w = np.where(H > 0, H * H * W / np.expm1(np.where(H > 0, H, 1.0)), 0.0)
    return np.nan_to_num(w, nan=0.0, posinf=0.0)


def hdr_merge(rates, times, measurements, enabled=None):
    """SNR^2-weighted merge of per-cycle rate estimates into one flux estimate.

    Parameters
    ----------
    rates : array_like, shape (K, ...)
        Per-cycle binary-rate estimates.
    times : sequence of float
        Cycle exposure durations.
    measurements : array_like, shape (K, ...)
        Active measurements behind each rate.
    enabled : array_like of bool, optional
        Cycles to use; cycles with zero measurements are always skipped.

    Returns
    -------
    flux : ndarray
        Merged flux (NaN where no cycle was observed).
    observed : ndarray of bool
    weights : ndarray, shape (K, ...)
        Normalized SNR^2 weights.
    """
    rates = np.asarray(rates, dtype=float)
    W = np.broadcast_to(np.asarray(measurements, dtype=float), rates.shape)
    times = np.asarray(times, dtype=float).reshape((-1,) + (1,) * (rates.ndim - 1))
    use = W > 0
    if enabled is not None:
        use = use & np.broadcast_to(np.asarray(enabled, dtype=bool), rates.shape)
    clamped, sat = clamp_rate(np.where(use, rates, 0.0), W)
    # a saturated cycle only carries a lower bound; drop it if any other cycle saw the pixel
    unsat = use & ~sat
    use = np.where(unsat.any(axis=0), unsat, use)
    H = np.where(use, rate_to_exposure(clamped), 0.0)
    w = np.where(use, snr2_weight(H, W), 0.0)
    phi_i = H / times
    wsum = w.sum(axis=0)
    observed = use.any(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        flux = np.where(wsum > 0, (w * phi_i).sum(axis=0) / np.where(wsum > 0, wsum, 1.0), 0.0)
        weights = np.where(wsum > 0, w / np.where(wsum > 0, wsum, 1.0), 0.0)
    flux = np.where(observed, flux, np.nan)
    return flux, observed, weights


def hdr_estimate(detections, measurements, times, T_ref=1.0):
    """Merge per-cycle counts and express the result as a rate at exposure ``T_ref``."""
    d = np.asarray(detections, dtype=float)
    w = np.asarray(measurements, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        rates = np.where(w > 0, d / np.where(w > 0, w, 1.0), 0.0)
    flux, observed, _ = hdr_merge(rates, times, w)
    exposure = flux * T_ref
    _, sat = clamp_rate(rates, w)
    return RateEstimate(-np.expm1(-exposure), exposure, w.sum(axis=0), "hdr_merge", observed,
                        (sat & (w > 0)).all(axis=0) & observed)


def mle_grid(phi_max=MLE_PHI_MAX, points=MLE_POINTS):
    return np.linspace(0.0, phi_max, points)


def log_likelihood(counts, enabled, schedule, grid):
    """Log-likelihood of bracket counts on a flux grid, up to a constant."""
    ll = np.zeros_like(grid)
    for i, (T, W) in enumerate(zip(schedule.times, schedule.repeats)):
        if not enabled[i]:
            continue
        b = int(counts[i])
        if b < W:
            ll = ll - (W - b) * grid * T
        if b > 0:
            with np.errstate(divide="ignore"):
                ll = ll + b * np.log(-np.expm1(-grid * T))
    return ll


def mle_flux(observation, schedule, phi_max=MLE_PHI_MAX, points=MLE_POINTS):
    """Grid-search maximum-likelihood flux; ties go to the smaller flux."""
    counts = np.asarray(observation.counts).ravel()
    enabled = np.asarray(observation.enabled).ravel()
    if len(counts) != schedule.n_cycles:
        raise ValueError("observation does not match schedule")
    if not enabled.any():
        raise ValueError("every cycle was inhibited; flux is unobservable")
    grid = mle_grid(phi_max, points)
    ll = log_likelihood(counts, enabled, schedule, grid)
    return float(grid[int(np.argmax(ll))])


def reachable_observations(schedule):
    """All (counts, enabled) pairs the look-ahead policy can produce, via its decision tree."""
    out = []

    def walk(i, counts, enabled):
        if i == schedule.n_cycles:
            out.append((tuple(counts), tuple(enabled)))
            return
        d = schedule.threshold(i)
        for b in range(schedule.repeats[i] + 1):
            if d is not None and b >= d:
                rest = schedule.n_cycles - i - 1
                out.append((tuple(counts + [b] + [0] * rest), tuple(enabled + [True] + [False] * rest)))
            else:
                walk(i + 1, counts + [b], enabled + [True])

    walk(0, [], [])
    return out


def brute_force_observations(schedule):
    """Observation set from every binary arrival pattern of one pass (2^L scan)."""
    L = schedule.pass_length
    if L > 20:
        raise ValueError("pass too long for exhaustive enumeration")
    cyc = schedule.frame_cycles()
    found = set()
    for bits in itertools.product((0, 1), repeat=L):
        counts = [0] * schedule.n_cycles
        enabled = [False] * schedule.n_cycles
        live = True
        for i in range(schedule.n_cycles):
            if not live:
                break
            enabled[i] = True
            counts[i] = sum(b for b, c in zip(bits, cyc) if c == i)
            d = schedule.threshold(i)
            if d is not None and counts[i] >= d:
                live = False
        found.add((tuple(counts), tuple(enabled)))
    return found


def build_lut(schedule, phi_max=MLE_PHI_MAX, points=MLE_POINTS):
    """Map every reachable observation to its MLE flux."""
    if schedule.n_cycles > 16:
        raise ValueError("look-up tables are limited to 16 cycles")
    lut = {}
    for counts, enabled in reachable_observations(schedule):
        obs = BracketObservation(np.array(counts), np.array(enabled))
        lut[(counts, enabled)] = mle_flux(obs, schedule, phi_max, points)
    return lut


def encode_observation(counts, enabled):
    """Dot-separated per-cycle tokens: the detection count, or ``x`` if inhibited."""
    return ".".join(str(int(c)) if e else "x" for c, e in zip(counts, enabled))


def decode_observation(code):
    toks = code.split(".")
    enabled = tuple(t != "x" for t in toks)
    counts = tuple(0 if t == "x" else int(t) for t in toks)
    return counts, enabled


def write_lut_csv(lut, schedule, path):
    with open(path, "w", newline="") as fh:
        fh.write("# observation_code: per-cycle detection counts joined by '.', 'x' = cycle inhibited\n")
        fh.write(f"# cycle times: {' '.join(f'{t:g}' for t in schedule.times)}\n")
        fh.write(f"# cycle repeats: {' '.join(str(w) for w in schedule.repeats)}\n")
        thr = schedule.thresholds or ()
        fh.write(f"# thresholds: {' '.join('-' if d is None else str(d) for d in thr)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["observation_code", "flux_estimate"])
        for (counts, enabled), flux in sorted(lut.items()):
            w.writerow([encode_observation(counts, enabled), repr(float(flux))])


def read_lut_csv(path):
    lut = {}
    with open(path) as fh:
        rows = [line for line in fh if not line.startswith("#")]
    for row in csv.DictReader(rows):
        lut[decode_observation(row["observation_code"])] = float(row["flux_estimate"])
    return lut
