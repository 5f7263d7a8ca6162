"""Streaming inhibition policies.

After every frame a policy turns the photon history into the next frame's
enable mask.  Score policies filter the ternary history
``(2F - 1) * M`` (+1 detection, -1 enabled without detection, 0 disabled) with
a separable kernel and disable a pixel for ``tau_h`` frames when the score
exceeds ``eta``.

Holdoff counts exactly ``tau_h`` frames: a pixel triggered after frame t is
disabled for frames t+1 .. t+tau_h.  Disabled pixels are not scored, so a
countdown is never extended.
"""
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .bracketing import BracketSchedule
from .model import ExposureSchedule, FluxImage, PhotonCube
from .rng import RngSpec, bernoulli_from_uniform, poisson_from_uniform
from .tally import Tally, accumulate

KINDS = ("none", "clocked_recharge", "subsample", "deadtime", "score", "edge_compound",
         "saturation_lookahead")


def _is_pow2_or_zero(v):
    v = abs(int(v))
    return v == 0 or (v & (v - 1)) == 0


@dataclass(frozen=True)
class ScoreKernel:
    """Separable integer kernel: ``spatial`` (odd L x H) times ``temporal`` (lag 0 first)."""

    spatial: np.ndarray
    temporal: tuple = (1, 1, 1, 1)

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.spatial))
        if not np.issubdtype(s.dtype, np.integer):
            if not np.all(s == np.round(s)):
                raise ValueError("kernel weights must be integers")
            s = s.astype(np.int64)
        if s.ndim != 2 or s.shape[0] % 2 == 0 or s.shape[1] % 2 == 0:
            raise ValueError("spatial kernel must be 2-D with odd dimensions")
        tk = tuple(int(v) for v in np.ravel(self.temporal))
        if not tk:
            raise ValueError("temporal kernel must be non-empty")
        for v in list(s.ravel()) + list(tk):
            if not _is_pow2_or_zero(v):
                raise ValueError(f"kernel weight {v} is not 0 or +/- a power of two")
        s = s.astype(np.int64)
        s.setflags(write=False)
        object.__setattr__(self, "spatial", s)
        object.__setattr__(self, "temporal", tk)

    @property
    def depth(self):
        return len(self.temporal)

    def __eq__(self, other):
        return (isinstance(other, ScoreKernel) and self.temporal == other.temporal
                and np.array_equal(self.spatial, other.spatial))

    def __hash__(self):
        return hash((self.spatial.tobytes(), self.spatial.shape, self.temporal))


CENTER_RING = np.array([[1, 1, 1], [1, 8, 1], [1, 1, 1]])
LAPLACIAN = np.array([[1, 1, 1], [1, -8, 1], [1, 1, 1]])
AVERAGE = np.ones((3, 3), dtype=int)
SINGLE = np.array([[0, 0, 0], [0, 1, 0], [0, 0, 0]])
TEMPORAL_4 = (1, 1, 1, 1)


@dataclass(frozen=True)
class PolicySpec:
    """A policy kind plus its tuning parameters.

    ``etas`` holds the edge-compound thresholds (eta1, eta2, eta3, eta4); a
    ``None`` for eta3 drops the brightness gate and a ``None`` for eta4 drops
    the excess-brightness rule, which gives the Laplacian-only policy.
    """

    kind: str = "none"
    kernel: ScoreKernel = None
    eta: int = None
    tau_h: int = None
    n: int = None
    tau_d: int = None
    etas: tuple = None
    bracket: BracketSchedule = None
    name: str = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind == "score":
            if self.kernel is None or self.eta is None or self.tau_h is None:
                raise ValueError("score policy needs kernel, eta and tau_h")
            if int(self.eta) != self.eta:
                raise ValueError("eta must be an integer")
            if self.tau_h < 1:
                raise ValueError("tau_h must be >= 1")
        elif self.kind == "edge_compound":
            if self.etas is None or len(self.etas) != 4 or self.tau_h is None:
                raise ValueError("edge_compound needs four thresholds and tau_h")
            if not self.etas[0] < self.etas[1]:
                raise ValueError("edge_compound needs eta1 < eta2")
            if self.tau_h < 1:
                raise ValueError("tau_h must be >= 1")
        elif self.kind == "subsample":
            if self.n is None or self.n < 1:
                raise ValueError("subsample needs n >= 1")
        elif self.kind == "deadtime":
            if self.tau_d is None or self.tau_d < 0:
                raise ValueError("deadtime needs tau_d >= 0")
        elif self.kind == "saturation_lookahead":
            if self.bracket is None:
                raise ValueError("saturation_lookahead needs a bracket schedule")

    @property
    def label(self):
        return self.name or self.kind

    @property
    def computes(self):
        """True if the policy needs always-on in-pixel arithmetic."""
        return self.kind in ("score", "edge_compound", "saturation_lookahead")

    @property
    def depth(self):
        if self.kind == "score":
            return self.kernel.depth
        if self.kind == "edge_compound":
            return len(TEMPORAL_4)
        return 0

    def with_params(self, **kw):
        return replace(self, **kw)


def score_policy(spatial, eta, tau_h, temporal=TEMPORAL_4, name=None):
    return PolicySpec("score", ScoreKernel(spatial, temporal), eta=eta, tau_h=tau_h, name=name)


def edge_compound(eta1=-12, eta2=12, eta3=4, eta4=16, tau_h=16, name=None):
    return PolicySpec("edge_compound", etas=(eta1, eta2, eta3, eta4), tau_h=tau_h, name=name)


PRESETS = {
    # exposure-bracket presets
    "P_cr": score_policy(CENTER_RING, 12, 32, name="P_cr"),
    "P_L": score_policy(LAPLACIAN, 24, 4, name="P_L"),
    "P_avg": score_policy(AVERAGE, 6, 32, name="P_avg"),
    "P_s": score_policy(SINGLE, 2, 32, name="P_s"),
    # single-exposure presets
    "P_cr'": score_policy(CENTER_RING, 12, 4, name="P_cr'"),
    "P_L'": score_policy(LAPLACIAN, 24, 4, name="P_L'"),
    "P_avg'": score_policy(AVERAGE, 12, 4, name="P_avg'"),
    "P_s'": score_policy(SINGLE, 2, 8, name="P_s'"),
    # edge detection
    "P_edge": edge_compound(name="P_edge"),
    "P_lap_only": edge_compound(-12, 12, None, None, 16, name="P_lap_only"),
    "none": PolicySpec("none", name="none"),
    "clocked_recharge": PolicySpec("clocked_recharge", name="clocked_recharge"),
}


def preset(name):
    key = name.replace("_prime", "'")
    if key not in PRESETS:
        raise KeyError(f"unknown policy preset {name!r}; known: {', '.join(PRESETS)}")
    return PRESETS[key]


@dataclass
class PolicyState:
    """Mutable per-run policy state.

    ``history[k]`` holds the ternary frame at lag ``(pos - k) % depth``.
    ``countdown`` is the number of frames a pixel stays disabled.
    """

    shape: tuple
    depth: int
    history: np.ndarray = field(repr=False, default=None)
    pos: int = -1
    countdown: np.ndarray = field(repr=False, default=None)
    t: int = 0
    cycle_counts: np.ndarray = field(repr=False, default=None)
    blocked: np.ndarray = field(repr=False, default=None)

    @property
    def mask(self):
        return self.countdown == 0

    def lag(self, k):
        if self.depth == 0 or self.pos < 0:
            return np.zeros(self.shape, dtype=np.int8)
        return self.history[(self.pos - k) % self.depth]


def init_state(policy, shape):
    """Fresh state with every pixel enabled and a zeroed history."""
    shape = tuple(shape)
    depth = policy.depth
    st = PolicyState(shape, depth)
    st.history = np.zeros((depth,) + shape, dtype=np.int8)
    st.countdown = np.zeros(shape, dtype=np.int32)
    if policy.kind == "saturation_lookahead":
        st.cycle_counts = np.zeros(shape, dtype=np.int32)
        st.blocked = np.zeros(shape, dtype=bool)
    return st


def ternary(frame, mask):
    """(2F - 1) * M as int8: +1 detection, -1 silent measurement, 0 disabled."""
    frame = np.asarray(frame, dtype=np.int8)
    mask = np.asarray(mask, dtype=np.int8)
    return (2 * frame - 1) * mask


def temporal_sum(state, temporal):
    acc = np.zeros(state.shape, dtype=np.int32)
    for k, wk in enumerate(temporal):
        if wk:
            acc += wk * state.lag(k).astype(np.int32)
    return acc


def spatial_filter(values, spatial):
    """Zero-padded correlation, S(i,j) = sum K(dy,dx) v(i+dy, j+dx)."""
    return ndimage.correlate(values.astype(np.int32), np.asarray(spatial, dtype=np.int32),
                             mode="constant", cval=0)


def inhibition_score(state, kernel):
    """Integer score per pixel from the buffered ternary history."""
    if kernel.depth > state.depth:
        raise ValueError("state history shorter than the temporal kernel")
    return spatial_filter(temporal_sum(state, kernel.temporal), kernel.spatial)


def edge_compound_decision(s1, s2, etas):
    """((eta1 < S1 < eta2) and (S2 > eta3)) or (S2 > eta4)."""
    e1, e2, e3, e4 = etas
    s1 = np.asarray(s1)
    s2 = np.asarray(s2)
    flat = (s1 > e1) & (s1 < e2)
    if e3 is not None:
        flat = flat & (s2 > e3)
    if e4 is not None:
        flat = flat | (s2 > e4)
    return flat


def _push(state, frame, mask):
    if state.depth:
        state.pos = (state.pos + 1) % state.depth
        state.history[state.pos] = ternary(frame, mask)


def _holdoff(state, was_enabled, trigger, length):
    # countdowns of pixels that sat out this frame tick down; newly triggered ones start
    state.countdown = np.where(was_enabled, state.countdown, np.maximum(state.countdown - 1, 0))
    state.countdown = np.where(was_enabled & trigger, length, state.countdown).astype(np.int32)


def step(policy, state, frame_t, mask_t):
    """Consume frame t (and the mask it was taken under), return the mask for t+1."""
    if state is None or state.countdown is None:
        raise ValueError("policy state is not initialized")
    frame_t = np.asarray(frame_t, dtype=bool)
    mask_t = np.asarray(mask_t, dtype=bool)
    if frame_t.shape != state.shape or mask_t.shape != state.shape:
        raise ValueError("frame/mask shape does not match policy state")
    kind = policy.kind
    _push(state, frame_t, mask_t)
    nxt = state.t + 1
    if kind in ("none", "clocked_recharge"):
        pass
    elif kind == "subsample":
        on = nxt % policy.n == 0
        state.countdown = np.full(state.shape, 0 if on else 1, dtype=np.int32)
    elif kind == "deadtime":
        _holdoff(state, mask_t, frame_t, policy.tau_d)
    elif kind == "score":
        s = inhibition_score(state, policy.kernel)
        _holdoff(state, mask_t, s > policy.eta, policy.tau_h)
    elif kind == "edge_compound":
        tsum = temporal_sum(state, TEMPORAL_4)
        s1 = spatial_filter(tsum, LAPLACIAN)
        s2 = spatial_filter(tsum, AVERAGE)
        _holdoff(state, mask_t, edge_compound_decision(s1, s2, policy.etas), policy.tau_h)
    elif kind == "saturation_lookahead":
        _lookahead_step(policy.bracket, state, frame_t)
    state.t = nxt
    return state.mask.copy()


def _lookahead_step(bracket, state, frame_t):
    L = bracket.pass_length
    pos = state.t % L
    cyc = bracket.frame_cycles()
    ends = bracket.cycle_end_frames()
    i = int(cyc[pos])
    state.cycle_counts += frame_t
    if pos == ends[i]:
        d = bracket.threshold(i)
        if d is not None:
            state.blocked |= state.cycle_counts >= d
        state.cycle_counts[:] = 0
    if pos == L - 1:
        state.blocked[:] = False
    state.countdown = state.blocked.astype(np.int32)


@dataclass
class PolicyRun:
    """Output of :func:`run_policy`.

    ``trace`` holds cumulative totals after every frame (``D``, ``W``, ``I``,
    ``A``), so any detections-per-pixel operating point can be read off.
    """

    cube: PhotonCube
    tally: Tally
    trace: dict
    policy: PolicySpec
    schedule: ExposureSchedule
    arrivals: np.ndarray = None

    def cumulative_counts(self, n):
        """Per-pixel detections and measurements over the first ``n`` frames."""
        return self.cube.frames[:n].sum(axis=0), self.cube.mask[:n].sum(axis=0)


def run_policy(flux, schedule, policy, rng=RngSpec(0), *, poisson_tape=False, keep_arrivals=False):
    """Stream frames through the sampler and the policy.

    Arrivals come from the counter-based tape, so any two runs with the same
    ``rng`` see identical photons and differ only in their masks.
    """
    phi = flux.flux if isinstance(flux, FluxImage) else FluxImage(flux).flux
    if not isinstance(schedule, ExposureSchedule):
        schedule = ExposureSchedule(schedule)
    shape = phi.shape
    n = len(schedule)
    state = init_state(policy, shape)
    tally = Tally.zeros(shape)
    frames = np.empty((n,) + shape, dtype=bool)
    masks = np.empty((n,) + shape, dtype=bool)
    arrivals_cube = np.empty((n,) + shape, dtype=bool) if keep_arrivals else None
    trace = {k: np.empty(n, dtype=np.int64) for k in ("D", "W", "I", "A")}
    mask = state.mask.copy()
    for t in range(n):
        H = phi * schedule[t]
        u = rng.frame_uniforms(shape, t)
        arr = bernoulli_from_uniform(u, H)
        counts = poisson_from_uniform(u, H) if poisson_tape else None
        frame = arr & mask
        frames[t] = frame
        masks[t] = mask
        if keep_arrivals:
            arrivals_cube[t] = arr
        accumulate(tally, frame, mask, arr, counts)
        trace["D"][t] = tally.D_T
        trace["W"][t] = tally.W_T
        trace["I"][t] = tally.I_T
        trace["A"][t] = int(tally.A.sum())
        mask = step(policy, state, frame, mask)
    return PolicyRun(PhotonCube(frames, masks), tally, trace, policy, schedule, arrivals_cube)
