"""Detection, measurement and inhibition accounting plus the avalanche-energy model.

Some published tables write the inhibition pattern with "disabled = 1".  Here
``mask`` is always 1 for enabled, so their ``W = sum(1 - M)`` becomes
``W = sum(mask)`` and ``I = Y * M`` becomes ``I = Y * (1 - mask)``.
"""
import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

# Rough published estimates, overridable by config.
AVALANCHE_ENERGY_J = 11.6e-12
COMPUTE_POWER_W = 729e-9
FRAME_PERIOD_S = 10e-6

REPORT_COLUMNS = ("run_id", "policy", "eta", "tau_h", "frames", "D_per_pix", "W_frac", "I_F",
                  "avalanche_J", "compute_J", "ssim", "mse", "snr_h_db")


@dataclass
class Tally:
    """Per-pixel counts over the frames seen so far.

    ``D`` detections, ``W`` enabled frames (measurements), ``I`` arrivals on
    disabled frames (``I_mask``), ``A`` arrivals on the Bernoulli tape.  When a
    Poisson tape is supplied, ``K`` counts every photon and ``I_clock`` the
    extra photons swallowed by clocked recharge on enabled frames.
    """

    D: np.ndarray
    W: np.ndarray
    I: np.ndarray
    A: np.ndarray
    K: np.ndarray
    I_clock: np.ndarray
    n_frames: int = 0

    @classmethod
    def zeros(cls, shape):
        z = lambda: np.zeros(shape, dtype=np.int64)  # noqa: E731
        return cls(z(), z(), z(), z(), z(), z(), 0)

    @property
    def shape(self):
        return self.D.shape

    @property
    def D_T(self):
        return int(self.D.sum())

    @property
    def W_T(self):
        return int(self.W.sum())

    @property
    def I_T(self):
        return int(self.I.sum())

    @property
    def I_F(self):
        a = self.A.sum()
        return float(self.I.sum() / a) if a else 0.0

    @property
    def I_mask(self):
        return self.I

    def copy(self):
        return Tally(self.D.copy(), self.W.copy(), self.I.copy(), self.A.copy(), self.K.copy(),
                     self.I_clock.copy(), self.n_frames)


def accumulate(tally, frame, mask, arrivals=None, counts=None):
    """Add one frame: W += mask, D += frame, I += arrivals * (1 - mask).

    ``counts`` (Poisson photon numbers, consistent with ``arrivals``) feeds the
    clocked-recharge loss ``I_clock += mask * max(K - 1, 0)``.
    """
    frame = np.asarray(frame, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if frame.shape != tally.shape or mask.shape != tally.shape:
        raise ValueError("frame/mask shape does not match tally")
    if np.any(frame & ~mask):
        raise ValueError("detection on a disabled pixel")
    tally.W += mask
    tally.D += frame
    if counts is not None:
        counts = np.asarray(counts)
        if counts.shape != tally.shape:
            raise ValueError("count tape shape does not match tally")
        if arrivals is None:
            arrivals = counts > 0
        tally.K += counts
        tally.I_clock += np.where(mask, np.maximum(counts - 1, 0), 0)
    if arrivals is not None:
        arrivals = np.asarray(arrivals, dtype=bool)
        if arrivals.shape != tally.shape:
            raise ValueError("arrival tape shape does not match tally")
        tally.A += arrivals
        tally.I += arrivals & ~mask
    tally.n_frames += 1
    return tally


@dataclass(frozen=True)
class EnergyModel:
    e_avalanche: float = AVALANCHE_ENERGY_J
    p_compute: float = COMPUTE_POWER_W
    pixels: int = 1

    def __post_init__(self):
        if self.e_avalanche < 0 or self.p_compute < 0 or self.pixels < 0:
            raise ValueError("energy model parameters must be non-negative")


def avalanche_power(rate, model=EnergyModel()):
    """Avalanche power in watts for ``rate`` detections per second."""
    rate = np.asarray(rate, dtype=float)
    if np.any(rate < 0):
        raise ValueError("detection rate must be >= 0")
    return rate * model.e_avalanche


def break_even(model=EnergyModel()):
    """Detections per second a pixel must avoid to pay for its policy compute."""
    if model.e_avalanche == 0:
        raise ZeroDivisionError("break-even undefined for zero avalanche energy")
    return model.p_compute / model.e_avalanche


@dataclass
class RunReport:
    run_id: str
    policy: str
    eta: object
    tau_h: object
    frames: int
    D_per_pix: float
    W_frac: float
    I_F: float
    avalanche_J: float
    compute_J: float
    ssim: float = float("nan")
    mse: float = float("nan")
    snr_h_db: float = float("nan")
    extra: dict = field(default_factory=dict)

    def row(self):
        return [_fmt(getattr(self, c)) for c in REPORT_COLUMNS]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    return str(v)


def report(tally, model=EnergyModel(), quality=None, *, run_id="run", policy="none", eta=None,
           tau_h=None, frame_period=FRAME_PERIOD_S, computes=True, baseline=None):
    """Summarize a finished run.

    Parameters
    ----------
    tally : Tally
    model : EnergyModel
        ``pixels`` is ignored; the pixel count comes from the tally.
    quality : dict, optional
        ``ssim``, ``mse`` and ``snr_h_db`` values to attach.
    computes : bool
        Whether the policy runs always-on in-pixel compute (adds ``compute_J``).
    baseline : Tally, optional
        If given, ``extra['net_delta_J']`` is the avalanche energy saved
        relative to it minus the compute cost (positive = net saving).
    """
    rep = report_totals(tally.D_T, tally.W_T, tally.I_T, int(tally.A.sum()), int(np.prod(tally.shape)),
                        tally.n_frames, model, quality, run_id=run_id, policy=policy, eta=eta,
                        tau_h=tau_h, frame_period=frame_period, computes=computes,
                        baseline_D=None if baseline is None else baseline.D_T)
    rep.extra["I_clock"] = int(tally.I_clock.sum())
    return rep


def report_totals(D_T, W_T, I_T, A_T, pixels, frames, model=EnergyModel(), quality=None, *, run_id="run",
                  policy="none", eta=None, tau_h=None, frame_period=FRAME_PERIOD_S, computes=True,
                  baseline_D=None):
    """Report row from run totals (used for intermediate frame checkpoints)."""
    quality = quality or {}
    compute = model.p_compute * pixels * frames * frame_period if computes else 0.0
    rep = RunReport(
        run_id=run_id, policy=policy, eta=eta, tau_h=tau_h, frames=frames,
        D_per_pix=D_T / pixels, W_frac=W_T / (pixels * frames) if frames else 0.0,
        I_F=float(I_T / A_T) if A_T else 0.0, avalanche_J=D_T * model.e_avalanche, compute_J=compute,
        ssim=quality.get("ssim", float("nan")), mse=quality.get("mse", float("nan")),
        snr_h_db=quality.get("snr_h_db", float("nan")),
    )
    rep.extra["I_mask"] = int(I_T)
    rep.extra["I_clock"] = 0
    rep.extra["energy_note"] = "energy defaults are published estimates, not measurements"
    if baseline_D is not None:
        rep.extra["net_delta_J"] = (baseline_D - D_T) * model.e_avalanche - compute
    return rep


def reports_to_csv(reports, path=None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in reports:
        w.writerow(r.row())
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def report_to_json(rep):
    d = asdict(rep)
    return json.dumps(d, sort_keys=True, default=float)
