"""Oracle measurement allocation under a total-detection budget.

Minimizing ``sum_i E_i / W_i`` subject to ``sum_i Y_i W_i = D_T`` gives
``W_i = D_T sqrt(E_i / Y_i) / sum_j Y_j sqrt(E_j / Y_j)``.  The per-pixel loss
``E_i`` picks the flavour of error being minimized.
"""
from dataclasses import dataclass

import numpy as np

from .rng import STREAM_NOISE, RngSpec, normal_from_uniform

Y_MIN = 0.01
Y_MAX = 0.99
LOSSES = ("binomial_mse", "exposure_mse", "relative_exposure_mse", "snr_tracker")


@dataclass(frozen=True)
class AllocationProblem:
    rates: np.ndarray
    budget: float
    loss: str = "binomial_mse"
    k: int = 2

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.loss == "snr_tracker" and self.k not in (1, 2):
            raise ValueError("snr_tracker exponent must be 1 or 2")
        if not self.budget > 0:
            raise ValueError("detection budget must be > 0")
        rates = np.asarray(self.rates, dtype=float)
        if rates.size == 0 or np.any(~np.isfinite(rates)):
            raise ValueError("rates must be finite and non-empty")
        if np.all(rates <= 0):
            raise ValueError("all rates are zero; nothing to allocate")
        object.__setattr__(self, "rates", np.clip(rates, Y_MIN, Y_MAX))

    @property
    def exposures(self):
        return -np.log1p(-self.rates)


def per_pixel_loss(Y, loss="binomial_mse", k=2):
    """Loss E_i that averaging W_i measurements divides down."""
    Y = np.asarray(Y, dtype=float)
    H = -np.log1p(-Y)
    if loss == "binomial_mse":
        return Y * (1 - Y)
    if loss == "exposure_mse":
        return Y / (1 - Y)
    if loss == "relative_exposure_mse":
        return Y / (H * H * (1 - Y))
    if loss == "snr_tracker":
        snr_hw = H * np.sqrt((1 - Y) / Y)
        return snr_hw ** (2 * k) / Y
    raise ValueError(f"unknown loss {loss!r}")


def allocation_weight(Y, loss="binomial_mse", k=2):
    """Unnormalized optimal W_i for each loss, in closed form."""
    Y = np.asarray(Y, dtype=float)
    H = -np.log1p(-Y)
    if loss == "binomial_mse":
        return np.sqrt(1 - Y)
    if loss == "exposure_mse":
        return 1 / np.sqrt(1 - Y)
    if loss == "relative_exposure_mse":
        return 1 / (H * np.sqrt(1 - Y))
    if loss == "snr_tracker":
        return (H * np.sqrt((1 - Y) / Y)) ** k / Y
    raise ValueError(f"unknown loss {loss!r}")


def _normalize(weight, Y, budget):
    return budget * weight / np.sum(Y * weight)


def optimal_allocation(problem):
    """Real-valued W_i meeting sum(Y_i W_i) = D_T exactly."""
    Y = problem.rates
    return _normalize(allocation_weight(Y, problem.loss, problem.k), Y, problem.budget)


def generalized_allocation(Y, E, budget):
    """W_i proportional to sqrt(E_i / Y_i) for an arbitrary per-pixel loss."""
    Y = np.asarray(Y, dtype=float)
    return _normalize(np.sqrt(np.asarray(E, dtype=float) / Y), Y, budget)


def uniform_allocation(problem):
    Y = problem.rates
    return _normalize(np.ones_like(Y), Y, problem.budget)


def image_loss(problem, W):
    """sum_i E_i / W_i."""
    E = per_pixel_loss(problem.rates, problem.loss, problem.k)
    return float(np.sum(E / np.asarray(W, dtype=float)))


def brute_force_allocation(problem, step=1.0, w_max=None):
    """Exhaustive grid search for tiny problems.

    The first P-1 allocations run over ``step, 2 step, ...``; the last one is
    solved from the budget.  Returns (W, grid_step).
    """
    Y = problem.rates
    P = Y.size
    if P > 5:
        raise ValueError("brute force is limited to 5 pixels")
    if P == 1:
        return np.array([problem.budget / Y[0]]), step
    E = per_pixel_loss(Y, problem.loss, problem.k)
    if w_max is None:
        w_max = problem.budget / Y[:-1]
    w_max = np.broadcast_to(np.asarray(w_max, dtype=float), (P - 1,))
    axes = [np.arange(step, m + step / 2, step) for m in w_max]
    if any(a.size == 0 for a in axes):
        raise ValueError("grid too coarse to satisfy the budget")
    grids = np.meshgrid(*axes, indexing="ij", sparse=True)
    spent = sum(Y[i] * g for i, g in enumerate(grids))
    last = (problem.budget - spent) / Y[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        loss = sum(E[i] / g for i, g in enumerate(grids)) + np.where(last > 0, E[-1] / last, np.inf)
    loss = np.where(last > 0, loss, np.inf)
    if not np.isfinite(loss).any():
        raise ValueError("grid too coarse to satisfy the budget")
    idx = np.unravel_index(int(np.argmin(loss)), loss.shape)
    W = np.array([axes[i][idx[i]] for i in range(P - 1)] + [float(np.broadcast_to(last, loss.shape)[idx])])
    return W, step


def round_half_up(W):
    return np.floor(np.asarray(W, dtype=float) + 0.5)


def oracle_noise_image(reference, W, rng=RngSpec(0, STREAM_NOISE), loss="binomial_mse", fill=None):
    """Reference rates plus Gaussian noise of variance Y(1-Y)/W, clipped to [0, 1].

    ``W`` is rounded half-up first.  Pixels left with zero measurements are set
    to ``fill`` (default: 0 for the binomial loss, the reference maximum for
    exposure-referred losses).  Returns (image, rounded W).
    """
    Y = np.asarray(reference, dtype=float)
    Wr = round_half_up(np.broadcast_to(W, Y.shape))
    if fill is None:
        fill = 0.0 if loss == "binomial_mse" else float(Y.max())
    ii, jj = np.indices(Y.shape) if Y.ndim == 2 else (np.arange(Y.size).reshape(Y.shape), 0)
    z = normal_from_uniform(rng.uniforms(ii, jj, 0))
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma = np.sqrt(Y * (1 - Y) / Wr)
    img = np.where(Wr > 0, np.clip(Y + sigma * z, 0.0, 1.0), fill)
    return img, Wr
