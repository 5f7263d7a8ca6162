"""Energy-aware SNR metrics and image-quality measures for rate images."""
import csv
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

# Curve emission stays inside this range to avoid under/overflow.
H_MIN = 1e-6
H_MAX = 50.0

SSIM_WINDOW = 8
SSIM_K1 = 0.01
SSIM_K2 = 0.03

CURVE_COLUMNS = ("H", "Y", "snr_h_db", "det_eff", "meas_eff", "entropy_eff")


def _positive(H):
    H = np.asarray(H, dtype=float)
    if np.any(~(H > 0)):
        raise ValueError("exposure H must be > 0")
    return H


def snr_h(H, W):
    """Exposure-referred SNR, ``H * sqrt(W / (exp(H) - 1))``; zero when W = 0."""
    H = _positive(H)
    W = np.asarray(W, dtype=float)
    if np.any(W < 0):
        raise ValueError("measurement count must be >= 0")
    with np.errstate(over="ignore"):
        return H * np.sqrt(W / np.expm1(H))


def snr_h_db(H, W):
    with np.errstate(divide="ignore"):
        return 20.0 * np.log10(snr_h(H, W))


def detection_efficiency(H):
    """SNR_H^2 per expected detection: H^2 e^-H / (1 - e^-H)^2, bounded by 1."""
    H = _positive(H)
    y = -np.expm1(-H)
    return H * H * np.exp(-H) / (y * y)


def measurement_efficiency(H):
    """SNR_H^2 per measurement: H^2 e^-H / (1 - e^-H). Peaks at H ~ 1.594."""
    H = _positive(H)
    return H * H * np.exp(-H) / -np.expm1(-H)


def entropy_rate(Y):
    """Binary entropy in bits, with 0 log 0 := 0."""
    Y = np.asarray(Y, dtype=float)
    if np.any((Y < 0) | (Y > 1)):
        raise ValueError("rate must lie in [0, 1]")
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(Y > 0, -Y * np.log2(np.where(Y > 0, Y, 1.0)), 0.0)
        b = np.where(Y < 1, -(1 - Y) * np.log2(np.where(Y < 1, 1 - Y, 1.0)), 0.0)
    return a + b


def entropy_efficiency(Y):
    """Entropy detection efficiency S(Y)^2 / Y (zero at Y = 0)."""
    Y = np.asarray(Y, dtype=float)
    s = entropy_rate(Y)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(Y > 0, s * s / np.where(Y > 0, Y, 1.0), 0.0)


@dataclass
class MetricCurve:
    abscissa: np.ndarray
    ordinate: np.ndarray
    metric_id: str

    def __post_init__(self):
        self.abscissa = np.asarray(self.abscissa, dtype=float)
        self.ordinate = np.asarray(self.ordinate, dtype=float)
        if np.any(np.diff(self.abscissa) <= 0):
            raise ValueError("abscissa must be strictly increasing")


METRICS = {
    "snr_h": lambda H, W: snr_h(H, W),
    "snr_h_db": lambda H, W: snr_h_db(H, W),
    "det_eff": lambda H, W: detection_efficiency(H),
    "meas_eff": lambda H, W: measurement_efficiency(H),
    "entropy_eff": lambda H, W: entropy_efficiency(-np.expm1(-H)),
}


def exposure_grid(points=1001, h_min=H_MIN, h_max=H_MAX):
    if not (H_MIN <= h_min < h_max <= H_MAX) or points < 2:
        raise ValueError(f"grid must satisfy {H_MIN} <= h_min < h_max <= {H_MAX}, points >= 2")
    return np.geomspace(h_min, h_max, points)


def metric_curve(metric_id, H, W=100):
    if metric_id not in METRICS:
        raise KeyError(f"unknown metric {metric_id!r}")
    H = np.asarray(H, dtype=float)
    return MetricCurve(H, METRICS[metric_id](H, W), metric_id)


def curve_table(H, W=100):
    """Rows of (H, Y, snr_h_db, det_eff, meas_eff, entropy_eff)."""
    H = np.asarray(H, dtype=float)
    Y = -np.expm1(-H)
    cols = [H, Y, snr_h_db(H, W), detection_efficiency(H), measurement_efficiency(H), entropy_efficiency(Y)]
    return np.column_stack(cols)


def write_curve_csv(path, H, W=100):
    table = curve_table(H, W)
    with open(path, "w", newline="") as fh:
        fh.write(f"# H grid limited to [{H_MIN:g}, {H_MAX:g}]; W = {W:g} measurements for snr_h_db\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for row in table:
            w.writerow([f"{v:.10g}" for v in row])
    return table


def mse(estimate, reference):
    a = np.asarray(estimate, dtype=float)
    b = np.asarray(reference, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def _window_mean(x, win):
    # mean over every valid win x win window (stride 1) via a summed-area table
    c = np.pad(np.cumsum(np.cumsum(x, axis=0), axis=1), ((1, 0), (1, 0)))
    s = c[win:, win:] - c[:-win, win:] - c[win:, :-win] + c[:-win, :-win]
    return s / (win * win)


def ssim_map(estimate, reference, win=SSIM_WINDOW, data_range=1.0):
    """Local SSIM over every valid ``win x win`` uniform window.

    Uses sample (N-1) covariances and C1 = (0.01 L)^2, C2 = (0.03 L)^2.
    """
    x = np.asarray(estimate, dtype=float)
    y = np.asarray(reference, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    if x.ndim != 2 or min(x.shape) < win:
        raise ValueError(f"image smaller than the {win}x{win} SSIM window")
    n = win * win
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mx = _window_mean(x, win)
    my = _window_mean(y, win)
    cov_norm = n / (n - 1.0)
    vx = cov_norm * (_window_mean(x * x, win) - mx * mx)
    vy = cov_norm * (_window_mean(y * y, win) - my * my)
    vxy = cov_norm * (_window_mean(x * y, win) - mx * my)
    num = (2 * mx * my + c1) * (2 * vxy + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    return num / den


def ssim(estimate, reference, win=SSIM_WINDOW, data_range=1.0):
    return float(np.mean(ssim_map(estimate, reference, win, data_range)))


SSIM_CONFIG = {"window": f"{SSIM_WINDOW}x{SSIM_WINDOW} uniform", "stride": 1,
               "K1": SSIM_K1, "K2": SSIM_K2, "data_range": 1.0, "covariance": "sample"}


def sobel_magnitude(image):
    """3x3 Sobel gradient magnitude (zero-padded border)."""
    image = np.asarray(image, dtype=float)
    gx = ndimage.sobel(image, axis=1, mode="constant")
    gy = ndimage.sobel(image, axis=0, mode="constant")
    return np.hypot(gx, gy)


def _offsets(tol):
    # Chebyshev rings in increasing distance, row-major inside each ring
    out = []
    for d in range(tol + 1):
        for dy in range(-d, d + 1):
            for dx in range(-d, d + 1):
                if max(abs(dy), abs(dx)) == d:
                    out.append((dy, dx))
    return out


def match_edges(pred_edges, gt_edges, tol):
    """Greedy one-to-one matching within Chebyshev radius ``tol``.

    Candidate pairs are consumed ring by ring (distance 0 first, then 1, ...),
    offsets in row-major order inside a ring; each pixel is matched at most once.
    Returns (matched_pred, matched_gt) boolean maps.
    """
    p = np.asarray(pred_edges, dtype=bool)
    g = np.asarray(gt_edges, dtype=bool)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
    if tol < 0:
        raise ValueError("tolerance must be >= 0")
    h, w = p.shape
    free_p = p.copy()
    free_g = g.copy()
    for dy, dx in _offsets(int(tol)):
        # pred at (y, x) pairs with gt at (y + dy, x + dx)
        ys = slice(max(0, -dy), min(h, h - dy))
        xs = slice(max(0, -dx), min(w, w - dx))
        ys_g = slice(ys.start + dy, ys.stop + dy)
        xs_g = slice(xs.start + dx, xs.stop + dx)
        hit = free_p[ys, xs] & free_g[ys_g, xs_g]
        if hit.any():
            free_p[ys, xs] &= ~hit
            free_g[ys_g, xs_g] &= ~hit
    return p & ~free_p, g & ~free_g


def boundary_fscore(pred_edges, gt_edges, tol=2):
    """(precision, recall, F) of predicted edge pixels against ground truth."""
    mp, mg = match_edges(pred_edges, gt_edges, tol)
    n_pred = int(np.count_nonzero(pred_edges))
    n_gt = int(np.count_nonzero(gt_edges))
    precision = mp.sum() / n_pred if n_pred else 0.0
    recall = mg.sum() / n_gt if n_gt else 0.0
    f = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return float(precision), float(recall), float(f)


def best_threshold_fscore(rate_image, gt_edges, thresholds=None, tol=2):
    """Sobel edges on a rate image, best F over a threshold sweep.

    Returns (F, threshold, precision, recall).
    """
    mag = sobel_magnitude(rate_image)
    if thresholds is None:
        top = mag.max()
        thresholds = np.linspace(0.05, 0.95, 19) * top if top > 0 else [0.0]
    best = (0.0, float("nan"), 0.0, 0.0)
    for th in thresholds:
        pr, rc, f = boundary_fscore(mag > th, gt_edges, tol)
        if f > best[0]:
            best = (f, float(th), pr, rc)
    return best
