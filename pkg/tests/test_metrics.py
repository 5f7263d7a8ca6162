import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import optimize

from photoninhibit import metrics
from photoninhibit.metrics import (best_threshold_fscore, boundary_fscore, detection_efficiency, entropy_efficiency,
                                   entropy_rate, exposure_grid, measurement_efficiency, mse, snr_h, snr_h_db, ssim)

H_GRID = np.geomspace(1e-4, 40, 400)


# oracles

def ssim_loop(x, y, win=8, L=1.0):
    """Window-by-window SSIM written from the definition (sample covariances)."""
    c1, c2 = (0.01 * L) ** 2, (0.03 * L) ** 2
    vals = []
    for r in range(x.shape[0] - win + 1):
        for c in range(x.shape[1] - win + 1):
            a = x[r:r + win, c:c + win].ravel()
            b = y[r:r + win, c:c + win].ravel()
            ma, mb = a.mean(), b.mean()
            va, vb = a.var(ddof=1), b.var(ddof=1)
            cov = np.cov(a, b, ddof=1)[0, 1]
            vals.append((2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def efficiency_peak():
    # stationary point of H^2 e^-H / (1 - e^-H): H = 2 (1 - e^-H)
    return optimize.brentq(lambda h: h - 2 * (1 - np.exp(-h)), 0.5, 3.0, xtol=1e-14)


# snr_h

def test_snr_h_unit_exposure():
    assert snr_h(1.0, 100) == pytest.approx(np.sqrt(100 / (np.e - 1)), rel=1e-12)
    assert snr_h(1.0, 100) == pytest.approx(7.629, abs=5e-4)
    assert snr_h_db(1.0, 100) == pytest.approx(17.65, abs=5e-3)


def test_snr_h_zero_measurements():
    assert snr_h(1.0, 0) == 0.0


def test_snr_h_rejects_nonpositive_exposure():
    with pytest.raises(ValueError):
        snr_h(0.0, 10)
    with pytest.raises(ValueError):
        detection_efficiency(np.array([1.0, -1.0]))


@given(st.floats(1e-4, 30), st.integers(1, 10**6), st.integers(1, 10**6))
def test_snr_squared_per_measurement_independent_of_w(H, W1, W2):
    assert snr_h(H, W1) ** 2 / W1 == pytest.approx(snr_h(H, W2) ** 2 / W2, rel=1e-12)


def test_snr_squared_per_measurement_is_measurement_efficiency():
    np.testing.assert_allclose(snr_h(H_GRID, 37) ** 2 / 37, measurement_efficiency(H_GRID), rtol=1e-12)


# efficiencies

def test_detection_efficiency_limits():
    assert detection_efficiency(1e-6) == pytest.approx(1.0, abs=1e-5)
    assert detection_efficiency(1.0) == pytest.approx(np.exp(-1) / (1 - np.exp(-1)) ** 2, rel=1e-12)
    # four-digit value of the closed form (a listed 0.9208 is a rounding slip)
    assert detection_efficiency(1.0) == pytest.approx(0.9207, abs=5e-5)


def test_detection_efficiency_strictly_decreasing():
    H = np.geomspace(1e-3, 20, 2000)
    assert np.all(np.diff(detection_efficiency(H)) < 0)


def test_detection_efficiency_in_unit_interval():
    e = detection_efficiency(np.geomspace(1e-6, 50, 500))
    assert np.all((e > 0) & (e <= 1))


def test_measurement_efficiency_peak():
    Hs = efficiency_peak()
    assert Hs == pytest.approx(1.5936, abs=1e-4)
    assert 1 - np.exp(-Hs) == pytest.approx(0.797, abs=1e-3)
    H = np.linspace(1.0, 2.2, 120001)
    assert H[np.argmax(measurement_efficiency(H))] == pytest.approx(Hs, abs=2e-5)


def test_measurement_efficiency_limits():
    assert measurement_efficiency(1e-6) == pytest.approx(1e-6, rel=1e-5)
    assert measurement_efficiency(20.0) == pytest.approx(400 * np.exp(-20), rel=1e-6)
    assert measurement_efficiency(20.0) == pytest.approx(8.2e-7, abs=5e-9)


def test_efficiency_identity():
    lhs = measurement_efficiency(H_GRID)
    rhs = detection_efficiency(H_GRID) * -np.expm1(-H_GRID)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12)


# entropy

def test_entropy_values():
    assert entropy_rate(0.5) == pytest.approx(1.0)
    assert entropy_rate(0.0) == 0.0 and entropy_rate(1.0) == 0.0
    Y = np.linspace(0, 1, 101)
    np.testing.assert_allclose(entropy_rate(Y), entropy_rate(1 - Y), atol=1e-15)
    s = entropy_rate(Y)
    assert np.all((s >= 0) & (s <= 1))
    assert entropy_efficiency(0.0) == 0.0
    assert entropy_efficiency(0.5) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        entropy_rate(1.5)


# curves

def test_curve_csv(tmp_path):
    H = exposure_grid()
    p = tmp_path / "c.csv"
    metrics.write_curve_csv(p, H, 100)
    lines = p.read_text().splitlines()
    assert lines[0].startswith("#")
    rows = list(csv.DictReader(lines[1:]))
    assert tuple(rows[0]) == metrics.CURVE_COLUMNS
    meas = np.array([float(r["meas_eff"]) for r in rows])
    Hc = np.array([float(r["H"]) for r in rows])
    assert abs(Hc[np.argmax(meas)] - 1.59) < 0.03
    assert float(rows[0]["det_eff"]) == pytest.approx(1.0, abs=1e-5)
    det = np.array([float(r["det_eff"]) for r in rows])
    Y = np.array([float(r["Y"]) for r in rows])
    np.testing.assert_allclose(meas, det * Y, rtol=1e-8)


def test_exposure_grid_guards():
    with pytest.raises(ValueError):
        exposure_grid(10, 1e-9, 1.0)
    with pytest.raises(ValueError):
        exposure_grid(10, 1.0, 100.0)
    with pytest.raises(ValueError):
        metrics.MetricCurve([1, 1], [0, 0], "x")
    c = metrics.metric_curve("det_eff", [0.1, 1.0])
    assert c.ordinate[0] > c.ordinate[1]


# mse / ssim

def test_mse_examples():
    a = np.random.default_rng(0).random((5, 5))
    assert mse(a, a) == 0
    assert mse(np.zeros((3, 3)), np.ones((3, 3))) == 1
    assert mse([0.2, 0.6], [0.4, 0.6]) == pytest.approx(0.02)
    with pytest.raises(ValueError):
        mse(np.zeros(2), np.zeros(3))


def test_ssim_matches_loop_oracle():
    rng = np.random.default_rng(3)
    x = rng.random((20, 17))
    y = np.clip(x + 0.1 * rng.standard_normal(x.shape), 0, 1)
    assert ssim(x, y) == pytest.approx(ssim_loop(x, y), rel=1e-10)


def test_ssim_identity_and_anticorrelation():
    rng = np.random.default_rng(4)
    x = rng.random((32, 32))
    assert ssim(x, x) == pytest.approx(1.0)
    checker = (np.indices((32, 32)).sum(axis=0) % 2).astype(float)
    assert ssim(1 - checker, checker) < 0.1


def test_ssim_decreases_with_noise():
    rng = np.random.default_rng(5)
    ref = np.clip(np.add.outer(np.linspace(0.1, 0.9, 64), np.zeros(64)) + 0.2 * (rng.random((64, 64)) > 0.5), 0, 1)
    vals = [ssim(ref + s * rng.standard_normal(ref.shape), ref) for s in (0.02, 0.05, 0.1)]
    assert 0 < vals[1] < 1
    assert vals[0] > vals[1] > vals[2]


@given(st.integers(0, 2**32 - 1))
def test_ssim_symmetric(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.random((10, 12)), rng.random((10, 12))
    assert ssim(x, y) == pytest.approx(ssim(y, x), rel=1e-12)


def test_ssim_too_small():
    with pytest.raises(ValueError):
        ssim(np.zeros((4, 4)), np.zeros((4, 4)))


# edges

def _square(n=64, lo=16, hi=48):
    g = np.zeros((n, n), bool)
    g[lo, lo:hi] = g[hi - 1, lo:hi] = True
    g[lo:hi, lo] = g[lo:hi, hi - 1] = True
    return g


def test_fscore_examples():
    gt = _square()
    assert boundary_fscore(gt, gt)[2] == 1.0
    assert boundary_fscore(np.zeros_like(gt), gt)[2] == 0.0
    shifted = np.roll(gt, 1, axis=1)
    assert boundary_fscore(shifted, gt, tol=2)[2] >= 0.95
    assert boundary_fscore(np.roll(gt, 5, axis=0), gt, tol=2)[2] < 0.6


def test_matching_is_one_to_one():
    gt = np.zeros((5, 5), bool)
    gt[2, 2] = True
    pred = np.zeros((5, 5), bool)
    pred[2, 1] = pred[2, 3] = True
    p, r, f = boundary_fscore(pred, gt, tol=1)
    assert (p, r) == (0.5, 1.0)


def test_matching_prefers_exact_hits():
    # pred A at distance 1 from both gts, pred B exactly on gt2: B must take gt2, A takes gt1
    gt = np.zeros((3, 5), bool)
    gt[1, 1] = gt[1, 3] = True
    pred = np.zeros((3, 5), bool)
    pred[1, 2] = pred[1, 3] = True
    mp, mg = metrics.match_edges(pred, gt, 1)
    assert mp.sum() == 2 and mg.sum() == 2


def test_best_threshold_on_clean_image():
    img = np.zeros((40, 40))
    img[:, 20:] = 1.0
    gt = metrics.sobel_magnitude(img) > 0.2 * metrics.sobel_magnitude(img).max()
    f, th, p, r = best_threshold_fscore(img, gt)
    assert f == 1.0 and p == 1.0 and r == 1.0
