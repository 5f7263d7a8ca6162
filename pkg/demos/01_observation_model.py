"""Binary frames from a flux image, the masked-ratio estimate, and the efficiency curves."""
import numpy as np

from photoninhibit import corpus, metrics
from photoninhibit.model import ExposureSchedule, FluxImage, estimate_rate, sample_cube
from photoninhibit.rng import RngSpec

flux = FluxImage.from_image(corpus.scene("disks"), mean_ppp=1.0).flux
cube = sample_cube(flux, ExposureSchedule.constant(1.0, 200), RngSpec(seed=1))
est = estimate_rate(cube)

print(f"frames: {cube.n_frames}, pixels: {flux.size}")
print(f"detections/pixel: {cube.frames.sum() / flux.size:.1f}")
print(f"rate MSE vs truth: {metrics.mse(est.rate, 1 - np.exp(-flux)):.2e}")
print(f"exposure MAE (unsaturated): {np.nanmean(np.abs(est.exposure - flux)[~est.saturated]):.3f}")

H = metrics.exposure_grid(2001)
meas = metrics.measurement_efficiency(H)
print(f"measurement efficiency peaks at H = {H[np.argmax(meas)]:.3f}")
for h in (0.1, 1.0, 1.59, 5.0):
    print(f"  H={h:<5} det_eff={float(metrics.detection_efficiency(h)):.3f} "
          f"meas_eff={float(metrics.measurement_efficiency(h)):.3f}")
