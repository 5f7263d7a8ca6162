"""Score-based inhibition on a corpus scene: detections saved against quality lost.

All arms share one arrival tape, so differences come from the masks alone.
Writes gamma-compressed reconstructions to ./demo_out/.
"""
import os

from photoninhibit import corpus, io
from photoninhibit.experiments import checkpoint_frames, equal_quality_delta, reference_rate, static_curve
from photoninhibit.model import FluxImage
from photoninhibit.policies import preset

OUT = "demo_out"
os.makedirs(OUT, exist_ok=True)

flux = FluxImage.from_image(corpus.scene("mondrian"), mean_ppp=1.0).flux
levels = (0.1, 1.0, 10.0)
checks = checkpoint_frames(400, 40)
io.write_rate_image(os.path.join(OUT, "reference.pgm"), reference_rate(flux))

curves = {}
for name in ("none", "P_cr", "P_s"):
    c = static_curve(flux, preset(name), levels, 400, seed=0, checks=checks)
    curves[name] = c
    io.write_rate_image(os.path.join(OUT, f"{name}.pgm"), c.final_rate)
    print(f"{name:5s} D/pix={c.D_per_pix[-1]:7.1f}  W_frac={c.W_frac[-1]:.3f}  "
          f"I_F={c.I_F[-1]:.3f}  SSIM={c.ssim[-1]:.3f}")

for name in ("P_cr", "P_s"):
    d = equal_quality_delta(curves["none"], curves[name], 0.7)
    print(f"{name}: {d['dD_pct']:+.1f}% detections at SSIM 0.7")
