"""Saturation look-ahead on a 5-cycle bracket, and the Fibonacci MLE lookup table."""
import numpy as np

from photoninhibit import bracketing as B
from photoninhibit.rng import RngSpec

sched = B.BracketSchedule.geometric(n_cycles=5, ratio=5, repeats=10, threshold=6)
phi = np.geomspace(1e-4, 1, 9)
obs_la = B.run_lookahead(phi, sched, RngSpec(0), passes=200)
obs_pl = B.run_lookahead(phi, sched.without_thresholds(), RngSpec(0), passes=200)

print("flux       plain   look-ahead   exact")
for f, a, b, e in zip(phi, obs_pl.detections.mean(-1), obs_la.detections.mean(-1),
                      B.expected_pass_detections(phi, sched)):
    print(f"{f:8.1e} {a:7.2f} {b:10.2f} {e:9.2f}")

fib = B.BracketSchedule.fibonacci()
lut = B.build_lut(fib)
print(f"\nFibonacci bracket: {len(lut)} reachable observations")
for (counts, enabled), v in sorted(lut.items(), key=lambda kv: kv[1]):
    print(f"  {B.encode_observation(counts, enabled):16s} -> {v:.4f}")
