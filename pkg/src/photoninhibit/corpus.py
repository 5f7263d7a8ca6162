"""Small synthetic test scenes with ground-truth edge maps.

Scenes are drawn as display (gamma-encoded) images and linearized with the
same gamma 2.2 decompression applied to loaded PGMs; the HDR composite is
defined directly in linear units.  Harness runs rescale each linear image so
the mean flux is 1 photon per pixel per unit frame.
"""
import numpy as np

from .io import SRGB_GAMMA
from .metrics import sobel_magnitude

SIZE = 96
FLOOR = 1e-3  # keeps every pixel strictly positive
EDGE_FRACTION = 0.2  # GT edges: Sobel magnitude above this fraction of its max


def _grid(n):
    y, x = np.mgrid[0:n, 0:n].astype(float)
    return y / (n - 1), x / (n - 1)


def gradient(n=SIZE):
    y, x = _grid(n)
    return 0.05 + 0.9 * (0.7 * x + 0.3 * y)


def step_edges(n=SIZE):
    y, x = _grid(n)
    img = np.full((n, n), 0.15)
    img[x > 0.33] = 0.5
    img[x > 0.66] = 0.9
    img[(y > 0.5) & (x <= 0.33)] = 0.35
    return img


def disks(n=SIZE):
    y, x = _grid(n)
    img = np.full((n, n), 0.1)
    for cy, cx, r, v in ((0.3, 0.3, 0.18, 0.9), (0.7, 0.65, 0.22, 0.55), (0.25, 0.75, 0.12, 0.35)):
        img[(y - cy) ** 2 + (x - cx) ** 2 < r * r] = v
    return img


def hdr_composite(n=SIZE):
    """Four quadrants spanning three decades, each with a soft internal ramp."""
    y, x = _grid(n)
    level = np.where(y < 0.5, np.where(x < 0.5, 1e-3, 1e-2), np.where(x < 0.5, 1e-1, 1.0))
    return level * (0.6 + 0.4 * np.cos(2 * np.pi * (x + y)) ** 2)


def grating(n=SIZE, cycles=6):
    y, x = _grid(n)
    return 0.5 + 0.4 * np.sign(np.sin(2 * np.pi * cycles * x * (0.5 + 0.5 * y)))


def mondrian(n=SIZE, seed=7):
    rng = np.random.default_rng(seed)
    img = np.full((n, n), 0.4)
    for _ in range(14):
        h, w = rng.integers(n // 8, n // 2, size=2)
        r, c = rng.integers(0, n - h), rng.integers(0, n - w)
        img[r:r + h, c:c + w] = rng.uniform(0.05, 1.0)
    return img


def bright_sky(n=SIZE):
    """Bright radial source over a dark foreground with a horizon edge."""
    y, x = _grid(n)
    sky = 0.2 + 0.8 * np.exp(-((x - 0.6) ** 2 + (y - 0.2) ** 2) / 0.05)
    ground = 0.03 + 0.05 * x
    return np.where(y < 0.55, sky, ground)


def siemens_star(n=SIZE, spokes=12):
    y, x = _grid(n)
    th = np.arctan2(y - 0.5, x - 0.5)
    r = np.hypot(y - 0.5, x - 0.5)
    img = 0.5 + 0.4 * np.sign(np.sin(spokes * th))
    return np.where(r < 0.45, img, 0.2)


SCENES = {
    "gradient": gradient,
    "step_edges": step_edges,
    "disks": disks,
    "hdr_composite": hdr_composite,
    "grating": grating,
    "mondrian": mondrian,
    "bright_sky": bright_sky,
    "siemens_star": siemens_star,
}


LINEAR_SCENES = ("hdr_composite",)


def scene(name, n=SIZE, linear=True):
    """One scene in [FLOOR, 1]; ``linear=False`` returns the display-encoded drawing."""
    if name not in SCENES:
        raise KeyError(f"unknown scene {name!r}; known: {', '.join(SCENES)}")
    img = SCENES[name](n)
    if linear and name not in LINEAR_SCENES:
        img = np.clip(img, 0.0, 1.0) ** SRGB_GAMMA
    return np.clip(img, FLOOR, 1.0)


def corpus(n=SIZE, linear=True):
    """All bundled scenes, in a fixed order."""
    return {name: scene(name, n, linear) for name in SCENES}


def edge_map(image, fraction=EDGE_FRACTION):
    """Binary ground truth: Sobel magnitude of the clean image above ``fraction`` of its max."""
    mag = sobel_magnitude(image)
    peak = mag.max()
    if peak == 0:
        return np.zeros(mag.shape, dtype=bool)
    return mag > fraction * peak
