"""Run configuration from a sectioned INI file.

Example::

    [run]
    experiment = static
    images = corpus
    levels = 0.1, 1, 10
    frames = 1000
    arms = none, P_cr

    [policy.my_cr]
    kind = score
    kernel = center_ring
    eta = 12
    tau_h = 16

    [sweep]
    eta = 2, 6, 12, 24
    tau_h = 4, 8, 16, 32

    [energy]
    e_avalanche = 11.6e-12
    p_compute = 729e-9

Unknown keys are rejected so typos surface as configuration errors.
"""
import configparser
import os
from dataclasses import asdict, dataclass, field

from . import policies
from .bracketing import BracketSchedule
from .tally import AVALANCHE_ENERGY_J, COMPUTE_POWER_W, FRAME_PERIOD_S

EXPERIMENTS = ("curves", "static", "edge", "bracket", "allocate", "sweep")
KERNELS = {"center_ring": policies.CENTER_RING, "laplacian": policies.LAPLACIAN,
           "average": policies.AVERAGE, "single": policies.SINGLE}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    experiment: str = "static"
    seed: int = 0
    images: tuple = ("corpus",)
    gamma_decompress: bool = True
    mean_ppp: float = 1.0
    crop: int = 0
    scene_size: int = 96
    levels: tuple = (0.1, 1.0, 10.0)
    frames: int = 1000
    checkpoints: int = 60
    arms: tuple = ("none", "P_cr")
    ssim_targets: tuple = (0.7, 0.8)
    workers: int = 1
    gt_edges: tuple = ()
    edge_tol: int = 2
    edge_arms: tuple = ("none", "P_edge", "P_lap_only")
    edge_level: float = 1.0
    # curves
    points: int = 1001
    h_min: float = 1e-6
    h_max: float = 50.0
    curve_w: int = 100
    # sweep
    sweep_kernel: str = "center_ring"
    sweep_eta: tuple = (2, 6, 12, 24)
    sweep_tau_h: tuple = (4, 8, 16, 32)
    # bracket
    n_cycles: int = 5
    ratio: float = 5.0
    repeats: int = 10
    threshold: int = 6
    passes: int = 100
    flux_min: float = 1e-4
    flux_max: float = 1.0
    flux_points: int = 200
    # allocate
    loss: str = "binomial_mse"
    loss_k: int = 2
    budget: float = 5.0
    log_heatmap: bool = True
    # energy
    e_avalanche: float = AVALANCHE_ENERGY_J
    p_compute: float = COMPUTE_POWER_W
    frame_period: float = FRAME_PERIOD_S
    custom_policies: dict = field(default_factory=dict)

    def policy(self, name):
        if name in self.custom_policies:
            return self.custom_policies[name]
        try:
            return policies.preset(name)
        except KeyError as exc:
            raise ConfigError(str(exc)) from None

    def bracket_schedule(self):
        return BracketSchedule.geometric(self.n_cycles, self.ratio, self.repeats, self.threshold)

    def resolved(self):
        d = asdict(self)
        d["custom_policies"] = {k: _policy_dict(p) for k, p in self.custom_policies.items()}
        return d


def _policy_dict(p):
    out = {"kind": p.kind, "name": p.name}
    for k in ("eta", "tau_h", "n", "tau_d", "etas"):
        v = getattr(p, k)
        if v is not None:
            out[k] = list(v) if isinstance(v, tuple) else v
    if p.kernel is not None:
        out["spatial"] = p.kernel.spatial.tolist()
        out["temporal"] = list(p.kernel.temporal)
    return out


def _floats(s):
    return tuple(float(v) for v in _items(s))


def _ints(s):
    return tuple(int(v) for v in _items(s))


def _items(s):
    return tuple(v.strip() for v in s.split(",") if v.strip())


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "yes", "true", "on"):
        return True
    if v in ("0", "no", "false", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


# section -> {key: (field, parser)}
_SCHEMA = {
    "run": {"experiment": ("experiment", str), "seed": ("seed", int), "images": ("images", _items),
            "gamma_decompress": ("gamma_decompress", _bool), "mean_ppp": ("mean_ppp", float),
            "crop": ("crop", int), "size": ("scene_size", int), "levels": ("levels", _floats), "frames": ("frames", int),
            "checkpoints": ("checkpoints", int), "arms": ("arms", _items),
            "ssim_targets": ("ssim_targets", _floats), "workers": ("workers", int)},
    "curves": {"points": ("points", int), "h_min": ("h_min", float), "h_max": ("h_max", float),
               "w": ("curve_w", int)},
    "edge": {"gt": ("gt_edges", _items), "tol": ("edge_tol", int), "arms": ("edge_arms", _items),
             "level": ("edge_level", float)},
    "sweep": {"kernel": ("sweep_kernel", str), "eta": ("sweep_eta", _ints), "tau_h": ("sweep_tau_h", _ints)},
    "bracket": {"n_cycles": ("n_cycles", int), "ratio": ("ratio", float), "repeats": ("repeats", int),
                "threshold": ("threshold", int), "passes": ("passes", int), "flux_min": ("flux_min", float),
                "flux_max": ("flux_max", float), "flux_points": ("flux_points", int)},
    "allocate": {"loss": ("loss", str), "k": ("loss_k", int), "budget": ("budget", float),
                 "log_heatmap": ("log_heatmap", _bool)},
    "energy": {"e_avalanche": ("e_avalanche", float), "p_compute": ("p_compute", float),
               "frame_period": ("frame_period", float)},
}


def _parse_policy(name, sec):
    kind = sec.get("kind", "score")
    try:
        if kind == "score":
            kernel = sec.get("kernel", "center_ring")
            if kernel not in KERNELS:
                raise ConfigError(f"policy.{name}: unknown kernel {kernel!r}")
            temporal = _ints(sec.get("temporal", "1,1,1,1"))
            return policies.score_policy(KERNELS[kernel], int(sec["eta"]), int(sec["tau_h"]), temporal, name=name)
        if kind == "edge_compound":
            e = [None if v.lower() == "none" else int(v) for v in _items(sec.get("etas", "-12,12,4,16"))]
            if len(e) != 4:
                raise ConfigError(f"policy.{name}: etas needs four values")
            return policies.edge_compound(*e, tau_h=int(sec.get("tau_h", 16)), name=name)
        if kind == "subsample":
            return policies.PolicySpec("subsample", n=int(sec["n"]), name=name)
        if kind == "deadtime":
            return policies.PolicySpec("deadtime", tau_d=int(sec["tau_d"]), name=name)
        if kind in ("none", "clocked_recharge"):
            return policies.PolicySpec(kind, name=name)
    except KeyError as exc:
        raise ConfigError(f"policy.{name}: missing key {exc.args[0]}") from None
    except ValueError as exc:
        raise ConfigError(f"policy.{name}: {exc}") from None
    raise ConfigError(f"policy.{name}: unsupported kind {kind!r}")


def parse_config(text, base_dir="."):
    """Build a :class:`RunConfig` from INI text; relative image paths resolve against ``base_dir``."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    cfg = RunConfig()
    for section in cp.sections():
        if section.startswith("policy."):
            name = section.split(".", 1)[1]
            cfg.custom_policies[name] = _parse_policy(name, cp[section])
            continue
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in cp[section].items():
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            attr, conv = _SCHEMA[section][key]
            try:
                setattr(cfg, attr, conv(raw))
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from None
    cfg.images = tuple(i if i == "corpus" or i.startswith("corpus:") or os.path.isabs(i)
                       else os.path.join(base_dir, i) for i in cfg.images)
    cfg.gt_edges = tuple(g if os.path.isabs(g) else os.path.join(base_dir, g) for g in cfg.gt_edges)
    validate(cfg)
    return cfg


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, os.path.dirname(os.path.abspath(path)))


def validate(cfg):
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {cfg.experiment!r}")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if not cfg.levels or any(v <= 0 for v in cfg.levels):
        raise ConfigError("exposure levels must be positive")
    if cfg.frames < 1 or cfg.checkpoints < 1:
        raise ConfigError("frames and checkpoints must be >= 1")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    if not cfg.sweep_eta or not cfg.sweep_tau_h:
        raise ConfigError("sweep grids must be non-empty")
    if cfg.sweep_kernel not in KERNELS:
        raise ConfigError(f"unknown sweep kernel {cfg.sweep_kernel!r}")
    if cfg.mean_ppp <= 0 or cfg.budget <= 0:
        raise ConfigError("mean_ppp and budget must be positive")
    if cfg.e_avalanche < 0 or cfg.p_compute < 0:
        raise ConfigError("energy parameters must be non-negative")
    if not 0 < cfg.flux_min < cfg.flux_max:
        raise ConfigError("need 0 < flux_min < flux_max")
    if cfg.scene_size < 8 or cfg.crop < 0:
        raise ConfigError("scene size must be >= 8 and crop >= 0")
    if cfg.edge_level <= 0:
        raise ConfigError("edge exposure level must be positive")
    for name in cfg.arms + cfg.edge_arms:
        cfg.policy(name)
    for img in cfg.images:
        if img != "corpus" and not img.startswith("corpus:") and not os.path.exists(img):
            raise ConfigError(f"image not found: {img}")
    for g in cfg.gt_edges:
        if not os.path.exists(g):
            raise ConfigError(f"ground-truth edge map not found: {g}")
    try:
        cfg.bracket_schedule()
    except ValueError as exc:
        raise ConfigError(f"[bracket] {exc}") from None
    return cfg
