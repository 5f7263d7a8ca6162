"""Experiment drivers behind the command-line subcommands.

Every driver takes a :class:`~photoninhibit.config.RunConfig` and an output
directory, writes CSV/PGM artifacts plus ``run.json``, and returns an
in-memory summary.  Outputs depend only on the config and seed; ``workers``
changes scheduling, never results.
"""
import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

from . import __version__, allocation, bracketing, corpus, io, metrics, policies
from .config import KERNELS
from .model import ExposureSchedule, FluxImage
from .rng import STREAM_BRACKET, STREAM_NOISE, RngSpec
from .tally import REPORT_COLUMNS, EnergyModel, report_totals, reports_to_csv

LEVEL_STREAM_BASE = 16  # arrivals for exposure level k use stream 16 + k


# inputs

def load_scenes(cfg):
    """[(name, linear intensity image)] for the configured inputs."""
    out = []
    for spec in cfg.images:
        if spec == "corpus":
            out.extend(corpus.corpus(cfg.scene_size).items())
        elif spec.startswith("corpus:"):
            name = spec.split(":", 1)[1]
            out.append((name, corpus.scene(name, cfg.scene_size)))
        else:
            img = io.load_intensity(spec, cfg.gamma_decompress)
            out.append((os.path.splitext(os.path.basename(spec))[0], img))
    if cfg.crop:
        out = [(n, center_crop(img, cfg.crop)) for n, img in out]
    return out


def center_crop(img, size):
    h, w = img.shape
    if size > min(h, w):
        return img
    r, c = (h - size) // 2, (w - size) // 2
    return img[r:r + size, c:c + size]


def checkpoint_frames(frames, count):
    """Roughly log-spaced frame counts from 1 to ``frames`` (inclusive)."""
    pts = np.round(np.geomspace(1, frames, max(count, 1))).astype(int)
    return np.unique(np.concatenate([pts, [frames]]))


def reference_rate(flux, T_ref=1.0):
    return -np.expm1(-flux * T_ref)


def _map(fn, items, workers):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def _energy(cfg):
    return EnergyModel(cfg.e_avalanche, cfg.p_compute)


# static imaging

@dataclass
class StaticCurve:
    """Quality against cumulative detections for one policy on one scene."""

    policy: str
    levels: tuple
    frames: np.ndarray
    D_per_pix: np.ndarray
    W_frac: np.ndarray
    I_F: np.ndarray
    ssim: np.ndarray
    mse: np.ndarray
    reports: list
    final_rate: np.ndarray
    final_saturated: np.ndarray
    final_measurements: np.ndarray = None  # (levels, H, W) enabled-frame counts


def static_curve(flux, policy, levels, frames, seed=0, checks=None, energy=EnergyModel(),
                 run_prefix="", frame_period=None):
    """Run ``policy`` at each exposure level and score the merged estimate at every checkpoint.

    Each level is simulated separately on its own arrival stream; at a
    checkpoint of ``n`` frames the per-level counts are HDR-merged and turned
    into a binary-rate image at unit exposure, then compared with
    ``1 - exp(-flux)``.
    """
    flux = np.asarray(flux, dtype=float)
    checks = checkpoint_frames(frames, 60) if checks is None else np.asarray(checks)
    npix = flux.size
    runs = [policies.run_policy(flux, ExposureSchedule.constant(T, frames), policy,
                                RngSpec(seed, LEVEL_STREAM_BASE + k))
            for k, T in enumerate(levels)]
    cum_d = [np.cumsum(r.cube.frames, axis=0, dtype=np.int32) for r in runs]
    cum_w = [np.cumsum(r.cube.mask, axis=0, dtype=np.int32) for r in runs]
    ref = reference_rate(flux)
    kw = {} if frame_period is None else {"frame_period": frame_period}
    out = {k: [] for k in ("D", "W", "I", "ssim", "mse")}
    reports = []
    est = None
    for n in checks:
        D = np.stack([c[n - 1] for c in cum_d])
        W = np.stack([c[n - 1] for c in cum_w])
        est = bracketing.hdr_estimate(D, W, levels)
        rate = np.nan_to_num(est.rate, nan=0.0)
        q = {"ssim": metrics.ssim(rate, ref), "mse": metrics.mse(rate, ref),
             "snr_h_db": allocation_snr_db(flux, levels, W)}
        D_T = int(D.sum())
        W_T = int(W.sum())
        I_T = sum(int(r.trace["I"][n - 1]) for r in runs)
        A_T = sum(int(r.trace["A"][n - 1]) for r in runs)
        rep = report_totals(D_T, W_T, I_T, A_T, npix, int(n) * len(levels), energy, q,
                            run_id=f"{run_prefix}n{int(n)}", policy=policy.label, eta=policy.eta,
                            tau_h=policy.tau_h, computes=policy.computes, **kw)
        reports.append(rep)
        out["D"].append(D_T / npix)
        out["W"].append(rep.W_frac)
        out["I"].append(rep.I_F)
        out["ssim"].append(q["ssim"])
        out["mse"].append(q["mse"])
    return StaticCurve(policy.label, tuple(levels), checks, np.array(out["D"]), np.array(out["W"]),
                       np.array(out["I"]), np.array(out["ssim"]), np.array(out["mse"]), reports,
                       np.nan_to_num(est.rate, nan=0.0), est.saturated, W)


def allocation_snr_db(flux, levels, W):
    """Exposure-referred SNR the measurement allocation affords, in dB.

    Per pixel the levels combine as ``sum_k SNR_H^2(flux T_k, W_k)``; the value
    reported is ``10 log10`` of that sum averaged over pixels with nonzero flux.
    """
    lit = flux > 0
    if not lit.any():
        return float("nan")
    snr2 = sum(bracketing.snr2_weight(flux * T, Wk) for T, Wk in zip(levels, W))
    m = float(np.mean(snr2[lit]))
    return 10.0 * np.log10(m) if m > 0 else float("-inf")


def detections_at_quality(D, quality, target):
    """Detections/pixel where the curve first reaches ``target`` (linear interpolation), NaN if never."""
    D = np.asarray(D, dtype=float)
    q = np.asarray(quality, dtype=float)
    hit = np.nonzero(q >= target)[0]
    if hit.size == 0:
        return float("nan")
    i = int(hit[0])
    if i == 0:
        return float(D[0])
    return float(D[i - 1] + (target - q[i - 1]) * (D[i] - D[i - 1]) / (q[i] - q[i - 1]))


def quality_at_detections(D, quality, d):
    """Curve value at ``d`` detections/pixel; NaN outside the sampled range."""
    D = np.asarray(D, dtype=float)
    if not np.isfinite(d) or d < D[0] or d > D[-1]:
        return float("nan")
    return float(np.interp(d, D, quality))


def equal_quality_delta(base, arm, target):
    """Both equal-quality comparisons of ``arm`` against ``base`` at one SSIM level.

    Returns a dict with ``dD_pct`` (percent change in detections at equal SSIM;
    negative = fewer detections) and ``dSSIM`` (arm minus baseline SSIM at the
    arm's operating point, i.e. at equal detections; positive = better).
    """
    d_base = detections_at_quality(base.D_per_pix, base.ssim, target)
    d_arm = detections_at_quality(arm.D_per_pix, arm.ssim, target)
    dD = 100.0 * (d_arm - d_base) / d_base if np.isfinite(d_base) and np.isfinite(d_arm) else float("nan")
    q_base = quality_at_detections(base.D_per_pix, base.ssim, d_arm)
    dS = target - q_base if np.isfinite(q_base) else float("nan")
    return {"target": target, "D_base": d_base, "D_arm": d_arm, "dD_pct": dD, "dSSIM": dS}


def run_static_arms(cfg, scenes, arms, levels):
    """Static curves for every (scene, arm); scenes share arrival tapes across arms."""
    checks = checkpoint_frames(cfg.frames, cfg.checkpoints)
    energy = _energy(cfg)
    tasks = [(name, img, arm) for name, img in scenes for arm in arms]

    def work(task):
        name, img, arm = task
        flux = FluxImage.from_image(img, cfg.mean_ppp).flux
        return static_curve(flux, cfg.policy(arm), levels, cfg.frames, cfg.seed, checks, energy,
                            run_prefix=f"{name}:{arm}:", frame_period=cfg.frame_period)

    curves = _map(work, tasks, cfg.workers)
    return {(t[0], t[2]): c for t, c in zip(tasks, curves)}


def cmd_static(cfg, out):
    scenes = load_scenes(cfg)
    arms = tuple(cfg.arms)
    if "none" not in arms:
        arms = ("none",) + arms
    curves = run_static_arms(cfg, scenes, arms, cfg.levels)
    os.makedirs(os.path.join(out, "images"), exist_ok=True)
    reports = [r for name, _ in scenes for arm in arms for r in curves[(name, arm)].reports]
    reports_to_csv(reports, os.path.join(out, "static_report.csv"))
    summary = []
    for name, img in scenes:
        flux = FluxImage.from_image(img, cfg.mean_ppp).flux
        io.write_rate_image(os.path.join(out, "images", f"{name}_reference.pgm"), reference_rate(flux))
        base = curves[(name, "none")]
        for arm in arms:
            c = curves[(name, arm)]
            io.write_rate_image(os.path.join(out, "images", f"{name}_{_safe(arm)}.pgm"), c.final_rate)
            if arm == "none":
                continue
            for target in cfg.ssim_targets:
                d = equal_quality_delta(base, c, target)
                summary.append({"image": name, "arm": arm, **d,
                                "saturated_pixels": int(np.count_nonzero(c.final_saturated))})
    _write_rows(os.path.join(out, "static_summary.csv"), summary,
                ("image", "arm", "target", "D_base", "D_arm", "dD_pct", "dSSIM", "saturated_pixels"))
    _write_run_json(cfg, out, "static", {"means": _mean_deltas(summary)})
    return {"curves": curves, "summary": summary}


def _mean_deltas(summary):
    out = {}
    for row in summary:
        out.setdefault(f"{row['arm']}@{row['target']:g}", []).append(row["dD_pct"])
    return {k: float(np.mean(v)) for k, v in out.items()}


def _safe(name):
    return name.replace("'", "_prime")


# sweep

def sweep_policies(cfg):
    kernel = policies.ScoreKernel(KERNELS[cfg.sweep_kernel])
    return [policies.PolicySpec("score", kernel, eta=e, tau_h=t,
                                name=f"{cfg.sweep_kernel}_eta{e}_tau{t}")
            for t in cfg.sweep_tau_h for e in cfg.sweep_eta]


def cmd_sweep(cfg, out):
    """Static runs over the eta x tau_H grid; long-format report CSV."""
    os.makedirs(out, exist_ok=True)
    scenes = load_scenes(cfg)
    grid = sweep_policies(cfg)
    cfg = replace(cfg, custom_policies={**{p.name: p for p in grid}, **cfg.custom_policies})
    arms = ("none",) + tuple(p.name for p in grid)
    curves = run_static_arms(cfg, scenes, arms, cfg.levels)
    reports = [r for name, _ in scenes for arm in arms for r in curves[(name, arm)].reports]
    reports_to_csv(reports, os.path.join(out, "sweep_report.csv"))
    final = []
    for name, _ in scenes:
        for p in grid:
            c = curves[(name, p.name)]
            final.append({"image": name, "eta": p.eta, "tau_h": p.tau_h, "I_F": c.I_F[-1],
                          "D_per_pix": c.D_per_pix[-1], "ssim": c.ssim[-1]})
    _write_rows(os.path.join(out, "sweep_final.csv"), final,
                ("image", "eta", "tau_h", "I_F", "D_per_pix", "ssim"))
    fractions = []
    for name, img in scenes:
        flux = FluxImage.from_image(img, cfg.mean_ppp).flux
        for p in grid:
            c = curves[(name, p.name)]
            for k, T in enumerate(cfg.levels):
                for h, mf, cnt in measurement_fraction_bins(flux * T, c.final_measurements[k] / c.frames[-1]):
                    fractions.append({"image": name, "eta": p.eta, "tau_h": p.tau_h, "level": T,
                                      "H": h, "W_frac": mf, "pixels": cnt})
    _write_rows(os.path.join(out, "sweep_measurement_fraction.csv"), fractions,
                ("image", "eta", "tau_h", "level", "H", "W_frac", "pixels"))
    _write_run_json(cfg, out, "sweep", {"grid": [p.name for p in grid]})
    return {"curves": curves, "final": final}


def measurement_fraction_bins(H, fraction, bins_per_decade=8):
    """Mean measurement fraction in log-spaced exposure bins: [(H center, fraction, pixels)]."""
    H = np.ravel(H)
    fraction = np.ravel(fraction)
    lit = H > 0
    if not lit.any():
        return []
    lo, hi = np.floor(np.log10(H[lit].min())), np.ceil(np.log10(H[lit].max()))
    edges = np.logspace(lo, hi, int(max(hi - lo, 1) * bins_per_decade) + 1)
    idx = np.clip(np.digitize(H[lit], edges) - 1, 0, len(edges) - 2)
    out = []
    for b in np.unique(idx):
        sel = idx == b
        out.append((float(np.sqrt(edges[b] * edges[b + 1])), float(fraction[lit][sel].mean()), int(sel.sum())))
    return out


def monotone_violations(final):
    """Count I_F decreases as eta falls (fixed tau_H) or tau_H rises (fixed eta), per image."""
    bad = 0
    by = {}
    for r in final:
        by[(r["image"], r["eta"], r["tau_h"])] = r["I_F"]
    images = sorted({r["image"] for r in final})
    etas = sorted({r["eta"] for r in final}, reverse=True)
    taus = sorted({r["tau_h"] for r in final})
    for im in images:
        for t in taus:
            seq = [by[(im, e, t)] for e in etas]
            bad += sum(b < a for a, b in zip(seq, seq[1:]))
        for e in etas:
            seq = [by[(im, e, t)] for t in taus]
            bad += sum(b < a for a, b in zip(seq, seq[1:]))
    return bad


# edges

def load_edge_truth(cfg, scenes):
    if cfg.gt_edges:
        if len(cfg.gt_edges) != len(scenes):
            raise FileNotFoundError("need one ground-truth edge map per image")
        gts = [io.read_pgm(p)[0] > 0 for p in cfg.gt_edges]
        for (name, img), g in zip(scenes, gts):
            if g.shape != img.shape:
                raise ValueError(f"ground truth for {name} has shape {g.shape}, image {img.shape}")
        return gts
    gts = []
    corpus_names = set(corpus.SCENES)
    for name, img in scenes:
        if name not in corpus_names:
            raise FileNotFoundError(f"no ground-truth edge map for {name}")
        gts.append(corpus.edge_map(img))
    return gts


def cmd_edge(cfg, out):
    os.makedirs(out, exist_ok=True)
    scenes = load_scenes(cfg)
    gts = load_edge_truth(cfg, scenes)
    checks = checkpoint_frames(cfg.frames, cfg.checkpoints)
    tasks = [(i, arm) for i in range(len(scenes)) for arm in cfg.edge_arms]

    def work(task):
        i, arm = task
        name, img = scenes[i]
        flux = FluxImage.from_image(img, cfg.mean_ppp).flux
        run = policies.run_policy(flux, ExposureSchedule.constant(cfg.edge_level, cfg.frames), cfg.policy(arm),
                                  RngSpec(cfg.seed, LEVEL_STREAM_BASE))
        cd = np.cumsum(run.cube.frames, axis=0, dtype=np.int32)
        cw = np.cumsum(run.cube.mask, axis=0, dtype=np.int32)
        rows = []
        for n in checks:
            est = bracketing.hdr_estimate(cd[n - 1][None], cw[n - 1][None], (cfg.edge_level,))
            f, th, pr, rc = metrics.best_threshold_fscore(np.nan_to_num(est.rate, nan=0.0), gts[i],
                                                          tol=cfg.edge_tol)
            rows.append({"image": name, "arm": arm, "frames": int(n), "D_per_pix": cd[n - 1].sum() / flux.size,
                         "F": f, "threshold": th, "precision": pr, "recall": rc})
        return rows

    rows = [r for chunk in _map(work, tasks, cfg.workers) for r in chunk]
    cols = ("image", "arm", "frames", "D_per_pix", "F", "threshold", "precision", "recall")
    _write_rows(os.path.join(out, "edge_fscore.csv"), rows, cols)
    matched = matched_fscore(rows, cfg.edge_arms)
    _write_rows(os.path.join(out, "edge_matched.csv"), matched, ("D_per_pix",) + tuple(cfg.edge_arms))
    _write_run_json(cfg, out, "edge", {})
    return {"rows": rows, "matched": matched}


def matched_fscore(rows, arms, grid=(1, 2, 5, 10, 20, 50, 100, 200, 500)):
    """Mean F per arm at common detections/pixel (interpolated per image; NaN outside a curve's range)."""
    images = sorted({r["image"] for r in rows})
    out = []
    for d in grid:
        row = {"D_per_pix": d}
        for arm in arms:
            vals = []
            for im in images:
                sel = [r for r in rows if r["image"] == im and r["arm"] == arm]
                D = np.array([r["D_per_pix"] for r in sel])
                F = np.array([r["F"] for r in sel])
                vals.append(quality_at_detections(D, F, d))
            row[arm] = float(np.mean(vals))
        out.append(row)
    return out


# brackets

def lookahead_study(cfg):
    """Plain bracketing vs saturation look-ahead over a log-spaced flux ramp."""
    sched = cfg.bracket_schedule()
    plain = sched.without_thresholds()
    phi = np.geomspace(cfg.flux_min, cfg.flux_max, cfg.flux_points)
    rng = RngSpec(cfg.seed, STREAM_BRACKET)
    obs_la = bracketing.run_lookahead(phi, sched, rng, cfg.passes)
    obs_pl = bracketing.run_lookahead(phi, plain, rng, cfg.passes)
    d_la = obs_la.detections.mean(axis=-1)
    d_pl = obs_pl.detections.mean(axis=-1)
    eff = bracketing.bracket_measurement_efficiency(phi, plain)
    rho = stats.spearmanr(d_la, eff).statistic
    red = 1.0 - d_la.sum() / d_pl.sum()
    rows = [{"flux": f, "D_plain": a, "D_lookahead": b,
             "E_plain": c, "E_lookahead": e, "bracket_meas_eff": m}
            for f, a, b, c, e, m in zip(phi, d_pl, d_la, bracketing.expected_pass_detections(phi, plain),
                                        bracketing.expected_pass_detections(phi, sched), eff)]
    return {"rows": rows, "reduction": float(red), "spearman": float(rho)}


def cmd_bracket(cfg, out):
    os.makedirs(out, exist_ok=True)
    res = lookahead_study(cfg)
    _write_rows(os.path.join(out, "lookahead.csv"), res["rows"],
                ("flux", "D_plain", "D_lookahead", "E_plain", "E_lookahead", "bracket_meas_eff"))
    fib = bracketing.BracketSchedule.fibonacci()
    lut = bracketing.build_lut(fib)
    bracketing.write_lut_csv(lut, fib, os.path.join(out, "fibonacci_lut.csv"))
    summary = {"reduction": res["reduction"], "spearman": res["spearman"], "lut_entries": len(lut)}
    _write_run_json(cfg, out, "bracket", summary)
    return {**res, "lut": lut}


# allocation

def allocation_study(reference, budget_per_pixel, loss="binomial_mse", k=2, seed=0):
    """Oracle vs uniform measurement allocation on one reference rate image."""
    Y = np.asarray(reference, dtype=float)
    prob = allocation.AllocationProblem(Y.ravel(), budget_per_pixel * Y.size, loss, k)
    W_opt = allocation.optimal_allocation(prob).reshape(Y.shape)
    W_uni = allocation.uniform_allocation(prob).reshape(Y.shape)
    Yc = prob.rates.reshape(Y.shape)
    rng = RngSpec(seed, STREAM_NOISE)
    res = {"W_opt": W_opt, "W_uniform": W_uni, "rates": Yc}
    for tag, W in (("oracle", W_opt), ("uniform", W_uni)):
        img, Wr = allocation.oracle_noise_image(Yc, W, rng, loss)
        res[tag] = {"image": img, "mse": metrics.mse(img, Yc), "ssim": metrics.ssim(img, Yc),
                    "expected_loss": allocation.image_loss(prob, W.ravel()) / Y.size,
                    "D_per_pix": float((Yc * Wr).sum() / Y.size)}
    res["mse_reduction"] = 1.0 - res["oracle"]["mse"] / res["uniform"]["mse"]
    res["expected_reduction"] = 1.0 - res["oracle"]["expected_loss"] / res["uniform"]["expected_loss"]
    return res


def cmd_allocate(cfg, out):
    os.makedirs(out, exist_ok=True)
    summary = []
    for name, img in load_scenes(cfg):
        Y = reference_rate(FluxImage.from_image(img, cfg.mean_ppp).flux)
        res = allocation_study(Y, cfg.budget, cfg.loss, cfg.loss_k, cfg.seed)
        io.write_heatmap(os.path.join(out, f"{name}_allocation.pgm"), res["W_opt"], cfg.log_heatmap)
        with open(os.path.join(out, f"{name}_allocation.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row", "col", "rate", "W_oracle", "W_uniform"])
            for (i, j), y in np.ndenumerate(res["rates"]):
                w.writerow([i, j, _f(y), _f(res["W_opt"][i, j]), _f(res["W_uniform"][i, j])])
        for tag in ("oracle", "uniform"):
            r = res[tag]
            summary.append({"image": name, "method": tag, "D_per_pix": r["D_per_pix"], "mse": r["mse"],
                            "ssim": r["ssim"], "expected_loss": r["expected_loss"]})
    _write_rows(os.path.join(out, "allocation_summary.csv"), summary,
                ("image", "method", "D_per_pix", "mse", "ssim", "expected_loss"))
    _write_run_json(cfg, out, "allocate", {})
    return {"summary": summary}


# curves

def cmd_curves(cfg, out):
    os.makedirs(out, exist_ok=True)
    H = metrics.exposure_grid(cfg.points, cfg.h_min, cfg.h_max)
    table = metrics.write_curve_csv(os.path.join(out, "curves.csv"), H, cfg.curve_w)
    _write_run_json(cfg, out, "curves", {})
    return {"table": table}


COMMANDS = {"curves": cmd_curves, "static": cmd_static, "edge": cmd_edge, "bracket": cmd_bracket,
            "allocate": cmd_allocate, "sweep": cmd_sweep}


def run(cfg, out):
    os.makedirs(out, exist_ok=True)
    return COMMANDS[cfg.experiment](cfg, out)


# output helpers

def _f(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    return str(v)


def _write_rows(path, rows, cols):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_f(r[c]) for c in cols])


def _write_run_json(cfg, out, experiment, results):
    # no timestamps or host data: the record must be byte-identical across reruns
    rec = {"package": "photoninhibit", "version": __version__, "experiment": experiment,
           "config": cfg.resolved(), "report_columns": list(REPORT_COLUMNS),
           "ssim": metrics.SSIM_CONFIG, "results": results}
    with open(os.path.join(out, "run.json"), "w") as fh:
        json.dump(rec, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return str(v)
