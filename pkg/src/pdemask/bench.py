"""Benchmark harness: methods x noise levels x budgets x seeds.

Every cell selects a mask from the noisy image ``f_delta``, decodes, and
measures the reconstruction against the clean image ``f``. One
:class:`BenchRecord` is produced per cell and seed; ``summary.csv`` holds the
per-cell means over seeds.

Codec semantics: the stored pixel values are those of the (possibly
sharpened or pre-filtered) noisy image on the mask. With the default
``alpha = inf`` the decoder sees nothing else, which is the compression
setting. A finite ``alpha`` switches to the data-fidelity decoders that also
read ``f_delta`` off the mask.
"""

from __future__ import annotations

import csv
import json
import math
import re
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from pdemask import __version__
from pdemask.grid import InvalidInputError, as_image, rms255
from pdemask.io import load_image, save_image, save_mask, write_sidecar
from pdemask.preprocess import NoiseSpec, prefilter, sharpen
from pdemask.selection import (
    VARIANTS,
    BttcParams,
    bttc_decode_linear,
    criterion,
    mask_bttc,
    mask_density_halftone,
    mask_hard_threshold,
    mask_random,
    target_count,
)
from pdemask.solvers import DECODERS, SolverConfig, solve

METHODS = ("L2-T", "L2-H", "RAND", "BTREE")
DEFAULT_BETA = {"plain": 0.0, "sharpen": 0.18, "prefilter": 1.2}


# -- test images ----------------------------------------------------------

def synthetic_image(size: int = 256) -> np.ndarray:
    """Structured gray test image in [0, 1].

    Smooth non-linear shading over the whole frame, three discs with sharp
    edges, and a high-frequency texture patch in the lower right quarter.
    Fully deterministic.
    """
    y, x = np.mgrid[0:size, 0:size] / float(size)
    f = 0.45 + 0.2 * np.sin(2.2 * np.pi * x + 0.6) * np.cos(1.4 * np.pi * y) + 0.15 * (x - 0.5) * (y - 0.3)
    for cy, cx, r, val in ((0.28, 0.3, 0.16, 0.85), (0.7, 0.25, 0.12, 0.15), (0.3, 0.72, 0.09, 0.2)):
        f = np.where((y - cy) ** 2 + (x - cx) ** 2 <= r * r, val, f)
    patch = (y > 0.62) & (y < 0.9) & (x > 0.58) & (x < 0.9)
    tex = 0.5 + 0.18 * np.sin(2 * np.pi * size * x / 7.0) * np.sin(2 * np.pi * size * y / 9.0)
    f = np.where(patch, tex, f)
    return np.clip(f, 0.0, 1.0)


def synthetic_rgb(size: int = 256) -> np.ndarray:
    """Colour variant: the gray image with a channel-dependent tint."""
    g = synthetic_image(size)
    y, x = np.mgrid[0:size, 0:size] / float(size)
    return np.clip(np.stack([g, 0.8 * g + 0.2 * x, 0.9 * g + 0.1 * (1 - y)], axis=-1), 0.0, 1.0)


def load_bench_image(image_id: str) -> np.ndarray:
    """``"synthetic"`` or ``"synthetic:<size>"``, else a path to a gray image."""
    if image_id == "synthetic":
        return synthetic_image()
    if image_id.startswith("synthetic:"):
        return synthetic_image(int(image_id.split(":", 1)[1]))
    img = load_image(image_id)
    if img.ndim != 2:
        raise InvalidInputError(f"{image_id}: run_matrix needs a gray image; use run_color for RGB")
    return img


# -- configuration --------------------------------------------------------

def parse_alpha(value) -> float:
    a = float(value)
    if not a > 0:
        raise InvalidInputError(f"alpha must be > 0 or 'inf', got {value!r}")
    return a


@dataclass(frozen=True)
class BenchConfig:
    """Decoder and harness settings shared by every cell.

    ``variants`` lists criterion variants to run (each with its ``beta``);
    ``btree_native`` decodes BTREE masks by linear interpolation on the
    triangles instead of the PDE decoder.
    """

    alpha: float = math.inf
    tol: float = 1e-8
    decoders: tuple = ("elliptic",)
    variants: tuple = ("plain",)
    beta: dict = field(default_factory=lambda: dict(DEFAULT_BETA))
    dt: float = 1.0
    n_steps: int = 1
    m_param: float = 1.0
    coarse_prefilter: bool = False
    btree_native: bool = False
    timing: bool = False
    workers: int = 1
    save_artifacts: bool = True

    def __post_init__(self):
        parse_alpha(self.alpha)
        for d in self.decoders:
            if d not in DECODERS:
                raise InvalidInputError(f"unknown decoder {d!r}")
        for v in self.variants:
            if v not in VARIANTS:
                raise InvalidInputError(f"unknown variant {v!r}")
        if self.workers < 1:
            raise InvalidInputError("workers must be >= 1")

    def solver(self, decoder: str) -> SolverConfig:
        return SolverConfig(alpha=self.alpha, tol=self.tol, decoder=decoder, dt=self.dt, n_steps=self.n_steps)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["alpha"] = "inf" if math.isinf(self.alpha) else self.alpha
        d["decoders"] = list(self.decoders)
        d["variants"] = list(self.variants)
        return d


@dataclass
class BenchRecord:
    image_id: str
    method: str
    criterion_variant: str
    decoder: str
    sigma: str
    budget: float
    seed: int
    error_rms255: float
    noisy_error_rms255: float
    mask_count: int
    select_time_s: float | None = None
    solve_time_s: float | None = None
    status: str = "ok"


# -- BTREE threshold search ------------------------------------------------

@dataclass
class BtreeSearch:
    threshold: float
    count: int
    target: int
    reachable: bool


def btree_threshold_search(image, target_budget: float, max_depth: int = 40, max_steps: int = 40) -> BtreeSearch:
    """Bisect the BTTC threshold until the vertex count is within 5% of target.

    The count is non-increasing in the threshold. If the target lies outside
    ``[count(255), count(0)]`` the nearest end is returned and flagged as
    unreachable.
    """
    f = as_image(image)
    if not 0 < target_budget <= 1:
        raise InvalidInputError("target_budget must be in (0, 1]")
    target = target_count(target_budget, f.size)

    def count(t):
        return int(mask_bttc(f, BttcParams(t, max_depth)).sum())

    def ok(c):
        return abs(c - target) <= 0.05 * target

    if target_budget >= 1:
        c = count(0.0)
        return BtreeSearch(0.0, c, target, ok(c))
    lo, hi = 0.0, 255.0
    c_hi = count(hi)
    if c_hi > target and not ok(c_hi):
        return BtreeSearch(hi, c_hi, target, False)
    best = (hi, c_hi)
    # count(0) is by far the most expensive evaluation, so it is only made
    # when the bisection fails to reach the target
    for _ in range(max_steps):
        if ok(best[1]):
            return BtreeSearch(best[0], best[1], target, True)
        mid = 0.5 * (lo + hi)
        c = count(mid)
        if abs(c - target) < abs(best[1] - target):
            best = (mid, c)
        if c > target:
            lo = mid
        else:
            hi = mid
    c_lo = count(0.0)
    if abs(c_lo - target) < abs(best[1] - target):
        best = (0.0, c_lo)
    return BtreeSearch(best[0], best[1], target, ok(best[1]))


# -- one cell -------------------------------------------------------------

def _median_time(fn, repeats):
    times = []
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return out, statistics.median(times)


def _cell_seed(seed: int, tag: int) -> int:
    return int(np.random.SeedSequence([int(seed), tag]).generate_state(1, np.uint64)[0])


def stored_values(f_delta, variant: str, beta: float, coarse: bool = False, tol: float = 1e-8):
    """Image whose values are kept on the mask for a criterion variant."""
    if variant == "sharpen" and beta > 0:
        return sharpen(f_delta, beta)
    if variant == "prefilter" and beta > 0:
        return prefilter(f_delta, beta, coarse=coarse, cfg=SolverConfig(tol=tol))
    return f_delta


def select_mask(method, f_delta, variant, beta, budget, seed, cfg: BenchConfig):
    """Mask for one cell; returns ``(mask, extra_meta)``."""
    shape = f_delta.shape
    if method == "RAND":
        return mask_random(shape, budget, _cell_seed(seed, 2)), {}
    if method == "BTREE":
        res = btree_threshold_search(f_delta, budget)
        return mask_bttc(f_delta, BttcParams(res.threshold)), asdict(res)
    c = criterion(f_delta, variant, beta)
    if method == "L2-T":
        return mask_hard_threshold(c, budget), {}
    if method == "L2-H":
        return mask_density_halftone(c, budget, cfg.m_param), {}
    raise InvalidInputError(f"unknown method {method!r}; expected one of {METHODS}")


def run_cell(f, image_id, method, variant, decoder, noise: NoiseSpec, budget, seed, cfg: BenchConfig, outdir=None):
    beta = float(cfg.beta.get(variant, 0.0)) if variant != "plain" else 0.0
    rec = BenchRecord(image_id, method, variant, decoder, noise.label(), budget, seed,
                      math.nan, math.nan, 0)
    try:
        f_delta = replace(noise, seed=_cell_seed(seed, 1)).apply(f)
        rec.noisy_error_rms255 = rms255(f, f_delta)
        reps = 3 if cfg.timing else 1
        (mask, meta), t_sel = _median_time(
            lambda: select_mask(method, f_delta, variant, beta, budget, seed, cfg), reps)
        data = stored_values(f_delta, variant, beta, cfg.coarse_prefilter, cfg.tol)
        if method == "BTREE" and cfg.btree_native:
            thr = meta["threshold"]
            (u, ok), t_sol = _median_time(lambda: (bttc_decode_linear(data, BttcParams(thr)), True), reps)
        else:
            (u, rep), t_sol = _median_time(lambda: solve(data, mask, cfg.solver(decoder)), reps)
            if not rep.converged:
                rec.status = f"not converged: residual {rep.final_residual:.3g} after {rep.iterations} iterations"
        u = np.clip(u, 0.0, 1.0)
        rec.error_rms255 = rms255(f, u)
        rec.mask_count = int(mask.sum())
        if cfg.timing:
            rec.select_time_s, rec.solve_time_s = t_sel, t_sol
        if outdir is not None and cfg.save_artifacts:
            key = cell_key(rec)
            mpath = Path(outdir) / "masks" / f"{key}.pbm"
            save_mask(mask, mpath)
            write_sidecar(mpath, {"method": method, "variant": variant, "beta": beta, "budget": budget,
                                  "seed": seed, "noise": noise.to_dict(), **meta})
            save_image(u, Path(outdir) / "recon" / f"{key}.png")
    except (InvalidInputError, ArithmeticError, RuntimeError, ValueError) as exc:
        rec.status = f"error: {exc}"
    return rec


def cell_key(rec: BenchRecord) -> str:
    raw = f"{Path(rec.image_id).stem}_{rec.method}_{rec.criterion_variant}_{rec.decoder}_{rec.sigma}_{rec.budget:g}_{rec.seed}"
    return re.sub(r"[^A-Za-z0-9._-]+", "-", raw)


# -- matrix ---------------------------------------------------------------

def _as_noise(s) -> NoiseSpec:
    if isinstance(s, NoiseSpec):
        return s
    if isinstance(s, dict):
        return NoiseSpec(**s)
    return NoiseSpec("gaussian", sigma=float(s))


def run_matrix(images, methods, sigmas, budgets, seeds, cfg: BenchConfig | None = None, outdir=None):
    """Run every (image, method, variant, decoder, noise, budget, seed) cell.

    ``images`` are ids for :func:`load_bench_image` or ``(id, array)`` pairs;
    ``sigmas`` are Gaussian sigmas, :class:`NoiseSpec` objects or dicts.
    Records come back in a fixed order regardless of ``cfg.workers``; a
    failing cell is recorded in its ``status`` field and the run continues.
    """
    cfg = cfg or BenchConfig()
    for name, lst in (("images", images), ("methods", methods), ("sigmas", sigmas),
                      ("budgets", budgets), ("seeds", seeds)):
        if len(lst) == 0:
            raise InvalidInputError(f"{name} must not be empty")
    for m in methods:
        if m not in METHODS:
            raise InvalidInputError(f"unknown method {m!r}; expected one of {METHODS}")
    loaded = []
    for im in images:
        if isinstance(im, tuple):
            loaded.append((im[0], as_image(im[1])))
        else:
            loaded.append((str(im), load_bench_image(str(im))))
    noises = [_as_noise(s) for s in sigmas]
    jobs = []
    for image_id, f in loaded:
        for method in methods:
            # the criterion variant only matters for the criterion-based methods
            variants = cfg.variants if method in ("L2-T", "L2-H") else ("plain",)
            for variant in variants:
                for decoder in cfg.decoders:
                    for noise in noises:
                        for budget in budgets:
                            for seed in seeds:
                                jobs.append((f, image_id, method, variant, decoder, noise, float(budget), int(seed)))
    if outdir is not None:
        Path(outdir).mkdir(parents=True, exist_ok=True)
        if cfg.save_artifacts:
            (Path(outdir) / "masks").mkdir(exist_ok=True)
            (Path(outdir) / "recon").mkdir(exist_ok=True)

    def work(job):
        return run_cell(*job, cfg=cfg, outdir=outdir)

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            records = list(pool.map(work, jobs))
    else:
        records = [work(j) for j in jobs]
    if outdir is not None:
        write_results(records, Path(outdir) / "results.csv")
        write_summary(records, Path(outdir) / "summary.csv")
        config = {"images": [i for i, _ in loaded], "methods": list(methods),
                  "noise": [n.to_dict() for n in noises], "budgets": list(budgets),
                  "seeds": list(seeds), "cfg": cfg.to_dict(), "version": __version__}
        with open(Path(outdir) / "config.json", "w") as fh:
            json.dump(config, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return records


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def write_results(records, path) -> None:
    names = [f.name for f in fields(BenchRecord)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for r in records:
            w.writerow([_fmt(getattr(r, n)) for n in names])


def summarize(records):
    """Mean error per cell over seeds, keyed by everything except the seed."""
    groups: dict = {}
    for r in records:
        key = (r.image_id, r.method, r.criterion_variant, r.decoder, r.sigma, r.budget)
        groups.setdefault(key, []).append(r)
    out = []
    for key, rs in groups.items():
        ok = [r for r in rs if r.status == "ok"]
        mean = (lambda a: float(np.mean(a)) if a else math.nan)
        out.append({
            "image_id": key[0], "method": key[1], "criterion_variant": key[2], "decoder": key[3],
            "sigma": key[4], "budget": key[5], "n_seeds": len(rs), "n_ok": len(ok),
            "mean_error_rms255": mean([r.error_rms255 for r in ok]),
            "mean_noisy_error_rms255": mean([r.noisy_error_rms255 for r in ok]),
            "mean_mask_count": mean([r.mask_count for r in ok]),
        })
    return out


def write_summary(records, path) -> None:
    rows = summarize(records)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if not rows:
            return
        w.writerow(list(rows[0]))
        for row in rows:
            w.writerow([_fmt(v) for v in row.values()])


def run_config(config_path, outdir):
    """Run a matrix described by a JSON file (see README for the keys)."""
    with open(config_path) as fh:
        raw = json.load(fh)
    known = {"images", "methods", "sigmas", "noise", "budgets", "seeds", "alpha", "tol", "decoders",
             "variants", "beta", "dt", "n_steps", "m_param", "coarse_prefilter", "btree_native",
             "timing", "workers", "save_artifacts"}
    unknown = set(raw) - known
    if unknown:
        raise InvalidInputError(f"unknown config keys: {sorted(unknown)}")
    beta = dict(DEFAULT_BETA)
    beta.update(raw.get("beta", {}))
    cfg = BenchConfig(
        alpha=parse_alpha(raw.get("alpha", "inf")),
        tol=float(raw.get("tol", 1e-8)),
        decoders=tuple(raw.get("decoders", ["elliptic"])),
        variants=tuple(raw.get("variants", ["plain"])),
        beta=beta,
        dt=float(raw.get("dt", 1.0)),
        n_steps=int(raw.get("n_steps", 1)),
        m_param=float(raw.get("m_param", 1.0)),
        coarse_prefilter=bool(raw.get("coarse_prefilter", False)),
        btree_native=bool(raw.get("btree_native", False)),
        timing=bool(raw.get("timing", False)),
        workers=int(raw.get("workers", 1)),
        save_artifacts=bool(raw.get("save_artifacts", True)),
    )
    noise = raw.get("noise", raw.get("sigmas", [0.0]))
    return run_matrix(raw.get("images", ["synthetic"]), raw.get("methods", list(METHODS)), noise,
                      raw.get("budgets", [0.1]), raw.get("seeds", [0]), cfg, outdir)


# -- colour ---------------------------------------------------------------

@dataclass
class ColorResult:
    reconstruction: np.ndarray
    masks: list
    union_count: int
    intersection_count: int
    channel_counts: list


def run_color(image_rgb, method: str, budget: float, cfg: BenchConfig | None = None,
              variant: str = "plain", seed: int = 0, decoder: str = "elliptic") -> ColorResult:
    """One mask and one decode per channel, with union / intersection sizes."""
    cfg = cfg or BenchConfig()
    img = np.asarray(image_rgb, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise InvalidInputError(f"expected an (H, W, 3) image, got shape {img.shape}")
    beta = float(cfg.beta.get(variant, 0.0)) if variant != "plain" else 0.0
    masks, chans = [], []
    for ch in range(3):
        f = as_image(img[:, :, ch], f"channel {ch}")
        mask, _ = select_mask(method, f, variant, beta, budget, seed, cfg)
        data = stored_values(f, variant, beta, cfg.coarse_prefilter, cfg.tol)
        u, _ = solve(data, mask, cfg.solver(decoder))
        masks.append(mask)
        chans.append(np.clip(u, 0.0, 1.0))
    union = masks[0] | masks[1] | masks[2]
    inter = masks[0] & masks[1] & masks[2]
    return ColorResult(np.stack(chans, axis=-1), masks, int(union.sum()), int(inter.sum()),
                       [int(m.sum()) for m in masks])
