"""Command-line front end: ``pdemask {mask,inpaint,noise,bench,theory}``.

Exit codes: 0 success, 2 invalid flags or input, 3 file I/O, 4 numerical
failure (a solver that does not converge).
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from pdemask import __version__
from pdemask.grid import InvalidInputError, rms255
from pdemask.io import ImageIOError, load_image, load_mask, save_image, save_mask, write_sidecar
from pdemask.preprocess import NoiseSpec, SolverFailure
from pdemask.selection import (
    BttcParams,
    criterion,
    mask_bttc,
    mask_density_halftone,
    mask_hard_threshold,
    mask_random,
    with_boundary_ring,
)
from pdemask.solvers import SolverConfig, solve

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

DEFAULTS = {
    "alpha": 1.0,
    "tol": 1e-8,
    "budget": 0.10,
    "beta_sharpen": 0.18,
    "beta_prefilter": 1.2,
    "dt": 1.0,
    "steps": 1,
    "seed": 0,
}

METHOD_NAMES = {"l2t": "L2-T", "l2h": "L2-H", "rand": "RAND", "btree": "BTREE"}


class NumericalFailure(RuntimeError):
    pass


def _positive(kind):
    def conv(s):
        try:
            v = kind(s)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {s!r}")
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be > 0, got {s}")
        return v
    return conv


def _nonneg(s):
    try:
        v = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {s!r}")
    if not (v >= 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be finite and >= 0, got {s}")
    return v


def _fraction(s):
    v = _positive(float)(s)
    if v > 1:
        raise argparse.ArgumentTypeError(f"must be in (0, 1], got {s}")
    return v


def _alpha(s):
    # accepts "inf" for harmonic inpainting
    return _positive(float)(s)


def _float_list(s):
    try:
        return [float(x) for x in s.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}")


def _int_list(s):
    try:
        return [int(x) for x in s.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}")


def _json_float(v):
    return "inf" if isinstance(v, float) and math.isinf(v) else v


def _gray(img):
    return img.mean(axis=2) if img.ndim == 3 else img


# -- subcommands ----------------------------------------------------------

def cmd_mask(a) -> int:
    f = _gray(load_image(a.input))
    method = METHOD_NAMES[a.method]
    beta = a.beta
    if beta is None:
        beta = {"plain": 0.0, "sharpen": DEFAULTS["beta_sharpen"], "prefilter": DEFAULTS["beta_prefilter"]}[a.variant]
    meta = {"method": method, "budget": a.budget, "variant": a.variant, "beta": beta, "seed": a.seed,
            "alpha": _json_float(a.alpha), "input": a.input, "version": __version__}
    if method == "RAND":
        mask = mask_random(f.shape, a.budget, a.seed)
    elif method == "BTREE":
        if a.threshold is None:
            from pdemask.bench import btree_threshold_search

            res = btree_threshold_search(f, a.budget)
            threshold = res.threshold
            meta.update(btree_target=res.target, btree_reachable=res.reachable)
        else:
            threshold = a.threshold
        meta["threshold"] = threshold
        mask = mask_bttc(f, BttcParams(threshold))
    else:
        c = criterion(f, a.variant, beta)
        if method == "L2-T":
            mask = mask_hard_threshold(c, a.budget)
        else:
            mask = mask_density_halftone(c, a.budget, a.m_param)
            meta["m_param"] = a.m_param
    if a.boundary_ring:
        mask = with_boundary_ring(mask)
        meta["boundary_ring"] = True
    meta["mask_count"] = int(mask.sum())
    meta["mask_fraction"] = float(mask.mean())
    save_mask(mask, a.output)
    write_sidecar(a.output, meta)
    print(f"{a.output}: {meta['mask_count']} pixels ({100 * meta['mask_fraction']:.3f}%)")
    return EXIT_OK


def cmd_inpaint(a) -> int:
    img = load_image(a.input)
    shape = img.shape[:2]
    mask = load_mask(a.mask, shape)
    cfg = SolverConfig(alpha=a.alpha, tol=a.tol, decoder=a.decoder, dt=a.dt, n_steps=a.steps,
                       max_iter=a.max_iter)
    chans = [img] if img.ndim == 2 else [img[:, :, c] for c in range(3)]
    outs = []
    failed = []
    for ch in chans:
        u, rep = solve(ch, mask, cfg)
        print(f"iterations={rep.iterations} residual={rep.final_residual:.3e} "
              f"converged={rep.converged} time={rep.wall_time:.3f}s", file=sys.stderr)
        if not rep.converged:
            failed.append(rep)
        outs.append(u)
    u = outs[0] if img.ndim == 2 else np.stack(outs, axis=-1)
    if failed:
        raise NumericalFailure(f"solver did not reach tol={a.tol} (residual {failed[0].final_residual:.3g})")
    save_image(u, a.output)
    meta = {"decoder": a.decoder, "alpha": _json_float(a.alpha), "tol": a.tol, "dt": a.dt, "steps": a.steps,
            "input": a.input, "mask": a.mask, "version": __version__}
    if a.reference:
        ref = load_image(a.reference)
        meta["error_rms255"] = rms255(ref, np.clip(u, 0, 1))
        print(f"rms255 vs reference: {meta['error_rms255']:.4f}")
    write_sidecar(a.output, meta)
    return EXIT_OK


def cmd_noise(a) -> int:
    f = load_image(a.input)
    if a.saltpepper is not None:
        spec = NoiseSpec("salt_pepper", p_salt=a.saltpepper[0], p_pepper=a.saltpepper[1], seed=a.seed)
    else:
        spec = NoiseSpec("gaussian", sigma=a.gaussian, seed=a.seed)
    g = spec.apply(f)
    save_image(g, a.output)
    err = rms255(f, g)
    write_sidecar(a.output, {"noise": spec.to_dict(), "rms255": err, "input": a.input, "version": __version__})
    print(f"rms255 vs input: {err:.4f}")
    return EXIT_OK


def cmd_bench(a) -> int:
    from pdemask.bench import run_config

    records = run_config(a.config, a.outdir)
    bad = [r for r in records if r.status != "ok"]
    print(f"{len(records)} records written to {a.outdir}/results.csv ({len(bad)} failed)")
    return EXIT_OK


def cmd_theory(a) -> int:
    from pdemask import theory

    if a.experiment == "topo":
        results, fit = theory.topo_gradient_scan(a.g, a.eps, a.grid_n or 100_000, a.alpha)
        theory.write_topo_csv(a.out, results, fit, a.g, a.alpha, a.grid_n or 100_000)
        print(f"fitted exponent {fit.exponent:.4f} (95% CI {fit.ci_low:.4f} .. {fit.ci_high:.4f})")
    else:
        ests = [theory.theta_estimate(m, k, a.alpha, a.grid_n or 256) for k in a.k for m in a.m]
        theory.write_theta_csv(a.out, ests)
        for e in ests:
            print(f"k={e.k} m={e.m:g} theta_hat={e.theta_hat:.6f}")
    return EXIT_OK


# -- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = argparse.ArgumentParser(prog="pdemask", description=__doc__.splitlines()[0], formatter_class=fmt)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("mask", help="select a mask", formatter_class=fmt)
    m.add_argument("input")
    m.add_argument("output", help=".pbm or .png mask")
    m.add_argument("--method", choices=sorted(METHOD_NAMES), default="l2h", help="selection method")
    m.add_argument("--budget", type=_fraction, default=DEFAULTS["budget"], help="fraction of stored pixels")
    m.add_argument("--variant", choices=["plain", "sharpen", "prefilter"], default="plain",
                   help="criterion variant for l2t / l2h")
    m.add_argument("--beta", type=_nonneg, default=None,
                   help=f"variant weight (default sharpen {DEFAULTS['beta_sharpen']}, "
                        f"prefilter {DEFAULTS['beta_prefilter']})")
    m.add_argument("--seed", type=int, default=DEFAULTS["seed"], help="seed for rand")
    m.add_argument("--alpha", type=_alpha, default=DEFAULTS["alpha"], help="decoder alpha, recorded in the sidecar")
    m.add_argument("--m-param", type=_positive(float), default=1.0, help="density rule scale (l2h)")
    m.add_argument("--threshold", type=_nonneg, default=None, help="BTTC threshold (0-255); searched from --budget if omitted")
    m.add_argument("--boundary-ring", action="store_true", help="also store the image border")
    m.set_defaults(func=cmd_mask)

    i = sub.add_parser("inpaint", help="reconstruct from a mask", formatter_class=fmt)
    i.add_argument("input", help="image providing the stored values")
    i.add_argument("mask")
    i.add_argument("output")
    i.add_argument("--decoder", choices=["elliptic", "diffusion", "l1"], default="elliptic", help="decoder")
    i.add_argument("--alpha", type=_alpha, default=DEFAULTS["alpha"], help="'inf' gives harmonic inpainting")
    i.add_argument("--dt", type=_positive(float), default=DEFAULTS["dt"], help="diffusion time step")
    i.add_argument("--steps", type=_positive(int), default=DEFAULTS["steps"], help="diffusion steps")
    i.add_argument("--tol", type=_positive(float), default=DEFAULTS["tol"], help="relative CG residual")
    i.add_argument("--max-iter", type=_positive(int), default=None,
                   help="CG iteration cap per solve (None: ten times the unknowns)")
    i.add_argument("--reference", default=None, help="clean image for an rms255 report")
    i.set_defaults(func=cmd_inpaint)

    n = sub.add_parser("noise", help="add noise", formatter_class=fmt)
    n.add_argument("input")
    n.add_argument("output")
    g = n.add_mutually_exclusive_group()
    g.add_argument("--gaussian", type=_nonneg, default=0.0, metavar="SIGMA", help="Gaussian noise level")
    g.add_argument("--saltpepper", type=_nonneg, nargs=2, metavar=("PS", "PP"), default=None,
                   help="salt and pepper probabilities")
    n.add_argument("--seed", type=int, default=DEFAULTS["seed"], help="noise seed")
    n.set_defaults(func=cmd_noise)

    b = sub.add_parser("bench", help="run a benchmark matrix", formatter_class=fmt)
    b.add_argument("config", help="JSON config")
    b.add_argument("outdir")
    b.set_defaults(func=cmd_bench)

    t = sub.add_parser("theory", help="theory lab experiments", formatter_class=fmt)
    t.add_argument("--experiment", choices=["topo", "theta"], required=True)
    t.add_argument("--out", required=True, help="CSV output")
    t.add_argument("--alpha", type=_positive(float), default=DEFAULTS["alpha"], help="alpha of the screened problem")
    t.add_argument("--grid-n", type=int, default=None, help="topo: 100000 radial cells; theta: 256 pixels per side")
    t.add_argument("--g", type=float, default=1.0, help="topo: value of g at the hole")
    t.add_argument("--eps", type=_float_list, default=[1e-3, 2e-3, 4e-3, 8e-3, 0.016, 0.032, 0.064, 0.128],
                   help="topo: comma-separated hole radii")
    t.add_argument("--m", type=_float_list, default=[0.1, 0.2, 0.3], help="theta: comma-separated scales m")
    t.add_argument("--k", type=_int_list, default=[4], help="theta: comma-separated lattice sizes k")
    t.set_defaults(func=cmd_theory)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    try:
        return a.func(a)
    except ImageIOError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverFailure, NumericalFailure, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
