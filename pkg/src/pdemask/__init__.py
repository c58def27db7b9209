"""Mask selection and PDE inpainting for compressing noisy images."""

from pdemask.grid import energy, laplacian, rms255
from pdemask.io import load_image, load_mask, save_image, save_mask
from pdemask.preprocess import add_gaussian, add_salt_pepper, prefilter, sharpen
from pdemask.selection import (
    BttcParams,
    criterion,
    density_map,
    mask_bttc,
    mask_density_halftone,
    mask_hard_threshold,
    mask_random,
)
from pdemask.solvers import (
    SolveReport,
    SolverConfig,
    solve,
    solve_diffusion,
    solve_elliptic,
    solve_l1,
)

__version__ = "0.1.0"

__all__ = [
    "BttcParams",
    "SolveReport",
    "SolverConfig",
    "add_gaussian",
    "add_salt_pepper",
    "criterion",
    "density_map",
    "energy",
    "laplacian",
    "load_image",
    "load_mask",
    "mask_bttc",
    "mask_density_halftone",
    "mask_hard_threshold",
    "mask_random",
    "prefilter",
    "rms255",
    "save_image",
    "save_mask",
    "sharpen",
    "solve",
    "solve_diffusion",
    "solve_elliptic",
    "solve_l1",
]
