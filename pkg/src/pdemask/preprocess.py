"""Noise models and the sharpening / pre-filtering transforms.

Randomness comes from numpy's ``Philox`` counter-based bit generator seeded
with the caller's integer, so a given seed yields the same stream on every
platform. See ``tests/test_preprocess.py`` for frozen test vectors.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from pdemask.grid import InvalidInputError, as_image, laplacian
from pdemask.solvers import SolverConfig, solve_elliptic


def rng_for(seed: int) -> np.random.Generator:
    """The package-wide seeded generator."""
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "gaussian"
    sigma: float = 0.0
    p_salt: float = 0.0
    p_pepper: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("gaussian", "salt_pepper"):
            raise InvalidInputError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0:
            raise InvalidInputError("sigma must be >= 0")
        if self.p_salt < 0 or self.p_pepper < 0 or self.p_salt + self.p_pepper > 1:
            raise InvalidInputError("need p_salt, p_pepper >= 0 and p_salt + p_pepper <= 1")

    def apply(self, f):
        if self.kind == "gaussian":
            return add_gaussian(f, self.sigma, self.seed)
        return add_salt_pepper(f, self.p_salt, self.p_pepper, self.seed)

    def label(self) -> str:
        if self.kind == "gaussian":
            return f"{self.sigma:g}"
        return f"sp:{self.p_salt:g}:{self.p_pepper:g}"

    def to_dict(self) -> dict:
        return asdict(self)


def add_gaussian(f, sigma: float, seed: int) -> np.ndarray:
    """``clip(f + sigma * Z, 0, 1)`` with i.i.d. standard normal ``Z``.

    Works on gray ``(H, W)`` and colour ``(H, W, 3)`` arrays.
    """
    if sigma < 0:
        raise InvalidInputError("sigma must be >= 0")
    f = np.asarray(f, dtype=np.float64)
    if sigma == 0:
        return f.copy()
    z = rng_for(seed).standard_normal(f.shape)
    return np.clip(f + sigma * z, 0.0, 1.0)


def add_salt_pepper(f, p_salt: float, p_pepper: float, seed: int) -> np.ndarray:
    """Set each pixel to 1 with probability ``p_salt``, to 0 with ``p_pepper``."""
    if p_salt < 0 or p_pepper < 0 or p_salt + p_pepper > 1:
        raise InvalidInputError("need p_salt, p_pepper >= 0 and p_salt + p_pepper <= 1")
    f = np.asarray(f, dtype=np.float64)
    u = rng_for(seed).random(f.shape)
    out = f.copy()
    out[u < p_salt] = 1.0
    out[(u >= p_salt) & (u < p_salt + p_pepper)] = 0.0
    return out


def sharpen(f, beta: float, h: float = 1.0) -> np.ndarray:
    """``f - beta * Lap(f)``, not clamped."""
    if beta < 0:
        raise InvalidInputError("beta must be >= 0")
    f = as_image(f)
    if beta == 0:
        return f.copy()
    return f - beta * laplacian(f, h)


def prefilter(f, beta: float, coarse: bool = False, cfg: SolverConfig | None = None) -> np.ndarray:
    """Solve ``g - beta * Lap(g) = f`` on the whole image (Neumann border).

    With ``coarse=True`` the filter runs on a 2x2 block-averaged copy (grid
    step 2, so the pixel-unit weight is ``beta / 4``) and the result is
    upsampled by pixel replication; the mean is then only approximately
    preserved.
    """
    if not beta > 0:
        raise InvalidInputError("beta must be > 0")
    f = as_image(f)
    cfg = cfg or SolverConfig()
    empty = np.zeros(f.shape, dtype=bool)
    if not coarse:
        g, rep = solve_elliptic(f, empty, SolverConfig(alpha=beta, tol=cfg.tol, max_iter=cfg.max_iter))
        _check(rep)
        return g
    ny, nx = f.shape
    py, px = ny % 2, nx % 2
    fp = np.pad(f, ((0, py), (0, px)), mode="edge")
    small = fp.reshape(fp.shape[0] // 2, 2, fp.shape[1] // 2, 2).mean(axis=(1, 3))
    if min(small.shape) < 3:
        raise InvalidInputError("image too small for the coarse pre-filter")
    gs, rep = solve_elliptic(
        small,
        np.zeros(small.shape, dtype=bool),
        SolverConfig(alpha=beta, h=2.0, tol=cfg.tol, max_iter=cfg.max_iter),
    )
    _check(rep)
    return gs.repeat(2, axis=0).repeat(2, axis=1)[:ny, :nx]


class SolverFailure(RuntimeError):
    """A linear solve did not reach its tolerance."""


def _check(rep) -> None:
    if not rep.converged:
        raise SolverFailure(
            f"solver stopped after {rep.iterations} iterations at residual {rep.final_residual:.3g}"
        )
