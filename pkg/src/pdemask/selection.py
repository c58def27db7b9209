"""Mask construction.

* ``L2-T``: keep the pixels with the largest criterion (hard threshold).
* ``L2-H``: turn the criterion into a pixel density and binarise it by
  error diffusion (soft threshold).
* ``RAND``: uniform random subset.
* ``BTREE``: vertices of a binary-tree triangular decomposition.

The criterion is ``|Lap f|`` or one of its sharpened / pre-filtered variants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from pdemask.grid import InvalidInputError, as_image, laplacian
from pdemask.preprocess import SolverFailure, rng_for
from pdemask.solvers import SolverConfig, solve_elliptic

VARIANTS = ("plain", "sharpen", "prefilter")


def target_count(budget: float, n: int) -> int:
    if not 0 < budget <= 1:
        raise InvalidInputError(f"budget must be in (0, 1], got {budget}")
    return int(math.floor(budget * n + 0.5))


def criterion(f, variant: str = "plain", beta: float = 0.0, h: float = 1.0) -> np.ndarray:
    """Per-pixel saliency.

    ``plain``: ``|Lap f|``; ``sharpen``: ``|Lap f - beta Lap(Lap f)|``;
    ``prefilter``: ``|g - f|`` where ``g - beta Lap g = f``, which equals
    ``beta |Lap g|``.
    """
    f = as_image(f)
    if beta < 0:
        raise InvalidInputError("beta must be >= 0")
    if variant == "plain":
        return np.abs(laplacian(f, h))
    if variant == "sharpen":
        lf = laplacian(f, h)
        return np.abs(lf - beta * laplacian(lf, h)) if beta else np.abs(lf)
    if variant == "prefilter":
        if beta == 0:
            return np.zeros_like(f)
        g, rep = solve_elliptic(f, np.zeros(f.shape, dtype=bool), SolverConfig(alpha=beta, h=h))
        if not rep.converged:
            raise SolverFailure("pre-filter solve did not converge")
        return np.abs(g - f)
    raise InvalidInputError(f"unknown criterion variant {variant!r}; expected one of {VARIANTS}")


def mask_hard_threshold(c, budget: float) -> np.ndarray:
    """The ``round(budget * N)`` pixels with the largest criterion.

    Ties go to the smaller row-major index.
    """
    c = np.asarray(c, dtype=np.float64)
    k = target_count(budget, c.size)
    order = np.argsort(-c.ravel(), kind="stable")
    bits = np.zeros(c.size, dtype=bool)
    bits[order[:k]] = True
    return bits.reshape(c.shape)


def mask_random(shape, budget: float, seed: int) -> np.ndarray:
    """Uniform sample of ``round(budget * N)`` pixels, reproducible per seed."""
    shape = tuple(shape)
    n = int(np.prod(shape))
    k = target_count(budget, n)
    bits = np.zeros(n, dtype=bool)
    bits[rng_for(seed).permutation(n)[:k]] = True
    return bits.reshape(shape)


def with_boundary_ring(mask) -> np.ndarray:
    """Add the one-pixel image border to a mask."""
    m = np.array(mask, dtype=bool)
    m[0, :] = m[-1, :] = True
    m[:, 0] = m[:, -1] = True
    return m


# -- density rule ---------------------------------------------------------

def density_from_target(t, newton_steps: int = 8) -> np.ndarray:
    """Solve ``mu**2 / |1 - log mu| = t`` for ``mu`` in [0, 1].

    The left side increases from 0 to 1 on (0, 1], so ``t >= 1`` gives
    ``mu = 1`` and ``t = 0`` gives ``mu = 0``. With ``x = -log mu`` the
    equation reads ``phi(x) = 2x + log(1 + x) + log t = 0``. ``phi`` is
    concave and increasing, so Newton started at the lower bound
    ``(-log t - log(1 - log(t)/2)) / 2`` climbs monotonically to the root.
    """
    t = np.asarray(t, dtype=np.float64)
    mu = np.zeros_like(t)
    full = t >= 1.0
    mu[full] = 1.0
    act = (t > 0) & ~full
    if not act.any():
        return mu
    rhs = -np.log(t[act])
    x = 0.5 * (rhs - np.log1p(0.5 * rhs))
    for _ in range(newton_steps):
        x -= (2.0 * x + np.log1p(x) - rhs) / (2.0 + 1.0 / (1.0 + x))
    mu[act] = np.exp(-x)
    return mu


def density_map(c, budget: float, m_param: float = 1.0, tol: float = 1e-7) -> np.ndarray:
    """Pixel density ``mu`` in [0, 1] with ``mean(mu) = budget``.

    ``mu`` solves ``mu**2 / |1 - log mu| = k * c**2`` per pixel, with the
    single scale ``k`` found by a bracketed root search (Brent) on ``log k`` so
    that the mean hits the budget. ``m_param`` multiplies ``k`` and is absorbed by the
    calibration. An all-zero criterion gives the uniform density ``budget``.
    If even the largest scale cannot reach the budget (too few non-zero
    pixels), the deficit is spread as ``mu + lam * (1 - mu)``, which keeps
    ``mu`` non-decreasing in ``c``.
    """
    c = np.asarray(c, dtype=np.float64)
    if not 0 < budget <= 1:
        raise InvalidInputError(f"budget must be in (0, 1], got {budget}")
    if np.any(c < 0) or not np.all(np.isfinite(c)):
        raise InvalidInputError("criterion must be finite and non-negative")
    if m_param <= 0:
        raise InvalidInputError("m_param must be > 0")
    if budget == 1:
        return np.ones_like(c)
    cmax = float(c.max())
    if cmax == 0:
        return np.full_like(c, budget)
    g2 = (c / cmax) ** 2 * m_param

    lo, hi = math.log(1e-12), math.log(1e12)
    mu_hi = density_from_target(math.exp(hi) * g2)
    if mu_hi.mean() < budget - tol:
        lam = (budget - mu_hi.mean()) / (1.0 - mu_hi).mean()
        return mu_hi + lam * (1.0 - mu_hi)

    def excess(logk):
        return density_from_target(math.exp(logk) * g2).mean() - budget

    if excess(lo) >= 0:
        return density_from_target(math.exp(lo) * g2)
    # bracketed root search on log k; mean(mu) is continuous and increasing in k
    logk = brentq(excess, lo, hi, xtol=1e-12, rtol=4 * np.finfo(float).eps, maxiter=500)
    return density_from_target(math.exp(logk) * g2)


def floyd_steinberg(density) -> np.ndarray:
    """Serpentine Floyd-Steinberg binarisation of values in [0, 1].

    Weights 7/16, 3/16, 5/16, 1/16 pushed along the scan direction. Pixels
    with zero density never receive error and are never set; like pixels
    outside the image they are left out and the remaining weights are
    renormalised. Error with no eligible neighbour is carried to the next
    eligible pixel in scan order, so no error is lost and the number of ones
    stays within 1 of ``density.sum()``.
    """
    d = np.asarray(density, dtype=np.float64)
    ny, nx = d.shape
    rows = [list(map(float, r)) for r in d]
    live = [list(map(bool, r)) for r in d > 0]
    out = np.zeros((ny, nx), dtype=bool)
    carry = 0.0
    for i in range(ny):
        cur = rows[i]
        lcur = live[i]
        last = i + 1 == ny
        nxt = None if last else rows[i + 1]
        lnxt = None if last else live[i + 1]
        if i % 2 == 0:
            js, s = range(nx), 1
        else:
            js, s = range(nx - 1, -1, -1), -1
        orow = out[i]
        for j in js:
            if not lcur[j]:
                continue
            v = cur[j] + carry
            carry = 0.0
            if v >= 0.5:
                orow[j] = True
                e = v - 1.0
            else:
                e = v
            if e == 0.0:
                continue
            jf = j + s
            jb = j - s
            wf = 7.0 if 0 <= jf < nx and lcur[jf] else 0.0
            if last:
                ws = wb = wd = 0.0
            else:
                ws = 5.0 if lnxt[j] else 0.0
                wb = 3.0 if 0 <= jb < nx and lnxt[jb] else 0.0
                wd = 1.0 if 0 <= jf < nx and lnxt[jf] else 0.0
            wsum = wf + ws + wb + wd
            if wsum == 0.0:
                carry = e
                continue
            e /= wsum
            if wf:
                cur[jf] += wf * e
            if ws:
                nxt[j] += ws * e
            if wb:
                nxt[jb] += wb * e
            if wd:
                nxt[jf] += wd * e
    return out


def mask_density_halftone(c, budget: float, m_param: float = 1.0) -> np.ndarray:
    """Density rule followed by error diffusion."""
    return floyd_steinberg(density_map(c, budget, m_param))


# -- binary tree triangular coding ----------------------------------------

@dataclass(frozen=True)
class BttcParams:
    """``threshold``: largest tolerated interpolation error on the 0-255 scale."""

    threshold: float = 10.0
    max_depth: int = 40

    def __post_init__(self):
        if self.threshold < 0:
            raise InvalidInputError("threshold must be >= 0")
        if self.max_depth < 0:
            raise InvalidInputError("max_depth must be >= 0")


def _triangle_pixels(f, a, b, c):
    """Pixels inside triangle abc (border included) and the interpolation error."""
    (ya, xa), (yb, xb), (yc, xc) = a, b, c
    det = (yb - ya) * (xc - xa) - (yc - ya) * (xb - xa)
    if det == 0:
        return None
    y0, y1 = min(ya, yb, yc), max(ya, yb, yc)
    x0, x1 = min(xa, xb, xc), max(xa, xb, xc)
    yy, xx = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    l1 = ((yy - ya) * (xc - xa) - (xx - xa) * (yc - ya)) / det
    l2 = ((yb - ya) * (xx - xa) - (xb - xa) * (yy - ya)) / det
    l0 = 1.0 - l1 - l2
    eps = 1e-9
    inside = (l0 >= -eps) & (l1 >= -eps) & (l2 >= -eps)
    interp = l0 * f[ya, xa] + l1 * f[yb, xb] + l2 * f[yc, xc]
    return yy[inside], xx[inside], interp[inside]


def bttc_triangles(f, p: BttcParams = BttcParams()):
    """Leaf triangles of the decomposition as ``(apex, b, c)`` vertex triples.

    The image rectangle is cut along its main diagonal into two triangles
    whose hypotenuse is that diagonal. A triangle whose worst pixel deviates
    from the linear interpolant of its vertices by more than ``threshold``
    (on the 0-255 scale) is cut at the midpoint of its hypotenuse (rounded
    down to the pixel grid), until ``max_depth`` or until the midpoint
    coincides with an end point.
    """
    f = as_image(f)
    ny, nx = f.shape
    tl, tr, bl, br = (0, 0), (0, nx - 1), (ny - 1, 0), (ny - 1, nx - 1)
    stack = [(tr, tl, br, 0), (bl, tl, br, 0)]
    leaves = []
    thr = p.threshold / 255.0
    while stack:
        apex, b, c, depth = stack.pop()
        split = False
        if depth < p.max_depth:
            mid = ((b[0] + c[0]) // 2, (b[1] + c[1]) // 2)
            if mid != b and mid != c and mid != apex:
                pix = _triangle_pixels(f, apex, b, c)
                if pix is not None:
                    yy, xx, interp = pix
                    err = np.abs(f[yy, xx] - interp)
                    # small slack so that round-off on exactly linear data does not split
                    split = err.size > 0 and float(err.max()) > thr + 1e-12
        if split:
            stack.append((mid, c, apex, depth + 1))
            stack.append((mid, apex, b, depth + 1))
        else:
            leaves.append((apex, b, c))
    return leaves


def mask_bttc(f, p: BttcParams = BttcParams()) -> np.ndarray:
    """All vertices of the BTTC decomposition."""
    f = as_image(f)
    m = np.zeros(f.shape, dtype=bool)
    for tri in bttc_triangles(f, p):
        for y, x in tri:
            m[y, x] = True
    return m


def bttc_decode_linear(f, p: BttcParams = BttcParams()) -> np.ndarray:
    """Native BTTC decoding: piecewise-linear interpolation on the leaves.

    Stored vertices keep their values. Rounded midpoints leave slivers no
    leaf covers; those pixels are filled by harmonic inpainting from the
    covered ones.
    """
    f = as_image(f)
    u = np.zeros_like(f)
    covered = np.zeros(f.shape, dtype=bool)
    vertices = np.zeros(f.shape, dtype=bool)
    for apex, b, c in bttc_triangles(f, p):
        pix = _triangle_pixels(f, apex, b, c)
        if pix is not None:
            yy, xx, interp = pix
            u[yy, xx] = interp
            covered[yy, xx] = True
        for y, x in (apex, b, c):
            vertices[y, x] = True
    # a vertex on the edge of a neighbouring leaf (hanging node) keeps its stored value
    u[vertices] = f[vertices]
    covered |= vertices
    if not covered.all():
        u, _ = solve_elliptic(u, covered, SolverConfig(alpha=math.inf))
    return u
