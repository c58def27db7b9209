"""Inpainting decoders.

All decoders keep the stored pixels fixed (``u = f`` on the mask) and solve
for the remaining ones with homogeneous Neumann conditions on the image
border. Stored pixels are eliminated from the unknowns and folded into the
right-hand side, so the reduced systems stay symmetric positive definite and
are solved with Jacobi-preconditioned conjugate gradients, applying the
five-point stencil matrix-free.

``alpha = inf`` in :func:`solve_elliptic` selects the limit problem
``-Laplace(u) = 0`` off the mask, i.e. harmonic inpainting from the stored
pixels alone. It is also the steady state of :func:`solve_diffusion`.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from pdemask.grid import InvalidInputError, _lap, as_image, as_mask, neighbour_count

DECODERS = ("elliptic", "diffusion", "l1")


@dataclass(frozen=True)
class SolverConfig:
    """Parameters shared by the decoders.

    ``max_iter`` caps CG iterations per linear solve (``None`` means ten
    times the number of unknowns). The IRLS outer loop of the L1 decoder is
    controlled separately by ``l1_tol`` (0-255 scale) and ``l1_max_iter``.
    """

    alpha: float = 1.0
    tol: float = 1e-8
    max_iter: int | None = None
    decoder: str = "elliptic"
    dt: float = 1.0
    n_steps: int = 1
    h: float = 1.0
    eta: float = 1e-3
    l1_tol: float = 1e-4
    l1_max_iter: int = 50

    def __post_init__(self):
        if not self.alpha > 0:
            raise InvalidInputError(f"alpha must be > 0, got {self.alpha}")
        if not self.tol > 0:
            raise InvalidInputError(f"tol must be > 0, got {self.tol}")
        if self.max_iter is not None and self.max_iter < 1:
            raise InvalidInputError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.decoder not in DECODERS:
            raise InvalidInputError(f"decoder must be one of {DECODERS}, got {self.decoder!r}")
        if self.decoder == "diffusion" and not (self.dt > 0 and math.isfinite(self.dt)):
            raise InvalidInputError(f"dt must be finite and > 0, got {self.dt}")
        if self.n_steps < 1:
            raise InvalidInputError(f"n_steps must be >= 1, got {self.n_steps}")
        if not self.h > 0:
            raise InvalidInputError(f"h must be > 0, got {self.h}")
        if not self.eta > 0:
            raise InvalidInputError(f"eta must be > 0, got {self.eta}")


@dataclass
class SolveReport:
    iterations: int = 0
    final_residual: float = 0.0
    converged: bool = True
    wall_time: float = 0.0

    def merge(self, other: "SolveReport") -> "SolveReport":
        return SolveReport(
            iterations=self.iterations + other.iterations,
            final_residual=max(self.final_residual, other.final_residual),
            converged=self.converged and other.converged,
            wall_time=self.wall_time + other.wall_time,
        )


def _pcg(apply_a, b, inv_diag, x0, tol, max_iter):
    """Preconditioned CG on arrays that are zero outside the unknowns.

    Returns ``(x, iterations, relative_residual)``. The recursive residual is
    re-anchored to the true residual before declaring convergence.
    """
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b), 0, 0.0
    x = x0.copy()
    it = 0
    while True:
        r = b - apply_a(x)
        res = float(np.linalg.norm(r)) / bnorm
        if res <= tol or it >= max_iter:
            return x, it, res
        z = inv_diag * r
        p = z.copy()
        rz = float(np.vdot(r, z))
        while it < max_iter:
            q = apply_a(p)
            step = rz / float(np.vdot(p, q))
            x += step * p
            r -= step * q
            it += 1
            if float(np.linalg.norm(r)) / bnorm <= tol:
                break
            z = inv_diag * r
            rz_new = float(np.vdot(r, z))
            p *= rz_new / rz
            p += z
            rz = rz_new


def _screened_solve(target, weight, mask, coupling, tol, max_iter, x0=None):
    """Solve ``weight*(u - target) - coupling*Lap(u) = 0`` off the mask.

    ``u`` equals ``target`` on the mask. ``weight`` is a scalar or an array;
    ``weight = 0`` gives the harmonic problem.
    """
    free = ~mask
    freef = free.astype(np.float64)
    nfree = int(free.sum())
    w = np.broadcast_to(np.asarray(weight, dtype=np.float64), target.shape)
    fixed = np.where(mask, target, 0.0)

    def apply_a(x):
        return (w * x - coupling * _lap(x)) * freef

    b = (w * target + coupling * _lap(fixed)) * freef
    diag = w + coupling * neighbour_count(target.shape)
    inv_diag = np.where(free, 1.0 / diag, 0.0)
    if x0 is None:
        x0 = target
    x0 = np.where(free, x0, 0.0)
    if max_iter is None:
        max_iter = 10 * max(nfree, 1)
    x, it, res = _pcg(apply_a, b, inv_diag, x0, tol, max_iter)
    u = np.where(mask, target, x)
    return u, it, res


def _report(it, res, tol, t0):
    return SolveReport(
        iterations=it,
        final_residual=res,
        converged=res <= tol,
        wall_time=time.perf_counter() - t0,
    )


def solve_elliptic(f_data, mask, cfg: SolverConfig | None = None):
    """Solve ``u - alpha*Lap(u) = f`` off the mask with ``u = f`` on it.

    Returns ``(u, SolveReport)``. For ``alpha = inf`` the off-mask values of
    ``f_data`` are ignored and ``u`` is the harmonic inpainting of the stored
    pixels; with an empty mask that limit is the constant ``mean(f_data)``.
    Non-convergence is reported, not raised.
    """
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    f = as_image(f_data, "f_data")
    m = as_mask(mask, f.shape)
    if m.all():
        return f.copy(), _report(0, 0.0, cfg.tol, t0)
    if math.isinf(cfg.alpha):
        if not m.any():
            return np.full_like(f, f.mean()), _report(0, 0.0, cfg.tol, t0)
        x0 = np.full_like(f, f[m].mean())
        u, it, res = _screened_solve(f, 0.0, m, 1.0 / cfg.h**2, cfg.tol, cfg.max_iter, x0)
    else:
        u, it, res = _screened_solve(f, 1.0, m, cfg.alpha / cfg.h**2, cfg.tol, cfg.max_iter)
    return u, _report(it, res, cfg.tol, t0)


def solve_diffusion(
    f_data,
    mask,
    cfg: SolverConfig | None = None,
    callback: Callable[[int, np.ndarray], None] | None = None,
):
    """Semi-implicit linear diffusion inpainting.

    Starting from ``u0 = f_data`` each step solves
    ``(I - dt*Lap) u_next = u`` off the mask with ``u_next = f_data`` on it.
    ``callback(step, u)`` is called after every step.
    """
    cfg = cfg or SolverConfig(decoder="diffusion")
    f = as_image(f_data, "f_data")
    m = as_mask(mask, f.shape)
    step_cfg = replace(cfg, alpha=cfg.dt, decoder="elliptic")
    u = f.copy()
    report = SolveReport()
    for n in range(cfg.n_steps):
        u, rep = solve_elliptic(np.where(m, f, u), m, step_cfg)
        report = report.merge(rep)
        if callback is not None:
            callback(n + 1, u)
    return u, report


def smoothed_abs(r, eta: float):
    """Huber smoothing of ``|r|``: quadratic below ``eta``, exact above."""
    a = np.abs(r)
    return np.where(a >= eta, a, 0.5 * a * a / eta + 0.5 * eta)


def l1_energy(u, f, alpha: float, eta: float = 0.0, h: float = 1.0) -> float:
    """``sum phi(u - f) h^2 + (alpha/2) sum |grad u|^2 h^2``.

    ``phi`` is ``|.|`` for ``eta = 0`` and its Huber smoothing otherwise.
    Forward differences, truncated at the far border.
    """
    u = np.asarray(u, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    r = u - f
    data = np.abs(r) if eta == 0 else smoothed_abs(r, eta)
    dy = np.diff(u, axis=0)
    dx = np.diff(u, axis=1)
    reg = 0.5 * alpha * (np.sum(dy * dy) + np.sum(dx * dx)) / (h * h)
    return float(np.sum(data) * h * h + reg * h * h)


def solve_l1(f_data, mask, cfg: SolverConfig | None = None, history: list | None = None):
    """L1 data fit with quadratic gradient penalty, by IRLS.

    Minimises ``sum |u - f| + (alpha/2) sum |grad u|^2`` subject to ``u = f``
    on the mask. Each outer step solves a weighted least-squares problem with
    weights ``1 / max(|u - f|, eta)``; this is a majorise-minimise step for
    the Huber-smoothed energy, which therefore never increases. Stops when
    successive iterates differ by less than ``cfg.l1_tol`` in rms255 or after
    ``cfg.l1_max_iter`` outer steps. If ``history`` is a list, the smoothed
    energy of every iterate is appended to it.
    """
    cfg = cfg or SolverConfig(decoder="l1")
    if math.isinf(cfg.alpha):
        raise InvalidInputError("the L1 decoder needs a finite alpha")
    t0 = time.perf_counter()
    f = as_image(f_data, "f_data")
    m = as_mask(mask, f.shape)
    u, report = solve_elliptic(f, m, replace(cfg, decoder="elliptic"))
    if m.all():
        return u, report
    coupling = cfg.alpha / cfg.h**2
    if history is not None:
        history.append(l1_energy(u, f, cfg.alpha, cfg.eta, cfg.h))
    for _ in range(cfg.l1_max_iter):
        w = 1.0 / np.maximum(np.abs(u - f), cfg.eta)
        u_new, it, res = _screened_solve(f, w, m, coupling, cfg.tol, cfg.max_iter, x0=u)
        report = report.merge(_report(it, res, cfg.tol, time.perf_counter()))
        change = 255.0 * float(np.sqrt(np.mean((u_new - u) ** 2)))
        u = u_new
        if history is not None:
            history.append(l1_energy(u, f, cfg.alpha, cfg.eta, cfg.h))
        if change < cfg.l1_tol:
            break
    report.wall_time = time.perf_counter() - t0
    return u, report


def solve(f_data, mask, cfg: SolverConfig | None = None):
    """Dispatch on ``cfg.decoder``."""
    cfg = cfg or SolverConfig()
    if cfg.decoder == "elliptic":
        return solve_elliptic(f_data, mask, cfg)
    if cfg.decoder == "diffusion":
        return solve_diffusion(f_data, mask, cfg)
    return solve_l1(f_data, mask, cfg)
