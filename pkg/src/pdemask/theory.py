"""Numerical checks of the asymptotic results behind the selection rules.

* :func:`topo_gradient_scan` solves the radially symmetric problem
  ``w - alpha Lap w = g`` on a disc of radius ``eps`` with ``w = 0`` on its
  rim and measures how the cost change ``-(g/2) int w`` scales with ``eps``.
* :func:`theta_estimate` evaluates the rescaled compliance of a regular
  lattice of ``k*k`` discs of radius ``m/k`` in the unit square;
  :func:`theta_bounds` gives the closed-form upper and lower bounds.
* :func:`bessel_k0` is the modified Bessel function of the second kind.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy import stats
from scipy.linalg import solve_banded

from pdemask.grid import InvalidInputError
from pdemask.solvers import SolverConfig, solve_elliptic

EULER_GAMMA = 0.5772156649015329
T1 = math.sqrt(2.0) / 2.0


# -- K0 -------------------------------------------------------------------

def _k0_series(z: float) -> float:
    # K0 = -(log(z/2) + gamma) I0 + sum_k (z^2/4)^k / (k!)^2 * H_k
    q = 0.25 * z * z
    term = 1.0
    i0 = 1.0
    tail = 0.0
    harmonic = 0.0
    k = 0
    while True:
        k += 1
        term *= q / (k * k)
        harmonic += 1.0 / k
        i0 += term
        tail += term * harmonic
        if term * harmonic < 1e-17 * max(tail, 1e-300) and term < 1e-17 * i0:
            break
    return -(math.log(0.5 * z) + EULER_GAMMA) * i0 + tail


def _k0_steed(z: float) -> float:
    # Steed's continued fraction (Temme's CF2) for K_nu at nu = 0, z >= 2
    b = 2.0 * (1.0 + z)
    d = 1.0 / b
    h = delh = d
    q1, q2 = 0.0, 1.0
    a1 = 0.25
    q = c = a1
    a = -a1
    s = 1.0 + q * delh
    for i in range(1, 100000):
        a -= 2 * i
        c = -a * c / (i + 1.0)
        qnew = (q1 - b * q2) / a
        q1, q2 = q2, qnew
        q += c * qnew
        b += 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h += delh
        dels = q * delh
        s += dels
        if abs(dels / s) < 1e-17:
            break
    return math.sqrt(math.pi / (2.0 * z)) * math.exp(-z) / s


def bessel_k0(z):
    """Modified Bessel function of the second kind, order zero.

    Power series for ``z <= 2`` and Steed's continued fraction above. Accepts
    a scalar or an array; raises ``ValueError`` for ``z <= 0``.
    """
    arr = np.asarray(z, dtype=np.float64)
    if np.any(~(arr > 0)):
        raise ValueError("K0 is defined for z > 0 only")
    out = np.array([_k0_series(v) if v <= 2.0 else _k0_steed(v) for v in arr.ravel()])
    if arr.ndim == 0:
        return float(out[0])
    return out.reshape(arr.shape)


def k0_small_z(z: float) -> float:
    """Leading terms ``-log z + log 2 - gamma`` of K0 near zero."""
    return -math.log(z) + math.log(2.0) - EULER_GAMMA


# -- topological gradient ------------------------------------------------

@dataclass
class RadialSolveResult:
    epsilon: float
    j_diff: float
    integral_w: float
    nodes: int


@dataclass
class ExponentFit:
    """Least-squares fit of ``log(|j| / |log eps|) = log C + p log eps``."""

    exponent: float
    constant: float
    ci_low: float
    ci_high: float
    eps_used: tuple

    @property
    def ci_width(self) -> float:
        return self.ci_high - self.ci_low


def radial_hole_solve(g: float, eps: float, alpha: float, nodes: int):
    """Finite-volume solution of ``w'' + w'/r = (w - g)/alpha`` on ``[0, eps]``.

    ``w'(0) = 0`` and ``w(eps) = 0``. Returns ``(r, w)`` on ``nodes + 1``
    equispaced points.
    """
    n = int(nodes)
    dr = eps / n
    r = np.linspace(0.0, eps, n + 1)
    m = n  # unknowns w_0 .. w_{n-1}
    ab = np.zeros((3, m))
    rhs = np.full(m, -g / alpha * dr * dr)
    # centre node: control disc of radius dr/2
    ab[1, 0] = -4.0 - dr * dr / alpha
    ab[0, 1] = 4.0
    i = np.arange(1, m)
    rp = (r[i] + 0.5 * dr) / r[i]
    rm = (r[i] - 0.5 * dr) / r[i]
    ab[1, i] = -(rp + rm) - dr * dr / alpha
    ab[2, i - 1] = rm
    up = i[:-1]
    ab[0, up + 1] = rp[:-1]
    # w_n = 0 drops out of the last row
    w = np.empty(n + 1)
    w[:m] = solve_banded((1, 1), ab, rhs)
    w[n] = 0.0
    return r, w


def _fit_exponent(results: list[RadialSolveResult], min_nodes: int = 16) -> ExponentFit:
    usable = sorted((r for r in results if r.nodes >= min_nodes), key=lambda r: r.epsilon)[:3]
    nan = float("nan")
    if len(usable) < 3 or any(r.j_diff == 0 for r in usable):
        return ExponentFit(nan, nan, nan, nan, tuple(r.epsilon for r in usable))
    x = np.log([r.epsilon for r in usable])
    y = np.log([abs(r.j_diff) / abs(math.log(r.epsilon)) for r in usable])
    fit = stats.linregress(x, y)
    half = stats.t.ppf(0.975, len(x) - 2) * fit.stderr
    return ExponentFit(
        exponent=float(fit.slope),
        constant=float(math.exp(fit.intercept)),
        ci_low=float(fit.slope - half),
        ci_high=float(fit.slope + half),
        eps_used=tuple(float(r.epsilon) for r in usable),
    )


def topo_gradient_scan(g_value: float, eps_list, grid_n: int = 100_000, alpha: float = 1.0):
    """Cost change of removing a disc of radius ``eps`` from the mask.

    The radial mesh has step ``0.2 / grid_n``; every ``eps`` must be resolved
    by at least 8 cells. Returns ``(results, fit)`` where the fit uses the
    three smallest radii resolved by at least 16 cells.
    """
    eps_list = [float(e) for e in eps_list]
    if not eps_list:
        raise InvalidInputError("eps_list is empty")
    if any(not 0 < e < 0.2 for e in eps_list):
        raise InvalidInputError("every eps must lie in (0, 0.2)")
    if grid_n < 512:
        raise InvalidInputError("grid_n must be >= 512")
    if not alpha > 0:
        raise InvalidInputError("alpha must be > 0")
    step = 0.2 / grid_n
    results = []
    for eps in eps_list:
        nodes = int(round(eps / step))
        if nodes < 8:
            raise InvalidInputError(
                f"mesh too coarse: eps={eps:g} spans {nodes} cells (need >= 8); raise grid_n"
            )
        r, w = radial_hole_solve(g_value, eps, alpha, nodes)
        integral = 2.0 * math.pi * float(np.trapezoid(w * r, r))
        results.append(RadialSolveResult(eps, -0.5 * g_value * integral, integral, nodes))
    return results, _fit_exponent(results)


# -- theta(m) -------------------------------------------------------------

@dataclass
class ThetaEstimate:
    m: float
    k: int
    n: int
    alpha: float
    grid_n: int
    theta_hat: float
    converged: bool


def lattice_mask(m: float, k: int, grid_n: int) -> np.ndarray:
    """``k*k`` discs of radius ``m/k`` centred on the cells of a ``k x k`` lattice.

    Pixel ``(i, j)`` of the ``grid_n x grid_n`` grid sits at
    ``((j + 0.5)/grid_n, (i + 0.5)/grid_n)`` in the unit square.
    """
    h = 1.0 / grid_n
    c = (np.arange(grid_n) + 0.5) * h
    # distance to the nearest lattice centre, per axis
    cell = np.clip(np.floor(c * k), 0, k - 1)
    d = c - (cell + 0.5) / k
    rad = m / k
    return d[:, None] ** 2 + d[None, :] ** 2 <= rad * rad


def theta_estimate(m: float, k: int, alpha: float = 1.0, grid_n: int = 256, tol: float = 1e-8) -> ThetaEstimate:
    """``n * int v`` for the lattice of ``n = k*k`` discs, ``g = 1``.

    ``v - alpha Lap v = 1`` off the discs, ``v = 0`` on them, Neumann on the
    square's border, discretised on ``grid_n x grid_n`` pixels of side
    ``1/grid_n``. Overlapping discs (``m`` near ``sqrt(2)/2``) are allowed.
    """
    if not 0 < m < T1:
        raise InvalidInputError(f"m must lie in (0, sqrt(2)/2), got {m}")
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    if m / k * grid_n < 4:
        raise InvalidInputError(
            f"grid_n={grid_n} resolves the disc radius with {m / k * grid_n:.2f} cells (need >= 4)"
        )
    h = 1.0 / grid_n
    mask = lattice_mask(m, k, grid_n)
    data = np.where(mask, 0.0, 1.0)
    v, rep = solve_elliptic(data, mask, SolverConfig(alpha=alpha, h=h, tol=tol))
    n = k * k
    return ThetaEstimate(m, k, n, alpha, grid_n, float(n * v.sum() * h * h), rep.converged)


def theta_bounds(m: float, alpha: float) -> tuple[float, float]:
    """``(lower, upper)`` bounds on theta(m) with ``t1 = sqrt(2)/2``.

    upper: ``C1 log(1/m) + C1 log(t1)`` with ``C1 = pi t1^4 / (2 alpha)``.
    lower: ``D1 log(1/m) - (D1 log(1/t1) + t1/alpha^2)`` with
    ``D1 = (2 pi^2 alpha - 1) / (2 pi alpha^2 (1 + 2 pi^2 alpha))``; it is
    ``-inf`` when ``D1 <= 0``.
    """
    if not 0 < m < T1:
        raise ValueError(f"m must lie in (0, sqrt(2)/2), got {m}")
    if not alpha > 0:
        raise ValueError("alpha must be > 0")
    c1 = math.pi * T1**4 / (2.0 * alpha)
    upper = c1 * math.log(1.0 / m) + c1 * math.log(T1)
    d1 = lower_bound_slope(alpha)
    if d1 <= 0:
        return -math.inf, upper
    lower = d1 * math.log(1.0 / m) - (d1 * math.log(1.0 / T1) + T1 / alpha**2)
    return lower, upper


def lower_bound_slope(alpha: float) -> float:
    return (2.0 * math.pi**2 * alpha - 1.0) / (2.0 * math.pi * alpha**2 * (1.0 + 2.0 * math.pi**2 * alpha))


# -- CSV ------------------------------------------------------------------

def write_topo_csv(path, results, fit: ExponentFit, g_value: float, alpha: float, grid_n: int) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["g", "alpha", "grid_n", "epsilon", "nodes", "integral_w", "j_diff",
                    "fit_exponent", "fit_constant", "fit_ci_low", "fit_ci_high"])
        for r in results:
            w.writerow([repr(g_value), repr(alpha), grid_n, repr(r.epsilon), r.nodes,
                        repr(r.integral_w), repr(r.j_diff), repr(fit.exponent),
                        repr(fit.constant), repr(fit.ci_low), repr(fit.ci_high)])


def write_theta_csv(path, estimates) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        names = [f.name for f in fields(ThetaEstimate)]
        w.writerow(names + ["lower_bound", "upper_bound"])
        for est in estimates:
            lo, up = theta_bounds(est.m, est.alpha)
            row = asdict(est)
            w.writerow([repr(row[n]) if isinstance(row[n], float) else row[n] for n in names]
                       + [repr(lo), repr(up)])
