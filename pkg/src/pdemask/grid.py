"""Grid operators on 2-D images.

Images are float64 arrays of shape ``(height, width)`` with values nominally in
[0, 1]. Masks are boolean arrays of the same shape, ``True`` marking a stored
pixel. Homogeneous Neumann boundaries are realised by half-sample mirroring
(the ghost value equals the boundary pixel), which keeps the discrete
Laplacian symmetric and exact on constants.
"""

from __future__ import annotations

import numpy as np


class InvalidInputError(ValueError):
    """Raised when an array argument violates a documented precondition."""


def as_image(img, name: str = "image") -> np.ndarray:
    """Return ``img`` as a finite 2-D float64 array of size at least 3x3."""
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {a.shape}")
    if a.shape[0] < 3 or a.shape[1] < 3:
        raise InvalidInputError(f"{name} must be at least 3x3, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} contains NaN or infinite values")
    return a


def as_mask(mask, shape: tuple[int, int] | None = None) -> np.ndarray:
    m = np.asarray(mask)
    if m.dtype != np.bool_:
        m = m.astype(bool)
    if shape is not None and m.shape != tuple(shape):
        raise InvalidInputError(f"mask shape {m.shape} does not match image shape {shape}")
    return m


def check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise InvalidInputError(f"shape mismatch: {a.shape} vs {b.shape}")


def neighbour_count(shape: tuple[int, int]) -> np.ndarray:
    """Number of in-grid 4-neighbours of each pixel (2, 3 or 4)."""
    ny, nx = shape
    cnt = np.full(shape, 4.0)
    cnt[0, :] -= 1
    cnt[-1, :] -= 1
    cnt[:, 0] -= 1
    cnt[:, -1] -= 1
    return cnt


def _lap(u: np.ndarray) -> np.ndarray:
    # unchecked, unscaled 5-point stencil with mirrored ghosts
    p = np.pad(u, 1, mode="edge")
    return p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:] - 4.0 * u


def laplacian(img, h: float = 1.0) -> np.ndarray:
    """Five-point Laplacian with Neumann boundary handling.

    Parameters
    ----------
    img : array_like
        2-D image, at least 3x3.
    h : float
        Grid spacing.

    Returns
    -------
    numpy.ndarray
        ``(u_E + u_W + u_N + u_S - 4 u_C) / h**2`` with ghost values mirrored
        across the image border.
    """
    return _lap(as_image(img)) / (h * h)


def forward_gradient(u: np.ndarray, h: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Forward differences, zero in the last row/column."""
    gy = np.zeros_like(u)
    gx = np.zeros_like(u)
    gy[:-1, :] = (u[1:, :] - u[:-1, :]) / h
    gx[:, :-1] = (u[:, 1:] - u[:, :-1]) / h
    return gy, gx


def energy(u, f, alpha: float, p: int = 2, h: float = 1.0) -> float:
    """Data fit plus Tikhonov term of the reconstruction error.

    ``(1/p) sum |u - f|^p h^2 + (alpha/2) sum |grad(u - f)|^2 h^2``, the
    gradient taken with forward differences truncated at the far border.
    """
    u = as_image(u, "u")
    f = as_image(f, "f")
    check_same_shape(u, f)
    if p not in (1, 2):
        raise InvalidInputError(f"p must be 1 or 2, got {p}")
    d = u - f
    gy, gx = forward_gradient(d, h)
    data = np.sum(np.abs(d) ** p) / p
    reg = 0.5 * alpha * np.sum(gy * gy + gx * gx)
    return float((data + reg) * h * h)


def rms255(a, b) -> float:
    """Root-mean-square difference on the 0-255 intensity scale."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    check_same_shape(a, b)
    return float(255.0 * np.sqrt(np.mean((a - b) ** 2)))
