"""Image and mask files.

Grayscale and RGB images are read from 8-bit PGM/PPM or PNG and mapped to
``byte / 255``; they are written back with ``round(v * 255)`` after clamping,
so an 8-bit image survives a load/save/load cycle unchanged. Masks use PBM
(a set bit marks a stored pixel) or PNG (255 marks a stored pixel).
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError


class ImageIOError(OSError):
    """Unreadable, corrupt or unsupported image/mask file."""


_MASK_SUFFIXES = {".pbm", ".png"}
_IMAGE_SUFFIXES = {".pgm", ".ppm", ".pnm", ".png"}


def _open(path) -> Image.Image:
    try:
        img = Image.open(path)
        img.load()
    except FileNotFoundError as exc:
        raise ImageIOError(f"{path}: no such file") from exc
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise ImageIOError(f"{path}: cannot decode image ({exc})") from exc
    return img


def load_image(path) -> np.ndarray:
    """Load an 8-bit image as float64 in [0, 1].

    Returns a ``(H, W)`` array for grayscale input and ``(H, W, 3)`` for RGB.
    """
    img = _open(path)
    if img.mode == "L":
        arr = np.asarray(img, dtype=np.uint8)
    elif img.mode == "RGB":
        arr = np.asarray(img, dtype=np.uint8)
    elif img.mode == "1":
        arr = np.asarray(img.convert("L"), dtype=np.uint8)
    else:
        raise ImageIOError(
            f"{path}: unsupported image mode {img.mode!r} (need 8-bit gray or RGB)"
        )
    return arr.astype(np.float64) / 255.0


def to_bytes(img) -> np.ndarray:
    a = np.asarray(img, dtype=np.float64)
    return np.rint(np.clip(a, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_image(img, path) -> None:
    path = Path(path)
    if path.suffix.lower() not in _IMAGE_SUFFIXES:
        raise ImageIOError(f"{path}: unsupported image extension {path.suffix!r}")
    a = np.asarray(img, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ImageIOError(f"{path}: refusing to save non-finite values")
    b = to_bytes(a)
    if b.ndim == 2:
        pil = Image.fromarray(b, mode="L")
    elif b.ndim == 3 and b.shape[2] == 3:
        pil = Image.fromarray(b, mode="RGB")
    else:
        raise ImageIOError(f"{path}: cannot save array of shape {a.shape}")
    fmt = "PNG" if path.suffix.lower() == ".png" else "PPM"
    try:
        pil.save(path, format=fmt)
    except OSError as exc:
        raise ImageIOError(f"{path}: write failed ({exc})") from exc


def save_mask(mask, path) -> None:
    path = Path(path)
    m = np.asarray(mask, dtype=bool)
    if m.ndim != 2:
        raise ImageIOError(f"{path}: mask must be 2-D, got shape {m.shape}")
    suffix = path.suffix.lower()
    if suffix not in _MASK_SUFFIXES:
        raise ImageIOError(f"{path}: unsupported mask extension {path.suffix!r}")
    try:
        if suffix == ".pbm":
            # PBM bit 1 is black; Pillow maps black to 0 in mode "1"
            Image.fromarray(~m).convert("1").save(path, format="PPM")
        else:
            Image.fromarray(m.astype(np.uint8) * 255, mode="L").save(path, format="PNG")
    except OSError as exc:
        raise ImageIOError(f"{path}: write failed ({exc})") from exc


def load_mask(path, shape=None) -> np.ndarray:
    img = _open(path)
    if img.mode == "1":
        m = np.asarray(img.convert("L")) == 0
        if Path(path).suffix.lower() == ".png":
            m = ~m
    elif img.mode == "L":
        a = np.asarray(img)
        if not np.all((a == 0) | (a == 255)):
            raise ImageIOError(f"{path}: mask PNG must contain only 0 and 255")
        m = a == 255
    else:
        raise ImageIOError(f"{path}: unsupported mask mode {img.mode!r}")
    if shape is not None and m.shape != tuple(shape):
        from pdemask.grid import InvalidInputError

        raise InvalidInputError(f"mask shape {m.shape} does not match image shape {tuple(shape)}")
    return m


def write_sidecar(artifact_path, meta: dict) -> Path:
    """Write ``<artifact>.json`` next to an output file."""
    side = Path(os.fspath(artifact_path) + ".json")
    side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return side
