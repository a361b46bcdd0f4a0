"""Raster and stack types plus linear-index conversions.

Conventions used throughout the package:

* An image is a row-major array of shape (Y, X, channels) with values in
  [0, 1].  The 0-based linear index of pixel (x, y) is ``y * X + x``, which
  equals the raveled position in the (Y, X) plane.
* Public index helpers keep the classic 1-based image convention
  (pixel (1, 1) has index 1) and the 0-based dictionary-grid convention
  (displacement (-s, -s) of the first patch has index 0).  Internally
  everything is 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BoundsError, ConfigurationError, CorruptionError


@dataclass(frozen=True)
class PixelGrid:
    """Immutable X-by-Y raster with one or more channels, values in [0, 1]."""

    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ConfigurationError(f"expected 2D or 3D array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1 or arr.shape[2] < 1:
            raise ConfigurationError(f"degenerate grid shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ConfigurationError("pixel values must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ConfigurationError("pixel values must lie in [0, 1]")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def n_pixels(self) -> int:
        return self.height * self.width

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "PixelGrid":
        """Build a grid from a raw array, normalizing integer dtypes to [0, 1].

        uint8 is divided by 255, uint16 by 65535; other integer dtypes by
        their type maximum.  Float input is taken as-is and must already be
        within [0, 1].
        """
        arr = np.asarray(arr)
        if np.issubdtype(arr.dtype, np.integer):
            info = np.iinfo(arr.dtype)
            if info.min < 0:
                raise ConfigurationError(f"signed integer images unsupported: {arr.dtype}")
            arr = arr.astype(np.float64) / float(info.max)
        return cls(arr)


def image_linear_index(x: int, y: int, width: int) -> int:
    """1-based linear index of image pixel (x, y): ``x + (y - 1) * width``."""
    if width < 1:
        raise ConfigurationError(f"width must be positive, got {width}")
    if not 1 <= x <= width:
        raise BoundsError(f"x={x} outside [1, {width}]")
    if y < 1:
        raise BoundsError(f"y={y} outside [1, ...]")
    return x + (y - 1) * width


def image_linear_to_coords(i: int, width: int) -> tuple[int, int]:
    """Inverse of :func:`image_linear_index`; returns 1-based (x, y)."""
    if i < 1:
        raise BoundsError(f"linear index {i} outside [1, ...]")
    y, x0 = divmod(i - 1, width)
    return x0 + 1, y + 1


def patch_halfwidth(patch_side: int) -> int:
    """Half-width s = (M - 1) / 2 of an odd patch side M."""
    if patch_side < 1 or patch_side % 2 == 0:
        raise ConfigurationError(f"patch side must be odd and positive, got {patch_side}")
    return (patch_side - 1) // 2


def dict_linear_index(dx: int, dy: int, k: int, patch_side: int) -> int:
    """0-based linear index of dictionary pixel (dx, dy, k).

    ``(dx + s) + (dy + s) * M + (k - 1) * M**2`` for displacements in
    [-s, s] and 1-based cluster ids.
    """
    s = patch_halfwidth(patch_side)
    if not -s <= dx <= s:
        raise BoundsError(f"dx={dx} outside [{-s}, {s}]")
    if not -s <= dy <= s:
        raise BoundsError(f"dy={dy} outside [{-s}, {s}]")
    if k < 1:
        raise BoundsError(f"cluster id {k} outside [1, ...]")
    return (dx + s) + (dy + s) * patch_side + (k - 1) * patch_side * patch_side


def dict_linear_to_coords(j: int, patch_side: int) -> tuple[int, int, int]:
    """Inverse of :func:`dict_linear_index`; returns (dx, dy, k)."""
    s = patch_halfwidth(patch_side)
    if j < 0:
        raise BoundsError(f"dictionary index {j} outside [0, ...]")
    k0, within = divmod(j, patch_side * patch_side)
    dy0, dx0 = divmod(within, patch_side)
    return dx0 - s, dy0 - s, k0 + 1


def uniform_stack(n_pixels: int, n_classes: int) -> np.ndarray:
    """All-unlabeled stack: every row is the uniform distribution 1/C."""
    if n_classes < 2:
        raise ConfigurationError(f"need at least 2 classes, got {n_classes}")
    return np.full((n_pixels, n_classes), 1.0 / n_classes)


def validate_stack(rows: np.ndarray, n_pixels: int, n_classes: int,
                   tol: float = 1e-9, allow_underfilled: bool = False) -> None:
    """Check stack shape, value range and per-row sums.

    Rows must sum to 1 within ``tol``; with ``allow_underfilled`` sums in
    [0, 1 + tol] are accepted (rows touched by masked dictionary pixels).
    """
    rows = np.asarray(rows)
    if rows.shape != (n_pixels, n_classes):
        raise ConfigurationError(
            f"stack shape {rows.shape} != ({n_pixels}, {n_classes})")
    if rows.min() < -tol or rows.max() > 1.0 + tol:
        raise CorruptionError("stack entries outside [0, 1]")
    sums = rows.sum(axis=1)
    if allow_underfilled:
        bad = sums > 1.0 + tol
    else:
        bad = np.abs(sums - 1.0) > tol
    if np.any(bad):
        raise CorruptionError(
            f"{int(bad.sum())} stack rows violate the row-sum contract")
