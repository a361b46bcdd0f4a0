"""Per-pixel feature extraction for clustering and assignment.

Features are raw patch windows flattened in a fixed (dy, dx, channel) order;
this order is part of the persisted-model contract, so changing it breaks
every stored dictionary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import BoundsError, ConfigurationError
from .grid import PixelGrid, patch_halfwidth

EXTRACTOR_KINDS = ("intensity-patch", "multichannel-patch")

FEATURE_ORDER_TAG = "dy-dx-channel"


@dataclass(frozen=True)
class FeatureExtractor:
    """Configuration of the pluggable extractor.

    ``intensity-patch`` expects single-channel input; ``multichannel-patch``
    concatenates all channels, giving features of length M^2 * channels.
    """

    kind: str = "intensity-patch"
    patch_side: int = 9

    def __post_init__(self):
        if self.kind not in EXTRACTOR_KINDS:
            raise ConfigurationError(
                f"unknown extractor kind {self.kind!r}, expected one of {EXTRACTOR_KINDS}")
        patch_halfwidth(self.patch_side)  # validates odd, positive

    def check_grid(self, grid: PixelGrid) -> None:
        if self.kind == "intensity-patch" and grid.channels != 1:
            raise ConfigurationError(
                f"intensity-patch extractor needs 1 channel, image has {grid.channels}")

    def feature_length(self, channels: int) -> int:
        return self.patch_side * self.patch_side * channels


def valid_centre_box(width: int, height: int, patch_side: int) -> tuple[int, int, int, int]:
    """0-based inclusive-exclusive (x0, x1, y0, y1) box of valid patch centres."""
    s = patch_halfwidth(patch_side)
    if width < patch_side or height < patch_side:
        raise ConfigurationError(
            f"image {width}x{height} smaller than patch side {patch_side}")
    return s, width - s, s, height - s


def extract_patch(grid: PixelGrid, x: int, y: int, patch_side: int) -> np.ndarray:
    """Feature vector of the M-by-M window centred at 1-based pixel (x, y).

    Values are listed in (dy, dx, channel) order.  Centres whose window
    leaves the grid have no patch.
    """
    s = patch_halfwidth(patch_side)
    x0, y0 = x - 1, y - 1
    if not (s <= x0 < grid.width - s and s <= y0 < grid.height - s):
        raise BoundsError(
            f"no patch at centre ({x}, {y}): window of side {patch_side} leaves the grid")
    window = grid.data[y0 - s:y0 + s + 1, x0 - s:x0 + s + 1, :]
    return window.reshape(-1).copy()


def window_matrix(grid: PixelGrid, patch_side: int, row0: int, row1: int) -> np.ndarray:
    """Features of all valid centres in valid-row band [row0, row1).

    Returns an array of shape (row1 - row0, X - 2s, M^2 * channels) whose
    rows follow the raster order of valid centres.
    """
    s = patch_halfwidth(patch_side)
    x0, x1, y0, y1 = valid_centre_box(grid.width, grid.height, patch_side)
    n_rows = y1 - y0
    if not (0 <= row0 <= row1 <= n_rows):
        raise BoundsError(f"row band [{row0}, {row1}) outside [0, {n_rows})")
    slab = grid.data[y0 - s + row0:y0 + s + row1, :, :]
    view = sliding_window_view(slab, (patch_side, patch_side), axis=(0, 1))
    # view: (rows, X - 2s, C, M, M) with window dims (dy, dx) trailing;
    # reorder to (dy, dx, channel) before flattening.
    feats = view.transpose(0, 1, 3, 4, 2)
    return feats.reshape(row1 - row0, x1 - x0, -1).astype(np.float64, copy=True)


def extract_features_at(grid: PixelGrid, centres: np.ndarray, patch_side: int) -> np.ndarray:
    """Features at 0-based (x, y) centre coordinates, one row per centre."""
    s = patch_halfwidth(patch_side)
    centres = np.asarray(centres)
    view = sliding_window_view(grid.data, (patch_side, patch_side), axis=(0, 1))
    rows = view[centres[:, 1] - s, centres[:, 0] - s]          # (N, C, M, M)
    return rows.transpose(0, 2, 3, 1).reshape(len(centres), -1).astype(np.float64)


def sample_patch_centres(width: int, height: int, patch_side: int,
                         target: int, seed: int) -> np.ndarray:
    """Deterministic stratified sample of valid patch centres.

    The valid-centre region is split into a grid of at least ``target``
    cells; one jittered position is drawn per cell, so all returned centres
    are distinct.  Asking for at least the population returns every centre.
    Returns 0-based (x, y) coordinates.
    """
    if target < 1:
        raise ConfigurationError(f"sample target must be positive, got {target}")
    x0, x1, y0, y1 = valid_centre_box(width, height, patch_side)
    w, h = x1 - x0, y1 - y0
    population = w * h
    if target >= population:
        xs, ys = np.meshgrid(np.arange(x0, x1), np.arange(y0, y1))
        return np.column_stack([xs.ravel(), ys.ravel()])

    rng = np.random.default_rng(seed)
    gx = max(math.ceil(math.sqrt(target * w / h)), math.ceil(target / h))
    gx = min(gx, w)
    gy = min(math.ceil(target / gx), h)
    x_edges = np.linspace(0, w, gx + 1).astype(int)
    y_edges = np.linspace(0, h, gy + 1).astype(int)
    order = rng.permutation(gx * gy)[:target]
    cy, cx = np.divmod(order, gx)
    xs = rng.integers(x_edges[cx], x_edges[cx + 1])
    ys = rng.integers(y_edges[cy], y_edges[cy + 1])
    return np.column_stack([xs + x0, ys + y0])


def extract_training_set(grid: PixelGrid, patch_side: int,
                         target: int, seed: int = 0) -> np.ndarray:
    """Stratified subset of patch features used to build the dictionary."""
    centres = sample_patch_centres(grid.width, grid.height, patch_side, target, seed)
    return extract_features_at(grid, centres, patch_side)
