"""Synthetic test patterns with exact ground truth.

Three generators: randomly packed bright disks (fibre-like cross sections),
a two-texture split field, and ring-walled cells.  Each returns the image
together with a ground-truth class map and, where meaningful, the true
centre list, so segmentation quality and centre recall can be scored
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .grid import PixelGrid


@dataclass
class Phantom:
    image: PixelGrid
    truth: np.ndarray = field(repr=False)       # (Y, X) class ids, 1-based
    centres: np.ndarray = field(repr=False)     # (N, 2) 0-based (x, y), may be empty
    n_classes: int
    meta: dict = field(default_factory=dict)


def _pack_centres(width: int, height: int, count: int, min_sep: float,
                  margin: int, rng: np.random.Generator,
                  max_tries: int = 200000) -> np.ndarray:
    """Dart-throwing packing of points with a minimum pairwise separation."""
    placed: list[tuple[float, float]] = []
    arr = np.empty((0, 2))
    tries = 0
    while len(placed) < count and tries < max_tries:
        tries += 1
        x = rng.uniform(margin, width - margin)
        y = rng.uniform(margin, height - margin)
        if placed:
            d2 = (arr[:, 0] - x) ** 2 + (arr[:, 1] - y) ** 2
            if d2.min() < min_sep * min_sep:
                continue
        placed.append((x, y))
        arr = np.array(placed)
    if len(placed) < count:
        raise ConfigurationError(
            f"could only pack {len(placed)} of {count} points "
            f"(separation {min_sep} too large for {width}x{height})")
    return arr


def disks(width: int = 512, height: int = 512, n_disks: int = 300,
          radius_range: tuple[float, float] = (5.0, 8.0),
          noise: float = 0.04, seed: int = 0) -> Phantom:
    """Bright disks with a parabolic intensity cap on a dark background.

    Class 1 is background, class 2 the near-centre region (within half the
    disk radius), matching the marking convention of dotting fibre centres
    against a background scribble.
    """
    rng = np.random.default_rng(seed)
    r_lo, r_hi = radius_range
    min_sep = 2.0 * r_hi + 2.0
    margin = int(np.ceil(r_hi)) + 2
    pts = _pack_centres(width, height, n_disks, min_sep, margin, rng)
    radii = rng.uniform(r_lo, r_hi, size=n_disks)

    yy, xx = np.mgrid[0:height, 0:width]
    image = np.full((height, width), 0.18)
    truth = np.ones((height, width), dtype=np.int32)
    for (cx, cy), r in zip(pts, radii):
        x0, x1 = int(cx - r) - 1, int(cx + r) + 2
        y0, y1 = int(cy - r) - 1, int(cy + r) + 2
        box = (slice(max(0, y0), min(height, y1)), slice(max(0, x0), min(width, x1)))
        d2 = (xx[box] - cx) ** 2 + (yy[box] - cy) ** 2
        cap = np.clip(1.0 - d2 / (r * r), 0.0, None)
        image[box] = np.maximum(image[box], 0.18 + 0.72 * cap)
        truth[box][d2 <= (0.5 * r) ** 2] = 2
    image = np.clip(image + rng.normal(0.0, noise, image.shape), 0.0, 1.0)
    centres = np.rint(pts).astype(np.int64)
    return Phantom(image=PixelGrid(image), truth=truth, centres=centres,
                   n_classes=2, meta={"kind": "disks", "seed": seed,
                                      "radii_mean": float(radii.mean())})


def two_texture(width: int = 64, height: int = 64, period: int = 4,
                noise: float = 0.02, seed: int = 0) -> Phantom:
    """Horizontal stripes on the left half, vertical stripes on the right."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width]
    stripes_h = 0.5 + 0.45 * np.sin(2 * np.pi * yy / period)
    stripes_v = 0.5 + 0.45 * np.sin(2 * np.pi * xx / period)
    split = width // 2
    image = np.where(xx < split, stripes_h, stripes_v)
    image = np.clip(image + rng.normal(0.0, noise, image.shape), 0.0, 1.0)
    truth = np.where(xx < split, 1, 2).astype(np.int32)
    return Phantom(image=PixelGrid(image), truth=truth,
                   centres=np.empty((0, 2), dtype=np.int64), n_classes=2,
                   meta={"kind": "two-texture", "seed": seed})


def cells(width: int = 256, height: int = 256, n_cells: int = 24,
          radius_range: tuple[float, float] = (12.0, 18.0),
          noise: float = 0.02, seed: int = 0) -> Phantom:
    """Bright cell interiors with dark ring walls on a mid-gray background.

    Classes: 1 background, 2 interior, 3 wall.
    """
    rng = np.random.default_rng(seed)
    r_lo, r_hi = radius_range
    pts = _pack_centres(width, height, n_cells, 2.0 * r_hi + 3.0,
                        int(np.ceil(r_hi)) + 2, rng)
    radii = rng.uniform(r_lo, r_hi, size=n_cells)
    yy, xx = np.mgrid[0:height, 0:width]
    image = np.full((height, width), 0.55)
    truth = np.ones((height, width), dtype=np.int32)
    wall = 2.5
    for (cx, cy), r in zip(pts, radii):
        d = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
        interior = d <= r - wall
        ring = (d > r - wall) & (d <= r)
        image[interior] = 0.88
        image[ring] = 0.15
        truth[interior] = 2
        truth[ring] = 3
    image = np.clip(image + rng.normal(0.0, noise, image.shape), 0.0, 1.0)
    return Phantom(image=PixelGrid(image), truth=truth,
                   centres=np.rint(pts).astype(np.int64), n_classes=3,
                   meta={"kind": "cells", "seed": seed})


def scripted_marks(phantom: Phantom, fraction: float = 0.5, seed: int = 0,
                   dot_radius: float = 1.2) -> np.ndarray:
    """Synthetic user input: centre dots plus a background scribble.

    Marks a random subset of the true centres with the foreground class and
    draws a wavy polyline through the background; every mark is verified
    against the ground truth, so the marking is consistent by construction.
    Returns a (Y, X) class map with 0 for unmarked pixels.
    """
    rng = np.random.default_rng(seed)
    truth = phantom.truth
    height, width = truth.shape
    marks = np.zeros((height, width), dtype=np.int32)
    fg = phantom.n_classes  # centre class of disks(), interior class of cells()

    if len(phantom.centres):
        take = max(1, int(round(fraction * len(phantom.centres))))
        chosen = rng.permutation(len(phantom.centres))[:take]
        yy, xx = np.mgrid[0:height, 0:width]
        for cx, cy in phantom.centres[chosen]:
            box = (slice(max(0, cy - 3), min(height, cy + 4)),
                   slice(max(0, cx - 3), min(width, cx + 4)))
            d2 = (xx[box] - cx) ** 2 + (yy[box] - cy) ** 2
            dot = (d2 <= dot_radius ** 2) & (truth[box] == fg)
            marks[box][dot] = fg

    # Wavy horizontal scribbles restricted to true background.
    xs = np.arange(width)
    for row_frac, phase in ((0.25, 0.0), (0.5, 2.1), (0.75, 4.2)):
        ys = (row_frac * height + 0.12 * height *
              np.sin(2 * np.pi * xs / width * 3 + phase)).astype(int)
        ys = np.clip(ys, 0, height - 1)
        on_bg = truth[ys, xs] == 1
        marks[ys[on_bg], xs[on_bg]] = 1
    return marks
