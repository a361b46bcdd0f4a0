"""Turn probability stacks into application outputs.

Small-component removal and blob-centre detection, plus the approximate
cell-extent rule (nearest detected centre over pixels where the
centre-class probability beats the boundary-class probability).
"""

from __future__ import annotations

import csv

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError


def remove_small_components(labels: np.ndarray, cls: int, min_size: int) -> np.ndarray:
    """Reassign too-small connected components of one class.

    Connectivity is 4 in 2D and 6 in 3D.  Each component smaller than
    ``min_size`` takes the majority class of its border pixels (ties toward
    the smaller class id); pixels outside removed components are untouched.
    """
    labels = np.asarray(labels)
    if labels.ndim not in (2, 3):
        raise ConfigurationError(f"expected 2D or 3D labels, got {labels.ndim}D")
    if min_size <= 1:
        return labels.copy()
    structure = ndimage.generate_binary_structure(labels.ndim, 1)
    comp, n_comp = ndimage.label(labels == cls, structure=structure)
    if n_comp == 0:
        return labels.copy()
    sizes = np.bincount(comp.ravel())
    out = labels.copy()
    small = [c for c in range(1, n_comp + 1) if sizes[c] < min_size]
    if not small:
        return out
    slices = ndimage.find_objects(comp)
    for c in small:
        sl = tuple(slice(max(0, s.start - 1), min(dim, s.stop + 1))
                   for s, dim in zip(slices[c - 1], labels.shape))
        local = comp[sl] == c
        border = ndimage.binary_dilation(local, structure=structure) & ~local
        neighbours = labels[sl][border]
        if neighbours.size == 0:
            continue
        counts = np.bincount(neighbours)
        out[sl][local] = np.argmax(counts)
    return out


def detect_centres(layer: np.ndarray, min_distance: float,
                   threshold: float) -> list[tuple[int, int, float]]:
    """Local maxima of a probability layer, greedily suppressed.

    A maximum is a connected plateau of equal values strictly greater than
    every pixel bordering it (single-pixel strict maxima are the common
    case; plateaus arise from binarised, saturated probabilities and are
    reported at their rounded centroid).  Candidates above the threshold
    are visited by descending value; any candidate closer than
    ``min_distance`` to an already accepted one is dropped.  Returns
    (x, y, value) tuples with 0-based coordinates.
    """
    layer = np.asarray(layer, dtype=np.float64)
    if layer.ndim != 2:
        raise ConfigurationError(f"expected a 2D layer, got {layer.ndim}D")
    footprint = np.ones((3, 3), dtype=bool)
    footprint[1, 1] = False
    neigh_max = ndimage.maximum_filter(layer, footprint=footprint,
                                       mode="constant", cval=-np.inf)
    cand_x, cand_y, values = [], [], []
    strict_y, strict_x = np.nonzero((layer > neigh_max) & (layer > threshold))
    cand_x.extend(strict_x.tolist())
    cand_y.extend(strict_y.tolist())
    values.extend(layer[strict_y, strict_x].tolist())

    # Plateaus: 8-connected flats of one value, not below any neighbour.
    # A plateau counts as a maximum only when every bordering pixel is
    # strictly lower (a constant image has no border and is rejected).
    # Disjoint from the strict pass, which required layer > neigh_max.
    flat = (layer == neigh_max) & (layer > threshold)
    if flat.any():
        structure = np.ones((3, 3), dtype=bool)
        comp, _ = ndimage.label(flat, structure=structure)
        for sl_idx, sl in enumerate(ndimage.find_objects(comp), start=1):
            box = tuple(slice(max(0, s.start - 1), min(dim, s.stop + 1))
                        for s, dim in zip(sl, layer.shape))
            local = comp[box] == sl_idx
            value = float(layer[box][local].max())
            border = ndimage.binary_dilation(local, structure=structure) & ~local
            border_vals = layer[box][border]
            if border_vals.size == 0 or not (border_vals < value).all():
                continue
            ys, xs = np.nonzero(local)
            cand_x.append(int(round(xs.mean())) + box[1].start)
            cand_y.append(int(round(ys.mean())) + box[0].start)
            values.append(value)
    if not cand_x:
        return []
    cand_x = np.array(cand_x)
    cand_y = np.array(cand_y)
    values = np.array(values)
    order = np.lexsort((cand_x, cand_y, -values))
    cand_x, cand_y, values = cand_x[order], cand_y[order], values[order]

    kept_x: list[int] = []
    kept_y: list[int] = []
    kept: list[tuple[int, int, float]] = []
    min_d2 = min_distance * min_distance
    for x, y, v in zip(cand_x, cand_y, values):
        if kept:
            d2 = (np.array(kept_x) - x) ** 2 + (np.array(kept_y) - y) ** 2
            if d2.min() < min_d2:
                continue
        kept_x.append(int(x))
        kept_y.append(int(y))
        kept.append((int(x), int(y), float(v)))
    return kept


def estimate_extents(centre_layer: np.ndarray, boundary_layer: np.ndarray,
                     centres: list[tuple[int, int, float]]) -> np.ndarray:
    """Approximate per-cell extents from detected centres.

    Pixels whose centre-class probability exceeds the boundary-class
    probability are assigned to the nearest detected centre (1-based cell
    ids, 0 elsewhere).
    """
    centre_layer = np.asarray(centre_layer, dtype=np.float64)
    boundary_layer = np.asarray(boundary_layer, dtype=np.float64)
    if centre_layer.shape != boundary_layer.shape:
        raise ConfigurationError("probability layers must share a shape")
    out = np.zeros(centre_layer.shape, dtype=np.int32)
    if not centres:
        return out
    ys, xs = np.nonzero(centre_layer > boundary_layer)
    if ys.size == 0:
        return out
    pts = np.array([(x, y) for x, y, _ in centres], dtype=np.float64)
    d2 = ((xs[:, None] - pts[None, :, 0]) ** 2
          + (ys[:, None] - pts[None, :, 1]) ** 2)
    out[ys, xs] = np.argmin(d2, axis=1) + 1
    return out


def write_centres_csv(path, per_slice: list[list[tuple[int, int, float]]]) -> None:
    """Export centre detections as CSV rows (x, y, slice, score)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "slice", "score"])
        for z, detections in enumerate(per_slice):
            for x, y, score in detections:
                writer.writerow([x, y, z, f"{score:.6g}"])
