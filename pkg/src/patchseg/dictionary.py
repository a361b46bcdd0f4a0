"""Hierarchical k-means dictionary and the per-pixel assignment image.

The tree has one node at layer 0 (the global centroid) and b children per
node down to layer t, so it holds K = (b^(t+1) - 1) / (b - 1) nodes in
total.  Every node is a dictionary element.  Nodes whose split received no
training vectors are kept as empty placeholders so node ids and the
dictionary-grid index math stay stable.

Assignment descends the tree greedily (nearest child by Euclidean distance,
ties toward the lowest node id), stops at a leaf or when every child is
empty, and assigns the nearest node seen anywhere along the descent path.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .features import window_matrix
from .grid import PixelGrid, patch_halfwidth

logger = logging.getLogger(__name__)

_BAND_PIXELS = 16384  # assignment works on row bands of at most this many centres


def node_count(branching: int, layers: int) -> int:
    """Total nodes K = (b^(t+1) - 1) / (b - 1) of a (b, t) tree."""
    if branching < 2:
        raise ConfigurationError(f"branching must be >= 2, got {branching}")
    if layers < 0:
        raise ConfigurationError(f"layer count must be >= 0, got {layers}")
    return (branching ** (layers + 1) - 1) // (branching - 1)


def _layer_base(branching: int, layer: int) -> int:
    """1-based id of the first node in a layer."""
    return (branching ** layer - 1) // (branching - 1) + 1


@dataclass
class KMeansTree:
    """Centres of all K nodes in node-id (breadth-first) order."""

    branching: int
    layers: int
    centres: np.ndarray = field(repr=False)   # (K, d) float64, zeros for empty nodes
    empty: np.ndarray = field(repr=False)     # (K,) bool
    patch_side: int
    channels: int
    extractor_kind: str
    seed: int

    @property
    def n_nodes(self) -> int:
        return self.centres.shape[0]

    @property
    def feature_length(self) -> int:
        return self.centres.shape[1]

    def children_of(self, node_id: int) -> np.ndarray:
        """1-based child ids of a node, empty array for leaves."""
        layer = self.layer_of(node_id)
        if layer >= self.layers:
            return np.empty(0, dtype=np.int64)
        first = _layer_base(self.branching, layer + 1) \
            + (node_id - _layer_base(self.branching, layer)) * self.branching
        return np.arange(first, first + self.branching)

    def layer_of(self, node_id: int) -> int:
        layer = 0
        while _layer_base(self.branching, layer + 1) <= node_id:
            layer += 1
        return layer


def _sq_dists(points: np.ndarray, centres: np.ndarray) -> np.ndarray:
    # Plain (p - c)^2 sums; the expanded |p|^2 - 2pc + |c|^2 form would be
    # faster but cancellation makes near-ties implementation-dependent.
    return ((points[:, None, :] - centres[None, :, :]) ** 2).sum(axis=2)


def _farthest_point_seeds(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    seeds = np.empty(k, dtype=np.int64)
    seeds[0] = rng.integers(len(points))
    min_d2 = ((points - points[seeds[0]]) ** 2).sum(axis=1)
    for i in range(1, k):
        seeds[i] = int(np.argmax(min_d2))
        d2 = ((points - points[seeds[i]]) ** 2).sum(axis=1)
        np.minimum(min_d2, d2, out=min_d2)
    return seeds


def kmeans_fixed(points: np.ndarray, k: int, iterations: int,
                 rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd iterations with greedy farthest-point seeding.

    Runs exactly ``iterations`` assign/update rounds plus a final assignment
    against the updated centres.  Clusters that lose all members keep their
    previous centre during the iterations; the returned labels may still
    leave clusters empty.

    Returns (centres (k, d), labels (n,)).
    """
    centres = points[_farthest_point_seeds(points, k, rng)].copy()
    labels = np.zeros(len(points), dtype=np.int64)
    for _ in range(iterations):
        labels = _assign_chunked(points, centres)
        for c in range(k):
            members = labels == c
            if members.any():
                centres[c] = points[members].mean(axis=0)
    labels = _assign_chunked(points, centres)
    return centres, labels


def _assign_chunked(points: np.ndarray, centres: np.ndarray,
                    chunk: int = _BAND_PIXELS) -> np.ndarray:
    labels = np.empty(len(points), dtype=np.int64)
    for lo in range(0, len(points), chunk):
        hi = min(lo + chunk, len(points))
        labels[lo:hi] = np.argmin(_sq_dists(points[lo:hi], centres), axis=1)
    return labels


def build_tree(features: np.ndarray, branching: int, layers: int,
               iterations: int = 10, seed: int = 0,
               patch_side: int | None = None, channels: int = 1,
               extractor_kind: str = "intensity-patch") -> KMeansTree:
    """Cluster training features into a (b, t) k-means tree.

    Each layer re-clusters the member vectors of its parent node; a node
    with fewer members than the branching factor keeps all of its children
    empty.  Deterministic for a fixed seed.
    """
    features = np.ascontiguousarray(features, dtype=np.float64)
    if features.ndim != 2 or len(features) == 0:
        raise ConfigurationError("training features must be a non-empty 2D array")
    if iterations < 1:
        raise ConfigurationError(f"iterations must be >= 1, got {iterations}")
    K = node_count(branching, layers)
    if len(features) < K:
        logger.warning("only %d training vectors for %d dictionary elements; "
                       "expect many empty nodes", len(features), K)
    if patch_side is None:
        side2 = features.shape[1] // max(channels, 1)
        patch_side = int(round(side2 ** 0.5))

    d = features.shape[1]
    centres = np.zeros((K, d))
    empty = np.ones(K, dtype=bool)
    rng = np.random.default_rng(seed)

    centres[0] = features.mean(axis=0)
    empty[0] = False
    tree = KMeansTree(branching=branching, layers=layers, centres=centres,
                      empty=empty, patch_side=patch_side, channels=channels,
                      extractor_kind=extractor_kind, seed=seed)

    # Breadth-first split order keeps RNG consumption deterministic.
    queue: list[tuple[int, np.ndarray]] = [(1, np.arange(len(features)))]
    while queue:
        node_id, members = queue.pop(0)
        children = tree.children_of(node_id)
        if children.size == 0 or len(members) < branching:
            continue
        sub_centres, labels = kmeans_fixed(features[members], branching,
                                           iterations, rng)
        for c, child_id in enumerate(children):
            child_members = members[labels == c]
            if child_members.size == 0:
                continue
            centres[child_id - 1] = sub_centres[c]
            empty[child_id - 1] = False
            queue.append((int(child_id), child_members))
    return tree


def descend(tree: KMeansTree, feats: np.ndarray) -> np.ndarray:
    """Assign each feature row to the nearest node along its descent path."""
    n = len(feats)
    best_id = np.ones(n, dtype=np.int32)
    best_d2 = ((feats - tree.centres[0]) ** 2).sum(axis=1)
    cur_id = np.ones(n, dtype=np.int64)
    active = np.ones(n, dtype=bool)

    for _ in range(tree.layers):
        if not active.any():
            break
        for parent in np.unique(cur_id[active]):
            children = tree.children_of(int(parent))
            usable = children[~tree.empty[children - 1]]
            sel = np.flatnonzero(active & (cur_id == parent))
            if usable.size == 0:
                active[sel] = False
                continue
            d2 = _sq_dists(feats[sel], tree.centres[usable - 1])
            pick = np.argmin(d2, axis=1)
            picked_d2 = d2[np.arange(len(sel)), pick]
            cur_id[sel] = usable[pick]
            improved = picked_d2 < best_d2[sel]
            upd = sel[improved]
            best_id[upd] = usable[pick[improved]].astype(np.int32)
            best_d2[upd] = picked_d2[improved]
    return best_id


def assign_image(grid: PixelGrid, tree: KMeansTree) -> np.ndarray:
    """Assignment image A: nearest-along-path node id per non-boundary pixel.

    Boundary pixels (within s of any edge) get id 0.  Returns an int32
    (Y, X) array.
    """
    if grid.channels != tree.channels:
        raise ConfigurationError(
            f"image has {grid.channels} channels, tree expects {tree.channels}")
    M = tree.patch_side
    if grid.width < M or grid.height < M:
        raise ConfigurationError(
            f"image {grid.width}x{grid.height} smaller than patch side {M}")
    s = patch_halfwidth(M)
    assignments = np.zeros((grid.height, grid.width), dtype=np.int32)
    n_rows = grid.height - 2 * s
    n_cols = grid.width - 2 * s
    band = max(1, _BAND_PIXELS // n_cols)
    for r0 in range(0, n_rows, band):
        r1 = min(r0 + band, n_rows)
        feats = window_matrix(grid, M, r0, r1).reshape((r1 - r0) * n_cols, -1)
        ids = descend(tree, feats)
        assignments[s + r0:s + r1, s:grid.width - s] = ids.reshape(r1 - r0, n_cols)
    return assignments
