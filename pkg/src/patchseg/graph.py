"""Sparse biadjacency between image pixels and dictionary pixels.

Every non-boundary pixel (x, y) with assignment k relates image pixel
(x + dx, y + dy) to dictionary pixel (dx, dy, k) for all displacements,
giving exactly (X - 2s)(Y - 2s) * M^2 relations.  B accumulates relation
counts; the relation (i, j) pins down both the patch centre and the
displacement, so counts are 1 in practice and B is binary.  The transforms
are the row-normalized forms of B^T (image -> dictionary) and B
(dictionary -> image): plain averages over related pixels.

Applying the transforms is the interactive hot path.  For binary B a numba
kernel gathers row means straight from the CSR structure (no value array,
parallel over output rows); the general count-weighted path goes through
scipy.  Both are exact averages, not approximations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from numba import njit, prange

from .errors import ConfigurationError, CorruptionError
from .grid import patch_halfwidth


@dataclass
class BiadjacencyGraph:
    """CSR biadjacency with cached relation counts per row and column."""

    width: int
    height: int
    patch_side: int
    n_clusters: int
    matrix: sp.csr_matrix = field(repr=False)       # (n, m) relation counts
    image_counts: np.ndarray = field(repr=False)    # (n,) relations per image pixel
    dict_counts: np.ndarray = field(repr=False)     # (m,) relations per dictionary pixel

    @property
    def n_image_pixels(self) -> int:
        return self.width * self.height

    @property
    def n_dict_pixels(self) -> int:
        return self.patch_side ** 2 * self.n_clusters

    @property
    def relation_count(self) -> int:
        """Total relations, counting multiplicity."""
        return int(self.image_counts.sum())

    @property
    def is_binary(self) -> bool:
        return self.matrix.nnz == self.relation_count

    def export_matrix_market(self, path) -> None:
        """Debug dump in Matrix Market coordinate format, counts included."""
        from scipy.io import mmwrite
        mmwrite(str(path), self.matrix.tocoo().astype(np.int64))


def build_biadjacency(assignments: np.ndarray, patch_side: int,
                      n_clusters: int) -> BiadjacencyGraph:
    """Assemble B from an assignment image.

    The relation stream is generated displacement-major and coalesced into
    CSR; duplicate (i, j) pairs would accumulate as counts.
    """
    assignments = np.asarray(assignments)
    if assignments.ndim != 2:
        raise ConfigurationError(f"assignment image must be 2D, got {assignments.shape}")
    height, width = assignments.shape
    s = patch_halfwidth(patch_side)
    if width < patch_side or height < patch_side:
        raise ConfigurationError(
            f"assignment image {width}x{height} smaller than patch side {patch_side}")
    if assignments.max() > n_clusters:
        raise CorruptionError(
            f"assignment ids up to {assignments.max()} exceed K={n_clusters}")
    interior = assignments[s:height - s, s:width - s]
    if interior.min() < 1:
        raise CorruptionError("non-boundary pixels must carry ids >= 1")
    boundary_sum = assignments.sum() - interior.sum()
    if boundary_sum != 0:
        raise CorruptionError(f"boundary pixels (width {s}) must be 0")

    m2 = patch_side * patch_side
    n = width * height
    m = m2 * n_clusters
    offsets = np.arange(m2)
    dy, dx = np.divmod(offsets, patch_side)   # dy+s, dx+s in 0..M-1
    yc, xc = np.mgrid[s:height - s, s:width - s]
    rows = ((yc[..., None] + (dy - s)) * width + (xc[..., None] + (dx - s)))
    cols = (interior[..., None].astype(np.int64) - 1) * m2 + offsets
    rows = rows.ravel().astype(np.int32)
    cols = cols.ravel().astype(np.int32)
    n_relations = rows.size

    matrix = sp.coo_matrix((np.ones(n_relations), (rows, cols)),
                           shape=(n, m)).tocsr()
    matrix.sort_indices()
    image_counts = np.asarray(matrix.sum(axis=1)).ravel()
    dict_counts = np.asarray(matrix.sum(axis=0)).ravel()
    return BiadjacencyGraph(width=width, height=height, patch_side=patch_side,
                            n_clusters=n_clusters, matrix=matrix,
                            image_counts=image_counts, dict_counts=dict_counts)


@njit(parallel=True, cache=True)
def _gather_mean(indptr, indices, values, out):
    """out[r] = mean over the row's entries of values[index]; 0 for empty rows."""
    n_cols = values.shape[1]
    for r in prange(indptr.size - 1):
        lo, hi = indptr[r], indptr[r + 1]
        for c in range(n_cols):
            out[r, c] = 0.0
        for p in range(lo, hi):
            j = indices[p]
            for c in range(n_cols):
                out[r, c] += values[j, c]
        if hi > lo:
            inv = 1.0 / (hi - lo)
            for c in range(n_cols):
                out[r, c] *= inv


# Register-accumulator variants for the common interactive class counts;
# same entry order as the generic kernel, so results are bit-identical.

@njit(parallel=True, cache=True)
def _gather_mean_c2(indptr, indices, values, out):
    for r in prange(indptr.size - 1):
        lo, hi = indptr[r], indptr[r + 1]
        acc0 = 0.0
        acc1 = 0.0
        for p in range(lo, hi):
            j = indices[p]
            acc0 += values[j, 0]
            acc1 += values[j, 1]
        if hi > lo:
            inv = 1.0 / (hi - lo)
            out[r, 0] = acc0 * inv
            out[r, 1] = acc1 * inv
        else:
            out[r, 0] = 0.0
            out[r, 1] = 0.0


@njit(parallel=True, cache=True)
def _gather_mean_c3(indptr, indices, values, out):
    for r in prange(indptr.size - 1):
        lo, hi = indptr[r], indptr[r + 1]
        acc0 = 0.0
        acc1 = 0.0
        acc2 = 0.0
        for p in range(lo, hi):
            j = indices[p]
            acc0 += values[j, 0]
            acc1 += values[j, 1]
            acc2 += values[j, 2]
        if hi > lo:
            inv = 1.0 / (hi - lo)
            out[r, 0] = acc0 * inv
            out[r, 1] = acc1 * inv
            out[r, 2] = acc2 * inv
        else:
            out[r, 0] = 0.0
            out[r, 1] = 0.0
            out[r, 2] = 0.0


class TransformPair:
    """Row-normalized image->dictionary (T1) and dictionary->image (T2) maps.

    Dictionary pixels with no relations give identically zero T1 rows,
    recorded in ``empty_dict_mask``.  The explicit sparse matrices are
    materialized lazily; the apply methods use the shared CSR structure
    directly.
    """

    def __init__(self, graph: BiadjacencyGraph):
        self.graph = graph
        self.empty_dict_mask = graph.dict_counts == 0
        self._bt = graph.matrix.T.tocsr()
        self._bt.sort_indices()
        self._binary = graph.is_binary
        with np.errstate(divide="ignore"):
            self._inv_dict = np.where(self.empty_dict_mask, 0.0, 1.0 / graph.dict_counts)
            self._inv_image = np.where(graph.image_counts == 0, 0.0,
                                       1.0 / graph.image_counts)
        self._t1 = None
        self._t2 = None

    @property
    def n_image_pixels(self) -> int:
        return self.graph.n_image_pixels

    @property
    def n_dict_pixels(self) -> int:
        return self.graph.n_dict_pixels

    @property
    def t1(self) -> sp.csr_matrix:
        """Explicit m-by-n matrix diag(1/colsums) B^T."""
        if self._t1 is None:
            self._t1 = _row_scaled(self._bt, self._inv_dict)
        return self._t1

    @property
    def t2(self) -> sp.csr_matrix:
        """Explicit n-by-m matrix diag(1/rowsums) B."""
        if self._t2 is None:
            self._t2 = _row_scaled(self.graph.matrix, self._inv_image)
        return self._t2

    def apply_image_to_dict(self, values: np.ndarray) -> np.ndarray:
        """T1 @ values for per-image-pixel values of shape (n, C)."""
        return self._apply(self._bt, self._inv_dict, values, self.n_image_pixels)

    def apply_dict_to_image(self, values: np.ndarray) -> np.ndarray:
        """T2 @ values for per-dictionary-pixel values of shape (m, C)."""
        return self._apply(self.graph.matrix, self._inv_image, values,
                           self.n_dict_pixels)

    def _apply(self, csr: sp.csr_matrix, inv: np.ndarray, values: np.ndarray,
               expected_rows: int) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != expected_rows:
            raise ConfigurationError(
                f"expected ({expected_rows}, C) values, got {values.shape}")
        if self._binary:
            out = np.empty((csr.shape[0], values.shape[1]))
            kernel = {2: _gather_mean_c2, 3: _gather_mean_c3}.get(
                values.shape[1], _gather_mean)
            kernel(csr.indptr, csr.indices, np.ascontiguousarray(values), out)
            return out
        return (csr @ values) * inv[:, None]


def _row_scaled(csr: sp.csr_matrix, inv: np.ndarray) -> sp.csr_matrix:
    """Row-rescaled copy with the identical sparsity pattern."""
    data = csr.data * np.repeat(inv, np.diff(csr.indptr))
    return sp.csr_matrix((data, csr.indices.copy(), csr.indptr.copy()),
                         shape=csr.shape)


def normalize(graph: BiadjacencyGraph) -> TransformPair:
    """Build the transform pair; zero-count dictionary pixels stay masked."""
    return TransformPair(graph)
