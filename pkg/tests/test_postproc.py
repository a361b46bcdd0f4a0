from __future__ import annotations

import numpy as np
import pytest

from patchseg.postproc import (detect_centres, estimate_extents,
                               remove_small_components, write_centres_csv)

from oracles import flood_components


class TestRemoveSmallComponents:
    def test_large_component_unchanged(self):
        labels = np.ones((6, 6), dtype=np.int32)
        labels[2:5, 2:5] = 2
        out = remove_small_components(labels, 2, min_size=5)
        assert np.array_equal(out, labels)

    def test_isolated_pixel_removed(self):
        labels = np.ones((8, 8), dtype=np.int32)
        labels[3, 3] = 2
        out = remove_small_components(labels, 2, min_size=10_000)
        assert np.all(out == 1)

    def test_majority_neighbour_wins(self):
        labels = np.ones((5, 7), dtype=np.int32)
        labels[:, 4:] = 3
        labels[2, 3:5] = 2  # two-pixel bridge touching classes 1 and 3
        out = remove_small_components(labels, 2, min_size=5)
        assert out[2, 3] in (1, 3)
        assert (out == 2).sum() == 0
        untouched = labels != 2
        assert np.array_equal(out[untouched], labels[untouched])

    def test_checker_of_tiny_components_all_removed(self):
        rng = np.random.default_rng(0)
        labels = np.ones((16, 16), dtype=np.int32)
        yy, xx = np.mgrid[0:16, 0:16]
        labels[(yy % 4 == 0) & (xx % 4 == 0)] = 2
        comps = flood_components(labels == 2)
        assert all(len(c) < 3 for c in comps)
        out = remove_small_components(labels, 2, min_size=3)
        assert (out == 2).sum() == 0
        assert np.array_equal(out != labels, labels == 2)

    def test_matches_flood_fill_oracle_sizes(self):
        rng = np.random.default_rng(1)
        labels = rng.integers(1, 3, size=(20, 20)).astype(np.int32)
        min_size = 4
        comps = flood_components(labels == 2)
        expected_removed = {i for comp in comps if len(comp) < min_size for i in comp}
        out = remove_small_components(labels, 2, min_size)
        removed = set(np.flatnonzero((labels == 2).ravel() & (out != labels).ravel()))
        assert removed == expected_removed

    def test_3d_uses_six_connectivity(self):
        vol = np.ones((3, 4, 4), dtype=np.int32)
        vol[0, 0, 0] = 2
        vol[1, 1, 1] = 2  # diagonal in 3D: separate components under 6-conn
        comps = flood_components(vol == 2)
        assert len(comps) == 2
        out = remove_small_components(vol, 2, min_size=2)
        assert (out == 2).sum() == 0

    def test_whole_image_component_kept(self):
        labels = np.full((4, 4), 2, dtype=np.int32)
        out = remove_small_components(labels, 2, min_size=1000)
        assert np.array_equal(out, labels)

    def test_pixel_count_conserved(self):
        rng = np.random.default_rng(2)
        labels = rng.integers(1, 4, size=(15, 15)).astype(np.int32)
        out = remove_small_components(labels, 1, 5)
        assert out.shape == labels.shape
        assert out.dtype == labels.dtype


class TestDetectCentres:
    def test_single_gaussian_bump(self):
        yy, xx = np.mgrid[0:21, 0:21]
        layer = np.exp(-((xx - 13.0) ** 2 + (yy - 7.0) ** 2) / 8.0)
        found = detect_centres(layer, min_distance=3, threshold=0.1)
        assert len(found) == 1
        assert found[0][:2] == (13, 7)

    def test_flat_image_empty(self):
        assert detect_centres(np.full((10, 10), 0.4), 2, 0.0) == []

    def test_threshold_filters(self):
        layer = np.zeros((9, 9))
        layer[4, 4] = 0.3
        assert detect_centres(layer, 2, 0.5) == []
        assert len(detect_centres(layer, 2, 0.2)) == 1

    def test_min_distance_suppression(self):
        layer = np.zeros((9, 20))
        layer[4, 5] = 1.0
        layer[4, 8] = 0.9
        layer[4, 15] = 0.8
        found = detect_centres(layer, min_distance=5, threshold=0.1)
        coords = [(x, y) for x, y, _ in found]
        assert (5, 4) in coords and (15, 4) in coords
        assert (8, 4) not in coords

    def test_sorted_by_descending_score(self):
        rng = np.random.default_rng(3)
        layer = np.zeros((30, 30))
        for i, (x, y) in enumerate([(5, 5), (15, 20), (25, 8)]):
            layer[y, x] = 0.5 + 0.1 * i
        found = detect_centres(layer, 3, 0.1)
        scores = [v for _, _, v in found]
        assert scores == sorted(scores, reverse=True)

    def test_plateau_reported_at_centroid(self):
        layer = np.zeros((11, 11))
        layer[4:7, 4:7] = 0.8
        assert detect_centres(layer, 2, 0.1) == [(5, 5, 0.8)]

    def test_plateau_with_equal_border_rejected(self):
        layer = np.zeros((9, 9))
        layer[4, 4] = 0.8
        layer[4, 5] = 0.8
        layer[4, 6] = 0.8
        found = detect_centres(layer, 2, 0.1)
        assert found == [(5, 4, 0.8)]
        # now break flatness: the trio is no longer one plateau
        layer[4, 5] = 0.9
        found = detect_centres(layer, 0.5, 0.1)
        assert found == [(5, 4, 0.9)]

    def test_twenty_disk_field_recovered_within_one_pixel(self):
        rng = np.random.default_rng(11)
        yy, xx = np.mgrid[0:200, 0:200]
        layer = np.zeros((200, 200))
        truth = []
        while len(truth) < 20:
            cx, cy = rng.integers(10, 190, size=2)
            if truth and min((cx - a) ** 2 + (cy - b) ** 2 for a, b in truth) < 24 ** 2:
                continue
            truth.append((cx, cy))
            d2 = (xx - cx) ** 2 + (yy - cy) ** 2
            layer += np.clip(1.0 - d2 / 36.0, 0.0, None)
        found = detect_centres(layer, min_distance=8, threshold=0.3)
        assert len(found) == 20
        for cx, cy in truth:
            best = min((x - cx) ** 2 + (y - cy) ** 2 for x, y, _ in found)
            assert best <= 1.0

    def test_pairwise_distances_at_least_min_distance(self):
        rng = np.random.default_rng(4)
        layer = rng.random((40, 40))
        found = detect_centres(layer, min_distance=4, threshold=0.5)
        pts = np.array([(x, y) for x, y, _ in found], dtype=float)
        if len(pts) > 1:
            d = np.sqrt(((pts[:, None] - pts[None, :]) ** 2).sum(-1))
            np.fill_diagonal(d, np.inf)
            assert d.min() >= 4


class TestEstimateExtents:
    def test_assigns_to_nearest_centre(self):
        centre = np.zeros((10, 10))
        boundary = np.zeros((10, 10))
        centre[2, 2] = centre[7, 7] = 1.0
        centre[:5, :5] += 0.4
        centre[5:, 5:] += 0.4
        boundary += 0.2
        cells = estimate_extents(centre, boundary, [(2, 2, 1.0), (7, 7, 1.0)])
        assert cells[2, 2] == 1
        assert cells[7, 7] == 2
        assert cells[0, 0] == 1
        assert cells[9, 9] == 2
        assert cells[0, 9] == 0  # boundary prob wins there

    def test_no_centres_all_zero(self):
        out = estimate_extents(np.ones((4, 4)), np.zeros((4, 4)), [])
        assert np.all(out == 0)


def test_centres_csv(tmp_path):
    path = tmp_path / "centres.csv"
    write_centres_csv(path, [[(1, 2, 0.9)], [(3, 4, 0.5), (5, 6, 0.25)]])
    rows = path.read_text().strip().splitlines()
    assert rows[0] == "x,y,slice,score"
    assert rows[1] == "1,2,0,0.9"
    assert rows[3] == "5,6,1,0.25"
