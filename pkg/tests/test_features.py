from __future__ import annotations

import numpy as np
import pytest

from patchseg.errors import BoundsError, ConfigurationError
from patchseg.features import (FeatureExtractor, extract_features_at,
                               extract_patch, extract_training_set,
                               sample_patch_centres, window_matrix)
from patchseg.grid import PixelGrid

from oracles import window_copy


def test_constant_image_gives_constant_feature():
    g = PixelGrid(np.full((5, 5), 0.5))
    feat = extract_patch(g, 3, 3, 3)
    assert feat.shape == (9,)
    assert np.all(feat == 0.5)


def test_identity_window_order():
    vals = np.arange(1, 10).reshape(3, 3) / 9.0
    g = PixelGrid(vals)
    feat = extract_patch(g, 2, 2, 3)
    assert np.array_equal(feat, vals.reshape(-1))


def test_patch_matches_window_copy_oracle():
    rng = np.random.default_rng(7)
    g = PixelGrid(rng.random((5, 5)))
    feat = extract_patch(g, 3, 3, 3)
    assert np.array_equal(feat, window_copy(g.data, 2, 2, 3))


@pytest.mark.parametrize("channels", [1, 3])
def test_every_valid_centre_matches_oracle(channels):
    rng = np.random.default_rng(1)
    g = PixelGrid(rng.random((7, 6, channels)))
    for y0 in range(2, 5):
        for x0 in range(2, 4):
            feat = extract_patch(g, x0 + 1, y0 + 1, 5)
            assert np.array_equal(feat, window_copy(g.data, x0, y0, 5))


def test_boundary_centre_rejected():
    g = PixelGrid(np.zeros((5, 5)))
    with pytest.raises(BoundsError):
        extract_patch(g, 1, 3, 3)
    with pytest.raises(BoundsError):
        extract_patch(g, 5, 3, 3)


def test_multichannel_feature_length():
    g = PixelGrid(np.zeros((9, 9, 3)))
    ex = FeatureExtractor(kind="multichannel-patch", patch_side=3)
    assert ex.feature_length(g.channels) == 27
    feat = extract_patch(g, 5, 5, 3)
    assert feat.shape == (27,)


def test_intensity_extractor_rejects_rgb():
    ex = FeatureExtractor(kind="intensity-patch", patch_side=3)
    with pytest.raises(ConfigurationError):
        ex.check_grid(PixelGrid(np.zeros((5, 5, 3))))


def test_window_matrix_matches_extract_patch():
    rng = np.random.default_rng(3)
    g = PixelGrid(rng.random((8, 7)))
    mat = window_matrix(g, 3, 0, 6)
    assert mat.shape == (6, 5, 9)
    for r in range(6):
        for c in range(5):
            assert np.array_equal(mat[r, c], extract_patch(g, c + 2, r + 2, 3))


class TestSampling:
    def test_exact_count_at_distinct_centres(self):
        pts = sample_patch_centres(100, 100, 9, 1000, seed=5)
        assert len(pts) == 1000
        assert len({(x, y) for x, y in pts}) == 1000
        assert pts[:, 0].min() >= 4 and pts[:, 0].max() < 96
        assert pts[:, 1].min() >= 4 and pts[:, 1].max() < 96

    def test_clamps_to_population(self):
        pts = sample_patch_centres(10, 8, 3, 10_000, seed=0)
        assert len(pts) == 8 * 6

    def test_deterministic(self):
        a = sample_patch_centres(50, 40, 5, 300, seed=11)
        b = sample_patch_centres(50, 40, 5, 300, seed=11)
        assert np.array_equal(a, b)

    def test_different_seed_differs(self):
        a = sample_patch_centres(50, 40, 5, 300, seed=1)
        b = sample_patch_centres(50, 40, 5, 300, seed=2)
        assert not np.array_equal(a, b)

    @pytest.mark.parametrize("target", [1, 7, 63, 64, 65, 997])
    def test_odd_targets(self, target):
        pts = sample_patch_centres(40, 37, 5, target, seed=3)
        expect = min(target, 36 * 33)
        assert len(pts) == expect
        assert len({(x, y) for x, y in pts}) == expect

    def test_image_smaller_than_patch_rejected(self):
        with pytest.raises(ConfigurationError):
            sample_patch_centres(4, 10, 5, 10, seed=0)


def test_training_set_matches_positions():
    rng = np.random.default_rng(9)
    g = PixelGrid(rng.random((20, 30)))
    pts = sample_patch_centres(30, 20, 5, 40, seed=2)
    feats = extract_training_set(g, 5, 40, seed=2)
    assert feats.shape == (40, 25)
    assert np.array_equal(feats, extract_features_at(g, pts, 5))
