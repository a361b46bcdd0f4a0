from __future__ import annotations

import numpy as np
import pytest

from patchseg.dictionary import assign_image, build_tree
from patchseg.errors import ConfigurationError, CorruptionError
from patchseg.features import extract_training_set
from patchseg.graph import build_biadjacency, normalize
from patchseg.grid import PixelGrid
from patchseg.modelio import load_model, load_tree, save_model, save_tree
from patchseg.propagation import (UpdateOptions, UserMarking, binarise,
                                  fill_unlabeled, overwrite, propagate_once)
from patchseg.transfer import (StackOptions, TrainedModel, apply_to_image,
                               apply_to_stack, dictionary_probabilities,
                               train_model)

from oracles import dense_transforms


def small_session(seed=0, width=12, height=10, M=3, b=2, t=2, C=2):
    rng = np.random.default_rng(seed)
    grid = PixelGrid(rng.random((height, width)))
    feats = extract_training_set(grid, M, 60, seed=seed)
    tree = build_tree(feats, b, t, iterations=4, seed=seed, patch_side=M, channels=1)
    A = assign_image(grid, tree)
    transforms = normalize(build_biadjacency(A, M, tree.n_nodes))
    marks = UserMarking(width * height, C)
    marks.mark([25, 26], 1)
    marks.mark([45, 57], 2)
    return grid, tree, transforms, marks


class TestDictionaryProbabilities:
    def test_uniform_labels(self):
        _, tree, t, marks = small_session(b=3, t=3)  # oversized tree: empty nodes
        L = fill_unlabeled(UserMarking(t.n_image_pixels, 3))
        D = dictionary_probabilities(L, t)
        nz = ~t.empty_dict_mask
        assert np.abs(D[nz] - 1 / 3).max() < 1e-12
        assert (~nz).any()
        assert np.abs(D[~nz]).max() == 0.0

    def test_one_hot_labels(self):
        _, tree, t, _ = small_session(1)
        n = t.n_image_pixels
        marks = UserMarking(n, 2)
        marks.mark(np.arange(n), 2)
        D = dictionary_probabilities(fill_unlabeled(marks), t)
        nz = ~t.empty_dict_mask
        assert np.abs(D[nz, 1] - 1.0).max() < 1e-12

    def test_matches_dense_oracle(self):
        _, tree, t, marks = small_session(2)
        rng = np.random.default_rng(3)
        L = rng.random((t.n_image_pixels, 2))
        T1, _ = dense_transforms(t.graph.matrix.toarray())
        assert np.abs(dictionary_probabilities(L, t) - T1 @ L).max() < 1e-12


class TestModelFile:
    def test_tree_roundtrip(self):
        _, tree, _, _ = small_session(4)
        blob = save_tree(tree, meta={"note": "x"})
        back, meta = load_tree(blob)
        assert meta == {"note": "x"}
        assert back.branching == tree.branching
        assert back.layers == tree.layers
        assert back.patch_side == tree.patch_side
        assert back.seed == tree.seed
        assert np.array_equal(back.empty, tree.empty)
        stored = np.where(tree.empty[:, None], 0.0, tree.centres)
        assert np.array_equal(back.centres, stored)

    def test_model_roundtrip(self, tmp_path):
        grid, tree, t, marks = small_session(5)
        model = train_model(tree, t, fill_unlabeled(marks), {"image": "img0"})
        path = tmp_path / "model.bin"
        model.save(path)
        back = TrainedModel.load(path)
        assert back.n_classes == model.n_classes
        assert np.array_equal(back.dict_probs, model.dict_probs)
        assert np.array_equal(back.empty_dict_mask, model.empty_dict_mask)
        assert back.provenance["image"] == "img0"

    def test_bad_magic_rejected(self):
        with pytest.raises(CorruptionError):
            load_tree(b"NOTAMODEL" + b"\0" * 64)

    def test_truncated_rejected(self):
        _, tree, t, marks = small_session(6)
        blob = save_tree(tree)
        with pytest.raises(CorruptionError):
            load_tree(blob[:-10])


class TestApplyToImage:
    def test_training_image_round_trip(self):
        grid, tree, t, marks = small_session(7)
        opts = UpdateOptions(steps=2, binarise=True, overwrite=True)
        L0 = fill_unlabeled(marks)
        P1 = propagate_once(L0, t)
        L1 = overwrite(binarise(P1, opts.epsilon), marks)
        final_P = propagate_once(L1, t)
        model = train_model(tree, t, L1)
        P_hat = apply_to_image(grid, model)
        assert np.abs(P_hat - final_P).max() < 1e-12

    def test_constant_image_constant_rows(self):
        grid, tree, t, marks = small_session(8)
        model = train_model(tree, t, fill_unlabeled(marks))
        const = PixelGrid(np.full((9, 9), 0.5))
        P = apply_to_image(const, model)
        # all interior pixels share the assignment pattern -> equal probability
        inner = P.reshape(9, 9, -1)[3:6, 3:6]
        assert np.abs(inner - inner[0, 0]).max() < 1e-12

    def test_different_size_output_shape(self):
        grid, tree, t, marks = small_session(9)
        model = train_model(tree, t, fill_unlabeled(marks))
        other = PixelGrid(np.random.default_rng(1).random((7, 15)))
        P = apply_to_image(other, model)
        assert P.shape == (7 * 15, 2)
        sums = P.sum(axis=1)
        assert sums.max() <= 1.0 + 1e-9

    def test_channel_mismatch_rejected(self):
        grid, tree, t, marks = small_session(10)
        model = train_model(tree, t, fill_unlabeled(marks))
        with pytest.raises(ConfigurationError):
            apply_to_image(PixelGrid(np.zeros((8, 8, 3))), model)

    def test_too_small_rejected(self):
        grid, tree, t, marks = small_session(11)
        model = train_model(tree, t, fill_unlabeled(marks))
        with pytest.raises(ConfigurationError):
            apply_to_image(PixelGrid(np.zeros((2, 2))), model)


class TestApplyToStack:
    def _model(self, seed=12):
        grid, tree, t, marks = small_session(seed)
        return grid, train_model(tree, t, fill_unlabeled(marks))

    def test_identical_slices_identical_outputs(self):
        grid, model = self._model()
        probs, labels, _ = apply_to_stack([grid] * 3, model)
        assert np.array_equal(probs[0], probs[1])
        assert np.array_equal(probs[0], probs[2])
        assert np.array_equal(labels[0], labels[2])

    def test_single_slice_equals_apply_to_image(self):
        grid, model = self._model(13)
        probs, labels, _ = apply_to_stack([grid], model)
        assert np.array_equal(probs[0], apply_to_image(grid, model))

    def test_elementwise_equivalence(self):
        rng = np.random.default_rng(14)
        grid, model = self._model(14)
        slices = [PixelGrid(rng.random((10, 12))) for _ in range(3)]
        probs, labels, _ = apply_to_stack(slices, model,
                                          StackOptions(workers=2))
        for sl, p in zip(slices, probs):
            assert np.array_equal(p, apply_to_image(sl, model))

    def test_mismatched_slice_aborts_with_index(self):
        grid, model = self._model(15)
        bad = PixelGrid(np.zeros((10, 12, 3)))
        with pytest.raises(ConfigurationError, match="slice 1"):
            apply_to_stack([grid, bad], model)

    def test_progress_reported(self):
        grid, model = self._model(16)
        seen = []
        apply_to_stack([grid] * 4, model, StackOptions(workers=1),
                       progress=lambda done, total: seen.append((done, total)))
        assert seen == [(1, 4), (2, 4), (3, 4), (4, 4)]

    def test_empty_stack_rejected(self):
        _, model = self._model(17)
        with pytest.raises(ConfigurationError):
            apply_to_stack([], model)
