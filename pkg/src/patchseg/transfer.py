"""Apply a learned dictionary labelling to unseen images and volume stacks.

The dictionary probabilities D are the image->dictionary half of the
propagation applied to the session's final label stack.  A new image only
needs its own assignment and dictionary->image transform; D is reused as-is
(single diffusion step by construction).
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import modelio
from .dictionary import KMeansTree, assign_image
from .errors import ConfigurationError
from .graph import TransformPair, build_biadjacency, normalize
from .grid import PixelGrid
from .postproc import detect_centres, remove_small_components
from .propagation import segment


@dataclass
class TrainedModel:
    """Everything needed to classify images similar to the training image."""

    tree: KMeansTree
    n_classes: int
    dict_probs: np.ndarray = field(repr=False)      # (m, C)
    empty_dict_mask: np.ndarray = field(repr=False)  # (m,) bool
    provenance: dict = field(default_factory=dict)

    @property
    def patch_side(self) -> int:
        return self.tree.patch_side

    @property
    def n_dict_pixels(self) -> int:
        return self.dict_probs.shape[0]

    def save(self, target=None) -> bytes | None:
        meta = dict(self.provenance)
        meta["n_classes"] = self.n_classes
        return modelio.save_model(self.tree, self.dict_probs,
                                  self.empty_dict_mask, meta, target)

    @classmethod
    def load(cls, source) -> "TrainedModel":
        tree, probs, mask, meta = modelio.load_model(source)
        n_classes = int(meta.pop("n_classes", probs.shape[1]))
        return cls(tree=tree, n_classes=n_classes, dict_probs=probs,
                   empty_dict_mask=mask, provenance=meta)


def dictionary_probabilities(label_stack: np.ndarray,
                             transforms: TransformPair) -> np.ndarray:
    """Per-dictionary-pixel class probabilities; masked rows are zero."""
    return transforms.apply_image_to_dict(label_stack)


def apply_to_image(grid: PixelGrid, model: TrainedModel) -> np.ndarray:
    """Probability stack for an unseen image using the stored dictionary.

    Assigns the image's patches to the existing tree, builds the
    dictionary->image transform for this grid, and averages D back into the
    image.  Rows touching masked dictionary pixels sum to less than one.
    """
    if grid.channels != model.tree.channels:
        raise ConfigurationError(
            f"image has {grid.channels} channels, model expects {model.tree.channels}")
    if grid.width < model.patch_side or grid.height < model.patch_side:
        raise ConfigurationError(
            f"image {grid.width}x{grid.height} smaller than patch side "
            f"{model.patch_side}")
    assignments = assign_image(grid, model.tree)
    graph = build_biadjacency(assignments, model.patch_side, model.tree.n_nodes)
    transforms = normalize(graph)
    return transforms.apply_dict_to_image(model.dict_probs)


@dataclass(frozen=True)
class StackOptions:
    """Postprocessing switches for volume transfer."""

    epsilon: float = 1e-6
    min_component: int = 0          # 0 disables small-component removal
    centres_class: int | None = None
    centre_min_distance: float = 5.0
    centre_threshold: float = 0.5
    workers: int = 2


def apply_to_stack(slices: list[PixelGrid], model: TrainedModel,
                   options: StackOptions = StackOptions(),
                   progress=None):
    """Slice-wise transfer over an ordered stack.

    Returns (probability stacks per slice, label volume (Z, Y, X),
    centre detections per slice or None).  Small-component removal runs on
    the assembled volume with 6-connectivity; centre detection runs per
    slice on the requested class layer.  ``progress`` is called as
    progress(done, total) after each finished slice.
    """
    if not slices:
        raise ConfigurationError("empty stack")
    for idx, grid in enumerate(slices):
        if grid.channels != model.tree.channels:
            raise ConfigurationError(
                f"slice {idx}: {grid.channels} channels, model expects "
                f"{model.tree.channels}")
        if grid.width < model.patch_side or grid.height < model.patch_side:
            raise ConfigurationError(
                f"slice {idx}: {grid.width}x{grid.height} smaller than patch "
                f"side {model.patch_side}")
        if (grid.width, grid.height) != (slices[0].width, slices[0].height):
            raise ConfigurationError(
                f"slice {idx}: size differs from slice 0")

    total = len(slices)
    done = 0
    done_lock = threading.Lock()
    results: list[np.ndarray | None] = [None] * total

    def run(idx: int) -> None:
        nonlocal done
        results[idx] = apply_to_image(slices[idx], model)
        with done_lock:
            done += 1
            finished = done
        if progress is not None:
            progress(finished, total)

    workers = max(1, min(options.workers, total))
    if workers == 1:
        for idx in range(total):
            run(idx)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, range(total)))

    height, width = slices[0].height, slices[0].width
    labels = np.stack([
        segment(probs, options.epsilon).reshape(height, width)
        for probs in results
    ])
    if options.min_component > 0:
        for cls in range(1, model.n_classes + 1):
            labels = remove_small_components(labels, cls, options.min_component)

    centres = None
    if options.centres_class is not None:
        layer = options.centres_class - 1
        centres = [
            detect_centres(probs[:, layer].reshape(height, width),
                           options.centre_min_distance, options.centre_threshold)
            for probs in results
        ]
    return results, labels, centres


def train_model(tree: KMeansTree, transforms: TransformPair,
                final_labels: np.ndarray, provenance: dict | None = None) -> TrainedModel:
    """Fold a session's final label stack into a persistable model."""
    dict_probs = dictionary_probabilities(final_labels, transforms)
    return TrainedModel(tree=tree, n_classes=final_labels.shape[1],
                        dict_probs=dict_probs,
                        empty_dict_mask=transforms.empty_dict_mask.copy(),
                        provenance=dict(provenance or {}))


__all__ = [
    "TrainedModel", "StackOptions", "dictionary_probabilities",
    "apply_to_image", "apply_to_stack", "train_model",
]
