"""From sparse user markings to per-pixel class probabilities.

The update pipeline: unlabeled pixels are filled with the uniform
distribution, the label stack diffuses through the image->dictionary->image
transforms, and (optionally, between two diffusion steps) rows are snapped
to one-hot where a clear winner exists and user-marked rows are restored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .graph import TransformPair
from .grid import uniform_stack

DEFAULT_EPSILON = 1e-6


@dataclass(frozen=True)
class UpdateOptions:
    """Diffusion variant switches; binarise/overwrite act between two steps."""

    steps: int = 1
    binarise: bool = False
    overwrite: bool = False
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if self.steps not in (1, 2):
            raise ConfigurationError(f"steps must be 1 or 2, got {self.steps}")
        if self.epsilon < 0:
            raise ConfigurationError(f"epsilon must be >= 0, got {self.epsilon}")


class UserMarking:
    """Compacted latest-wins pixel markings for a fixed class count."""

    def __init__(self, n_pixels: int, n_classes: int):
        if n_classes < 2:
            raise ConfigurationError(f"need at least 2 classes, got {n_classes}")
        self.n_pixels = n_pixels
        self.n_classes = n_classes
        self._marks: dict[int, int] = {}

    def mark(self, pixels, cls: int | None) -> None:
        """Mark pixels with a class (1..C); None or 0 erases previous marks."""
        pixels = np.atleast_1d(np.asarray(pixels, dtype=np.int64))
        if pixels.size and (pixels.min() < 0 or pixels.max() >= self.n_pixels):
            raise ConfigurationError("pixel index outside the image")
        if cls in (None, 0):
            for i in pixels:
                self._marks.pop(int(i), None)
            return
        if not 1 <= cls <= self.n_classes:
            raise ConfigurationError(
                f"class {cls} outside 1..{self.n_classes} (class count is fixed)")
        for i in pixels:
            self._marks[int(i)] = cls

    @property
    def n_marked(self) -> int:
        return len(self._marks)

    def compacted(self) -> tuple[np.ndarray, np.ndarray]:
        """(pixel indices, classes), sorted by pixel index."""
        if not self._marks:
            return (np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))
        idx = np.fromiter(self._marks.keys(), dtype=np.int64, count=len(self._marks))
        order = np.argsort(idx)
        cls = np.fromiter(self._marks.values(), dtype=np.int64, count=len(self._marks))
        return idx[order], cls[order]

    def copy(self) -> "UserMarking":
        out = UserMarking(self.n_pixels, self.n_classes)
        out._marks = dict(self._marks)
        return out

    def clear(self) -> None:
        self._marks.clear()

    def to_label_map(self, width: int, height: int) -> np.ndarray:
        """(Y, X) class-id map of the marking, 0 = unmarked."""
        flat = np.zeros(self.n_pixels, dtype=np.int32)
        idx, cls = self.compacted()
        flat[idx] = cls
        return flat.reshape(height, width)

    @classmethod
    def from_label_map(cls, label_map: np.ndarray, n_classes: int) -> "UserMarking":
        label_map = np.asarray(label_map)
        marking = cls(label_map.size, n_classes)
        flat = label_map.reshape(-1)
        for c in range(1, int(flat.max()) + 1 if flat.size else 1):
            marking.mark(np.flatnonzero(flat == c), c)
        return marking

    def __eq__(self, other) -> bool:
        return (isinstance(other, UserMarking)
                and self.n_pixels == other.n_pixels
                and self.n_classes == other.n_classes
                and self._marks == other._marks)


def fill_unlabeled(marks: UserMarking, n_pixels: int | None = None,
                   n_classes: int | None = None) -> np.ndarray:
    """Label stack with one-hot rows at marked pixels, uniform 1/C elsewhere."""
    n = marks.n_pixels if n_pixels is None else n_pixels
    C = marks.n_classes if n_classes is None else n_classes
    stack = uniform_stack(n, C)
    idx, cls = marks.compacted()
    if idx.size:
        stack[idx] = 0.0
        stack[idx, cls - 1] = 1.0
    return stack


def propagate_once(label_stack: np.ndarray, transforms: TransformPair) -> np.ndarray:
    """One diffusion step: average into the dictionary and back to the image."""
    dict_values = transforms.apply_image_to_dict(label_stack)
    return transforms.apply_dict_to_image(dict_values)


def binarise(prob_stack: np.ndarray, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Snap rows with a clear maximum to one-hot; ambiguous rows pass through.

    A row is clear when its largest entry exceeds the runner-up by more
    than ``epsilon``.
    """
    prob_stack = np.asarray(prob_stack, dtype=np.float64)
    out = prob_stack.copy()
    top2 = np.partition(prob_stack, -2, axis=1)[:, -2:]
    resolved = (top2[:, 1] - top2[:, 0]) > epsilon
    winners = np.argmax(prob_stack[resolved], axis=1)
    out[resolved] = 0.0
    out[np.flatnonzero(resolved), winners] = 1.0
    return out


def overwrite(stack: np.ndarray, marks: UserMarking) -> np.ndarray:
    """Restore the one-hot user labelling on marked rows, leave the rest."""
    out = np.array(stack, dtype=np.float64, copy=True)
    idx, cls = marks.compacted()
    if idx.size:
        out[idx] = 0.0
        out[idx, cls - 1] = 1.0
    return out


def update(marks: UserMarking, transforms: TransformPair,
           options: UpdateOptions = UpdateOptions()) -> np.ndarray:
    """Full interactive update for the current marking.

    One step diffuses the filled label stack once.  Two steps re-diffuse
    the intermediate result, optionally binarised first and then
    overwritten with the original marks (in that fixed order).
    """
    labels = fill_unlabeled(marks)
    probs = propagate_once(labels, transforms)
    if options.steps == 1:
        return probs
    if options.binarise:
        probs = binarise(probs, options.epsilon)
    if options.overwrite:
        probs = overwrite(probs, marks)
    return propagate_once(probs, transforms)


def final_label_stack(marks: UserMarking, transforms: TransformPair,
                      options: UpdateOptions) -> np.ndarray:
    """Label stack consumed by the pipeline's last diffusion step.

    This is what gets folded into the dictionary when exporting a model:
    the filled marking for one step, or the (optionally binarised and
    overwritten) intermediate result for two.
    """
    labels = fill_unlabeled(marks)
    if options.steps == 1:
        return labels
    probs = propagate_once(labels, transforms)
    if options.binarise:
        probs = binarise(probs, options.epsilon)
    if options.overwrite:
        probs = overwrite(probs, marks)
    return probs


def segment(prob_stack: np.ndarray, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Most probable class per row (1..C); rows tied within epsilon give 0."""
    prob_stack = np.asarray(prob_stack, dtype=np.float64)
    top2 = np.partition(prob_stack, -2, axis=1)[:, -2:]
    resolved = (top2[:, 1] - top2[:, 0]) > epsilon
    labels = np.zeros(len(prob_stack), dtype=np.int32)
    labels[resolved] = np.argmax(prob_stack[resolved], axis=1) + 1
    return labels
