"""Interactive session state: build pipeline, stroke handling, coalesced updates.

Each session owns one worker thread.  Stroke batches, option changes and
undo/redo bump a revision counter under the session lock; the worker always
recomputes for the latest revision, so bursts arriving during a computation
collapse into a single follow-up run.  Results and server-sent events are
published under the same lock and consumed by waiting readers.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import asdict, dataclass

import numpy as np

from .dictionary import assign_image, build_tree
from .errors import ConfigurationError
from .features import EXTRACTOR_KINDS, extract_training_set
from .graph import build_biadjacency, normalize
from .grid import PixelGrid
from .propagation import (UpdateOptions, UserMarking, final_label_stack,
                          update)
from .transfer import TrainedModel, train_model

RESULT_KINDS = ("segmentation", "probability", "marks")


@dataclass(frozen=True)
class BuildConfig:
    """Preprocessing parameters fixed at session start."""

    patch_side: int = 9
    branching: int = 5
    layers: int = 4
    iterations: int = 10
    seed: int = 0
    extractor_kind: str | None = None   # None: pick from the channel count
    n_classes: int = 2
    subsample: int = 15000

    def __post_init__(self):
        if self.patch_side < 3 or self.patch_side % 2 == 0:
            raise ConfigurationError(f"patch side must be odd >= 3, got {self.patch_side}")
        if self.branching < 2:
            raise ConfigurationError(f"branching must be >= 2, got {self.branching}")
        if self.layers < 0:
            raise ConfigurationError(f"layers must be >= 0, got {self.layers}")
        if self.iterations < 1:
            raise ConfigurationError(f"iterations must be >= 1, got {self.iterations}")
        if self.n_classes < 2:
            raise ConfigurationError(f"need >= 2 classes, got {self.n_classes}")
        if self.subsample < 1:
            raise ConfigurationError(f"subsample must be positive, got {self.subsample}")
        if self.extractor_kind is not None and self.extractor_kind not in EXTRACTOR_KINDS:
            raise ConfigurationError(f"unknown extractor kind {self.extractor_kind!r}")

    def resolve_extractor(self, channels: int) -> str:
        if self.extractor_kind is not None:
            if self.extractor_kind == "intensity-patch" and channels != 1:
                raise ConfigurationError(
                    "intensity-patch extractor needs a single-channel image")
            return self.extractor_kind
        return "intensity-patch" if channels == 1 else "multichannel-patch"


def rasterize_stroke(points, radius: float, width: int, height: int) -> np.ndarray:
    """Flat pixel indices of a round brush dragged along a polyline.

    A pixel is covered when its centre lies within ``radius`` of any
    segment (single points stamp a disk).  Coordinates are 0-based pixel
    positions and may be fractional.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if pts.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    radius = max(float(radius), 0.0)
    covered: set[int] = set()
    segments = [(pts[i], pts[i + 1]) for i in range(len(pts) - 1)] or [(pts[0], pts[0])]
    for p, q in segments:
        x_lo = max(0, int(np.floor(min(p[0], q[0]) - radius)))
        x_hi = min(width - 1, int(np.ceil(max(p[0], q[0]) + radius)))
        y_lo = max(0, int(np.floor(min(p[1], q[1]) - radius)))
        y_hi = min(height - 1, int(np.ceil(max(p[1], q[1]) + radius)))
        if x_lo > x_hi or y_lo > y_hi:
            continue
        xs, ys = np.meshgrid(np.arange(x_lo, x_hi + 1), np.arange(y_lo, y_hi + 1))
        d = q - p
        len2 = float(d @ d)
        if len2 == 0.0:
            dist2 = (xs - p[0]) ** 2 + (ys - p[1]) ** 2
        else:
            t = ((xs - p[0]) * d[0] + (ys - p[1]) * d[1]) / len2
            t = np.clip(t, 0.0, 1.0)
            dist2 = (xs - (p[0] + t * d[0])) ** 2 + (ys - (p[1] + t * d[1])) ** 2
        hit_y, hit_x = np.nonzero(dist2 <= radius * radius)
        covered.update((ys[hit_y, hit_x] * width + xs[hit_y, hit_x]).tolist())
    return np.fromiter(sorted(covered), dtype=np.int64, count=len(covered))


class Session:
    """One image, one dictionary, one marking, one in-flight computation."""

    def __init__(self, grid: PixelGrid, config: BuildConfig,
                 session_id: str | None = None, image_name: str = ""):
        if config.patch_side >= min(grid.width, grid.height):
            raise ConfigurationError(
                f"patch side {config.patch_side} too large for a "
                f"{grid.width}x{grid.height} image")
        self.id = session_id or uuid.uuid4().hex[:12]
        self.grid = grid
        self.config = config
        self.image_name = image_name
        self.extractor_kind = config.resolve_extractor(grid.channels)

        self.marking = UserMarking(grid.n_pixels, config.n_classes)
        self.history: list[list[tuple[np.ndarray, int | None]]] = []
        self.redo_stack: list[list[tuple[np.ndarray, int | None]]] = []
        self.options = UpdateOptions()
        self.revision = 0
        self.computed_revision = -1
        self.prob: np.ndarray | None = None
        self.prob_options = self.options
        self.ready = False
        self.error: str | None = None
        self.stats: dict = {}

        self.tree = None
        self.transforms = None

        self._cv = threading.Condition()
        self._events: list[dict] = []
        self._shutdown = False
        self._worker = threading.Thread(target=self._run, daemon=True,
                                        name=f"session-{self.id}")
        self._worker.start()

    # ----- worker -----------------------------------------------------

    def _run(self):
        try:
            self._build()
        except Exception as exc:  # surfaced to clients via events/status
            with self._cv:
                self.error = str(exc)
                self._emit({"type": "error", "message": self.error})
                self._cv.notify_all()
            return
        while True:
            with self._cv:
                while not self._shutdown and self.revision == self.computed_revision:
                    self._cv.wait()
                if self._shutdown:
                    return
                rev = self.revision
                marks = self.marking.copy()
                opts = self.options
            t0 = time.perf_counter()
            prob = update(marks, self.transforms, opts)
            elapsed_ms = (time.perf_counter() - t0) * 1000.0
            with self._cv:
                self.prob = prob
                self.prob_options = opts
                self.computed_revision = rev
                self._emit({"type": "update", "revision": rev,
                            "timing_ms": round(elapsed_ms, 3)})
                self._cv.notify_all()

    def _build(self):
        timings = {}
        t0 = time.perf_counter()
        features = extract_training_set(self.grid, self.config.patch_side,
                                        self.config.subsample, self.config.seed)
        self.tree = build_tree(features, self.config.branching, self.config.layers,
                               iterations=self.config.iterations,
                               seed=self.config.seed,
                               patch_side=self.config.patch_side,
                               channels=self.grid.channels,
                               extractor_kind=self.extractor_kind)
        timings["tree_ms"] = round((time.perf_counter() - t0) * 1000.0, 1)

        t0 = time.perf_counter()
        assignments = assign_image(self.grid, self.tree)
        timings["assign_ms"] = round((time.perf_counter() - t0) * 1000.0, 1)

        t0 = time.perf_counter()
        graph = build_biadjacency(assignments, self.config.patch_side,
                                  self.tree.n_nodes)
        self.transforms = normalize(graph)
        timings["graph_ms"] = round((time.perf_counter() - t0) * 1000.0, 1)

        with self._cv:
            self.ready = True
            self.stats = {
                "timings": timings,
                "nnz": int(graph.matrix.nnz),
                "relations": graph.relation_count,
                "n_nodes": self.tree.n_nodes,
                "empty_nodes": int(self.tree.empty.sum()),
            }
            self._emit({"type": "ready", "revision": self.revision,
                        "timing": timings, "nnz": int(graph.matrix.nnz)})
            self._cv.notify_all()

    def _emit(self, event: dict):
        self._events.append(event)

    # ----- mutations ----------------------------------------------------

    def _require_ready(self):
        if self.error:
            raise ConfigurationError(f"session failed to build: {self.error}")
        if not self.ready:
            raise ConfigurationError("session is still building")

    def submit_strokes(self, strokes: list[dict],
                       options: UpdateOptions | None = None) -> int:
        """Rasterize stroke polylines, fold them into the marking, reschedule."""
        batch: list[tuple[np.ndarray, int | None]] = []
        for stroke in strokes:
            cls = stroke.get("cls", None)
            if cls in ("eraser", 0, None):
                cls = None
            elif not (isinstance(cls, int) and 1 <= cls <= self.marking.n_classes):
                raise ConfigurationError(f"unknown class {cls!r}")
            pixels = rasterize_stroke(stroke["points"], stroke.get("radius", 1.0),
                                      self.grid.width, self.grid.height)
            batch.append((pixels, cls))
        with self._cv:
            self._require_ready()
            for pixels, cls in batch:
                self.marking.mark(pixels, cls)
            if batch:
                self.history.append(batch)
                self.redo_stack.clear()
            if options is not None:
                self.options = options
            self.revision += 1
            self._cv.notify_all()
            return self.revision

    def set_options(self, options: UpdateOptions) -> int:
        return self.submit_strokes([], options)

    def import_marks(self, label_map: np.ndarray) -> int:
        """Replace the marking with an imported class map (one history batch)."""
        label_map = np.asarray(label_map)
        if label_map.shape != (self.grid.height, self.grid.width):
            raise ConfigurationError(
                f"marks map {label_map.shape} does not match the image")
        if label_map.max() > self.marking.n_classes:
            raise ConfigurationError("marks map contains unknown classes")
        batch: list[tuple[np.ndarray, int | None]] = [
            (np.arange(self.grid.n_pixels), None)]
        flat = label_map.reshape(-1)
        for c in range(1, self.marking.n_classes + 1):
            pixels = np.flatnonzero(flat == c)
            if pixels.size:
                batch.append((pixels, c))
        with self._cv:
            self._require_ready()
            self._replay(self.history + [batch])
            self.history.append(batch)
            self.redo_stack.clear()
            self.revision += 1
            self._cv.notify_all()
            return self.revision

    def _replay(self, batches):
        self.marking.clear()
        for batch in batches:
            for pixels, cls in batch:
                self.marking.mark(pixels, cls)

    def undo(self) -> int:
        with self._cv:
            self._require_ready()
            if self.history:
                self.redo_stack.append(self.history.pop())
                self._replay(self.history)
                self.revision += 1
                self._cv.notify_all()
            return self.revision

    def redo(self) -> int:
        with self._cv:
            self._require_ready()
            if self.redo_stack:
                batch = self.redo_stack.pop()
                self.history.append(batch)
                for pixels, cls in batch:
                    self.marking.mark(pixels, cls)
                self.revision += 1
                self._cv.notify_all()
            return self.revision

    # ----- reads --------------------------------------------------------

    def status(self) -> dict:
        with self._cv:
            return {
                "session_id": self.id,
                "ready": self.ready,
                "error": self.error,
                "revision": self.revision,
                "computed_revision": self.computed_revision,
                "width": self.grid.width,
                "height": self.grid.height,
                "channels": self.grid.channels,
                "n_classes": self.marking.n_classes,
                "n_marked": self.marking.n_marked,
                "options": asdict(self.options),
                "stats": self.stats,
                "can_undo": bool(self.history),
                "can_redo": bool(self.redo_stack),
            }

    def wait_result(self, min_revision: int = 0, timeout: float = 60.0):
        """Newest probability stack with revision >= requested.

        Returns (prob, revision, options at compute time).
        """
        with self._cv:
            deadline = time.monotonic() + timeout
            while self.computed_revision < min_revision and not self.error:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise TimeoutError(
                        f"no result at revision {min_revision} within {timeout}s")
                self._cv.wait(remaining)
            self._require_ready()
            return self.prob, self.computed_revision, self.prob_options

    def marks_map(self) -> tuple[np.ndarray, int]:
        with self._cv:
            return self.marking.to_label_map(self.grid.width, self.grid.height), \
                self.revision

    def events_since(self, index: int, timeout: float = 25.0):
        """Events after ``index``; blocks until new ones arrive or timeout."""
        with self._cv:
            deadline = time.monotonic() + timeout
            while len(self._events) <= index and not self._shutdown:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return []
                self._cv.wait(remaining)
            return list(self._events[index:])

    # ----- export -------------------------------------------------------

    def final_label_stack(self) -> np.ndarray:
        """Label stack consumed by the last diffusion step under the options."""
        with self._cv:
            self._require_ready()
            marks = self.marking.copy()
            opts = self.options
        return final_label_stack(marks, self.transforms, opts)

    def export_model(self) -> TrainedModel:
        labels = self.final_label_stack()
        provenance = {
            "image": self.image_name or self.id,
            "options": asdict(self.options),
            "config": asdict(self.config),
        }
        return train_model(self.tree, self.transforms, labels, provenance)

    def close(self):
        with self._cv:
            self._shutdown = True
            self._cv.notify_all()
