"""Image ingest and export: PNG (8/16-bit gray, 8-bit RGB), TIFF stacks.

Marks interchange is an indexed PNG whose palette index equals the class id
(0 = unmarked).  Probability layers are exported as 8-bit grayscale PNG
(``value = round(255 * p)``) for transport and as 16-bit multi-page TIFF
(``value = round(65535 * p)``) for full volumes.
"""

from __future__ import annotations

import io as _io
from pathlib import Path

import numpy as np
from PIL import Image, ImageSequence

from .errors import ConfigurationError
from .grid import PixelGrid

# Class color convention (index 0 = unmarked): cyan, magenta, purple, then
# spares for C > 3.
CLASS_COLORS = [
    (0, 0, 0),
    (0, 255, 255),
    (255, 0, 255),
    (128, 0, 255),
    (255, 200, 0),
    (0, 255, 96),
    (255, 96, 0),
    (96, 128, 255),
    (255, 255, 255),
]

_GRAY_MODES = {"L": 255.0, "I;16": 65535.0, "I": 65535.0}


def _frame_to_grid(im: Image.Image) -> PixelGrid:
    mode = im.mode
    if mode in _GRAY_MODES:
        arr = np.asarray(im, dtype=np.float64) / _GRAY_MODES[mode]
        return PixelGrid(np.clip(arr, 0.0, 1.0))
    if mode == "RGB":
        arr = np.asarray(im, dtype=np.float64) / 255.0
        return PixelGrid(arr)
    raise ConfigurationError(f"unsupported image mode {mode!r} "
                             "(supported: 8/16-bit gray, 8-bit RGB)")


def _open(source) -> Image.Image:
    if isinstance(source, (bytes, bytearray)):
        source = _io.BytesIO(source)
    try:
        return Image.open(source)
    except Exception as exc:
        raise ConfigurationError(f"unsupported image: {exc}") from exc


def load_image(source) -> PixelGrid:
    """Load a single image (path, bytes or file object) into a PixelGrid."""
    with _open(source) as im:
        im.load()
        return _frame_to_grid(im)


def load_stack(source) -> list[PixelGrid]:
    """Load an ordered slice list from a multi-page TIFF (or any single image)."""
    with _open(source) as im:
        slices = [_frame_to_grid(frame.copy()) for frame in ImageSequence.Iterator(im)]
    if not slices:
        raise ConfigurationError("image source contains no frames")
    return slices


def save_image_png(grid: PixelGrid, target=None) -> bytes | None:
    """Render a grid as 8-bit PNG (grayscale or RGB)."""
    data = np.rint(grid.data * 255.0).astype(np.uint8)
    im = Image.fromarray(data[..., 0] if grid.channels == 1 else data)
    return _save_png(im, target)


def save_gray_png(layer: np.ndarray, target=None) -> bytes | None:
    """Write a [0, 1] layer as 8-bit grayscale PNG; returns bytes if no target."""
    arr = np.asarray(layer, dtype=np.float64)
    data = np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    im = Image.fromarray(data, mode="L")
    return _save_png(im, target)


def save_indexed_png(labels: np.ndarray, target=None) -> bytes | None:
    """Write a (Y, X) class-id map as indexed PNG, palette index = class id."""
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= 256:
        raise ConfigurationError("class ids must fit in a PNG palette (0..255)")
    im = Image.fromarray(labels.astype(np.uint8), mode="P")
    palette = []
    for idx in range(256):
        palette.extend(CLASS_COLORS[idx] if idx < len(CLASS_COLORS) else (idx, idx, idx))
    im.putpalette(palette)
    return _save_png(im, target)


def load_indexed_png(source) -> np.ndarray:
    """Read an indexed PNG back into a (Y, X) class-id map."""
    if isinstance(source, (bytes, bytearray)):
        source = _io.BytesIO(source)
    with Image.open(source) as im:
        if im.mode != "P":
            raise ConfigurationError(f"expected indexed PNG, got mode {im.mode!r}")
        return np.asarray(im, dtype=np.int32)


def _save_png(im: Image.Image, target):
    if target is None:
        buf = _io.BytesIO()
        im.save(buf, format="PNG")
        return buf.getvalue()
    im.save(target, format="PNG")
    return None


def save_probability_tiff(layers: list[np.ndarray], path) -> None:
    """Write per-slice [0, 1] layers as a 16-bit multi-page TIFF.

    Stored value is ``round(65535 * p)``; divide by 65535 to recover
    probabilities.
    """
    pages = []
    for layer in layers:
        arr = np.asarray(layer, dtype=np.float64)
        data = np.rint(np.clip(arr, 0.0, 1.0) * 65535.0).astype(np.uint16)
        pages.append(Image.fromarray(data))
    _save_multipage(pages, path)


def save_label_tiff(slices: list[np.ndarray], path) -> None:
    """Write per-slice class-id maps as an 8-bit multi-page TIFF."""
    pages = []
    for labels in slices:
        arr = np.asarray(labels)
        if arr.min() < 0 or arr.max() >= 256:
            raise ConfigurationError("class ids must fit in 8 bits")
        pages.append(Image.fromarray(arr.astype(np.uint8), mode="L"))
    _save_multipage(pages, path)


def load_label_tiff(source) -> list[np.ndarray]:
    """Read an 8-bit label TIFF back into per-slice class-id maps."""
    if isinstance(source, (bytes, bytearray)):
        source = _io.BytesIO(source)
    with Image.open(source) as im:
        return [np.asarray(frame.copy(), dtype=np.int32)
                for frame in ImageSequence.Iterator(im)]


def _save_multipage(pages: list[Image.Image], target) -> None:
    if not pages:
        raise ConfigurationError("nothing to write")
    if not hasattr(target, "write"):
        target = Path(target)
        target.parent.mkdir(parents=True, exist_ok=True)
    pages[0].save(target, format="TIFF", save_all=True, append_images=pages[1:])
