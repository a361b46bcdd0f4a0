"""Binary container for persisted dictionaries and trained models.

Layout (all integers little-endian):

    magic   8 bytes  b"PSEGMODL"
    version u32      currently 1
    then a sequence of sections until EOF, each:
        tag     4 bytes ASCII
        length  u64   payload byte count
        payload

Sections:

    TREE    u32 M, u32 channels, u32 branching, u32 layers, u32 K,
            u32 feature_length, u64 seed,
            16-byte feature-order tag (ASCII, NUL-padded),
            16-byte extractor-kind tag (ASCII, NUL-padded),
            K bytes empty-node flags (0/1),
            K * feature_length float64 centres in node-id order
            (empty nodes store zeros)
    DPRB    u32 C, u64 m, m bytes empty-pixel flags (0/1),
            m * C float64 dictionary probabilities
    META    UTF-8 JSON provenance blob

A dictionary-only file carries TREE (and usually META); a trained model
adds DPRB.  Unknown sections are skipped on read.
"""

from __future__ import annotations

import io as _io
import json
import struct

import numpy as np

from .dictionary import KMeansTree
from .errors import CorruptionError
from .features import FEATURE_ORDER_TAG

MAGIC = b"PSEGMODL"
VERSION = 1

_TREE_HEAD = struct.Struct("<IIIIIIQ")


def _pad_tag(text: str, size: int = 16) -> bytes:
    raw = text.encode("ascii")
    if len(raw) > size:
        raise CorruptionError(f"tag {text!r} longer than {size} bytes")
    return raw.ljust(size, b"\0")


def _pack_tree(tree: KMeansTree) -> bytes:
    head = _TREE_HEAD.pack(tree.patch_side, tree.channels, tree.branching,
                           tree.layers, tree.n_nodes, tree.feature_length,
                           tree.seed)
    centres = np.where(tree.empty[:, None], 0.0, tree.centres)
    return b"".join([
        head,
        _pad_tag(FEATURE_ORDER_TAG),
        _pad_tag(tree.extractor_kind),
        tree.empty.astype(np.uint8).tobytes(),
        np.ascontiguousarray(centres, dtype="<f8").tobytes(),
    ])


def _unpack_tree(payload: bytes) -> KMeansTree:
    if len(payload) < _TREE_HEAD.size + 32:
        raise CorruptionError("truncated TREE section")
    M, channels, branching, layers, K, feat_len, seed = _TREE_HEAD.unpack_from(payload)
    off = _TREE_HEAD.size
    order_tag = payload[off:off + 16].rstrip(b"\0").decode("ascii")
    kind_tag = payload[off + 16:off + 32].rstrip(b"\0").decode("ascii")
    if order_tag != FEATURE_ORDER_TAG:
        raise CorruptionError(f"unsupported feature order {order_tag!r}")
    off += 32
    expected = off + K + K * feat_len * 8
    if len(payload) != expected:
        raise CorruptionError(f"TREE section is {len(payload)} bytes, expected {expected}")
    empty = np.frombuffer(payload, dtype=np.uint8, count=K, offset=off).astype(bool)
    off += K
    centres = np.frombuffer(payload, dtype="<f8", count=K * feat_len,
                            offset=off).reshape(K, feat_len).copy()
    return KMeansTree(branching=branching, layers=layers, centres=centres,
                      empty=empty, patch_side=M, channels=channels,
                      extractor_kind=kind_tag, seed=seed)


def _pack_dict_probs(dict_probs: np.ndarray, mask: np.ndarray) -> bytes:
    m, C = dict_probs.shape
    return b"".join([
        struct.pack("<IQ", C, m),
        np.asarray(mask, dtype=np.uint8).tobytes(),
        np.ascontiguousarray(dict_probs, dtype="<f8").tobytes(),
    ])


def _unpack_dict_probs(payload: bytes) -> tuple[np.ndarray, np.ndarray]:
    C, m = struct.unpack_from("<IQ", payload)
    off = struct.calcsize("<IQ")
    expected = off + m + m * C * 8
    if len(payload) != expected:
        raise CorruptionError(f"DPRB section is {len(payload)} bytes, expected {expected}")
    mask = np.frombuffer(payload, dtype=np.uint8, count=m, offset=off).astype(bool)
    off += m
    probs = np.frombuffer(payload, dtype="<f8", count=m * C,
                          offset=off).reshape(m, C).copy()
    return probs, mask


def write_sections(sections: list[tuple[bytes, bytes]], target=None) -> bytes | None:
    buf = _io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    for tag, payload in sections:
        buf.write(tag)
        buf.write(struct.pack("<Q", len(payload)))
        buf.write(payload)
    data = buf.getvalue()
    if target is None:
        return data
    with open(target, "wb") as fh:
        fh.write(data)
    return None


def read_sections(source) -> dict[bytes, bytes]:
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    else:
        with open(source, "rb") as fh:
            data = fh.read()
    if data[:8] != MAGIC:
        raise CorruptionError("not a model file (bad magic)")
    (version,) = struct.unpack_from("<I", data, 8)
    if version != VERSION:
        raise CorruptionError(f"unsupported model version {version}")
    sections: dict[bytes, bytes] = {}
    off = 12
    while off < len(data):
        if off + 12 > len(data):
            raise CorruptionError("truncated section header")
        tag = data[off:off + 4]
        (length,) = struct.unpack_from("<Q", data, off + 4)
        off += 12
        if off + length > len(data):
            raise CorruptionError(f"truncated section {tag!r}")
        sections[tag] = data[off:off + length]
        off += length
    return sections


def save_tree(tree: KMeansTree, target=None, meta: dict | None = None) -> bytes | None:
    """Persist a dictionary tree (TREE + optional META sections)."""
    sections = [(b"TREE", _pack_tree(tree))]
    if meta is not None:
        sections.append((b"META", json.dumps(meta, sort_keys=True).encode("utf-8")))
    return write_sections(sections, target)


def load_tree(source) -> tuple[KMeansTree, dict]:
    sections = read_sections(source)
    if b"TREE" not in sections:
        raise CorruptionError("model file has no TREE section")
    tree = _unpack_tree(sections[b"TREE"])
    meta = json.loads(sections[b"META"].decode("utf-8")) if b"META" in sections else {}
    return tree, meta


def save_model(tree: KMeansTree, dict_probs: np.ndarray, mask: np.ndarray,
               meta: dict, target=None) -> bytes | None:
    """Persist a full trained model (TREE + DPRB + META)."""
    sections = [
        (b"TREE", _pack_tree(tree)),
        (b"DPRB", _pack_dict_probs(dict_probs, mask)),
        (b"META", json.dumps(meta, sort_keys=True).encode("utf-8")),
    ]
    return write_sections(sections, target)


def load_model(source) -> tuple[KMeansTree, np.ndarray, np.ndarray, dict]:
    sections = read_sections(source)
    for tag in (b"TREE", b"DPRB"):
        if tag not in sections:
            raise CorruptionError(f"model file has no {tag.decode()} section")
    tree = _unpack_tree(sections[b"TREE"])
    probs, mask = _unpack_dict_probs(sections[b"DPRB"])
    if probs.shape[0] != tree.patch_side ** 2 * tree.n_nodes:
        raise CorruptionError("dictionary probabilities do not match the tree size")
    meta = json.loads(sections[b"META"].decode("utf-8")) if b"META" in sections else {}
    return tree, probs, mask, meta
