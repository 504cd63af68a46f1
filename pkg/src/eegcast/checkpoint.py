"""Binary checkpoint container shared by the denoiser and the classifier.

Layout::

    b"EEGDIF01"
    uint64 little-endian  length of the JSON metadata
    UTF-8 JSON metadata   {"format_version", "kind", "parameters": [[name, shape], ...], ...}
    float32 little-endian parameter values, concatenated in metadata order
"""
from __future__ import annotations

import json
import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

MAGIC = b"EEGDIF01"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, kind, metadata, state):
    """Write ``state`` (name -> array, in canonical order) plus metadata."""
    arrays = [(name, np.asarray(value, dtype="<f4")) for name, value in state.items()]
    meta = dict(metadata)
    meta["format_version"] = FORMAT_VERSION
    meta["kind"] = kind
    meta["parameters"] = [[name, list(a.shape)] for name, a in arrays]
    header = json.dumps(meta, sort_keys=True).encode("utf-8")
    blob = b"".join([MAGIC, struct.pack("<Q", len(header)), header] + [a.tobytes() for _, a in arrays])
    Path(path).write_bytes(blob)
    return len(blob)


def load_checkpoint(path, kind=None):
    """Return ``(metadata, OrderedDict name -> float32 array)``."""
    blob = Path(path).read_bytes()
    if blob[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a model checkpoint (bad magic)")
    if len(blob) < 16:
        raise CheckpointError(f"{path}: truncated checkpoint")
    (n,) = struct.unpack("<Q", blob[8:16])
    try:
        meta = json.loads(blob[16 : 16 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt metadata: {exc}") from None
    if meta.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {meta.get('format_version')!r}")
    if kind is not None and meta.get("kind") != kind:
        raise CheckpointError(f"{path}: expected a {kind} checkpoint, found {meta.get('kind')!r}")
    state = OrderedDict()
    offset = 16 + n
    for name, shape in meta["parameters"]:
        count = int(np.prod(shape)) if shape else 1
        end = offset + 4 * count
        if end > len(blob):
            raise CheckpointError(f"{path}: truncated parameter data at {name}")
        state[name] = np.frombuffer(blob, dtype="<f4", count=count, offset=offset).reshape(shape)
        offset = end
    if offset != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - offset} trailing bytes")
    return meta, state
