"""Versioned ``.npz`` checkpoints with explicit array shapes.

A checkpoint stores a ``kind`` tag, a format version, a JSON metadata blob
and named arrays. The shape of every array is recorded in the metadata and
checked on load.
"""

import json

import numpy as np

from .exceptions import CheckpointError

FORMAT_VERSION = 1


def save_checkpoint(path, kind, arrays, meta=None):
    meta = dict(meta or {})
    meta["shapes"] = {k: list(np.shape(v)) for k, v in arrays.items()}
    payload = {f"a/{k}": np.asarray(v) for k, v in arrays.items()}
    payload["__kind__"] = np.array(kind)
    payload["__version__"] = np.array(FORMAT_VERSION)
    payload["__meta__"] = np.array(json.dumps(meta, sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_checkpoint(path, kind):
    """Return ``(arrays, meta)``; raises :class:`CheckpointError` on mismatch."""
    with np.load(path, allow_pickle=False) as data:
        found = str(data["__kind__"])
        if found != kind:
            raise CheckpointError(f"{path} holds a {found!r} checkpoint, expected {kind!r}")
        version = int(data["__version__"])
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        meta = json.loads(str(data["__meta__"]))
        arrays = {k[2:]: data[k].copy() for k in data.files if k.startswith("a/")}
    for name, shape in meta["shapes"].items():
        if list(arrays[name].shape) != shape:
            raise CheckpointError(f"array {name!r} has shape {arrays[name].shape}, expected {shape}")
    return arrays, meta
