"""Flat little-endian float64 arrays with a JSON sidecar."""
import json
import os

import numpy as np

from ..errors import MissingDataset

DTYPE_TAG = "f64-le"


def _paths(base):
    base = os.fspath(base)
    if base.endswith(".bin") or base.endswith(".json"):
        base = os.path.splitext(base)[0]
    return base + ".bin", base + ".json"


def write_array(base, array, **meta):
    """Write ``base.bin`` and ``base.json``; returns the two paths."""
    a = np.ascontiguousarray(np.asarray(array, dtype="<f8"))
    bin_path, json_path = _paths(base)
    d = os.path.dirname(bin_path)
    if d:
        os.makedirs(d, exist_ok=True)
    a.tofile(bin_path)
    side = {"shape": list(a.shape), "dtype": DTYPE_TAG}
    side.update(meta)
    with open(json_path, "w") as fh:
        json.dump(side, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return bin_path, json_path


def read_array(base):
    """Read an array written by :func:`write_array`; returns ``(array, meta)``."""
    bin_path, json_path = _paths(base)
    for p in (bin_path, json_path):
        if not os.path.exists(p):
            raise MissingDataset(f"dataset file {p} not found; run `gen-data` first")
    with open(json_path) as fh:
        meta = json.load(fh)
    if meta.get("dtype") != DTYPE_TAG:
        raise ValueError(f"{json_path}: unsupported dtype tag {meta.get('dtype')!r}")
    a = np.fromfile(bin_path, dtype="<f8")
    shape = tuple(meta["shape"])
    if a.size != int(np.prod(shape)):
        raise ValueError(f"{bin_path}: expected {int(np.prod(shape))} values, found {a.size}")
    return a.reshape(shape), meta
