"""Flat numeric checkpoints: one ASCII header line then little-endian float64 values.

Header layout::

    MMWSCHED-CKPT 1 <kind> key=value key=value ...\n

Values after the header are raw ``<f8`` in the order the writer chose.
"""
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

MAGIC = "MMWSCHED-CKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def write_checkpoint(path, kind: str, meta: Dict[str, str], values: np.ndarray) -> None:
    for k, v in meta.items():
        if any(c.isspace() for c in str(k) + str(v)) or "=" in str(k):
            raise CheckpointError("meta entries must not contain whitespace: %r=%r" % (k, v))
    head = " ".join([MAGIC, str(VERSION), kind] + ["%s=%s" % kv for kv in meta.items()])
    data = np.ascontiguousarray(values, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(head.encode("ascii") + b"\n")
        fh.write(data.tobytes())


def read_checkpoint(path) -> Tuple[str, Dict[str, str], np.ndarray]:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise CheckpointError("%s: missing header" % path)
    parts = raw[:nl].decode("ascii", errors="replace").split()
    if len(parts) < 3 or parts[0] != MAGIC:
        raise CheckpointError("%s: not a checkpoint file" % path)
    if parts[1] != str(VERSION):
        raise CheckpointError("%s: unsupported checkpoint version %s" % (path, parts[1]))
    meta = {}
    for p in parts[3:]:
        k, _, v = p.partition("=")
        meta[k] = v
    body = raw[nl + 1:]
    if len(body) % 8:
        raise CheckpointError("%s: truncated payload" % path)
    return parts[2], meta, np.frombuffer(body, dtype="<f8").astype(np.float64)
