"""Binary checkpoint container.

Layout::

    VEHCO2-CKPT\\n            magic line
    1\\n                      format version
    <n>\\n                    byte length of the JSON header
    <JSON header>            metadata + block table (name, shape, offset)
    <float64 blocks>         little-endian, C order, concatenated

Writing is byte-for-byte deterministic: JSON keys are sorted and no
timestamps are stored.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MAGIC = b"VEHCO2-CKPT\n"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(meta: dict, arrays: dict[str, np.ndarray]) -> bytes:
    blocks = []
    payload = []
    offset = 0
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype="<f8")
        blocks.append({"name": name, "shape": list(arr.shape), "offset": offset})
        raw = arr.tobytes()
        payload.append(raw)
        offset += len(raw)
    header = json.dumps({"meta": meta, "blocks": blocks}, sort_keys=True, separators=(",", ":"),
                        allow_nan=True).encode("utf-8")
    return b"".join([MAGIC, f"{VERSION}\n".encode(), f"{len(header)}\n".encode(), header, *payload])


def loads(data: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if not data.startswith(MAGIC):
        raise CheckpointError("not a checkpoint file (bad magic)")
    pos = len(MAGIC)
    nl = data.index(b"\n", pos)
    version = int(data[pos:nl])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = nl + 1
    nl = data.index(b"\n", pos)
    hlen = int(data[pos:nl])
    pos = nl + 1
    header = json.loads(data[pos:pos + hlen])
    base = pos + hlen
    arrays = {}
    for blk in header["blocks"]:
        count = int(np.prod(blk["shape"])) if blk["shape"] else 1
        start = base + blk["offset"]
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=start)
        arrays[blk["name"]] = arr.reshape(blk["shape"]).astype(np.float64)
    return header["meta"], arrays


def save(path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps(meta, arrays))


def load(path) -> tuple[dict, dict[str, np.ndarray]]:
    return loads(Path(path).read_bytes())
