"""Flat checkpoint format.

A UTF-8 text header followed by raw arrays::

    GATV2TCN-CHECKPOINT 1
    seed <int>
    meta <key> <value>          (zero or more, value runs to end of line)
    param <name> <d0>,<d1>,...  (one per array, ``-`` for a 0-d array)
    end
    <row-major little-endian float64 bytes of each param, in header order>
"""

from __future__ import annotations

import os
from typing import Mapping

import numpy as np

MAGIC = "GATV2TCN-CHECKPOINT"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def encode(arrays: Mapping[str, np.ndarray], seed: int, meta: Mapping[str, str] | None = None) -> bytes:
    lines = [f"{MAGIC} {FORMAT_VERSION}", f"seed {int(seed)}"]
    for key, value in (meta or {}).items():
        if " " in key or "\n" in str(value):
            raise CheckpointError(f"meta entry {key!r} must be single-line with a space-free key")
        lines.append(f"meta {key} {value}")
    body = []
    for name, arr in arrays.items():
        if " " in name:
            raise CheckpointError(f"parameter name {name!r} contains a space")
        arr = np.asarray(arr, dtype=np.float64)
        shape = ",".join(str(d) for d in arr.shape) or "-"
        lines.append(f"param {name} {shape}")
        body.append(np.ascontiguousarray(arr).astype("<f8").tobytes())
    lines.append("end")
    return ("\n".join(lines) + "\n").encode("utf-8") + b"".join(body)


def decode(blob: bytes) -> tuple[dict[str, np.ndarray], int, dict[str, str]]:
    marker = b"\nend\n"
    cut = blob.find(marker)
    if cut < 0:
        raise CheckpointError("header terminator not found")
    header = blob[:cut].decode("utf-8").split("\n")
    payload = memoryview(blob)[cut + len(marker) :]
    first = header[0].split(" ")
    if len(first) != 2 or first[0] != MAGIC:
        raise CheckpointError("not a checkpoint file")
    if int(first[1]) != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {first[1]}")
    seed = None
    meta: dict[str, str] = {}
    specs = []
    for line in header[1:]:
        kind, _, rest = line.partition(" ")
        if kind == "seed":
            seed = int(rest)
        elif kind == "meta":
            key, _, value = rest.partition(" ")
            meta[key] = value
        elif kind == "param":
            name, shape = rest.rsplit(" ", 1)
            dims = () if shape == "-" else tuple(int(d) for d in shape.split(","))
            specs.append((name, dims))
        else:
            raise CheckpointError(f"unknown header line {line!r}")
    if seed is None:
        raise CheckpointError("checkpoint header has no seed")
    arrays = {}
    offset = 0
    for name, dims in specs:
        count = int(np.prod(dims, dtype=np.int64))
        nbytes = 8 * count
        if offset + nbytes > len(payload):
            raise CheckpointError(f"truncated data for {name}")
        arrays[name] = np.frombuffer(payload[offset : offset + nbytes], dtype="<f8").astype(np.float64).reshape(dims)
        offset += nbytes
    if offset != len(payload):
        raise CheckpointError(f"{len(payload) - offset} trailing bytes after last parameter")
    return arrays, seed, meta


def save(path: str | os.PathLike, arrays: Mapping[str, np.ndarray], seed: int, meta: Mapping[str, str] | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(encode(arrays, seed, meta))


def load(path: str | os.PathLike) -> tuple[dict[str, np.ndarray], int, dict[str, str]]:
    with open(path, "rb") as fh:
        return decode(fh.read())
