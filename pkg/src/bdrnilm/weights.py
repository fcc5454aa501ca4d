"""Binary weights file.

Layout (all integers little-endian u32)::

    b"BDRN" | version | array count |
    per array: name length | UTF-8 name | rank | dims[rank] | float32 LE payload
"""
from __future__ import annotations

import struct
from collections import OrderedDict

import numpy as np

from .network import Network

MAGIC = b"BDRN"
VERSION = 1


class WeightsFormatError(ValueError):
    """The weights file is malformed, truncated or of an unknown version."""


def encode_arrays(arrays):
    chunks = [MAGIC, struct.pack("<II", VERSION, len(arrays))]
    for name, value in arrays.items():
        raw = name.encode("utf-8")
        value = np.ascontiguousarray(value, dtype="<f4")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", value.ndim))
        chunks.append(struct.pack(f"<{value.ndim}I", *value.shape))
        chunks.append(value.tobytes())
    return b"".join(chunks)


def decode_arrays(payload):
    view = memoryview(payload)
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(view):
            raise WeightsFormatError(f"truncated weights file while reading {what}")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(4, "magic")) != MAGIC:
        raise WeightsFormatError("bad magic: not a BDRN weights file")
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != VERSION:
        raise WeightsFormatError(f"unsupported weights version {version} (expected {VERSION})")
    (count,) = struct.unpack("<I", take(4, "array count"))
    arrays = OrderedDict()
    for index in range(count):
        label = f"array #{index}"
        (n,) = struct.unpack("<I", take(4, f"name length of {label}"))
        name = bytes(take(n, f"name of {label}")).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4, f"rank of {name!r}"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, f"dims of {name!r}"))
        size = int(np.prod(dims, dtype=np.int64))
        data = take(4 * size, f"payload of {name!r}")
        arrays[name] = np.frombuffer(data, dtype="<f4").reshape(dims).copy()
    if pos != len(view):
        raise WeightsFormatError(f"{len(view) - pos} trailing bytes after {count} arrays")
    return arrays


def save_weights(model, destination):
    """Write parameters and BN running statistics of ``model``."""
    with open(destination, "wb") as fh:
        fh.write(encode_arrays(model.state_arrays()))


def read_weights(source):
    with open(source, "rb") as fh:
        return decode_arrays(fh.read())


def load_weights(source, config, dtype=np.float32):
    """Build a network for ``config`` and fill it from ``source``."""
    model = Network.build(config, seed=0, dtype=dtype)
    return model.load_state_arrays(read_weights(source))
