"""DSHG binary tensor container.

Layout, all integers little-endian uint32, floats little-endian float32:

    magic   4 bytes  b"DSHG"
    version u32      currently 1
    count   u32      number of tensors
    per tensor:
        name_len u32, name utf-8 bytes
        rank     u32, dims u32 * rank
        data     float32 * prod(dims), row-major

Write order is preserved on read.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"DSHG"
VERSION = 1


def write_dshg(path, tensors):
    """Write named float32 arrays (a mapping or (name, array) pairs)."""
    items = list(tensors.items()) if hasattr(tensors, "items") else list(tensors)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(items)))
        for name, arr in items:
            # no ascontiguousarray: it would promote rank-0 arrays to (1,)
            arr = np.asarray(arr, dtype=np.float32)
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype("<f4").tobytes())


def read_dshg(path) -> dict:
    """Read a container back into an ordered {name: float32 array} dict."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ValueError(f"not a DSHG file: bad magic {data[:4]!r}")
    version, count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise ValueError(f"unsupported DSHG version {version}")
    pos = 12
    out = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", data, pos)
        pos += 4
        name = data[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (rank,) = struct.unpack_from("<I", data, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}I", data, pos)
        pos += 4 * rank
        n = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(data, dtype="<f4", count=n, offset=pos).reshape(dims)
        pos += 4 * n
        out[name] = arr.astype(np.float32)  # copies out of the read-only buffer
    if pos != len(data):
        raise ValueError(f"trailing bytes in DSHG file: {len(data) - pos}")
    return out
