"""SSWT container writer/reader.

This mirrors the published container layout so the stylization engine can load
whatever we emit; the two codebases share only the format, not code.

    "SSWT"  u32 version=1  u32 record_count
    record: u16 name_len, name, u8 kind, u8 rank, u32 dims[rank],
            float32 little-endian row-major payload
    trailer: u64 FNV-1a over all payload bytes in file order

Rank-0 records are parameter-free markers. Kind codes: 0 conv, 1 relu,
2 maxpool, 3 upsample; plain tensors (fixtures) use kind 0.
"""

import struct

import numpy as np
from numba import njit

MAGIC = b"SSWT"
VERSION = 1

KIND_CONV = 0
KIND_RELU = 1
KIND_MAXPOOL = 2
KIND_UPSAMPLE = 3

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


@njit(cache=True)
def _fnv_kernel(h, buf):  # pragma: no cover
    for i in range(buf.size):
        h = (h ^ np.uint64(buf[i])) * np.uint64(_FNV_PRIME)
    return h


def fnv1a64(data, h=_FNV_OFFSET) -> int:
    """64-bit FNV-1a of a bytes-like object (optionally chained via h)."""
    buf = np.frombuffer(memoryview(data), dtype=np.uint8)
    return int(_fnv_kernel(np.uint64(h), buf))


def write(path, records) -> None:
    """Write (name, kind, array-or-None) triples as an SSWT file."""
    out = [MAGIC, struct.pack("<II", VERSION, len(records))]
    h = _FNV_OFFSET
    for name, kind, arr in records:
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise ValueError(f"record name too long: {name!r}")
        out.append(struct.pack("<H", len(encoded)))
        out.append(encoded)
        if arr is None:
            out.append(struct.pack("<BB", kind, 0))
            continue
        arr = np.ascontiguousarray(arr, dtype="<f4")
        out.append(struct.pack("<BB", kind, arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        payload = arr.tobytes()
        out.append(payload)
        h = fnv1a64(payload, h)
    out.append(struct.pack("<Q", h))
    with open(path, "wb") as fh:
        fh.write(b"".join(out))


def read(path):
    """Read an SSWT file back into (name, kind, array-or-None) triples."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ValueError(f"bad magic in {path}")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise ValueError(f"unsupported version {version}")
    pos = 12
    h = _FNV_OFFSET
    records = []
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos:pos + name_len].decode("utf-8")
        pos += name_len
        kind, rank = struct.unpack_from("<BB", blob, pos)
        pos += 2
        if rank == 0:
            records.append((name, kind, None))
            continue
        dims = struct.unpack_from(f"<{rank}I", blob, pos)
        pos += 4 * rank
        nbytes = 4 * int(np.prod(dims))
        payload = blob[pos:pos + nbytes]
        if len(payload) != nbytes:
            raise ValueError(f"truncated payload for {name!r}")
        pos += nbytes
        h = fnv1a64(payload, h)
        arr = np.frombuffer(payload, dtype="<f4").reshape(dims)
        records.append((name, kind, arr))
    (expect,) = struct.unpack_from("<Q", blob, pos)
    if pos + 8 != len(blob):
        raise ValueError(f"trailing bytes in {path}")
    if h != expect:
        raise ValueError(f"checksum mismatch in {path}")
    return records
