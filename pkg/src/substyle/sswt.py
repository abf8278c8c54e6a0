"""Reader/writer for the SSWT binary tensor container.

Layout (all integers little-endian):

    "SSWT" | u32 version=1 | u32 record_count
    per record: u16 name_len | name utf-8 | u8 kind | u8 rank | u32 dims[rank]
                | payload float32 row-major
    trailer: u64 FNV-1a of all payload bytes, in file order

Rank-0 records are parameter-free markers (relu, maxpool, upsample) and carry
no payload. Kinds 0..3 map to conv / relu / maxpool / upsample in weight files;
sidecar tensor files reuse kind 0 for plain arrays.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import FormatError

__all__ = ["Record", "read_records", "write_records", "fnv1a64",
           "KIND_CONV", "KIND_RELU", "KIND_MAXPOOL", "KIND_UPSAMPLE"]

MAGIC = b"SSWT"
VERSION = 1

KIND_CONV = 0
KIND_RELU = 1
KIND_MAXPOOL = 2
KIND_UPSAMPLE = 3

_FNV_OFFSET = np.uint64(0xCBF29CE484222325)


@dataclass(frozen=True)
class Record:
    name: str
    kind: int
    data: np.ndarray | None = None  # float32, None for marker records

    @property
    def rank(self) -> int:
        return 0 if self.data is None else self.data.ndim


@njit(cache=True)
def _fnv1a64_kernel(h, buf):  # pragma: no cover - exercised via fnv1a64
    for i in range(buf.size):
        h = (h ^ np.uint64(buf[i])) * np.uint64(0x100000001B3)
    return h


def _fnv1a64_update(h, buf) -> np.uint64:
    # numba boxes the uint64 return as a Python int; re-wrap so chained
    # calls never get dispatched through a (signed) int64 specialization
    return np.uint64(_fnv1a64_kernel(np.uint64(h), buf))


def fnv1a64(payload: bytes | np.ndarray, seed: int | None = None) -> int:
    """64-bit FNV-1a hash of a byte payload."""
    h = _FNV_OFFSET if seed is None else np.uint64(seed)
    buf = np.frombuffer(payload, dtype=np.uint8) if isinstance(payload, bytes) else payload
    return int(_fnv1a64_update(h, buf))


def write_records(path, records: list[Record]) -> None:
    """Serialize records to an SSWT file, appending the payload checksum."""
    chunks = [MAGIC, struct.pack("<II", VERSION, len(records))]
    h = _FNV_OFFSET
    for rec in records:
        name = rec.name.encode("utf-8")
        if len(name) > 0xFFFF:
            raise ValueError(f"record name too long: {rec.name!r}")
        if rec.data is None:
            dims: tuple[int, ...] = ()
            payload = b""
        else:
            arr = np.ascontiguousarray(rec.data, dtype=np.float32)
            dims = arr.shape
            payload = arr.tobytes()
        chunks.append(struct.pack("<H", len(name)))
        chunks.append(name)
        chunks.append(struct.pack("<BB", rec.kind, len(dims)))
        if dims:
            chunks.append(struct.pack(f"<{len(dims)}I", *dims))
        chunks.append(payload)
        if payload:
            h = _fnv1a64_update(h, np.frombuffer(payload, dtype=np.uint8))
    chunks.append(struct.pack("<Q", int(h)))
    with open(path, "wb") as f:
        f.write(b"".join(chunks))


def read_records(path) -> list[Record]:
    """Parse an SSWT file, verifying structure and payload checksum."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise FormatError(f"bad magic in {path}")
    if len(blob) < 12 + 8:
        raise FormatError("unexpected end of payload")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")

    body_end = len(blob) - 8
    offset = 12
    records: list[Record] = []
    h = _FNV_OFFSET
    for _ in range(count):
        if offset + 2 > body_end:
            raise FormatError("unexpected end of payload")
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        if offset + name_len + 2 > body_end:
            raise FormatError("unexpected end of payload")
        name = blob[offset:offset + name_len].decode("utf-8")
        offset += name_len
        kind, rank = struct.unpack_from("<BB", blob, offset)
        offset += 2
        if offset + 4 * rank > body_end:
            raise FormatError("unexpected end of payload")
        dims = struct.unpack_from(f"<{rank}I", blob, offset) if rank else ()
        offset += 4 * rank
        if rank == 0:
            records.append(Record(name=name, kind=kind, data=None))
            continue
        size = 4 * int(np.prod(dims, dtype=np.int64))
        if offset + size > body_end:
            raise FormatError("unexpected end of payload")
        payload = blob[offset:offset + size]
        offset += size
        arr = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32, copy=True)
        h = _fnv1a64_update(h, np.frombuffer(payload, dtype=np.uint8))
        records.append(Record(name=name, kind=kind, data=arr))
    if offset != body_end:
        raise FormatError("trailing bytes before checksum")
    (stored,) = struct.unpack_from("<Q", blob, body_end)
    if stored != int(h):
        raise FormatError("checksum mismatch")
    return records
