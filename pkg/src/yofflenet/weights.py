"""Binary weight container: ordered named tensors with integrity checking.

File layout (all integers little-endian):

    magic   4 bytes  "YOFW"
    version u16      1
    count   u32      number of entries
    entry*  u16 name length, UTF-8 name, u8 dtype (0=f32, 1=f16),
            u8 rank, u32 dim per rank, raw little-endian payload
    crc     u32      CRC32 of every preceding byte

Half-precision is a storage format only: payloads are expanded to float32
on load and the dtype tag is kept so a store round-trips bit-exactly.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .graph import Graph, weight_slots

MAGIC = b"YOFW"
VERSION = 1
_HEADER = struct.Struct("<4sHI")
_DTYPE_CODE = {"f32": 0, "f16": 1}
_DTYPE_NAME = {0: "f32", 1: "f16"}
_DTYPE_NP = {"f32": np.dtype("<f4"), "f16": np.dtype("<f2")}
DTYPE_BYTES = {"f32": 4, "f16": 2}


class WeightFileError(ValueError):
    """Base class for weight-file problems."""


class BadMagicError(WeightFileError):
    pass


class UnsupportedVersionError(WeightFileError):
    pass


class TruncatedFileError(WeightFileError):
    pass


class ChecksumError(WeightFileError):
    pass


@dataclass(frozen=True)
class WeightEntry:
    name: str
    dtype: str  # "f32" or "f16"
    shape: tuple
    data: np.ndarray  # float32 in memory regardless of storage dtype

    def stored_bytes(self) -> bytes:
        return self.data.astype(_DTYPE_NP[self.dtype]).tobytes()


class WeightStore:
    """Ordered named tensors; immutable once handed to save/execute."""

    def __init__(self):
        self._entries: dict[str, WeightEntry] = {}

    def add(self, name: str, data, dtype: str = "f32") -> None:
        if name in self._entries:
            raise ValueError(f"duplicate weight entry {name!r}")
        if dtype not in _DTYPE_CODE:
            raise ValueError(f"unknown dtype {dtype!r}")
        arr = np.ascontiguousarray(np.asarray(data), dtype=np.float32)
        if dtype == "f16":
            # quantize now so in-memory values match what a reload gives
            arr = arr.astype(np.float16).astype(np.float32)
        arr.setflags(write=False)
        self._entries[name] = WeightEntry(name, dtype, arr.shape, arr)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def names(self) -> list:
        return list(self._entries)

    def get(self, name: str) -> WeightEntry:
        return self._entries[name]

    def entries(self) -> list:
        return list(self._entries.values())

    def total_scalars(self) -> int:
        return sum(e.data.size for e in self._entries.values())

    def to_bytes(self) -> bytes:
        body = bytearray(_HEADER.pack(MAGIC, VERSION, len(self._entries)))
        for e in self._entries.values():
            name = e.name.encode("utf-8")
            body += struct.pack("<H", len(name))
            body += name
            body += struct.pack("<BB", _DTYPE_CODE[e.dtype], len(e.shape))
            body += struct.pack(f"<{len(e.shape)}I", *e.shape)
            body += e.stored_bytes()
        body += struct.pack("<I", zlib.crc32(bytes(body)))
        return bytes(body)

    def crc32(self) -> int:
        return zlib.crc32(self.to_bytes()[:-4])


def save(store: WeightStore, path) -> None:
    blob = store.to_bytes()
    try:
        with open(path, "wb") as fh:
            fh.write(blob)
    except OSError as exc:
        raise OSError(f"cannot write weight file {path}: {exc}") from exc


def _take(blob: bytes, offset: int, n: int, what: str) -> tuple:
    if offset + n > len(blob):
        raise TruncatedFileError(f"file ends inside {what} (offset {offset}, need {n} bytes)")
    return blob[offset:offset + n], offset + n


def from_bytes(blob: bytes) -> WeightStore:
    raw, off = _take(blob, 0, _HEADER.size, "header")
    magic, version, count = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise BadMagicError(f"not a weight file (magic {magic!r})")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported version {version}")
    store = WeightStore()
    for _ in range(count):
        raw, off = _take(blob, off, 2, "entry name length")
        (name_len,) = struct.unpack("<H", raw)
        raw, off = _take(blob, off, name_len, "entry name")
        name = raw.decode("utf-8")
        raw, off = _take(blob, off, 2, "entry dtype/rank")
        code, rank = struct.unpack("<BB", raw)
        if code not in _DTYPE_NAME:
            raise WeightFileError(f"entry {name!r}: unknown dtype code {code}")
        dtype = _DTYPE_NAME[code]
        raw, off = _take(blob, off, 4 * rank, "entry dims")
        shape = struct.unpack(f"<{rank}I", raw)
        n_scalars = 1
        for d in shape:
            n_scalars *= d
        raw, off = _take(blob, off, n_scalars * DTYPE_BYTES[dtype], f"entry {name!r} payload")
        arr = np.frombuffer(raw, dtype=_DTYPE_NP[dtype]).reshape(shape)
        store.add(name, arr.astype(np.float32), dtype)
    raw, off = _take(blob, off, 4, "checksum")
    (crc,) = struct.unpack("<I", raw)
    actual = zlib.crc32(blob[:off - 4])
    if crc != actual:
        raise ChecksumError(f"checksum mismatch: file {crc:#010x}, payload {actual:#010x}")
    if off != len(blob):
        raise WeightFileError(f"{len(blob) - off} trailing bytes after checksum")
    return store


def load(path) -> WeightStore:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read weight file {path}: {exc}") from exc
    return from_bytes(blob)


def predict_file_size(entries, dtype: str) -> int:
    """Exact serialized size for rank-1 entries of (name, scalar_count).

    Used by the cost analyzer so predicted weight-file sizes match the
    files save() writes byte for byte.
    """
    size = _HEADER.size
    for name, count in entries:
        size += 2 + len(name.encode("utf-8")) + 1 + 1 + 4  # name, dtype, rank, one dim
        size += count * DTYPE_BYTES[dtype]
    return size + 4  # crc


def init_random(g: Graph, seed: int, dtype: str = "f32") -> WeightStore:
    """Seeded random weights for a graph: one flat entry per sub-convolution.

    Kernels draw from uniform(-1, 1)/sqrt(fan_in); batch-norm affine
    starts at scale 1 / shift 0 and head biases at 0.
    """
    rng = np.random.default_rng(seed)
    store = WeightStore()
    for name, _, sub in weight_slots(g):
        fan_in = (sub.c_in // sub.groups) * sub.k * sub.k
        bound = 1.0 / np.sqrt(fan_in)
        parts = [rng.uniform(-bound, bound, sub.kernel_scalars)]
        if sub.bn:
            parts.append(np.ones(sub.c_out))
            parts.append(np.zeros(sub.c_out))
        if sub.bias:
            parts.append(np.zeros(sub.c_out))
        store.add(name, np.concatenate(parts).astype(np.float32), dtype)
    return store
