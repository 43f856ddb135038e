"""Binary storage for weight tensors and quantization artifacts.

Two little-endian formats are defined here.

``WTQ1`` (tensor)::

    0..3    magic b"WTQ1"
    4       dtype (0 = binary32, 1 = binary64)
    5       ndim (u8)
    6..8    reserved, zero
    9..     ndim x u64 dims, then the row-major IEEE-754 payload

``WTQA`` (quantization artifact)::

    magic b"WTQA", u8 method, u8 bits, u32 channels,
    u8 ndim, ndim x u64 dims (original shape),
    then per channel: K = 2**bits binary64 levels,
                      n assignment indices (u8 / u16 / u32, the smallest
                      width that holds 2**bits values),
                      one binary64 range_meta value

where ``n = prod(original_shape) // channels``.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

TENSOR_MAGIC = b"WTQ1"
ARTIFACT_MAGIC = b"WTQA"

DTYPES = {"binary32": 0, "binary64": 1}
_DTYPE_BY_CODE = {v: k for k, v in DTYPES.items()}
_NUMPY_DTYPE = {"binary32": np.dtype("<f4"), "binary64": np.dtype("<f8")}

METHODS = ("uniform", "ot-equal-mass", "pwl", "log2")
METHOD_CODES = {name: code for code, name in enumerate(METHODS)}


class FormatError(ValueError):
    """A malformed tensor or artifact file.

    ``offset`` is the byte position at which decoding failed.
    """

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)


class BadMagicError(FormatError):
    pass


class TruncatedPayloadError(FormatError):
    pass


class NonFiniteElementError(FormatError):
    pass


class IndexOutOfRangeError(FormatError):
    pass


def _prod(shape: Sequence[int]) -> int:
    return math.prod(int(d) for d in shape)


@dataclass(frozen=True, eq=False)
class TensorContainer:
    """Dense real tensor: dtype tag, shape, flat row-major data."""

    dtype: str
    shape: tuple[int, ...]
    data: np.ndarray

    def __post_init__(self):
        if self.dtype not in DTYPES:
            raise ValueError(f"unknown dtype {self.dtype!r}; expected one of {sorted(DTYPES)}")
        shape = tuple(int(d) for d in self.shape)
        if any(d < 0 for d in shape):
            raise ValueError(f"negative dimension in shape {shape}")
        if len(shape) > 255:
            raise ValueError("at most 255 dimensions are supported")
        data = np.ascontiguousarray(self.data, dtype=_NUMPY_DTYPE[self.dtype]).reshape(-1)
        if data.size != _prod(shape):
            raise ValueError(f"data length {data.size} does not match shape {shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("tensor contains non-finite elements")
        data.flags.writeable = False
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, array, dtype: str | None = None) -> "TensorContainer":
        array = np.asarray(array)
        if dtype is None:
            dtype = "binary32" if array.dtype == np.float32 else "binary64"
        return cls(dtype, array.shape, array.reshape(-1))

    @property
    def size(self) -> int:
        return self.data.size

    def to_array(self) -> np.ndarray:
        return self.data.reshape(self.shape)

    def __eq__(self, other):
        if not isinstance(other, TensorContainer):
            return NotImplemented
        return (
            self.dtype == other.dtype
            and self.shape == other.shape
            and self.data.tobytes() == other.data.tobytes()
        )

    __hash__ = None


def _index_dtype(bits: int) -> np.dtype:
    if bits <= 8:
        return np.dtype("<u1")
    if bits <= 16:
        return np.dtype("<u2")
    return np.dtype("<u4")


@dataclass(frozen=True, eq=False)
class QuantArtifact:
    """Per-channel codebooks plus per-element level indices."""

    method: str
    bits: int
    codebooks: tuple[np.ndarray, ...]
    assignments: tuple[np.ndarray, ...]
    original_shape: tuple[int, ...]
    range_meta: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.method not in METHOD_CODES:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not 1 <= int(self.bits) <= 32:
            raise ValueError(f"bits must be in [1, 32], got {self.bits}")
        K = 1 << int(self.bits)
        shape = tuple(int(d) for d in self.original_shape)
        codebooks = tuple(np.array(c, dtype=np.float64).reshape(-1) for c in self.codebooks)
        assignments = tuple(
            np.array(a, dtype=np.int64).reshape(-1) for a in self.assignments
        )
        C = len(codebooks)
        if len(assignments) != C:
            raise ValueError("codebooks and assignments disagree on channel count")
        total = _prod(shape)
        if C == 0:
            if total != 0:
                raise ValueError("artifact with zero channels must have an empty shape")
            per_channel = 0
        else:
            if total % C:
                raise ValueError(f"{C} channels do not divide {total} elements")
            per_channel = total // C
        for c, (book, idx) in enumerate(zip(codebooks, assignments)):
            if book.size != K:
                raise ValueError(f"channel {c}: codebook has {book.size} levels, expected {K}")
            if np.any(np.diff(book) < 0):
                raise ValueError(f"channel {c}: codebook is not sorted ascending")
            if idx.size != per_channel:
                raise ValueError(
                    f"channel {c}: {idx.size} assignments, expected {per_channel}"
                )
            if idx.size and (idx.min() < 0 or idx.max() >= K):
                raise ValueError(f"channel {c}: assignment index outside [0, {K})")
        meta = np.zeros(C) if self.range_meta is None else np.array(self.range_meta, dtype=np.float64).reshape(-1)
        if meta.size != C:
            raise ValueError("range_meta must hold one value per channel")
        for arr in (*codebooks, *assignments, meta):
            arr.flags.writeable = False
        object.__setattr__(self, "bits", int(self.bits))
        object.__setattr__(self, "original_shape", shape)
        object.__setattr__(self, "codebooks", codebooks)
        object.__setattr__(self, "assignments", assignments)
        object.__setattr__(self, "range_meta", meta)

    @property
    def channels(self) -> int:
        return len(self.codebooks)

    @property
    def levels(self) -> int:
        return 1 << self.bits

    def __eq__(self, other):
        if not isinstance(other, QuantArtifact):
            return NotImplemented
        if (self.method, self.bits, self.original_shape, self.channels) != (
            other.method, other.bits, other.original_shape, other.channels
        ):
            return False
        same = lambda x, y: x.tobytes() == y.tobytes()
        return (
            all(same(a, b) for a, b in zip(self.codebooks, other.codebooks))
            and all(np.array_equal(a, b) for a, b in zip(self.assignments, other.assignments))
            and same(self.range_meta, other.range_meta)
        )

    __hash__ = None


def dequantize(artifact: QuantArtifact) -> TensorContainer:
    """Reconstruct a binary64 tensor by codebook lookup."""
    if artifact.channels == 0:
        return TensorContainer("binary64", artifact.original_shape, np.zeros(0))
    flat = np.concatenate(
        [book[idx] for book, idx in zip(artifact.codebooks, artifact.assignments)]
    )
    return TensorContainer("binary64", artifact.original_shape, flat)


# -- encoding ---------------------------------------------------------------


def encode_tensor(t: TensorContainer) -> bytes:
    header = TENSOR_MAGIC + bytes([DTYPES[t.dtype], len(t.shape), 0, 0, 0])
    dims = np.asarray(t.shape, dtype="<u8").tobytes()
    return header + dims + t.data.astype(_NUMPY_DTYPE[t.dtype], copy=False).tobytes()


def encode_artifact(a: QuantArtifact) -> bytes:
    parts = [
        ARTIFACT_MAGIC,
        struct.pack("<BBIB", METHOD_CODES[a.method], a.bits, a.channels, len(a.original_shape)),
        np.asarray(a.original_shape, dtype="<u8").tobytes(),
    ]
    idx_dtype = _index_dtype(a.bits)
    for book, idx, meta in zip(a.codebooks, a.assignments, a.range_meta):
        parts.append(book.astype("<f8").tobytes())
        parts.append(idx.astype(idx_dtype).tobytes())
        parts.append(struct.pack("<d", meta))
    return b"".join(parts)


def write_tensor(t: TensorContainer, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_tensor(t))


def write_artifact(a: QuantArtifact, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_artifact(a))


# -- decoding ---------------------------------------------------------------


class _Cursor:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedPayloadError(
                f"truncated {what}: need {n} bytes, {len(self.buf) - self.pos} left", self.pos
            )
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def array(self, dtype, count: int, what: str) -> tuple[np.ndarray, int]:
        start = self.pos
        raw = self.take(np.dtype(dtype).itemsize * count, what)
        return np.frombuffer(raw, dtype=dtype).copy(), start

    def finish(self):
        if self.pos != len(self.buf):
            raise FormatError(f"{len(self.buf) - self.pos} trailing bytes", self.pos)


def _check_finite(values: np.ndarray, start: int, itemsize: int, what: str):
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise NonFiniteElementError(
            f"non-finite {what} at element {bad[0]}", start + int(bad[0]) * itemsize
        )


def decode_tensor(buf: bytes) -> TensorContainer:
    cur = _Cursor(buf)
    if cur.take(4, "magic") != TENSOR_MAGIC:
        raise BadMagicError("not a WTQ1 tensor file", 0)
    code, ndim = cur.take(2, "header")
    if code not in _DTYPE_BY_CODE:
        raise FormatError(f"unknown dtype code {code}", 4)
    cur.take(3, "reserved header bytes")
    dims, _ = cur.array("<u8", ndim, "shape")
    dtype = _DTYPE_BY_CODE[code]
    np_dtype = _NUMPY_DTYPE[dtype]
    data, start = cur.array(np_dtype, _prod(dims), "payload")
    _check_finite(data, start, np_dtype.itemsize, "payload element")
    cur.finish()
    return TensorContainer(dtype, tuple(int(d) for d in dims), data)


def decode_artifact(buf: bytes) -> QuantArtifact:
    cur = _Cursor(buf)
    if cur.take(4, "magic") != ARTIFACT_MAGIC:
        raise BadMagicError("not a WTQA artifact file", 0)
    method_code, bits, channels, ndim = struct.unpack("<BBIB", cur.take(7, "header"))
    if method_code >= len(METHODS):
        raise FormatError(f"unknown method code {method_code}", 4)
    if bits < 1:
        raise FormatError("bits must be >= 1", 5)
    dims, _ = cur.array("<u8", ndim, "shape")
    total = _prod(dims)
    if channels == 0:
        if total:
            raise FormatError("zero channels but non-empty shape", 6)
        per_channel = 0
    elif total % channels:
        raise FormatError(f"{channels} channels do not divide {total} elements", 6)
    else:
        per_channel = total // channels
    K = 1 << bits
    idx_dtype = _index_dtype(bits)
    books, assigns, metas = [], [], []
    for c in range(channels):
        book, start = cur.array("<f8", K, f"codebook of channel {c}")
        _check_finite(book, start, 8, "codebook level")
        idx, start = cur.array(idx_dtype, per_channel, f"assignments of channel {c}")
        over = np.flatnonzero(idx >= K)
        if over.size:
            raise IndexOutOfRangeError(
                f"assignment {int(idx[over[0]])} >= {K} in channel {c}",
                start + int(over[0]) * idx_dtype.itemsize,
            )
        meta, start = cur.array("<f8", 1, f"range_meta of channel {c}")
        _check_finite(meta, start, 8, "range_meta")
        books.append(book)
        assigns.append(idx)
        metas.append(meta[0])
    cur.finish()
    return QuantArtifact(
        METHODS[method_code], bits, tuple(books), tuple(assigns),
        tuple(int(d) for d in dims), np.array(metas),
    )


def read_tensor(path: str | os.PathLike) -> TensorContainer:
    with open(path, "rb") as fh:
        return decode_tensor(fh.read())


def read_artifact(path: str | os.PathLike) -> QuantArtifact:
    with open(path, "rb") as fh:
        return decode_artifact(fh.read())
