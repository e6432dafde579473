"""Portable binary tensor container.

File layout:

    bytes 0..3    magic ``NTNS``
    bytes 4..7    header length ``L`` (little-endian uint32)
    bytes 8..8+L  UTF-8 JSON header ``{"dtype": "f64", "shape": [...], "order": "C"}``
    rest          raw little-endian payload, C order

Round-trips are bit-exact.  Errors are distinguished so callers can tell a
corrupt magic from a structurally truncated file from a payload whose size
disagrees with the header's shape.
"""
from __future__ import annotations

import json
import os
import struct

import numpy as np

MAGIC = b"NTNS"

_DTYPES = {
    "f64": np.dtype("<f8"),
    "f32": np.dtype("<f4"),
    "i64": np.dtype("<i8"),
}
_DTYPE_NAMES = {v: k for k, v in _DTYPES.items()}


class NTensorError(Exception):
    """Base class for tensor container failures."""


class NTensorBadMagic(NTensorError):
    """File does not start with the NTNS magic."""


class NTensorTruncated(NTensorError):
    """File ends before the header is complete."""


class NTensorShapeMismatch(NTensorError):
    """Payload byte count disagrees with the header's shape/dtype."""


def _dtype_name(dtype: np.dtype) -> str:
    key = np.dtype(dtype).newbyteorder("<")
    if key not in _DTYPE_NAMES:
        raise NTensorError(f"unsupported dtype {dtype}")
    return _DTYPE_NAMES[key]


def header_bytes(shape: tuple[int, ...], dtype: np.dtype) -> bytes:
    """Magic + length + JSON header for a tensor of the given shape/dtype."""
    header = json.dumps(
        {"dtype": _dtype_name(dtype), "shape": list(shape), "order": "C"},
        sort_keys=True,
    ).encode("utf-8")
    return MAGIC + struct.pack("<I", len(header)) + header


def write(array: np.ndarray, path: str | os.PathLike) -> None:
    """Write an array to ``path`` (atomic: temp file + rename)."""
    array = np.ascontiguousarray(array)
    if not np.all(np.isfinite(array)):
        raise NTensorError("refusing to write non-finite values")
    payload = array.astype(array.dtype.newbyteorder("<"), copy=False).tobytes(order="C")
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(header_bytes(array.shape, array.dtype))
        fh.write(payload)
    os.replace(tmp, path)


def _read_header(fh) -> tuple[tuple[int, ...], np.dtype, int]:
    head = fh.read(8)
    if len(head) < 4 or head[:4] != MAGIC:
        if len(head) >= 4:
            raise NTensorBadMagic(f"bad magic {head[:4]!r}")
        raise NTensorTruncated("file shorter than magic")
    if len(head) < 8:
        raise NTensorTruncated("file ends inside header length")
    (hlen,) = struct.unpack("<I", head[4:8])
    raw = fh.read(hlen)
    if len(raw) < hlen:
        raise NTensorTruncated("file ends inside JSON header")
    try:
        meta = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise NTensorError(f"unreadable header: {exc}") from exc
    if meta.get("order") != "C":
        raise NTensorError(f"unsupported order {meta.get('order')!r}")
    if meta.get("dtype") not in _DTYPES:
        raise NTensorError(f"unsupported dtype {meta.get('dtype')!r}")
    shape = tuple(int(s) for s in meta["shape"])
    return shape, _DTYPES[meta["dtype"]], 8 + hlen


def read(path: str | os.PathLike, mmap: bool = False) -> np.ndarray:
    """Read an array back; ``mmap=True`` returns a read-only memory map."""
    size = os.path.getsize(path)
    with open(path, "rb") as fh:
        shape, dtype, offset = _read_header(fh)
        expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if size - offset != expected:
            raise NTensorShapeMismatch(
                f"payload holds {size - offset} bytes, shape {shape} needs {expected}"
            )
        if mmap:
            return np.memmap(path, dtype=dtype, mode="r", offset=offset, shape=shape)
        data = fh.read(expected)
    return np.frombuffer(data, dtype=dtype).reshape(shape).copy()


class StreamWriter:
    """Append samples along the leading axis without holding the full array.

    The final shape is ``(count, *sample_shape)``; the header is written when
    the stream closes, and the file appears atomically.
    """

    def __init__(self, path: str | os.PathLike, sample_shape: tuple[int, ...], dtype=np.float64):
        self.path = os.fspath(path)
        self.sample_shape = tuple(sample_shape)
        self.dtype = np.dtype(dtype).newbyteorder("<")
        self.count = 0
        # fixed header slot: JSON padded with spaces so any final count fits
        self._json_len = len(self._header_json(0)) + 20
        self._tmp = f"{self.path}.tmp"
        self._fh = open(self._tmp, "wb")
        self._fh.write(self._full_header(0))

    def _header_json(self, count: int) -> bytes:
        return json.dumps(
            {
                "dtype": _dtype_name(self.dtype),
                "shape": [count, *self.sample_shape],
                "order": "C",
            },
            sort_keys=True,
        ).encode("utf-8")

    def _full_header(self, count: int) -> bytes:
        body = self._header_json(count).ljust(self._json_len, b" ")
        return MAGIC + struct.pack("<I", len(body)) + body

    def append(self, sample: np.ndarray) -> None:
        sample = np.ascontiguousarray(sample, dtype=self.dtype)
        if sample.shape != self.sample_shape:
            raise NTensorShapeMismatch(
                f"sample shape {sample.shape} != {self.sample_shape}"
            )
        if not np.all(np.isfinite(sample)):
            raise NTensorError("refusing to write non-finite values")
        self._fh.write(sample.tobytes(order="C"))
        self.count += 1

    def close(self) -> None:
        if self._fh is None:
            return
        self._fh.seek(0)
        self._fh.write(self._full_header(self.count))
        self._fh.close()
        self._fh = None
        os.replace(self._tmp, self.path)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.close()
        else:
            self._fh.close()
            self._fh = None
            os.unlink(self._tmp)
