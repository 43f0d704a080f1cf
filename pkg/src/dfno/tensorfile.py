"""Chunked n-dimensional tensor files.

Layout (all little-endian)::

    b"DFNO"            magic
    u16                format version (1)
    u8                 dtype code: 0 = float64, 1 = complex128
    u8                 ndim
    u64 * ndim         dims
    u64 * ndim         chunk shape
    chunks             row-major over the chunk grid; each chunk is its
                       scalars in row-major order, edge chunks truncated

The byte length is fully determined by the header, so a region read can seek
straight to the chunks it needs.
"""

from __future__ import annotations

import itertools
import math
import os
import struct
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import FormatError, InvalidArgument
from .partition import IndexRange, RegionBox

MAGIC = b"DFNO"
VERSION = 1
DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<c16")}
CODES = {np.dtype("float64"): 0, np.dtype("complex128"): 1}
_PREFIX = struct.Struct("<4sHBB")


@dataclass(frozen=True)
class Header:
    dtype: np.dtype
    dims: tuple
    chunks: tuple

    @property
    def size(self) -> int:
        return _PREFIX.size + 16 * len(self.dims)

    @property
    def grid(self) -> tuple:
        return tuple(-(-n // c) if n else 0 for n, c in zip(self.dims, self.chunks))

    def chunk_box(self, index: Sequence[int]) -> RegionBox:
        return RegionBox(tuple(IndexRange(i * c, min((i + 1) * c, n))
                               for i, c, n in zip(index, self.chunks, self.dims)))

    def chunk_offsets(self) -> np.ndarray:
        """Byte offset of every chunk, indexed like the chunk grid."""
        grid = self.grid
        if math.prod(grid) == 0:
            return np.zeros(grid, dtype=np.int64)
        # edge chunks are truncated, so sizes factor per dimension
        per_dim = [np.array([min(c, n - i * c) for i in range(g)], dtype=np.int64)
                   for n, c, g in zip(self.dims, self.chunks, grid)]
        vol = per_dim[0]
        for extra in per_dim[1:]:
            vol = np.multiply.outer(vol, extra)
        nbytes = vol.reshape(-1) * self.dtype.itemsize
        offs = self.size + np.concatenate([[0], np.cumsum(nbytes)[:-1]])
        return offs.reshape(grid)

    def file_size(self) -> int:
        return self.size + math.prod(self.dims) * self.dtype.itemsize


def default_chunks(shape: Sequence[int]) -> tuple:
    return tuple(max(1, min(int(n), 16)) for n in shape)


def write_tensor(path, array: np.ndarray, chunks: Optional[Sequence[int]] = None) -> None:
    array = np.asarray(array)
    if array.dtype not in CODES:
        if np.iscomplexobj(array):
            array = array.astype(np.complex128)
        else:
            array = array.astype(np.float64)
    if array.ndim > 255:
        raise InvalidArgument("at most 255 dimensions")
    chunks = default_chunks(array.shape) if chunks is None else tuple(int(c) for c in chunks)
    if len(chunks) != array.ndim or any(c < 1 for c in chunks):
        raise InvalidArgument(f"chunk shape {chunks} invalid for {array.shape}")
    hdr = Header(DTYPES[CODES[array.dtype]], tuple(array.shape), chunks)
    le = array.astype(hdr.dtype, copy=False)
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as f:
        f.write(_PREFIX.pack(MAGIC, VERSION, CODES[array.dtype], array.ndim))
        f.write(struct.pack(f"<{array.ndim}Q", *hdr.dims))
        f.write(struct.pack(f"<{array.ndim}Q", *hdr.chunks))
        for index in itertools.product(*[range(g) for g in hdr.grid]):
            f.write(np.ascontiguousarray(le[hdr.chunk_box(index).slices()]).tobytes())
    os.replace(tmp, path)


def read_header(f) -> Header:
    raw = f.read(_PREFIX.size)
    if len(raw) < _PREFIX.size:
        raise OSError("truncated tensor file header")
    magic, version, code, ndim = _PREFIX.unpack(raw)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported format version {version}")
    if code not in DTYPES:
        raise FormatError(f"unknown dtype code {code}")
    raw = f.read(16 * ndim)
    if len(raw) < 16 * ndim:
        raise OSError("truncated tensor file header")
    vals = struct.unpack(f"<{2 * ndim}Q", raw)
    chunks = vals[ndim:]
    if any(c < 1 for c in chunks):
        raise FormatError(f"bad chunk shape {chunks}")
    return Header(DTYPES[code], tuple(vals[:ndim]), tuple(chunks))


def read_tensor(path, region: Optional[RegionBox] = None) -> np.ndarray:
    """Read the whole tensor, or only ``region`` (touching intersecting chunks only)."""
    with open(path, "rb") as f:
        hdr = read_header(f)
        f.seek(0, os.SEEK_END)
        if f.tell() != hdr.file_size():
            raise OSError(f"{path}: expected {hdr.file_size()} bytes, found {f.tell()}")
        if region is None:
            region = RegionBox.full(hdr.dims)
        if len(region.ranges) != len(hdr.dims):
            raise InvalidArgument(f"region has {len(region.ranges)} dims, tensor has {len(hdr.dims)}")
        for r, n in zip(region.ranges, hdr.dims):
            if not 0 <= r.start <= r.stop <= n:
                raise InvalidArgument(f"region {region.ranges} outside tensor {hdr.dims}")
        out = np.empty(region.shape, dtype=hdr.dtype.newbyteorder("="))
        if region.is_empty():
            return out
        first = [r.start // c for r, c in zip(region.ranges, hdr.chunks)]
        last = [(r.stop - 1) // c for r, c in zip(region.ranges, hdr.chunks)]
        offsets = hdr.chunk_offsets()
        for index in itertools.product(*[range(a, b + 1) for a, b in zip(first, last)]):
            box = hdr.chunk_box(index)
            f.seek(int(offsets[index]))
            data = np.frombuffer(f.read(box.volume * hdr.dtype.itemsize), dtype=hdr.dtype).reshape(box.shape)
            common = box.intersect(region)
            out[common.slices(region)] = data[common.slices(box)]
    return out
