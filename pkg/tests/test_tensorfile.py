import os
import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dfno.errors import FormatError, InvalidArgument
from dfno.partition import IndexRange, RegionBox
from dfno.tensorfile import Header, read_tensor, write_tensor


def test_enumerated_region(tmp_path):
    path = tmp_path / "a.dfno"
    write_tensor(path, np.arange(16.0).reshape(4, 4), chunks=(2, 2))
    got = read_tensor(path, RegionBox((IndexRange(1, 3), IndexRange(1, 3))))
    assert got.tolist() == [[5.0, 6.0], [9.0, 10.0]]


def test_header_layout_and_size(tmp_path):
    path = tmp_path / "b.dfno"
    x = np.arange(30.0).reshape(5, 6) * 1j
    write_tensor(path, x, chunks=(2, 4))
    raw = path.read_bytes()
    magic, version, code, ndim = struct.unpack("<4sHBB", raw[:8])
    assert (magic, version, code, ndim) == (b"DFNO", 1, 1, 2)
    assert struct.unpack("<4Q", raw[8:40]) == (5, 6, 2, 4)
    assert len(raw) == 8 + 32 + 30 * 16
    # first chunk is rows 0-1, columns 0-3, row-major
    first = np.frombuffer(raw[40:40 + 8 * 16], dtype="<c16")
    assert np.array_equal(first, x[:2, :4].ravel())


def test_empty_region_and_full_read(tmp_path):
    path = tmp_path / "c.dfno"
    x = np.random.default_rng(0).standard_normal((3, 4, 5))
    write_tensor(path, x)
    assert read_tensor(path).tobytes() == x.tobytes()
    empty = read_tensor(path, RegionBox((IndexRange(1, 1), IndexRange(0, 4), IndexRange(0, 5))))
    assert empty.shape == (0, 4, 5)


def test_errors(tmp_path):
    path = tmp_path / "d.dfno"
    write_tensor(path, np.zeros((4, 4)))
    with pytest.raises(InvalidArgument):
        read_tensor(path, RegionBox((IndexRange(0, 5), IndexRange(0, 4))))
    raw = bytearray(path.read_bytes())
    bad = tmp_path / "bad.dfno"
    bad.write_bytes(b"XXXX" + bytes(raw[4:]))
    with pytest.raises(FormatError):
        read_tensor(bad)
    raw[4:6] = struct.pack("<H", 9)
    bad.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        read_tensor(bad)
    trunc = tmp_path / "trunc.dfno"
    trunc.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(OSError):
        read_tensor(trunc)


def test_region_reads_touch_only_needed_chunks(tmp_path, monkeypatch):
    path = tmp_path / "e.dfno"
    write_tensor(path, np.arange(64.0).reshape(8, 8), chunks=(2, 2))
    seen = []
    real_open = open

    class Spy:
        def __init__(self, f):
            self.f = f

        def __getattr__(self, k):
            return getattr(self.f, k)

        def __enter__(self):
            return self

        def __exit__(self, *a):
            self.f.close()

        def seek(self, off, whence=0):
            if whence == 0:
                seen.append(off)
            return self.f.seek(off, whence)

    import dfno.tensorfile as tf
    monkeypatch.setattr(tf, "open", lambda p, m: Spy(real_open(p, m)), raising=False)
    read_tensor(path, RegionBox((IndexRange(2, 4), IndexRange(2, 4))))
    hdr = Header(np.dtype("<f8"), (8, 8), (2, 2))
    assert seen == [int(hdr.chunk_offsets()[1, 1])]


@given(st.lists(st.integers(1, 7), min_size=1, max_size=4), st.data())
def test_round_trip_and_regions(shape, data):
    import tempfile

    chunks = [data.draw(st.integers(1, n + 1)) for n in shape]
    ranges = []
    for n in shape:
        a = data.draw(st.integers(0, n))
        b = data.draw(st.integers(a, n))
        ranges.append(IndexRange(a, b))
    x = np.random.default_rng(len(shape)).standard_normal(shape)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "t.dfno")
        write_tensor(path, x, chunks)
        assert read_tensor(path).tobytes() == x.tobytes()
        box = RegionBox(tuple(ranges))
        assert np.array_equal(read_tensor(path, box), x[box.slices()])
