import io
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from mixfp import matrix as spmx


def test_header_layout():
    a = np.arange(6, dtype=np.float32).reshape(2, 3)
    raw = spmx.dumps(a)
    assert raw[:4] == b"SPMX"
    assert raw[4] == 0
    assert struct.unpack("<QQ", raw[5:21]) == (2, 3)
    assert raw[21:] == a.astype("<f4").tobytes()
    assert len(raw) == 21 + 6 * 4


def test_fp64_tag():
    a = np.eye(2)
    raw = spmx.dumps(a)
    assert raw[4] == 1
    assert len(raw) == 21 + 4 * 8


@given(
    hnp.arrays(
        st.sampled_from([np.float32, np.float64]),
        hnp.array_shapes(min_dims=2, max_dims=2, min_side=0, max_side=5),
    )
)
def test_roundtrip(a):
    b = spmx.loads(spmx.dumps(a))
    assert b.dtype == a.dtype and b.shape == a.shape
    np.testing.assert_array_equal(a.view(np.uint8), b.view(np.uint8))


@pytest.mark.parametrize(
    "raw, msg",
    [
        (b"SPM", "truncated"),
        (b"XXXX" + bytes(17), "magic"),
        (b"SPMX\x07" + bytes(16), "tag"),
        (b"SPMX\x00" + struct.pack("<QQ", 2, 2) + bytes(8), "truncated payload"),
    ],
)
def test_rejects_malformed(raw, msg):
    with pytest.raises(spmx.SpmxError, match=msg):
        spmx.loads(raw)


def test_rejects_unsupported_dtype():
    with pytest.raises(spmx.SpmxError):
        spmx.dumps(np.zeros((2, 2), dtype=np.int32))
    with pytest.raises(spmx.SpmxError):
        spmx.dumps(np.zeros(3, dtype=np.float32))


def test_file_roundtrip_and_stream_concatenation(tmp_path):
    a = np.random.default_rng(0).standard_normal((3, 4)).astype(np.float32)
    path = tmp_path / "a.spmx"
    spmx.save(path, a)
    np.testing.assert_array_equal(spmx.load(path), a)
    assert not list(tmp_path.glob(".*tmp"))

    buf = io.BytesIO()
    spmx.write_spmx(buf, a)
    spmx.write_spmx(buf, a.astype(np.float64))
    buf.seek(0)
    assert spmx.read_spmx(buf).dtype == np.float32
    assert spmx.read_spmx(buf).dtype == np.float64


def test_atomic_write_leaves_no_partial_file(tmp_path):
    with pytest.raises(OSError):
        spmx.atomic_write_bytes(tmp_path / "missing" / "x.bin", b"data")
    assert list(tmp_path.iterdir()) == []
