import io
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from boundcal.errors import (
    BadMagic,
    FortranOrderUnsupported,
    IoFailure,
    LengthMismatch,
    SizeMismatch,
    TruncatedPayload,
    UnsupportedDtype,
    ValueOutOfRange,
    VersionMismatch,
)
from boundcal.qr_trainer import init_model
from boundcal.tensor_io import (
    decode_model,
    decode_npy,
    encode_model,
    encode_npy,
    encode_pgm,
    read_model,
    read_npy,
    read_pgm,
    write_model,
    write_npy,
    write_pgm,
)


def _raw_npy(descr, shape, payload, fortran=False, magic=b"\x93NUMPY"):
    text = "{'descr': '%s', 'fortran_order': %s, 'shape': %r, }" % (descr, fortran, shape)
    text += " " * (-(10 + len(text) + 1) % 64) + "\n"
    return magic + b"\x01\x00" + struct.pack("<H", len(text)) + text.encode() + payload


def test_npy_roundtrip_small(tmp_path):
    p = tmp_path / "a.npy"
    write_npy(p, (1, 2, 2), [0, 0.5, 1, 0.25])
    a = read_npy(p)
    assert a.shape == (1, 2, 2)
    assert a.ravel().tolist() == [0, 0.5, 1, 0.25]


def test_npy_header_padding_golden():
    data = encode_npy((1, 1, 1), [0.5])
    # dict text is 62 chars; 10 + 62 + 1 = 73 rounds up to the next multiple of 64
    assert len(data) == 128 + 8
    assert data[:8] == b"\x93NUMPY\x01\x00"
    assert struct.unpack("<H", data[8:10])[0] == 118
    assert data[127:128] == b"\n"
    assert data[128:] == struct.pack("<d", 0.5)


def test_npy_matches_numpy_save():
    a = np.linspace(0, 1, 24).reshape(2, 3, 4)
    buf = io.BytesIO()
    np.save(buf, a)
    assert np.load(io.BytesIO(encode_npy(a.shape, a))).tolist() == a.tolist()
    np.testing.assert_array_equal(decode_npy(buf.getvalue()), a)


def test_npy_reads_float32():
    a = np.array([[0.25, 0.5]], dtype="<f4")
    buf = io.BytesIO()
    np.save(buf, a)
    out = decode_npy(buf.getvalue())
    assert out.dtype == np.float64
    assert out.tolist() == [[0.25, 0.5]]


def test_npy_bad_magic():
    with pytest.raises(BadMagic):
        decode_npy(_raw_npy("<f8", (1,), b"\0" * 8, magic=b"XNUMPY"))


def test_npy_big_endian_rejected():
    with pytest.raises(UnsupportedDtype):
        decode_npy(_raw_npy(">f4", (1,), b"\0" * 4))
    with pytest.raises(UnsupportedDtype):
        decode_npy(_raw_npy("<i8", (1,), b"\0" * 8))


def test_npy_fortran_rejected():
    with pytest.raises(FortranOrderUnsupported):
        decode_npy(_raw_npy("<f8", (2, 2), b"\0" * 32, fortran=True))


def test_npy_truncated():
    with pytest.raises(TruncatedPayload):
        decode_npy(_raw_npy("<f8", (4,), b"\0" * 16))


def test_npy_length_mismatch(tmp_path):
    with pytest.raises(LengthMismatch):
        write_npy(tmp_path / "x.npy", (2,), [0.1])


def test_npy_io_failure(tmp_path):
    with pytest.raises(IoFailure):
        read_npy(tmp_path / "missing.npy")
    with pytest.raises(IoFailure):
        write_npy(tmp_path / "no" / "dir.npy", (1,), [0.0])


def test_npy_random_roundtrip_bit_identical(rng):
    a = rng.random((3, 8, 8))
    back = decode_npy(encode_npy(a.shape, a))
    assert back.tobytes() == a.tobytes()


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.float64,
                  st.tuples(st.integers(1, 8), st.integers(1, 32), st.integers(1, 32)),
                  elements=st.floats(allow_nan=False, allow_infinity=False, width=64)))
def test_npy_roundtrip_property(a):
    back = decode_npy(encode_npy(a.shape, a))
    assert back.shape == a.shape
    assert back.tobytes() == a.tobytes()


def test_pgm_endpoints():
    data = encode_pgm([[0.0, 1.0]])
    assert data == b"P5\n2 1\n255\n\x00\xff"


def test_pgm_half_rounds_up():
    assert encode_pgm([[0.5]])[-1] == 128


def test_pgm_out_of_range():
    with pytest.raises(ValueOutOfRange):
        encode_pgm([[1.2]])


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(1, 20)),
                  elements=st.floats(0.0, 1.0)))
def test_pgm_reparse(grid):
    data = encode_pgm(grid)
    h, w = grid.shape
    header = len(data) - h * w
    assert header == len(f"P5\n{w} {h}\n255\n")
    expected = [int(np.floor(255 * v + 0.5)) for v in grid.ravel()]
    assert list(data[header:]) == expected


def test_pgm_file_roundtrip(tmp_path):
    g = np.array([[0.0, 0.25], [0.75, 1.0]])
    write_pgm(tmp_path / "g.pgm", g)
    assert read_pgm(tmp_path / "g.pgm").tolist() == [[0, 64], [191, 255]]


def test_model_roundtrip(tmp_path):
    m = init_model(5, 32, 1, seed=7)
    write_model(tmp_path / "m.bin", m)
    back = read_model(tmp_path / "m.bin")
    assert (back.k, back.hidden, back.channels) == (5, 32, 1)
    for name, w in m.params().items():
        np.testing.assert_array_equal(back.params()[name], w.astype(np.float32).astype(np.float64))


def test_model_size_golden():
    m = init_model(3, 4, 2, seed=0)
    data = encode_model(m)
    assert data[:4] == b"BCQR"
    assert len(data) == 20 + 4 * (4 * 18 + 4 + 3 * 4 + 3)


def test_model_bad_magic():
    with pytest.raises(BadMagic):
        decode_model(b"XXXX" + b"\0" * 64)


def test_model_version_mismatch():
    data = bytearray(encode_model(init_model(1, 1, 1)))
    data[4:8] = struct.pack("<I", 9)
    with pytest.raises(VersionMismatch):
        decode_model(bytes(data))


def test_model_size_mismatch():
    small = encode_model(init_model(5, 16, 1))
    header = struct.pack("<4sIIII", b"BCQR", 1, 5, 32, 1)
    with pytest.raises(SizeMismatch):
        decode_model(header + small[20:])
