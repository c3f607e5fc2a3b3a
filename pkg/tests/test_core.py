import json
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from r2d2mri.core import (
    DataError,
    read_complex,
    read_image,
    rng_stream,
    standard_gaussian,
    write_complex,
    write_image,
)


class TestImageContainer:
    def test_zero_roundtrip(self, tmp_path):
        path = tmp_path / "z.r2d2img"
        write_image(path, np.zeros((2, 2)))
        assert np.array_equal(read_image(path), np.zeros((2, 2)))

    def test_header_fields_320(self, tmp_path):
        path = tmp_path / "big.r2d2img"
        write_image(path, np.zeros((320, 320)))
        header = json.loads(open(path, "rb").readline())
        assert header == {"magic": "R2D2IMG1", "h": 320, "w": 320, "dtype": "f32le"}

    def test_roundtrip_is_f32_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        img = rng.standard_normal((7, 5)).astype(np.float32).astype(np.float64)
        path = tmp_path / "x.r2d2img"
        write_image(path, img)
        assert np.array_equal(read_image(path), img)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "t.r2d2img"
        write_image(path, np.ones((4, 4)))
        raw = path.read_bytes()
        path.write_bytes(raw[:-4])  # drop one float
        with pytest.raises(DataError, match="truncated"):
            read_image(path)

    def test_magic_mismatch(self, tmp_path):
        path = tmp_path / "bad.r2d2img"
        path.write_bytes(b'{"magic":"NOPE","h":1,"w":1,"dtype":"f32le"}\n' + b"\x00" * 4)
        with pytest.raises(DataError, match="magic"):
            read_image(path)

    def test_nonfinite_rejected_on_write(self, tmp_path):
        img = np.ones((2, 2))
        img[0, 0] = np.nan
        with pytest.raises(DataError, match="non-finite"):
            write_image(tmp_path / "nan.r2d2img", img)

    @settings(max_examples=25, deadline=None)
    @given(
        arrays(
            np.float32,
            st.tuples(st.integers(1, 6), st.integers(1, 6)),
            elements=st.floats(-1e6, 1e6, width=32),
        )
    )
    def test_roundtrip_property(self, img):
        import tempfile, os

        fd, path = tempfile.mkstemp(suffix=".r2d2img")
        os.close(fd)
        try:
            write_image(path, img.astype(np.float64))
            assert np.array_equal(read_image(path), img.astype(np.float64))
        finally:
            os.unlink(path)


class TestComplexContainer:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(1)
        y = (rng.standard_normal(9) + 1j * rng.standard_normal(9)).astype(np.complex64)
        path = tmp_path / "y.r2d2cplx"
        write_complex(path, y.astype(np.complex128))
        assert np.array_equal(read_complex(path), y.astype(np.complex128))

    def test_header(self, tmp_path):
        path = tmp_path / "y.r2d2cplx"
        write_complex(path, np.zeros(3, dtype=np.complex128))
        header = json.loads(open(path, "rb").readline())
        assert header == {"magic": "R2D2CPX1", "m": 3, "dtype": "c64le"}

    def test_truncated(self, tmp_path):
        path = tmp_path / "y.r2d2cplx"
        write_complex(path, np.ones(4, dtype=np.complex128))
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(DataError, match="truncated"):
            read_complex(path)


class TestRng:
    def test_zero_count(self):
        assert standard_gaussian(rng_stream(0), 0).shape == (0,)

    def test_negative_count(self):
        with pytest.raises(DataError):
            standard_gaussian(rng_stream(0), -1)

    def test_moments(self):
        x = standard_gaussian(rng_stream(42, 1), 10**6)
        assert abs(x.mean()) < 5e-3
        assert abs(x.var() - 1.0) < 5e-3

    def test_same_seed_stream_identical(self):
        a = standard_gaussian(rng_stream(7, 0), 100)
        b = standard_gaussian(rng_stream(7, 0), 100)
        assert np.array_equal(a, b)

    def test_streams_independent(self):
        a = standard_gaussian(rng_stream(7, 0), 100)
        b = standard_gaussian(rng_stream(7, 1), 100)
        assert not np.array_equal(a, b)

    def test_reproducible_across_processes(self):
        code = (
            "from r2d2mri.core import rng_stream, standard_gaussian;"
            "print(standard_gaussian(rng_stream(7, 3), 32).tobytes().hex())"
        )
        runs = [
            subprocess.run(
                [sys.executable, "-c", code], capture_output=True, text=True, check=True
            ).stdout
            for _ in range(2)
        ]
        assert runs[0] == runs[1]
        local = standard_gaussian(rng_stream(7, 3), 32).tobytes().hex()
        assert runs[0].strip() == local
