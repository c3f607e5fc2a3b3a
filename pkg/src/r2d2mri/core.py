"""Shared numeric types, deterministic RNG, and bit-exact file containers.

Images are plain ``(H, W)`` float64 arrays and k-space vectors are ``(M,)``
complex128 arrays; arithmetic stays in f64 while the on-disk containers are
f32, so round-trips are bit-exact at f32 precision.
"""

from __future__ import annotations

import json

import numpy as np

IMG_MAGIC = "R2D2IMG1"
CPLX_MAGIC = "R2D2CPX1"


class DataError(Exception):
    """Malformed input: bad file container, shape mismatch, invalid values."""


class NumericalError(Exception):
    """Numerical failure: non-convergence, non-finite intermediates."""


def rng_stream(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for the given (seed, stream) pair.

    Philox is counter-based, so identical (seed, stream) pairs yield
    identical sequences on every platform and streams are independent,
    which makes parallel per-sample generation order-independent.
    """
    if not 0 <= seed < 2**64 or not 0 <= stream < 2**64:
        raise DataError("seed and stream must be u64")
    return np.random.Generator(np.random.Philox(key=[seed, stream]))


def standard_gaussian(rng: np.random.Generator, count: int) -> np.ndarray:
    """i.i.d. standard normal samples, reproducible per (seed, stream)."""
    if count < 0:
        raise DataError(f"count must be >= 0, got {count}")
    return rng.standard_normal(count)


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{what} contains non-finite values")


def write_image(path, image: np.ndarray) -> None:
    """Write an image container: one JSON header line + f32le row-major payload."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise DataError(f"image must be 2-D, got ndim={image.ndim}")
    _check_finite(image, "image")
    h, w = image.shape
    header = {"magic": IMG_MAGIC, "h": int(h), "w": int(w), "dtype": "f32le"}
    with open(path, "wb") as f:
        f.write((json.dumps(header, separators=(",", ":")) + "\n").encode("utf-8"))
        f.write(image.astype("<f4").tobytes())


def read_image(path) -> np.ndarray:
    """Read an image container written by :func:`write_image`.

    Returns float64 data (values are exactly the stored f32 values).
    """
    with open(path, "rb") as f:
        header = _read_header(f, IMG_MAGIC, path)
        h, w = _header_int(header, "h", path), _header_int(header, "w", path)
        if header.get("dtype") != "f32le":
            raise DataError(f"{path}: unsupported dtype {header.get('dtype')!r}")
        payload = f.read()
    expected = h * w * 4
    if len(payload) != expected:
        raise DataError(
            f"{path}: truncated payload ({len(payload)} bytes, expected {expected})"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(h, w).astype(np.float64)
    _check_finite(data, f"{path} payload")
    return data


def write_complex(path, values: np.ndarray) -> None:
    """Write a k-space vector container: JSON header + (re, im) f32 pairs."""
    values = np.asarray(values, dtype=np.complex128)
    if values.ndim != 1:
        raise DataError(f"complex vector must be 1-D, got ndim={values.ndim}")
    _check_finite(values.view(np.float64), "complex vector")
    header = {"magic": CPLX_MAGIC, "m": int(values.size), "dtype": "c64le"}
    with open(path, "wb") as f:
        f.write((json.dumps(header, separators=(",", ":")) + "\n").encode("utf-8"))
        f.write(values.astype("<c8").tobytes())


def read_complex(path) -> np.ndarray:
    """Read a k-space vector container written by :func:`write_complex`."""
    with open(path, "rb") as f:
        header = _read_header(f, CPLX_MAGIC, path)
        m = _header_int(header, "m", path)
        if header.get("dtype") != "c64le":
            raise DataError(f"{path}: unsupported dtype {header.get('dtype')!r}")
        payload = f.read()
    expected = m * 8
    if len(payload) != expected:
        raise DataError(
            f"{path}: truncated payload ({len(payload)} bytes, expected {expected})"
        )
    data = np.frombuffer(payload, dtype="<c8").astype(np.complex128)
    _check_finite(data.view(np.float64), f"{path} payload")
    return data


def _read_header(f, magic: str, path) -> dict:
    line = f.readline()
    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: unreadable header") from exc
    if not isinstance(header, dict) or header.get("magic") != magic:
        raise DataError(f"{path}: magic mismatch (expected {magic})")
    return header


def _header_int(header: dict, key: str, path) -> int:
    value = header.get(key)
    if not isinstance(value, int) or value < 0:
        raise DataError(f"{path}: header field {key!r} must be a non-negative int")
    return value
