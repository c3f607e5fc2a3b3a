"""Data-consistency residuals: exact gridding path and the FFT/PSF shortcut.

The exact residual r = x_d - kappa * Re{adjoint_w(forward(x))} costs two
gridding passes per evaluation. The shortcut replaces the normal operator by
circular convolution with the PSF, precomputing its spectrum once; wraparound
error is an inherent property of the approximation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DataError
from .nufft import NufftPlan, forward, weighted_adjoint


@dataclass(frozen=True)
class PsfSpectrum:
    """Spectrum of the PSF with its peak mapped to the zero-shift origin."""

    spectrum: np.ndarray
    h: int
    w: int


def residual_exact(p: NufftPlan, x_d: np.ndarray, x: np.ndarray) -> np.ndarray:
    """r = x_d - kappa * Re{adjoint_w(forward(x))}."""
    x_d = np.asarray(x_d, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x_d.shape != (p.h, p.w) or x.shape != (p.h, p.w):
        raise DataError(f"image dims must match plan {(p.h, p.w)}")
    return x_d - p.kappa * np.real(weighted_adjoint(p, forward(p, x)))


def precompute_psf_spectrum(psf: np.ndarray) -> PsfSpectrum:
    """FFT of the PSF with the centered peak rolled to index (0, 0)."""
    psf = np.asarray(psf, dtype=np.float64)
    if psf.ndim != 2:
        raise DataError(f"psf must be 2-D, got ndim={psf.ndim}")
    if not np.all(np.isfinite(psf)):
        raise DataError("psf contains non-finite values")
    h, w = psf.shape
    return PsfSpectrum(spectrum=np.fft.fft2(np.fft.ifftshift(psf)), h=h, w=w)


def apply_psf(spec: PsfSpectrum, x: np.ndarray) -> np.ndarray:
    """Circular convolution with the PSF: Re{F^-1((F h) * (F x))}."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (spec.h, spec.w):
        raise DataError(f"image shape {x.shape} does not match spectrum {(spec.h, spec.w)}")
    return np.real(np.fft.ifft2(spec.spectrum * np.fft.fft2(x)))


def residual_fft(spec: PsfSpectrum, x_d: np.ndarray, x: np.ndarray) -> np.ndarray:
    """r = x_d - Re{F^-1((F h) * (F x))}."""
    x_d = np.asarray(x_d, dtype=np.float64)
    if x_d.shape != (spec.h, spec.w):
        raise DataError(f"x_d shape {x_d.shape} does not match spectrum {(spec.h, spec.w)}")
    return x_d - apply_psf(spec, x)
