"""Brute-force reference implementations the library is checked against.

Everything here is a direct dense evaluation of the defining sums, kept
deliberately independent of the gridding code paths under test.
"""

import numpy as np


def ndft_matrix(points: np.ndarray, h: int, w: int) -> np.ndarray:
    """Dense (M, H*W) matrix of exp(-i k . p) over centered pixel coords."""
    prow = np.arange(h) - h // 2
    pcol = np.arange(w) - w // 2
    px = np.tile(pcol, h)
    py = np.repeat(prow, w)
    return np.exp(-1j * (points[:, 0, None] * px[None, :] + points[:, 1, None] * py[None, :]))


def ndft_forward(points: np.ndarray, x: np.ndarray) -> np.ndarray:
    h, w = x.shape
    return ndft_matrix(points, h, w) @ x.ravel()


def ndft_adjoint(points: np.ndarray, y: np.ndarray, h: int, w: int) -> np.ndarray:
    return (ndft_matrix(points, h, w).conj().T @ y).reshape(h, w)


def normal_matrix(points: np.ndarray, weights: np.ndarray, h: int, w: int) -> np.ndarray:
    """Real symmetric matrix of x -> Re{A^H diag(weights) A x} on real images."""
    a = ndft_matrix(points, h, w)
    b = (a.conj().T * weights[None, :]) @ a
    b = b.real
    return 0.5 * (b + b.T)


def cartesian_image_band(h: int, w: int) -> np.ndarray:
    """All image-grid frequencies 2*pi*n/N per axis, n in [-N/2, N/2)."""
    ky = 2.0 * np.pi * (np.arange(h) - h // 2) / h
    kx = 2.0 * np.pi * (np.arange(w) - w // 2) / w
    gx, gy = np.meshgrid(kx, ky)
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def cartesian_oversampled_full(h: int, w: int, oversampling: int = 2) -> np.ndarray:
    """Every oversampled-grid frequency pi*n/(N) style; covers [-pi, pi)."""
    gh, gw = oversampling * h, oversampling * w
    ky = 2.0 * np.pi * (np.arange(gh) - gh // 2) / gh
    kx = 2.0 * np.pi * (np.arange(gw) - gw // 2) / gw
    gx, gy = np.meshgrid(kx, ky)
    return np.stack([gx.ravel(), gy.ravel()], axis=1)
