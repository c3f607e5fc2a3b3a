"""Gridding measurement operator (zero-pad, FFT, interpolate) and friends.

The forward map evaluates y_m = sum_p x(p) * exp(-i k_m . p) over centered
integer pixel coordinates p, via a Kaiser-Bessel-gridded FFT on a twofold
oversampled grid. The adjoint is the literal transpose of the same tables,
so the dot test holds to rounding error. Density-compensation weights, once
attached, turn the adjoint used by back-projection, kappa, and the PSF into
the weighted form (y multiplied by d before back-projection).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .core import DataError, NumericalError, rng_stream

KERNEL_WIDTH = 8  # taps per dimension
OVERSAMPLING = 2

# Beatty-style optimal shape parameter for (width, oversampling).
KERNEL_BETA = math.pi * math.sqrt(
    (KERNEL_WIDTH / OVERSAMPLING) ** 2 * (OVERSAMPLING - 0.5) ** 2 - 0.8
)

_POWER_SEED = 0x5EED


@dataclass
class NufftPlan:
    """Precomputed operator state; treat as immutable once built.

    ``indices``/``weights`` are (M, width^2) flat-grid tap tables; ``deapod``
    is the image-domain correction for the kernel rolloff. ``dc_weights`` is
    None until attached via the dcf module.
    """

    h: int
    w: int
    grid_h: int
    grid_w: int
    points: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    deapod: np.ndarray
    embed_rows: np.ndarray
    embed_cols: np.ndarray
    kappa: float
    dc_weights: Optional[np.ndarray] = None

    @property
    def n_points(self) -> int:
        return self.points.shape[0]


_KERNEL_PEAK = float(np.i0(KERNEL_BETA))

_TAP_OFFSETS = np.arange(-(KERNEL_WIDTH // 2) + 1, KERNEL_WIDTH // 2 + 1)


def _kernel(t: np.ndarray) -> np.ndarray:
    """Kaiser-Bessel interpolation kernel on tap offsets |t| <= width/2.

    Normalized to a unit peak; the matching factor cancels through the
    deapodization so the composite operator is unaffected but tap weights
    stay O(1).
    """
    arg = 1.0 - (2.0 * t / KERNEL_WIDTH) ** 2
    return np.i0(KERNEL_BETA * np.sqrt(np.maximum(arg, 0.0))) / _KERNEL_PEAK


def _deapod_1d(grid: int, n: int) -> np.ndarray:
    """Image-domain rolloff correction: the tap window's on-grid response.

    Using the real part of the window DTFT (rather than the kernel's
    continuous transform) makes the composite normal operator exactly flat
    for on-grid trajectories, which the FFT data-consistency shortcut relies
    on in its h = dirac limit.
    """
    nu = (np.arange(n) - n // 2) / grid
    psi = _kernel(_TAP_OFFSETS.astype(np.float64))
    return (psi[None, :] * np.cos(2.0 * math.pi * np.outer(nu, _TAP_OFFSETS))).sum(axis=1)


def _snap(u: np.ndarray, grid: int, eps: float = 1e-9) -> np.ndarray:
    rounded = np.rint(u)
    return np.mod(np.where(np.abs(u - rounded) < eps, rounded, u), grid)


def _tap_tables(points: np.ndarray, grid_h: int, grid_w: int):
    """Per-point flat grid indices and separable kernel weights (M, J^2)."""
    j = KERNEL_WIDTH
    # fractional grid coordinates, row axis <-> ky, column axis <-> kx;
    # snap near-integer coordinates so on-grid trajectories get exactly
    # translation-invariant tap windows despite rounding in the radian inputs
    u = _snap(np.mod(points[:, 1] * grid_h / (2.0 * math.pi), grid_h), grid_h)
    v = _snap(np.mod(points[:, 0] * grid_w / (2.0 * math.pi), grid_w), grid_w)
    ju = np.floor(u)[:, None] + _TAP_OFFSETS[None, :]
    jv = np.floor(v)[:, None] + _TAP_OFFSETS[None, :]
    wu = _kernel(u[:, None] - ju)
    wv = _kernel(v[:, None] - jv)
    rows = np.mod(ju, grid_h).astype(np.intp)
    cols = np.mod(jv, grid_w).astype(np.intp)
    indices = (rows[:, :, None] * grid_w + cols[:, None, :]).reshape(-1, j * j)
    weights = (wu[:, :, None] * wv[:, None, :]).reshape(-1, j * j)
    return indices, weights


def plan(points: np.ndarray, h: int, w: int) -> NufftPlan:
    """Build an operator plan for the given k-space points and image dims."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2:
        raise DataError(f"points must be (M, 2), got shape {points.shape}")
    if points.shape[0] == 0:
        raise DataError("trajectory is empty")
    if h < 4 or w < 4 or h % 2 or w % 2:
        raise DataError(f"image dims must be even and >= 4, got {h}x{w}")
    if np.abs(points).max() > math.pi + 1e-12:
        raise DataError("trajectory point outside [-pi, pi]^2")
    grid_h, grid_w = OVERSAMPLING * h, OVERSAMPLING * w
    indices, weights = _tap_tables(points, grid_h, grid_w)
    deapod = np.outer(_deapod_1d(grid_h, h), _deapod_1d(grid_w, w))
    built = NufftPlan(
        h=h,
        w=w,
        grid_h=grid_h,
        grid_w=grid_w,
        points=points,
        indices=indices,
        weights=weights,
        deapod=deapod,
        embed_rows=np.mod(np.arange(h) - h // 2, grid_h).astype(np.intp),
        embed_cols=np.mod(np.arange(w) - w // 2, grid_w).astype(np.intp),
        kappa=1.0,
    )
    built.kappa = compute_kappa(built)
    return built


def forward(p: NufftPlan, x: np.ndarray) -> np.ndarray:
    """Measurement operator x -> y; x is a real or complex (H, W) image."""
    x = np.asarray(x)
    if x.shape != (p.h, p.w):
        raise DataError(f"image shape {x.shape} does not match plan {(p.h, p.w)}")
    grid = np.zeros((p.grid_h, p.grid_w), dtype=np.complex128)
    grid[np.ix_(p.embed_rows, p.embed_cols)] = x / p.deapod
    spectrum = np.fft.fft2(grid).ravel()
    return np.sum(p.weights * spectrum[p.indices], axis=1)


def adjoint(p: NufftPlan, y: np.ndarray) -> np.ndarray:
    """Exact adjoint y -> complex image; transpose of :func:`forward`."""
    y = np.asarray(y, dtype=np.complex128)
    if y.shape != (p.n_points,):
        raise DataError(f"measurement length {y.shape} does not match plan M={p.n_points}")
    return _adjoint_scattered(p, (p.weights * y[:, None]).ravel())


def _adjoint_scattered(p: NufftPlan, vals: np.ndarray) -> np.ndarray:
    flat_idx = p.indices.ravel()
    size = p.grid_h * p.grid_w
    grid = np.bincount(flat_idx, weights=vals.real, minlength=size).astype(np.complex128)
    grid += 1j * np.bincount(flat_idx, weights=vals.imag, minlength=size)
    img = np.fft.ifft2(grid.reshape(p.grid_h, p.grid_w)) * size
    return img[np.ix_(p.embed_rows, p.embed_cols)] / p.deapod


def weighted_adjoint(p: NufftPlan, y: np.ndarray) -> np.ndarray:
    """DC-weighted adjoint: multiply y by d (when attached) before the adjoint."""
    if p.dc_weights is not None:
        y = np.asarray(y, dtype=np.complex128) * p.dc_weights
    return adjoint(p, y)


def dirac(h: int, w: int) -> np.ndarray:
    """Centered unit impulse image (the pixel at coordinate p = 0)."""
    d = np.zeros((h, w))
    d[h // 2, w // 2] = 1.0
    return d


def raw_psf(p: NufftPlan) -> np.ndarray:
    """Unnormalized PSF Re{adjoint_w(forward(dirac))}."""
    return np.real(weighted_adjoint(p, forward(p, dirac(p.h, p.w))))


def compute_kappa(p: NufftPlan) -> float:
    """Normalization 1 / max(Re{adjoint_w(forward(dirac))})."""
    peak = float(raw_psf(p).max())
    if not peak > 0.0 or not math.isfinite(peak):
        raise NumericalError(f"degenerate trajectory: PSF peak {peak}")
    return 1.0 / peak


def compute_psf(p: NufftPlan) -> np.ndarray:
    """PSF image with unit peak, kappa * Re{adjoint_w(forward(dirac))}."""
    return p.kappa * raw_psf(p)


@dataclass(frozen=True)
class SpectralNorm:
    value: float
    iterations: int
    converged: bool


def spectral_norm(
    p: NufftPlan,
    weighting: str,
    tol: float = 1e-6,
    max_iter: int = 500,
) -> SpectralNorm:
    """Operator norm via power iteration on x -> Re{adjoint(D^W forward(x))}.

    ``weighting`` selects W = 1 ("once") or W = 2 ("twice"). The iteration
    starts from a fixed seeded random vector and stops when the Rayleigh
    quotient's relative change drops below ``tol``; after ``max_iter``
    iterations it returns the last value flagged as not converged.
    """
    if weighting not in ("once", "twice"):
        raise DataError(f"weighting must be 'once' or 'twice', got {weighting!r}")
    if p.dc_weights is None:
        raise DataError("spectral_norm requires DC weights attached to the plan")
    d = p.dc_weights if weighting == "once" else p.dc_weights**2

    def apply(x: np.ndarray) -> np.ndarray:
        return np.real(adjoint(p, d * forward(p, x)))

    # Each iteration advances the power sequence by two operator applications
    # (one to read the Rayleigh quotient, one to step the vector again), so
    # the iteration cap copes with the near-degenerate top eigenpairs that
    # dense radial sampling produces.
    v = rng_stream(_POWER_SEED, 0).standard_normal((p.h, p.w))
    v /= np.linalg.norm(v)
    lam_prev = math.inf
    for it in range(1, max_iter + 1):
        bv = apply(v)
        lam = float(np.vdot(v, bv).real)
        b2v = apply(bv)
        norm = np.linalg.norm(b2v)
        if norm == 0.0:
            raise NumericalError("spectral norm iteration collapsed to zero")
        v = b2v / norm
        if abs(lam - lam_prev) <= tol * abs(lam):
            return SpectralNorm(value=math.sqrt(max(lam, 0.0)), iterations=it, converged=True)
        lam_prev = lam
    return SpectralNorm(value=math.sqrt(max(lam, 0.0)), iterations=max_iter, converged=False)


def with_weights(p: NufftPlan, d: np.ndarray) -> NufftPlan:
    """New plan with DC weights attached and kappa recomputed."""
    d = np.asarray(d, dtype=np.float64)
    if d.shape != (p.n_points,):
        raise DataError(f"weights length {d.shape} does not match plan M={p.n_points}")
    if not np.all(np.isfinite(d)) or np.any(d <= 0):
        raise DataError("DC weights must be positive and finite")
    weighted = replace(p, dc_weights=d)
    weighted.kappa = compute_kappa(weighted)
    return weighted
