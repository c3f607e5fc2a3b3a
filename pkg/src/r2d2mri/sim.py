"""Ground-truth phantoms, noisy k-space synthesis, and back-projection.

Phantoms stand in for a clinical dataset: nonnegative images normalized to a
unit maximum, generated deterministically from a seed. The noise level tau
couples the image-domain dynamic range DR to k-space through the spectral
norms of the weighted measurement operator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .core import DataError, NumericalError, rng_stream, standard_gaussian
from .nufft import NufftPlan, forward, spectral_norm, weighted_adjoint

# intensity, a, b, x0, y0, angle (deg); the classic head phantom table
_SHEPP_LOGAN = np.array(
    [
        [1.00, 0.6900, 0.9200, 0.00, 0.0000, 0.0],
        [-0.80, 0.6624, 0.8740, 0.00, -0.0184, 0.0],
        [-0.20, 0.1100, 0.3100, 0.22, 0.0000, -18.0],
        [-0.20, 0.1600, 0.4100, -0.22, 0.0000, 18.0],
        [0.10, 0.2100, 0.2500, 0.00, 0.3500, 0.0],
        [0.10, 0.0460, 0.0460, 0.00, 0.1000, 0.0],
        [0.10, 0.0460, 0.0460, 0.00, -0.1000, 0.0],
        [0.10, 0.0460, 0.0230, -0.08, -0.6050, 0.0],
        [0.10, 0.0230, 0.0230, 0.00, -0.6060, 0.0],
        [0.10, 0.0230, 0.0460, 0.06, -0.6050, 0.0],
    ]
)


@dataclass(frozen=True)
class PhantomSpec:
    kind: str  # "shepp-logan" | "random-ellipses"
    size: int
    ellipse_range: Tuple[int, int] = (4, 10)
    intensity_range: Tuple[float, float] = (0.2, 1.0)
    seed: int = 0


@dataclass(frozen=True)
class MeasurementSet:
    """Simulated k-space data plus the metadata that produced it."""

    y: np.ndarray
    tau: float
    dr: float
    n_spokes: int
    seed: int


def _render_ellipses(size: int, table: np.ndarray) -> np.ndarray:
    """Sum of constant-intensity ellipses on the [-1, 1]^2 square."""
    ax = (np.arange(size) - (size - 1) / 2.0) / ((size - 1) / 2.0)
    xg, yg = np.meshgrid(ax, -ax, indexing="xy")
    img = np.zeros((size, size))
    for inten, a, b, x0, y0, ang in table:
        phi = math.radians(ang)
        xr = (xg - x0) * math.cos(phi) + (yg - y0) * math.sin(phi)
        yr = (yg - y0) * math.cos(phi) - (xg - x0) * math.sin(phi)
        img[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += inten
    return img


def make_phantom(spec: PhantomSpec) -> np.ndarray:
    """Deterministic nonnegative phantom with unit maximum."""
    if spec.size < 16:
        raise DataError(f"phantom size must be >= 16, got {spec.size}")
    if spec.kind == "shepp-logan":
        img = _render_ellipses(spec.size, _SHEPP_LOGAN)
    elif spec.kind == "random-ellipses":
        rng = rng_stream(spec.seed, 0)
        lo, hi = spec.ellipse_range
        if not 1 <= lo <= hi:
            raise DataError(f"invalid ellipse count range {spec.ellipse_range}")
        count = int(rng.integers(lo, hi + 1))
        ilo, ihi = spec.intensity_range
        if not 0.0 < ilo <= ihi <= 1.0:
            raise DataError(f"intensity range must sit in (0, 1], got {spec.intensity_range}")
        table = np.column_stack(
            [
                rng.uniform(ilo, ihi, count),
                rng.uniform(0.08, 0.45, count),
                rng.uniform(0.08, 0.45, count),
                rng.uniform(-0.55, 0.55, count),
                rng.uniform(-0.55, 0.55, count),
                rng.uniform(0.0, 180.0, count),
            ]
        )
        img = _render_ellipses(spec.size, table)
    else:
        raise DataError(f"unknown phantom kind {spec.kind!r}")
    img = np.maximum(img, 0.0)
    peak = img.max()
    if peak <= 0.0:
        # all ellipses fell outside the grid; keep the contract anyway
        img[spec.size // 2, spec.size // 2] = 1.0
        return img
    return img / peak


def noise_scale(p: NufftPlan) -> float:
    """sqrt(2 L^2 / L_p) from the once- and twice-weighted spectral norms.

    Runs the power iteration with a generous budget: dense radial sampling
    can produce near-degenerate top eigenpairs that need more than the
    default cap. Non-convergence still raises.
    """
    once = spectral_norm(p, "once", max_iter=2000)
    twice = spectral_norm(p, "twice", max_iter=2000)
    if not (once.converged and twice.converged):
        raise NumericalError("spectral norm power iteration did not converge")
    return math.sqrt(2.0 * once.value**2 / twice.value)


def noise_std(p: NufftPlan, dr: float, scale: Optional[float] = None) -> float:
    """Measurement noise std tau = sqrt(2 L^2 / L_p) * sigma with sigma = 1/DR.

    Pass ``scale`` to reuse a cached :func:`noise_scale` value for the plan.
    """
    if not 10.0 <= dr <= 1e4:
        raise DataError(f"dynamic range must be in [10, 1e4], got {dr}")
    if scale is None:
        scale = noise_scale(p)
    return scale / dr


def simulate(
    p: NufftPlan,
    gt: np.ndarray,
    dr: float,
    rng: np.random.Generator,
    seed: int = 0,
    scale: Optional[float] = None,
) -> MeasurementSet:
    """Noisy measurements y = forward(gt) + n at dynamic range ``dr``.

    The complex noise has total std tau, split evenly between the real and
    imaginary parts. ``seed`` is recorded as metadata only; pass the
    generator that encodes it.
    """
    gt = np.asarray(gt, dtype=np.float64)
    if gt.shape != (p.h, p.w):
        raise DataError(f"gt shape {gt.shape} does not match plan {(p.h, p.w)}")
    tau = noise_std(p, dr, scale=scale)
    g = standard_gaussian(rng, 2 * p.n_points)
    noise = (tau / math.sqrt(2.0)) * (g[: p.n_points] + 1j * g[p.n_points :])
    y = forward(p, gt) + noise
    n_spokes = _spoke_count(p)
    return MeasurementSet(y=y, tau=tau, dr=float(dr), n_spokes=n_spokes, seed=seed)


def _spoke_count(p: NufftPlan) -> int:
    # Radial trajectories repeat the origin once per spoke.
    center_hits = int(np.sum(np.all(p.points == 0.0, axis=1)))
    return center_hits if center_hits > 0 else 0


def back_project(p: NufftPlan, y: np.ndarray) -> np.ndarray:
    """Weighted back-projection kappa * Re{adjoint_w(y)}."""
    return p.kappa * np.real(weighted_adjoint(p, y))
