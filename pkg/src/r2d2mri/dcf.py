"""Pipe-Menon iterative density-compensation weights.

The iteration d <- d / |G G* d| uses the plan's interpolation tables only
(kernel scatter onto the oversampled grid and gather back, no FFT), which is
the classical construction: the fixed point satisfies |G G* d| = 1, i.e. the
gridded sampling density becomes flat.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import DataError, NumericalError
from .nufft import NufftPlan, with_weights

DIVISION_GUARD = 1e-12


@dataclass(frozen=True)
class DcWeights:
    """Positive per-sample weights ``d`` after ``iterations`` update steps."""

    d: np.ndarray
    iterations: int


def interp_self_map(p: NufftPlan, d: np.ndarray) -> np.ndarray:
    """Apply G G*: scatter d onto the oversampled grid, gather back."""
    size = p.grid_h * p.grid_w
    vals = (p.weights * d[:, None]).ravel()
    grid = np.bincount(p.indices.ravel(), weights=vals, minlength=size)
    return np.sum(p.weights * grid[p.indices], axis=1)


def pipe_menon(p: NufftPlan, m: int = 10, d0: Optional[np.ndarray] = None) -> DcWeights:
    """Run ``m`` Pipe-Menon updates starting from all-ones (or ``d0``)."""
    if m < 1:
        raise DataError(f"iteration count must be >= 1, got {m}")
    if d0 is None:
        d = np.ones(p.n_points)
    else:
        d = np.asarray(d0, dtype=np.float64).copy()
        if d.shape != (p.n_points,):
            raise DataError(f"d0 length {d.shape} does not match plan M={p.n_points}")
    for _ in range(m):
        gg = np.abs(interp_self_map(p, d))
        if np.any(gg < DIVISION_GUARD):
            raise NumericalError(
                "density update hit the division guard; trajectory is degenerate"
            )
        d = d / gg
    return DcWeights(d=d, iterations=m)


def attach_weights(p: NufftPlan, d: np.ndarray) -> NufftPlan:
    """Plan with weights attached; back-projections become d-weighted, kappa recomputed."""
    return with_weights(p, d)
