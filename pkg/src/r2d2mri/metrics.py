"""SNR, logSNR, and acceleration-ratio evaluation.

SNR is 20 log10(||gt|| / ||gt - x||) in dB; logSNR applies the same after
the compressive mapping rlog(x) = log_a(a x + 1), which stretches faint
intensities and so penalizes missing faint features. Exact reconstructions
return +inf rather than a capped value.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .core import DataError


class NegativePixelWarning(RuntimeWarning):
    """Negative intensities were clamped to 0 before the log mapping."""


def snr(x: np.ndarray, gt: np.ndarray) -> float:
    """20 log10(||gt||_2 / ||gt - x||_2); +inf when x equals gt exactly."""
    x = np.asarray(x, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if x.shape != gt.shape:
        raise DataError(f"shape mismatch: {x.shape} vs {gt.shape}")
    ref = np.linalg.norm(gt)
    if ref == 0.0:
        raise DataError("ground truth is all-zero")
    err = np.linalg.norm(gt - x)
    if err == 0.0:
        return math.inf
    return 20.0 * math.log10(ref / err)


def rlog(x: np.ndarray, a: float) -> np.ndarray:
    """Compressive mapping log_a(a x + 1) for nonnegative images."""
    if a <= 0.0 or a == 1.0:
        raise DataError(f"log base parameter must be positive and != 1, got {a}")
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0.0):
        warnings.warn(
            "negative pixels clamped to 0 before log mapping", NegativePixelWarning
        )
        x = np.maximum(x, 0.0)
    return np.log1p(a * x) / math.log(a)


def logsnr(x: np.ndarray, gt: np.ndarray, a: float) -> float:
    """SNR after the rlog mapping; ``a`` is normally the dynamic range."""
    return snr(rlog(x, a), rlog(gt, a))


def acceleration_ratio(
    curve_a: Sequence[Tuple[float, float]],
    curve_b: Sequence[Tuple[float, float]],
    target_snr: float,
) -> float:
    """Ratio of interpolated acceleration factors at equal image quality.

    Each curve is a sequence of (af, snr) points with snr decreasing in af;
    the AF reaching ``target_snr`` is linearly interpolated on each curve and
    the ratio AF_a / AF_b returned.
    """
    return _af_at_snr(curve_a, target_snr) / _af_at_snr(curve_b, target_snr)


def _af_at_snr(curve: Sequence[Tuple[float, float]], target: float) -> float:
    pts = sorted((float(af), float(s)) for af, s in curve)
    if len(pts) < 2:
        raise DataError("curve needs at least two points")
    snrs = [s for _, s in pts]
    if any(s2 >= s1 for s1, s2 in zip(snrs, snrs[1:])):
        raise DataError("curve must be strictly decreasing in AF")
    if not snrs[-1] <= target <= snrs[0]:
        raise DataError(
            f"target snr {target} outside curve range [{snrs[-1]}, {snrs[0]}]"
        )
    for (af1, s1), (af2, s2) in zip(pts, pts[1:]):
        if s2 <= target <= s1:
            if s1 == s2:
                return af1
            return af1 + (target - s1) * (af2 - af1) / (s2 - s1)
    raise DataError("target snr not bracketed by curve")  # unreachable on valid input


@dataclass(frozen=True)
class ProblemResult:
    n_spokes: int
    dr: float
    snr_db: float
    logsnr_db: float
    residual_norms: List[float] = field(default_factory=list)


@dataclass
class EvalReport:
    """Per-problem rows plus per-spoke-count aggregate means."""

    rows: List[ProblemResult] = field(default_factory=list)

    def add(self, row: ProblemResult) -> None:
        self.rows.append(row)

    def aggregate(self) -> Dict[int, Dict[str, float]]:
        groups: Dict[int, List[ProblemResult]] = {}
        for row in self.rows:
            groups.setdefault(row.n_spokes, []).append(row)
        out: Dict[int, Dict[str, float]] = {}
        for n_spokes in sorted(groups):
            members = groups[n_spokes]
            out[n_spokes] = {
                "mean_snr": float(np.mean([r.snr_db for r in members])),
                "mean_logsnr": float(np.mean([r.logsnr_db for r in members])),
                "n_problems": len(members),
            }
        return out
