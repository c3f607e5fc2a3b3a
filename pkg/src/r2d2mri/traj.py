"""Golden-angle radial k-space trajectories and acceleration-factor accounting.

A spoke is a diameter through the k-space origin sampled at integer radii
r in [-R, R]; spoke n sits at angle n * 111.25 degrees. Coordinates are
expressed in radians via k = pi * r / R, so the extreme radius lands on the
band edge |k| = pi and choosing R equal to the image side gives twofold
sampling along each spoke relative to the Cartesian grid spacing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DataError

GOLDEN_ANGLE_DEG = 111.25


@dataclass(frozen=True)
class Trajectory:
    """Radial sampling pattern; ``points`` is (M, 2) of (kx, ky) in radians."""

    points: np.ndarray
    n_spokes: int
    radius: int

    @property
    def samples_per_spoke(self) -> int:
        return 2 * self.radius + 1

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def spoke_radii(self) -> np.ndarray:
        """Signed integer radius of every point, in point order."""
        return np.tile(np.arange(-self.radius, self.radius + 1), self.n_spokes)


def radial_trajectory(n_spokes: int, radius: int) -> Trajectory:
    """Golden-angle radial trajectory with ``n_spokes`` spokes of extent ``radius``.

    Spoke n has angle n * 111.25 deg (reduced mod 360 in degrees, where the
    reduction is exact, before the radian conversion) and samples at integer
    radii r = -R..R scaled by pi / R. Point order is spoke-major with r
    ascending.
    """
    if n_spokes < 1:
        raise DataError(f"n_spokes must be >= 1, got {n_spokes}")
    if radius < 1:
        raise DataError(f"radius must be >= 1, got {radius}")
    angles_deg = np.mod(np.arange(n_spokes, dtype=np.float64) * GOLDEN_ANGLE_DEG, 360.0)
    angles = np.deg2rad(angles_deg)
    radii = np.arange(-radius, radius + 1, dtype=np.float64)
    scale = math.pi / radius
    kx = scale * np.outer(np.cos(angles), radii)
    ky = scale * np.outer(np.sin(angles), radii)
    points = np.stack([kx.ravel(), ky.ravel()], axis=1)
    return Trajectory(points=points, n_spokes=n_spokes, radius=radius)


def acceleration_factor(n_spokes: int, n_pixels: int) -> float:
    """Acceleration factor sqrt(N) / N_s for an N-pixel image and N_s spokes."""
    if n_spokes < 1:
        raise DataError(f"n_spokes must be positive, got {n_spokes}")
    if n_pixels < 1:
        raise DataError(f"n_pixels must be positive, got {n_pixels}")
    return math.sqrt(n_pixels) / n_spokes


def write_csv(path, traj: Trajectory) -> None:
    """Write ``spoke,index,kx,ky`` rows with 17-significant-digit floats."""
    lines = ["spoke,index,kx,ky"]
    nsamp = traj.samples_per_spoke
    for m in range(traj.n_points):
        spoke, index = divmod(m, nsamp)
        kx, ky = traj.points[m]
        lines.append(f"{spoke},{index},{kx:.17g},{ky:.17g}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def read_csv(path) -> Trajectory:
    """Read a trajectory CSV written by :func:`write_csv`."""
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        if header != "spoke,index,kx,ky":
            raise DataError(f"{path}: unexpected trajectory CSV header {header!r}")
        rows = []
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 columns")
            try:
                rows.append((int(parts[0]), int(parts[1]), float(parts[2]), float(parts[3])))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: unparsable row") from exc
    if not rows:
        raise DataError(f"{path}: empty trajectory")
    n_spokes = max(r[0] for r in rows) + 1
    nsamp = max(r[1] for r in rows) + 1
    if nsamp % 2 != 1:
        raise DataError(f"{path}: samples per spoke must be odd (2R+1), got {nsamp}")
    if len(rows) != n_spokes * nsamp:
        raise DataError(
            f"{path}: expected {n_spokes * nsamp} rows for a full spoke grid, got {len(rows)}"
        )
    points = np.full((n_spokes * nsamp, 2), np.nan)
    for spoke, index, kx, ky in rows:
        points[spoke * nsamp + index] = (kx, ky)
    if np.isnan(points).any():
        raise DataError(f"{path}: duplicate or missing (spoke, index) rows")
    return Trajectory(points=points, n_spokes=n_spokes, radius=(nsamp - 1) // 2)
