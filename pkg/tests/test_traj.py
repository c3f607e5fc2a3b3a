import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from r2d2mri.core import DataError
from r2d2mri.traj import (
    GOLDEN_ANGLE_DEG,
    acceleration_factor,
    radial_trajectory,
    read_csv,
    write_csv,
)


def spoke_angle(t, n):
    """Angle of spoke n from its outermost positive-radius point."""
    pt = t.points[n * t.samples_per_spoke + 2 * t.radius]
    return math.atan2(pt[1], pt[0]) % (2 * math.pi)


class TestRadialTrajectory:
    def test_point_count(self):
        t = radial_trajectory(10, 16)
        assert t.n_points == 330
        assert t.samples_per_spoke == 33

    def test_first_spoke_on_kx_axis(self):
        t = radial_trajectory(3, 8)
        ky = t.points[: t.samples_per_spoke, 1]
        assert np.all(ky == 0.0)

    def test_second_spoke_at_golden_angle(self):
        t = radial_trajectory(3, 8)
        expected = math.radians(GOLDEN_ANGLE_DEG)
        assert spoke_angle(t, 1) == pytest.approx(expected, abs=1e-12)

    def test_consecutive_angles_differ_by_golden_angle(self):
        t = radial_trajectory(40, 4)
        for n in range(39):
            diff = (spoke_angle(t, n + 1) - spoke_angle(t, n)) % (2 * math.pi)
            assert diff == pytest.approx(math.radians(GOLDEN_ANGLE_DEG), abs=1e-9)

    def test_band_edge(self):
        t = radial_trajectory(5, 7)
        radii = np.hypot(t.points[:, 0], t.points[:, 1])
        assert radii.max() == pytest.approx(math.pi, abs=1e-12)
        assert np.all(radii <= math.pi + 1e-9)

    def test_spoke_spacing_is_pi_over_radius(self):
        t = radial_trajectory(1, 16)
        deltas = np.diff(t.points[:, 0])
        assert np.allclose(deltas, math.pi / 16, atol=1e-12)

    @pytest.mark.parametrize("spokes,radius", [(0, 4), (-1, 4), (4, 0), (4, -2)])
    def test_invalid_inputs(self, spokes, radius):
        with pytest.raises(DataError):
            radial_trajectory(spokes, radius)

    @settings(max_examples=30, deadline=None)
    @given(n_spokes=st.integers(1, 50), radius=st.integers(1, 40))
    def test_formula_property(self, n_spokes, radius):
        t = radial_trajectory(n_spokes, radius)
        assert t.n_points == n_spokes * (2 * radius + 1)
        # recompute a sampled subset of points from the definition
        rng = np.random.default_rng(0)
        for _ in range(10):
            m = int(rng.integers(t.n_points))
            spoke, idx = divmod(m, t.samples_per_spoke)
            r = idx - radius
            ang = math.radians((spoke * GOLDEN_ANGLE_DEG) % 360.0)
            c = math.pi / radius
            assert t.points[m, 0] == pytest.approx(c * r * math.cos(ang), abs=1e-12)
            assert t.points[m, 1] == pytest.approx(c * r * math.sin(ang), abs=1e-12)


class TestAccelerationFactor:
    def test_paper_range_values(self):
        assert acceleration_factor(80, 102400) == 4.0
        assert acceleration_factor(8, 102400) == 40.0

    def test_unity(self):
        assert acceleration_factor(32, 1024) == 1.0

    def test_invalid(self):
        with pytest.raises(DataError):
            acceleration_factor(0, 100)
        with pytest.raises(DataError):
            acceleration_factor(10, 0)


class TestCsv:
    def test_roundtrip_exact(self, tmp_path):
        t = radial_trajectory(7, 9)
        path = tmp_path / "t.csv"
        write_csv(path, t)
        back = read_csv(path)
        assert back.n_spokes == 7
        assert back.radius == 9
        assert np.array_equal(back.points, t.points)

    def test_header_and_rows(self, tmp_path):
        t = radial_trajectory(10, 16)
        path = tmp_path / "t.csv"
        write_csv(path, t)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "spoke,index,kx,ky"
        assert len(lines) == 331

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c,d\n0,0,0,0\n")
        with pytest.raises(DataError):
            read_csv(path)

    def test_missing_rows(self, tmp_path):
        t = radial_trajectory(2, 3)
        path = tmp_path / "t.csv"
        write_csv(path, t)
        lines = path.read_text().strip().split("\n")
        path.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(DataError):
            read_csv(path)
