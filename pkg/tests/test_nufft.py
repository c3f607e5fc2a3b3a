import math

import numpy as np
import pytest

from oracle import (
    cartesian_image_band,
    ndft_adjoint,
    ndft_forward,
    ndft_matrix,
    normal_matrix,
)
from r2d2mri import dcf, nufft, traj
from r2d2mri.core import DataError


def rel_l2(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


class TestPlan:
    def test_oversampled_dims(self, radial16):
        _, p = radial16
        assert (p.grid_h, p.grid_w) == (32, 32)
        assert p.weights.shape == (330, nufft.KERNEL_WIDTH**2)
        assert p.indices.shape == (330, nufft.KERNEL_WIDTH**2)

    def test_plan_determinism(self, radial16, rng):
        t, p1 = radial16
        p2 = nufft.plan(t.points, 16, 16)
        x = rng.standard_normal((16, 16))
        assert np.array_equal(nufft.forward(p1, x), nufft.forward(p2, x))

    def test_point_out_of_band(self):
        with pytest.raises(DataError, match="outside"):
            nufft.plan(np.array([[3.5, 0.0]]), 16, 16)

    @pytest.mark.parametrize("h,w", [(3, 16), (16, 7), (2, 2)])
    def test_bad_dims(self, h, w):
        with pytest.raises(DataError):
            nufft.plan(np.zeros((4, 2)), h, w)

    def test_kappa_positive_finite(self, radial16):
        _, p = radial16
        assert p.kappa > 0 and math.isfinite(p.kappa)


class TestForward:
    def test_zero_image(self, radial16):
        _, p = radial16
        assert np.all(nufft.forward(p, np.zeros((16, 16))) == 0)

    def test_matches_ndft_oracle(self, radial16, rng):
        t, p = radial16
        x = rng.standard_normal((16, 16))
        assert rel_l2(nufft.forward(p, x), ndft_forward(t.points, x)) < 1e-5

    def test_dirac_unit_modulus(self, radial16):
        _, p = radial16
        y = nufft.forward(p, nufft.dirac(16, 16))
        assert np.abs(np.abs(y) - 1.0).max() < 1e-5

    def test_linearity(self, radial16, rng):
        _, p = radial16
        x1 = rng.standard_normal((16, 16))
        x2 = rng.standard_normal((16, 16))
        lhs = nufft.forward(p, 2.0 * x1 + 3.0 * x2)
        rhs = 2.0 * nufft.forward(p, x1) + 3.0 * nufft.forward(p, x2)
        assert rel_l2(lhs, rhs) < 1e-12

    def test_dim_mismatch(self, radial16):
        _, p = radial16
        with pytest.raises(DataError):
            nufft.forward(p, np.zeros((8, 8)))


class TestAdjoint:
    def test_dot_test(self, radial16, rng):
        t, p = radial16
        for _ in range(20):
            x = rng.standard_normal((16, 16))
            y = rng.standard_normal(t.n_points) + 1j * rng.standard_normal(t.n_points)
            fx = nufft.forward(p, x)
            lhs = np.vdot(fx, y)
            rhs = np.vdot(x.astype(np.complex128), nufft.adjoint(p, y))
            assert abs(lhs - rhs) / (np.linalg.norm(fx) * np.linalg.norm(y)) < 1e-10

    def test_zero_measurements(self, radial16):
        t, p = radial16
        assert np.all(nufft.adjoint(p, np.zeros(t.n_points, dtype=complex)) == 0)

    def test_single_dc_measurement_constant(self):
        # oracle: the adjoint of one unit sample at k = 0 is the constant image
        pts = np.array([[0.0, 0.0]])
        p = nufft.plan(pts, 16, 16)
        re = np.real(nufft.adjoint(p, np.array([1.0 + 0j])))
        assert np.abs(re - 1.0).max() < 1e-5

    def test_matches_ndft_adjoint(self, radial16, rng):
        t, p = radial16
        y = rng.standard_normal(t.n_points) + 1j * rng.standard_normal(t.n_points)
        assert rel_l2(nufft.adjoint(p, y), ndft_adjoint(t.points, y, 16, 16)) < 1e-5

    def test_length_mismatch(self, radial16):
        _, p = radial16
        with pytest.raises(DataError):
            nufft.adjoint(p, np.zeros(7, dtype=complex))


class TestKappaPsf:
    def test_kappa_matches_oracle(self, radial16):
        t, p = radial16
        a = ndft_matrix(t.points, 16, 16)
        raw = np.real(a.conj().T @ (a @ nufft.dirac(16, 16).ravel()))
        assert p.kappa == pytest.approx(1.0 / raw.max(), rel=1e-5)

    def test_weighted_kappa_matches_oracle(self, weighted16):
        t, p = weighted16
        a = ndft_matrix(t.points, 16, 16)
        raw = np.real(a.conj().T @ (p.dc_weights * (a @ nufft.dirac(16, 16).ravel())))
        assert p.kappa == pytest.approx(1.0 / raw.max(), rel=1e-5)

    def test_psf_peak_machine_precision(self, weighted16):
        _, p = weighted16
        psf = nufft.compute_psf(p)
        assert abs(psf.max() - 1.0) <= 4 * np.finfo(float).eps

    def test_full_cartesian_psf_is_dirac(self):
        pts = cartesian_image_band(16, 16)
        p = nufft.plan(pts, 16, 16)
        psf = nufft.compute_psf(p)
        off = psf.copy()
        off[8, 8] = 0.0
        assert np.abs(off).max() < 1e-4

    def test_psf_point_symmetry(self, weighted16):
        _, p = weighted16
        h = nufft.compute_psf(p)[1:, 1:]
        assert np.abs(h - h[::-1, ::-1]).max() < 1e-6


class TestSpectralNorm:
    def test_full_cartesian_matches_eigendecomposition(self):
        pts = cartesian_image_band(8, 8)
        p = nufft.plan(pts, 8, 8)
        p = nufft.with_weights(p, np.ones(pts.shape[0]))
        result = nufft.spectral_norm(p, "once")
        oracle = math.sqrt(np.linalg.eigvalsh(normal_matrix(pts, np.ones(64), 8, 8))[-1])
        assert result.converged
        assert result.value == pytest.approx(oracle, rel=1e-4)

    def test_weighted_radial_matches_eigendecomposition(self):
        t = traj.radial_trajectory(6, 8)
        p = nufft.plan(t.points, 8, 8)
        p = dcf.attach_weights(p, dcf.pipe_menon(p).d)
        for weighting, power in [("once", 1), ("twice", 2)]:
            result = nufft.spectral_norm(p, weighting)
            oracle = math.sqrt(
                np.linalg.eigvalsh(normal_matrix(t.points, p.dc_weights**power, 8, 8))[-1]
            )
            assert result.converged
            assert result.value == pytest.approx(oracle, rel=1e-3)

    def test_nonnegative_and_deterministic(self, weighted16):
        _, p = weighted16
        a = nufft.spectral_norm(p, "once")
        b = nufft.spectral_norm(p, "once")
        assert a.value >= 0.0
        assert a == b

    def test_max_iter_flag(self, weighted16):
        _, p = weighted16
        result = nufft.spectral_norm(p, "once", max_iter=1)
        assert not result.converged

    def test_requires_weights(self, radial16):
        _, p = radial16
        with pytest.raises(DataError):
            nufft.spectral_norm(p, "once")

    def test_bad_weighting_name(self, weighted16):
        _, p = weighted16
        with pytest.raises(DataError):
            nufft.spectral_norm(p, "thrice")
