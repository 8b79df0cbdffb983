import numpy as np
import pytest
from scipy.integrate import quad

from liftwave import media, reference

OMEGA = 1 + 0.25j


class TestHomogeneous:
    def test_decay_rate_value(self):
        # zeta = 0, rho = 2, omega = i: r^2 = -rho omega^2 = 2
        r = np.sqrt(0.0**2 - 2.0 * (1j) ** 2)
        assert r == pytest.approx(np.sqrt(2.0))

    def test_symmetry_for_equal_media(self):
        params = reference.FourierRefParams(1.5, 1.5, OMEGA, media.JumpData())
        xs = np.array([-0.7, -0.3, 0.3, 0.7])
        zs = np.array([0.1, 0.4])
        u = reference.homogeneous_ref(params, xs, zs)
        np.testing.assert_allclose(u, u[::-1], rtol=1e-10)

    def test_g_fourier_at_zero(self):
        # ghat(0) = int g = 50 int phi, via an independent adaptive quadrature
        g = media.JumpData()
        phi_int = quad(lambda t: np.exp(1 - 1 / (1 - t * t)) if abs(t) < 1 else 0.0, -1, 1)[0]
        got = reference._g_fourier(g, np.array([0.0]))[0]
        assert got == pytest.approx(50.0 * phi_int, rel=1e-10)

    def test_truncation_insensitivity(self):
        # doubling both the window and the node count moves nothing at 1e-8
        jump = media.JumpData()
        base = reference.FourierRefParams(1.0, 2.0, OMEGA, jump)
        zm, nz = base.resolved()
        fine = reference.FourierRefParams(1.0, 2.0, OMEGA, jump, z_max=2 * zm, n_zeta=2 * nz)
        xs = np.linspace(-1, 1, 5)
        zs = np.linspace(-1, 1, 5)
        a = reference.homogeneous_ref(base, xs, zs)
        b = reference.homogeneous_ref(fine, xs, zs)
        assert np.abs(a - b).max() < 1e-8

    def test_requires_absorption(self):
        with pytest.raises(ValueError):
            reference.homogeneous_ref(
                reference.FourierRefParams(1.0, 2.0, 1.0 + 0j, media.JumpData()),
                [0.0],
                [0.0],
            )


class TestCommonPeriod:
    def test_config_a_rational(self):
        cfg = media.ConfigA(media.constant_field(1.0), media.constant_field(1.0), 1.0, 0.5)
        assert reference.common_interface_period(cfg) == pytest.approx(1.0)

    def test_config_a_irrational_rejected(self):
        cfg = media.ConfigA(
            media.constant_field(1.0), media.constant_field(1.0), 1.0, np.sqrt(2.0)
        )
        with pytest.raises(ValueError, match="incommensurate"):
            reference.common_interface_period(cfg)

    def test_config_b(self):
        cfg = media.ConfigB(media.bump_radial_field(), 1.0, (0.5, 1.0))
        assert reference.common_interface_period(cfg) == pytest.approx(2.0)


class TestRational:
    def test_zero_jump(self):
        cfg = media.ConfigA(media.constant_field(1.0), media.constant_field(2.0), 1.0, 1.0)
        u = reference.rational_ref(
            cfg, OMEGA, media.JumpData(amplitude=0.0), [0.3], [0.2], h=0.25, n_k=8
        )
        assert np.abs(u).max() == 0.0

    def test_against_homogeneous(self):
        cfg = media.ConfigA(media.constant_field(1.0), media.constant_field(2.0), 1.0, 1.0)
        jump = media.JumpData()
        xs = np.linspace(-0.9, 0.9, 7)
        zs = np.linspace(-0.9, 0.9, 7)
        u = reference.rational_ref(cfg, OMEGA, jump, xs, zs, h=0.05, n_k=32)
        uref = reference.homogeneous_ref(
            reference.FourierRefParams(1.0, 2.0, OMEGA, jump), xs, zs
        )
        gap = np.linalg.norm(u - uref) / np.linalg.norm(uref)
        assert gap < 1e-2
