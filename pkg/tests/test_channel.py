import numpy as np
import pytest

from passwpt.channel import (
    DimensionMismatch,
    build_channel_set,
    effective_channels,
    ehr_channel,
    idr_channel,
    waveguide_phase,
    alpha_linear_forms,
    waveguide_aggregate,
)
from passwpt.radiation import assemble_lambda, equal_power_alpha
from passwpt.scenario import Placement, ScenarioConfig, UserLayout, SPEED_OF_LIGHT


def cfg_single(**kw):
    defaults = dict(num_waveguides=1, waveguide_y=(0.0,), pas_per_waveguide=1,
                    num_idrs=1, num_ehrs=1, candidate_x=None, x_max=32.0)
    defaults.update(kw)
    return ScenarioConfig(**defaults)


class TestSphericalChannel:
    def test_unit_distance_full_cycle(self):
        # one antenna at height 1 m, user right below, wavelength 1 m:
        # the propagation phase winds a whole cycle, leaving eta itself
        fc = SPEED_OF_LIGHT  # wavelength exactly 1 m
        cfg = cfg_single(carrier_frequency=fc, waveguide_height=1.0, grid_step=0.5)
        placement = Placement(x=np.array([[0.0]]))
        entry = idr_channel(placement, np.array([0.0, 0.0, 0.0]), cfg)[0]
        eta = 1.0 / (4 * np.pi)
        np.testing.assert_allclose(entry, eta + 0.0j, atol=1e-15)

    def test_magnitude_law(self):
        cfg = cfg_single()
        placement = Placement(x=np.array([[8.0]]))
        entry = idr_channel(placement, np.array([8.0, 0.0, 0.0]), cfg)[0]
        eta = cfg.wavelength / (4 * np.pi)
        np.testing.assert_allclose(abs(entry), eta / 5.0, rtol=1e-12)

    def test_hand_geometry(self):
        cfg = cfg_single()
        placement = Placement(x=np.array([[8.0]]))
        user = np.array([3.0, 4.0, 0.0])
        dist = np.sqrt(25.0 + 16.0 + 25.0)
        entry = idr_channel(placement, user, cfg)[0]
        eta = cfg.wavelength / (4 * np.pi)
        np.testing.assert_allclose(abs(entry), eta / dist, rtol=1e-12)
        kappa = 2 * np.pi / cfg.wavelength
        expected_phase = (-kappa * dist) % (2 * np.pi)
        np.testing.assert_allclose(np.angle(entry) % (2 * np.pi), expected_phase, rtol=1e-9)

    def test_reciprocity_of_formula(self):
        cfg = cfg_single(pas_per_waveguide=2, candidate_x=(8.0, 16.0))
        placement = Placement(x=np.array([[8.0, 16.0]]))
        pos = np.array([2.5, 7.0, 0.0])
        np.testing.assert_array_equal(idr_channel(placement, pos, cfg),
                                      ehr_channel(placement, pos, cfg))

    def test_monotone_path_loss(self):
        cfg = cfg_single()
        placement = Placement(x=np.array([[8.0]]))
        mags = [abs(ehr_channel(placement, np.array([8.0 + dx, 0.0, 0.0]), cfg)[0])
                for dx in (0.0, 1.0, 2.0, 5.0, 9.0)]
        assert all(a > b for a, b in zip(mags, mags[1:]))


class TestWaveguidePhase:
    def test_zero_path(self):
        cfg = cfg_single()
        placement = Placement(x=np.array([[0.0]]))
        np.testing.assert_allclose(waveguide_phase(placement, cfg)[0], 1 + 0j, atol=1e-14)

    def test_full_guided_cycle(self):
        cfg = cfg_single()
        lg = cfg.guided_wavelength
        placement = Placement(x=np.array([[lg]]))
        np.testing.assert_allclose(waveguide_phase(placement, cfg)[0], 1 + 0j, atol=1e-9)

    def test_half_guided_cycle(self):
        cfg = cfg_single()
        lg = cfg.guided_wavelength
        placement = Placement(x=np.array([[lg / 2]]))
        np.testing.assert_allclose(waveguide_phase(placement, cfg)[0], -1 + 0j, atol=1e-9)

    def test_unit_modulus(self):
        cfg = ScenarioConfig()
        placement = Placement(x=np.tile([8.0, 16.0, 24.0, 32.0], (4, 1)))
        np.testing.assert_allclose(np.abs(waveguide_phase(placement, cfg)), 1.0, rtol=1e-12)


class TestEffectiveChannels:
    def setup_method(self):
        self.cfg = ScenarioConfig(num_idrs=2, num_ehrs=2, zeta=(0.5, 0.5))
        self.placement = Placement(x=np.tile([8.0, 16.0, 24.0, 32.0], (4, 1)))
        rng = np.random.default_rng(0)
        self.layout = UserLayout(
            idr_positions=np.column_stack([rng.uniform(0, 10, (2, 2)), np.zeros(2)]),
            ehr_positions=np.column_stack([rng.uniform(0, 10, (2, 2)), np.zeros(2)]),
        )
        self.channels = build_channel_set(self.placement, self.layout, self.cfg)

    def test_zero_radiation(self):
        alpha = np.zeros(16)
        w = np.ones((4, 2), dtype=complex)
        eff = effective_channels(self.channels, alpha, w, 4)
        assert np.all(eff.c == 0) and np.all(eff.d == 0) and np.all(eff.s == 0)

    def test_scalar_chain(self):
        cfg = cfg_single()
        placement = Placement(x=np.array([[8.0]]))
        layout = UserLayout(idr_positions=np.array([[3.0, 4.0, 0.0]]),
                            ehr_positions=np.array([[5.0, 1.0, 0.0]]))
        ch = build_channel_set(placement, layout, cfg)
        w = np.array([[0.3 - 0.4j]])
        eff = effective_channels(ch, np.array([1.0]), w, 1)
        expected = ch.h_idr[0, 0] * ch.g_phase[0] * w[0, 0]
        np.testing.assert_allclose(eff.s[0, 0], expected, rtol=1e-12)

    def test_brute_force_triple_product(self):
        rng = np.random.default_rng(3)
        alpha = rng.uniform(0.1, 0.45, 16)
        w = rng.normal(size=(4, 2)) + 1j * rng.normal(size=(4, 2))
        eff = effective_channels(self.channels, alpha, w, 4)
        lam = assemble_lambda(alpha, 4).lambda_matrix
        g_mat = np.diag(self.channels.g_phase)
        for k in range(2):
            for j in range(2):
                brute = self.channels.h_idr[k] @ g_mat @ lam @ w[:, j]
                np.testing.assert_allclose(eff.s[k, j], brute, rtol=1e-11)
        # consistency: s[k, j] equals conj(c_k) . w_j
        for k in range(2):
            for j in range(2):
                np.testing.assert_allclose(eff.s[k, j], np.conj(eff.c[k]) @ w[:, j],
                                           rtol=1e-11)

    def test_alpha_linear_forms_match(self):
        rng = np.random.default_rng(4)
        alpha = rng.uniform(0.0, 0.49, 16)
        w = rng.normal(size=(4, 2)) + 1j * rng.normal(size=(4, 2))
        eff = effective_channels(self.channels, alpha, w, 4)
        forms = alpha_linear_forms(self.channels.h_idr, self.channels.g_phase, w, 4)
        for k in range(2):
            for j in range(2):
                np.testing.assert_allclose(forms[k, j] @ alpha, eff.s[k, j], rtol=1e-11)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            effective_channels(self.channels, np.zeros(16), np.ones((3, 2)), 4)

    def test_radiated_never_exceeds_fed(self):
        # per-waveguide aggregate magnitude is bounded by the channel row norm
        # when the ratio vector satisfies the per-waveguide power bound
        rng = np.random.default_rng(5)
        for _ in range(50):
            alpha = rng.uniform(0, 1, 16)
            blocks = alpha.reshape(4, 4)
            blocks /= np.maximum(np.linalg.norm(blocks, axis=1, keepdims=True), 1.0)
            alpha = blocks.ravel()
            agg = waveguide_aggregate(np.ones((1, 16), dtype=complex),
                                      self.channels.g_phase, alpha, 4)
            # |sum_l g_l alpha_l| <= ||alpha_n|| * sqrt(L) <= sqrt(L)
            assert np.all(np.abs(agg) <= np.sqrt(4) + 1e-9)
