import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from pmloop.polarization import WavePlate, same_ray
from pmloop.source import (LoopConfig, PumpConfig, emit_pulse, emit_pulses, extinction_ratio_db,
                           linear_jones, loop_output_state, mean_pairs_per_pulse, noise_density,
                           pump_jones, pump_phase, pump_with_phase, solve_pump_plates)

LOOP = LoopConfig()
angles = st.floats(0, 2 * np.pi, allow_nan=False)


@st.composite
def pump_vectors(draw):
    theta = draw(st.floats(0.01, np.pi / 2 - 0.01))
    phase = draw(st.floats(-np.pi, np.pi))
    return np.array([np.cos(theta), np.sin(theta) * np.exp(1j * phase)])


class TestPumpJones:
    def test_hwp_zero_keeps_v(self):
        jv = pump_jones(PumpConfig(hwp_angle=0.0))
        assert same_ray(jv, [0, 1])

    def test_default_is_45_linear(self):
        jv = pump_jones(PumpConfig())
        assert same_ray(jv, [1 / np.sqrt(2), 1 / np.sqrt(2)])

    def test_order_polarizer_qwp_hwp(self):
        p = PumpConfig(polarizer_axis=0.3, qwp_angle=0.7, hwp_angle=1.1)
        expected = WavePlate("half", 1.1).matrix() @ WavePlate("quarter", 0.7).matrix() @ linear_jones(0.3)
        assert np.allclose(pump_jones(p), expected, atol=1e-15)

    def test_elliptical_extinction_9_2_db(self):
        # ellipse with major axis at 45 deg: the H/V phase delta gives
        # cot^2(chi) with sin(2 chi) = sin(delta), so delta = 2 arctan(10^-0.46)
        delta = 2 * np.arctan(10 ** -0.46)
        target = pump_with_phase(delta)
        q, h = solve_pump_plates(target)
        jv = pump_jones(PumpConfig(qwp_angle=q, hwp_angle=h))
        assert same_ray(jv, target, atol=1e-6)
        assert 10 ** (extinction_ratio_db(jv) / 10) == pytest.approx(10**0.92, abs=1e-6)
        # direct ellipse axes from the Jones vector, independent of the S3 formula
        t = np.linspace(0, 2 * np.pi, 200001)
        field = np.real(np.outer(jv, np.exp(1j * t)))
        r2 = (field**2).sum(axis=0)
        assert r2.max() / r2.min() == pytest.approx(10**0.92, rel=1e-6)

    def test_compensating_pump_reaches_target(self):
        target = pump_with_phase(-0.12)
        q, h = solve_pump_plates(target)
        jv = pump_jones(PumpConfig(qwp_angle=q, hwp_angle=h))
        assert pump_phase(jv) == pytest.approx(-0.12, abs=1e-6)
        assert abs(jv[0]) ** 2 == pytest.approx(0.5, abs=1e-6)

    def test_linear_extinction_infinite(self):
        assert extinction_ratio_db(linear_jones(np.pi / 4)) == float("inf")

    def test_invalid(self):
        with pytest.raises(ValueError):
            PumpConfig(avg_power=-1.0)
        with pytest.raises(ValueError):
            PumpConfig(rep_rate=0.0)

    @settings(max_examples=30, deadline=None)
    @given(pump_vectors())
    def test_plate_solve_reaches_any_polarization(self, target):
        q, h = solve_pump_plates(target)
        assert same_ray(pump_jones(PumpConfig(qwp_angle=q, hwp_angle=h)), target, atol=1e-5)


class TestLoopOutputState:
    def test_v_pump_gives_hh(self):
        for phi_b in (0.0, 0.24, 2.0):
            psi = loop_output_state([0, 1], LoopConfig(phi_b=phi_b))
            assert same_ray(psi, [1, 0, 0, 0])

    def test_h_pump_gives_vv(self):
        assert same_ray(loop_output_state([1, 0], LOOP), [0, 0, 0, 1])

    def test_45_linear_zero_phase(self):
        psi = loop_output_state(linear_jones(np.pi / 4), LoopConfig(phi_b=0.0))
        assert np.allclose(psi, np.array([1, 0, 0, 1]) / np.sqrt(2))

    def test_45_linear_residual_phase(self):
        psi = loop_output_state(linear_jones(np.pi / 4), LoopConfig(phi_b=0.24))
        assert np.angle(psi[3] / psi[0]) == pytest.approx(0.24, abs=1e-14)

    def test_compensation(self):
        psi = loop_output_state(pump_with_phase(-0.12), LoopConfig(phi_b=0.24))
        assert np.angle(psi[3] / psi[0]) == pytest.approx(0.0, abs=1e-14)

    def test_zero_pump_rejected(self):
        with pytest.raises(ValueError, match="zero amplitude"):
            loop_output_state([0, 0], LOOP)

    @given(pump_vectors(), st.floats(-3, 3))
    def test_polarization_maintaining(self, jv, phi_b):
        psi = loop_output_state(jv, LoopConfig(phi_b=phi_b))
        assert psi[1] == 0 and psi[2] == 0
        assert np.linalg.norm(psi) == pytest.approx(1.0, abs=1e-12)

    @given(pump_vectors())
    def test_amplitude_ratio(self, jv):
        psi = loop_output_state(jv, LOOP)
        lhs = abs(psi[0]) ** 2 / abs(psi[3]) ** 2
        rhs = abs(jv[1]) ** 4 / abs(jv[0]) ** 4
        assert lhs == pytest.approx(rhs, rel=1e-9)

    @given(pump_vectors(), st.floats(-3, 3))
    def test_phase_doubling(self, jv, phi_b):
        psi = loop_output_state(jv, LoopConfig(phi_b=phi_b))
        expected = 2 * pump_phase(jv) + phi_b
        diff = np.angle(psi[3] / psi[0]) - expected
        assert abs(np.angle(np.exp(1j * diff))) < 1e-9

    @given(pump_vectors(), angles)
    def test_global_pump_phase_irrelevant(self, jv, chi):
        a = loop_output_state(jv, LOOP)
        b = loop_output_state(np.exp(1j * chi) * jv, LOOP)
        assert same_ray(a, b, atol=1e-10)


class TestNoise:
    def test_45_pump_unpolarized(self):
        assert np.allclose(noise_density(linear_jones(np.pi / 4)), np.eye(2) / 2)

    def test_v_pump_noise_is_h(self):
        assert np.allclose(noise_density([0, 1]), np.diag([1, 0]))


class TestPairRate:
    def test_calibration_point(self):
        assert mean_pairs_per_pulse(1.58e-6, LOOP) == pytest.approx(0.01, rel=1e-12)

    def test_zero(self):
        assert mean_pairs_per_pulse(0.0, LOOP) == 0.0

    def test_double_power(self):
        assert mean_pairs_per_pulse(3.16e-6, LOOP) == pytest.approx(0.04, rel=1e-12)

    def test_equal_split_pump_is_reference(self):
        assert mean_pairs_per_pulse(1.58e-6, LOOP, PumpConfig()) == pytest.approx(0.01, rel=1e-12)

    def test_v_pump_factor(self):
        # all power in one direction: 2(|a_V|^4) = 2
        p = PumpConfig(hwp_angle=0.0)
        assert mean_pairs_per_pulse(1.58e-6, LOOP, p) == pytest.approx(0.02, rel=1e-12)

    @given(st.floats(1e-9, 1e-3))
    def test_quadratic(self, p):
        assert mean_pairs_per_pulse(2 * p, LOOP) / mean_pairs_per_pulse(p, LOOP) == pytest.approx(4.0, rel=1e-12)

    def test_negative(self):
        with pytest.raises(ValueError):
            mean_pairs_per_pulse(-1.0, LOOP)


class TestEmission:
    def test_zero_mu(self):
        rng = np.random.default_rng(1)
        pump = PumpConfig(avg_power=0.0)
        n, _, _ = emit_pulses(pump, LOOP, 100000, rng)
        assert n.sum() == 0
        assert emit_pulse(pump, LOOP, rng).n_pairs == 0

    def test_emit_pulse_fields(self):
        e = emit_pulse(PumpConfig(), LoopConfig(raman_rate_s=0.5), np.random.default_rng(0))
        assert e.n_pairs >= 0 and e.n_noise_s >= 0 and e.n_noise_i == 0
        assert np.linalg.norm(e.state) == pytest.approx(1.0)

    def test_deterministic(self):
        a = emit_pulses(PumpConfig(), LOOP, 1000, np.random.default_rng(5))
        b = emit_pulses(PumpConfig(), LOOP, 1000, np.random.default_rng(5))
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_mean_within_3_sigma(self):
        n = 10**7
        pairs, _, _ = emit_pulses(PumpConfig(), LOOP, n, np.random.default_rng(11))
        sigma = np.sqrt(0.01 / n)
        assert abs(pairs.mean() - 0.01) < 3 * sigma

    def test_multi_pair_ratio(self):
        # exact: (1 - e^-mu - mu e^-mu) / (mu e^-mu) = 0.0050167 at mu = 0.01
        mu = 0.01
        exact = (1 - np.exp(-mu) - mu * np.exp(-mu)) / (mu * np.exp(-mu))
        assert exact == pytest.approx(0.005016708416800336, rel=1e-12)
        assert exact == pytest.approx(mu / 2, rel=0.01)
        pairs, _, _ = emit_pulses(PumpConfig(), LOOP, 10**7, np.random.default_rng(12))
        n1, n2 = np.sum(pairs == 1), np.sum(pairs >= 2)
        ratio = n2 / n1
        # ratio of Poisson counts; relative error about 1/sqrt(n2)
        assert ratio == pytest.approx(exact, rel=4 / np.sqrt(n2))

    def test_chi_square_poisson(self):
        n = 10**6
        mu = 0.01
        pairs, _, _ = emit_pulses(PumpConfig(), LOOP, n, np.random.default_rng(13))
        observed = np.array([np.sum(pairs == 0), np.sum(pairs == 1), np.sum(pairs >= 2)])
        pk = stats.poisson.pmf([0, 1], mu)
        expected = n * np.array([pk[0], pk[1], 1 - pk.sum()])
        _, pvalue = stats.chisquare(observed, expected)
        assert pvalue > 0.01

    def test_noise_rates(self):
        loop = LoopConfig(raman_rate_s=0.02, raman_rate_i=0.03)
        _, ns, ni = emit_pulses(PumpConfig(), loop, 10**6, np.random.default_rng(3))
        assert ns.mean() == pytest.approx(0.02, abs=4 * np.sqrt(0.02 / 1e6))
        assert ni.mean() == pytest.approx(0.03, abs=4 * np.sqrt(0.03 / 1e6))

    def test_loop_validation(self):
        with pytest.raises(ValueError):
            LoopConfig(coupling_loss_s=1.0)
        with pytest.raises(ValueError):
            LoopConfig(raman_rate_i=-0.1)
        with pytest.raises(ValueError):
            LoopConfig(pair_gen_coeff=-1)
