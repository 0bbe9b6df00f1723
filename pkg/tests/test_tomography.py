import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pmloop.config import preset_config
from pmloop.detection import expected_campaign
from pmloop.polarization import (basis_ket, bell_phi, density_from_ket, phased_bell_density, fidelity_sqrt,
                                 is_physical)
from pmloop.records import CountRecord
from pmloop.tomography import (JAMES_SETTINGS, MLEOptions, ProjectorSet, SpanningError, bootstrap_errors,
                               default_projector_set, expected_counts, linear_reconstruct, mle_reconstruct,
                               params_from_rho, phase_fit, reconstruct_records, rho_from_params,
                               subtract_accidentals, _objective)

PSET = default_projector_set()
PHI_PLUS = phased_bell_density(0.0)


def random_density(rng, rank=4):
    g = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    m = g @ g.conj().T
    return m / np.trace(m).real


def stokes_overlap(ids):
    """Overlap matrix rebuilt from single-photon Stokes vectors.

    Tr(P_s (x) P_i . sigma_a (x) sigma_b / 2) = s_a * i_b / 2 with s_0 = 1.
    """
    stokes = {"H": (1, 0, 0, 1), "V": (1, 0, 0, -1), "D": (1, 1, 0, 0),
              "R": (1, 0, 1, 0), "L": (1, 0, -1, 0), "A": (1, -1, 0, 0)}
    rows = []
    for sid in ids:
        s, i = np.array(stokes[sid[0]]), np.array(stokes[sid[1]])
        rows.append(0.5 * np.outer(s, i).ravel())
    return np.array(rows)


class TestProjectorSet:
    def test_contains_hv_block(self):
        assert {"HH", "HV", "VH", "VV"} <= set(PSET.setting_ids)
        assert len(PSET.setting_ids) == 16 == len(set(PSET.setting_ids))

    def test_alphabet(self):
        assert set("".join(JAMES_SETTINGS)) == set("HVDRL")

    def test_spanning(self):
        assert PSET.spanning
        assert np.isfinite(PSET.condition_number)
        assert PSET.condition_number == pytest.approx(9.75, abs=0.01)

    def test_overlap_determinant_frozen(self):
        assert np.linalg.det(PSET.overlap) == pytest.approx(0.00390625, rel=1e-9)

    def test_overlap_matches_stokes_oracle(self):
        assert np.allclose(PSET.overlap, stokes_overlap(JAMES_SETTINGS), atol=1e-14)

    @pytest.mark.parametrize("k", range(16))
    def test_duplicate_breaks_spanning(self, k):
        ids = list(JAMES_SETTINGS)
        ids[k] = ids[(k + 1) % 16]
        pset = ProjectorSet.from_ids(ids)
        assert not pset.spanning
        with pytest.raises(SpanningError) as exc:
            pset.require_spanning()
        assert exc.value.condition_number > 1e10

    def test_too_few(self):
        assert not ProjectorSet.from_ids(JAMES_SETTINGS[:15]).spanning


class TestSubtraction:
    @pytest.mark.parametrize("c,a,expected,clamped", [(90, 5, 85, False), (5, 5, 0, False), (3, 5, 0, True)])
    def test_examples(self, c, a, expected, clamped):
        sc = subtract_accidentals([CountRecord("HH", c, a, 100, 100, 1.0, 10)])
        assert sc.counts[0] == expected
        assert (sc.clamped == ["HH"]) is clamped
        assert sc.clamp_rate == (1.0 if clamped else 0.0)


class TestLinearInversion:
    def test_bell_exact(self):
        rho, ok = linear_reconstruct(expected_counts(PHI_PLUS, PSET, 1e4), PSET)
        assert ok
        assert np.max(np.abs(rho - PHI_PLUS)) < 1e-10

    def test_maximally_mixed(self):
        rho, _ = linear_reconstruct(expected_counts(np.eye(4) / 4, PSET), PSET)
        assert np.max(np.abs(rho - np.eye(4) / 4)) < 1e-12

    def test_exposure_weights(self):
        g = np.linspace(0.5, 1.5, 16)
        rho0 = phased_bell_density(0.7)
        rho, _ = linear_reconstruct(expected_counts(rho0, PSET, 1e4, g), PSET, g)
        assert np.max(np.abs(rho - rho0)) < 1e-10

    def test_noisy_is_hermitian_and_sometimes_indefinite(self):
        rng = np.random.default_rng(0)
        lam = expected_counts(PHI_PLUS, PSET, 200)
        flags = []
        for _ in range(50):
            rho, ok = linear_reconstruct(rng.poisson(lam), PSET)
            assert np.allclose(rho, rho.conj().T)
            assert np.trace(rho).real == pytest.approx(1.0)
            flags.append(ok)
        assert not all(flags)

    def test_rejects_non_spanning(self):
        with pytest.raises(SpanningError):
            linear_reconstruct(np.ones(16), ProjectorSet.from_ids(["HH"] * 16))


class TestParameterization:
    @settings(max_examples=50)
    @given(st.lists(st.floats(-3, 3), min_size=16, max_size=16).filter(lambda t: sum(x * x for x in t) > 1e-3))
    def test_always_physical(self, t):
        assert is_physical(rho_from_params(np.array(t)))

    def test_round_trip(self):
        rho = random_density(np.random.default_rng(1))
        assert np.allclose(rho_from_params(params_from_rho(rho, floor=0.0)), rho, atol=1e-10)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        n = rng.poisson(expected_counts(phased_bell_density(0.3), PSET, 1e3)).astype(float) + 1
        g = np.ones(16)
        t = rng.normal(size=16)
        for likelihood in ("poisson", "gaussian"):
            _, grad = _objective(t, n, g, PSET, likelihood)
            h = 1e-6
            fd = np.array([(_objective(t + h * e, n, g, PSET, likelihood)[0]
                            - _objective(t - h * e, n, g, PSET, likelihood)[0]) / (2 * h) for e in np.eye(16)])
            assert np.allclose(grad, fd, rtol=1e-5, atol=1e-6)


class TestMLE:
    def test_bell_recovery(self):
        res = mle_reconstruct(expected_counts(PHI_PLUS, PSET, 1e4), PSET)
        assert res.fidelity_phi_plus >= 0.999
        assert res.converged

    def test_mixed_recovery(self):
        res = mle_reconstruct(expected_counts(np.eye(4) / 4, PSET, 1e4), PSET)
        assert res.purity == pytest.approx(0.25, abs=0.01)

    @pytest.mark.parametrize("likelihood", ["poisson", "gaussian"])
    def test_agrees_with_linear_when_physical(self, likelihood):
        rho0 = 0.9 * phased_bell_density(0.24) + 0.1 * np.eye(4) / 4
        counts = expected_counts(rho0, PSET, 1e4)
        lin, ok = linear_reconstruct(counts, PSET)
        assert ok
        res = mle_reconstruct(counts, PSET, MLEOptions(likelihood=likelihood))
        assert np.max(np.abs(res.rho - lin)) < 1e-6

    def test_identity_initializer(self):
        counts = expected_counts(phased_bell_density(0.5), PSET, 1e4)
        res = mle_reconstruct(counts, PSET, MLEOptions(initializer="identity"))
        assert np.max(np.abs(res.rho - phased_bell_density(0.5))) < 1e-4

    def test_nll_monotone(self):
        rng = np.random.default_rng(3)
        counts = rng.poisson(expected_counts(phased_bell_density(0.2), PSET, 500))
        res = mle_reconstruct(counts, PSET)
        tr = np.array(res.nll_trace)
        assert np.all(np.diff(tr) <= 1e-9 * (1 + np.abs(tr[1:])))
        assert res.to_dict()["optimizer"]["nll_monotone"]

    def test_scale_invariance(self):
        rng = np.random.default_rng(4)
        counts = rng.poisson(expected_counts(random_density(rng), PSET, 300)).astype(float)
        for likelihood in ("poisson", "gaussian"):
            opts = MLEOptions(likelihood=likelihood)
            a = mle_reconstruct(counts, PSET, opts).rho
            b = mle_reconstruct(7.0 * counts, PSET, opts).rho
            assert np.max(np.abs(a - b)) < 1e-5

    def test_gaussian_matches_poisson_on_exact_counts(self):
        counts = expected_counts(0.8 * PHI_PLUS + 0.2 * np.diag([0.5, 0, 0, 0.5]), PSET, 1e4)
        a = mle_reconstruct(counts, PSET, MLEOptions(likelihood="poisson")).rho
        b = mle_reconstruct(counts, PSET, MLEOptions(likelihood="gaussian")).rho
        assert np.max(np.abs(a - b)) < 1e-4

    def test_deterministic(self):
        counts = np.random.default_rng(5).poisson(expected_counts(PHI_PLUS, PSET, 100))
        assert np.array_equal(mle_reconstruct(counts, PSET).rho, mle_reconstruct(counts, PSET).rho)

    def test_non_converged_flag(self):
        counts = np.random.default_rng(6).poisson(expected_counts(phased_bell_density(1.0), PSET, 1000))
        res = mle_reconstruct(counts, PSET, MLEOptions(max_iterations=1, initializer="identity"))
        assert not res.converged
        assert is_physical(res.rho)

    def test_zero_counts_rejected(self):
        with pytest.raises(ValueError, match="zero"):
            mle_reconstruct(np.zeros(16), PSET)
        with pytest.raises(ValueError):
            mle_reconstruct(-np.ones(16), PSET)

    def test_options_validation(self):
        for bad in (dict(likelihood="l2"), dict(convergence_tol=0.0), dict(max_iterations=0),
                    dict(initializer="random")):
            with pytest.raises(ValueError):
                MLEOptions(**bad)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.floats(5, 2000))
    def test_physical_under_noise(self, seed, rank, total):
        rng = np.random.default_rng(seed)
        counts = rng.poisson(expected_counts(random_density(rng, rank), PSET, total))
        if counts.sum() == 0:
            counts[0] = 1
        res = mle_reconstruct(counts, PSET)
        assert is_physical(res.rho)
        assert 0.25 - 1e-9 <= res.purity <= 1 + 1e-9

    def test_result_json_payload(self):
        res = mle_reconstruct(expected_counts(PHI_PLUS, PSET, 1e3), PSET)
        d = json.loads(json.dumps(res.to_dict()))
        assert set(d) == {"rho", "metrics", "optimizer", "counts", "options"}
        assert d["options"]["likelihood"] == "poisson"


class TestPhaseFit:
    def test_grid(self):
        for phi in np.linspace(-np.pi + 1e-3, np.pi - 1e-3, 100):
            got, f = phase_fit(phased_bell_density(phi))
            assert abs(np.angle(np.exp(1j * (got - phi)))) < 1e-9
            assert f == pytest.approx(1.0, abs=1e-12)

    def test_examples(self):
        assert phase_fit(phased_bell_density(0.24))[0] == pytest.approx(0.24, abs=1e-12)
        assert phase_fit(phased_bell_density(0.0)) == pytest.approx((0.0, 1.0))

    def test_brute_force_maximum(self):
        rho = random_density(np.random.default_rng(7))
        phi, f = phase_fit(rho)
        grid = np.linspace(-np.pi, np.pi, 20001)
        vals = [fidelity_sqrt(rho, bell_phi(x)) for x in grid]
        assert f >= max(vals) - 1e-9
        assert abs(np.angle(np.exp(1j * (grid[int(np.argmax(vals))] - phi)))) < 1e-3

    def test_undefined(self):
        phi, f, defined = phase_fit(density_from_ket(np.kron(basis_ket("H"), basis_ket("H"))), True)
        assert not defined and phi == 0.0
        assert f == pytest.approx(np.sqrt(0.5))


def _records_from_counts(coinc, acc=None, n_gates=10**6):
    acc = np.zeros(16) if acc is None else acc
    return [CountRecord(sid, float(c), float(a), 1e9, 1e9, 1.0, n_gates)
            for sid, c, a in zip(JAMES_SETTINGS, coinc, acc)]


class TestPipelineTomography:
    def test_linear_pump_phase(self):
        res = reconstruct_records(expected_campaign(preset_config("linear"), JAMES_SETTINGS))
        assert res.best_phase == pytest.approx(0.24, abs=0.01)

    def test_elliptical_pump_compensated(self):
        res = reconstruct_records(expected_campaign(preset_config("elliptical"), JAMES_SETTINGS))
        assert abs(res.best_phase) < 1e-3
        assert res.fidelity_phi_plus > 0.99

    def test_subtracted_beats_raw(self):
        recs = expected_campaign(preset_config("elliptical"), JAMES_SETTINGS)
        assert reconstruct_records(recs).fidelity_phi_plus > reconstruct_records(recs, subtract=False).fidelity_phi_plus

    def test_missing_setting(self):
        recs = expected_campaign(preset_config("elliptical"), JAMES_SETTINGS[:15])
        with pytest.raises(ValueError, match="missing"):
            reconstruct_records(recs)


class TestBootstrap:
    def test_minimum_resamples(self):
        with pytest.raises(ValueError):
            bootstrap_errors(_records_from_counts(expected_counts(PHI_PLUS, PSET, 900)), n_resamples=10)

    def test_lab_scale_error_bar(self):
        # ~900 coincidences on the strongest settings, 5/90 accidentals
        lam = expected_counts(0.95 * PHI_PLUS + 0.05 * np.eye(4) / 4, PSET, 1800)
        recs = _records_from_counts(np.round(lam + 50), np.full(16, 50.0))
        out = bootstrap_errors(recs, n_resamples=200, seed=1)
        assert 0.01 <= out["fidelity_phi_plus"] <= 0.05

    def test_sqrt2_scaling(self):
        rho = 0.9 * PHI_PLUS + 0.1 * np.eye(4) / 4
        lam = expected_counts(rho, PSET, 2000)
        a = bootstrap_errors(_records_from_counts(lam), n_resamples=300, seed=2)
        b = bootstrap_errors(_records_from_counts(2 * lam), n_resamples=300, seed=2)
        assert a["fidelity_phi_plus"] / b["fidelity_phi_plus"] == pytest.approx(np.sqrt(2), rel=0.2)
        assert a["purity"] / b["purity"] == pytest.approx(np.sqrt(2), rel=0.2)

    def test_shrinks_with_exposure(self):
        rho = 0.9 * PHI_PLUS + 0.1 * np.eye(4) / 4
        sd = [bootstrap_errors(_records_from_counts(expected_counts(rho, PSET, n)), n_resamples=100,
                               seed=3)["fidelity_phi_plus"] for n in (1e3, 1e5, 1e7)]
        assert sd[0] > sd[1] > sd[2]
        assert sd[2] < 1e-3
