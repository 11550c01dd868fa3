import math

import numpy as np
import pytest

from photoent import (
    apply_beam_splitter,
    density_from_pure,
    entanglement_report,
    make_coherent_product,
    make_number_state,
    make_superposition,
    number_weights,
    pm_mean_variance,
    pm_postselect,
    pm_probability,
)
from photoent.fock import ImpossibleOutcomeError, fix_global_phase
from photoent.projective import (
    DegenerateEstimatorError,
    NonPhysicalInferenceWarning,
    coherent_count_moments,
    infer_total_mean_photons,
    pm_count_cutoff,
    sample_pm_counts,
)

from conftest import random_state


class TestProbability:
    def test_no_interaction_yet(self, rng):
        s = random_state(rng, 4, 4)
        assert abs(pm_probability(s, 1.0, 0.0, 0) - 1.0) < 1e-12
        assert pm_probability(s, 1.0, 0.0, 3) == 0.0

    def test_single_excitation_zero_counts(self):
        s = make_number_state(1, 0, 3, 3)
        assert abs(pm_probability(s, 1.0, 1.0, 0) - 0.36787944117144233) < 1e-15

    @pytest.mark.parametrize("m,n", [(0, 0), (1, 2), (3, 1)])
    def test_number_states_are_poissonian(self, m, n):
        s = make_number_state(m, n, 5, 5)
        chi, t = 0.8, 0.9
        mu = (chi * t) ** 2 * (m + n) ** 2
        for k in range(6):
            expected = mu**k * math.exp(-mu) / math.factorial(k) if mu > 0 else float(k == 0)
            assert abs(pm_probability(s, chi, t, k) - expected) < 1e-12

    def test_normalization_with_adaptive_cutoff(self, rng):
        states = [
            make_number_state(2, 1, 4, 4),
            make_coherent_product(math.sqrt(5), math.sqrt(5), eps_trunc=1e-10),
            random_state(rng, 6, 6),
        ]
        for s in states:
            for t in (0.0, 0.3, 1.0, 2.5):
                kmax = pm_count_cutoff(s, 1.0, t)
                total = math.fsum(pm_probability(s, 1.0, t, k) for k in range(kmax + 1))
                assert abs(total - (1.0 - s.trunc_weight)) < 1e-9

    def test_invariant_under_prior_exchange_evolution(self, rng):
        # counting statistics depend only on the total photon number
        for _ in range(5):
            s = random_state(rng, 5, 5)
            rotated = apply_beam_splitter(s, 1.7, 0.6)
            for k in (0, 1, 3):
                assert abs(
                    pm_probability(s, 0.9, 0.8, k) - pm_probability(rotated, 0.9, 0.8, k)
                ) < 1e-10


class TestPostselect:
    def test_number_state_input_is_k_independent(self):
        s = make_number_state(1, 2, 5, 5)
        lam, chi, t = 0.8, 0.7, 0.9
        expected = fix_global_phase(apply_beam_splitter(s, lam, t).coeffs)
        for k in (0, 1, 4):
            out = pm_postselect(s, lam, chi, t, k)
            assert np.max(np.abs(out.post_state.coeffs - expected)) < 1e-12
            assert abs(np.linalg.norm(out.post_state.coeffs) - 1.0) < 1e-10

    def test_zero_counts_weak_coupling_stays_product(self):
        s = make_coherent_product(1.0, 0.8, eps_trunc=1e-12)
        out = pm_postselect(s, 0.5, 1.0, 1e-5, 0)
        rep = entanglement_report(density_from_pure(out.post_state))
        assert abs(rep.excess) < 1e-8

    def test_paper_scale_coherent_matches_direct_construction(self):
        s = make_coherent_product(math.sqrt(5), math.sqrt(5), eps_trunc=1e-12)
        chi, t, k = 1.0, 0.1, 3
        out = pm_postselect(s, 0.0, chi, t, k)
        totals = (np.arange(s.d_a)[:, None] + np.arange(s.d_b)[None, :]).astype(float)
        direct = (chi * t * totals) ** k * np.exp(-((chi * t) ** 2) * totals**2 / 2) * s.coeffs
        direct = fix_global_phase(direct / np.linalg.norm(direct))
        assert np.max(np.abs(out.post_state.coeffs - direct)) < 1e-12
        rep = entanglement_report(density_from_pure(out.post_state))
        assert rep.excess > 0.01
        assert rep.s_ab < 1e-10  # projective conditioning keeps the state pure

    def test_probability_matches_pm_probability(self, rng):
        s = random_state(rng, 5, 4)
        out = pm_postselect(s, 0.3, 0.9, 0.7, 2)
        assert out.probability == pm_probability(s, 0.9, 0.7, 2)

    def test_impossible_outcome_raises(self):
        vac = make_number_state(0, 0, 2, 2)
        with pytest.raises(ImpossibleOutcomeError):
            pm_postselect(vac, 0.0, 1.0, 1.0, 1)


class TestMoments:
    def test_number_state_variance_equals_mean(self):
        for m, n in [(0, 1), (2, 2), (3, 0)]:
            s = make_number_state(m, n, 5, 5)
            k_mean, k_var = pm_mean_variance(s, 0.7, 1.1)
            assert abs(k_mean - 0.7**2 * 1.1**2 * (m + n) ** 2) < 1e-12
            assert abs(k_var - k_mean) < 1e-10

    def test_paper_scale_coherent_moments(self):
        # F = 10, chi t = 0.1: mean 1.1, variance 1.1 + 0.461
        s = make_coherent_product(math.sqrt(5), math.sqrt(5), eps_trunc=1e-14)
        k_mean, k_var = pm_mean_variance(s, 1.0, 0.1)
        assert abs(k_mean - 1.1) < 1e-9
        assert abs((k_var - k_mean) - 0.461) < 1e-9

    def test_variance_identity_against_direct_summation(self, rng):
        for _ in range(5):
            s = random_state(rng, 5, 5)
            chi, t = 0.6, 0.9
            k_mean, k_var = pm_mean_variance(s, chi, t)
            kmax = pm_count_cutoff(s, chi, t, tail=1e-14)
            ks = np.arange(kmax + 1)
            probs = np.array([pm_probability(s, chi, t, int(k)) for k in ks])
            mean_direct = float(np.sum(ks * probs))
            var_direct = float(np.sum(ks**2 * probs)) - mean_direct**2
            assert abs(k_mean - mean_direct) < 1e-9
            assert abs(k_var - var_direct) < 1e-9

    def test_variance_mean_gap_is_number_moment_spread(self, rng):
        # Var(k) - k_mean = (chi t)^4 Var(N^2) for every state
        for _ in range(5):
            s = random_state(rng, 6, 4)
            chi, t = 0.5, 1.3
            k_mean, k_var = pm_mean_variance(s, chi, t)
            weights = number_weights(s)
            n = np.arange(len(weights), dtype=float)
            var_n2 = float(np.sum(weights * n**4) - np.sum(weights * n**2) ** 2)
            assert abs((k_var - k_mean) - (chi * t) ** 4 * var_n2) < 1e-9

    def test_mixed_states_overdispersed(self):
        s = make_superposition([(0, 1, 1.0), (2, 2, 1.0)])  # Var(N^2) > 0
        k_mean, k_var = pm_mean_variance(s, 0.7, 0.8)
        assert k_var > k_mean


class TestInferTotalMeanPhotons:
    def test_worked_example(self):
        assert abs(infer_total_mean_photons(1.1, 0.461, 1.0, 0.1) - 10.0) < 1e-12

    def test_vacuum_limit_is_zero_not_error(self):
        # k_mean = 0: denominator -1, numerator 0
        assert infer_total_mean_photons(0.0, 0.0, 1.0, 0.5) == 0.0

    def test_degenerate_denominator_raises(self):
        chi, t = 1.0, 1.0
        k_mean = (chi * t) ** 2 / 4.0
        with pytest.raises(DegenerateEstimatorError):
            infer_total_mean_photons(k_mean, 0.3, chi, t)

    def test_negative_result_warns(self):
        with pytest.warns(NonPhysicalInferenceWarning):
            f = infer_total_mean_photons(1.0, 0.0, 1.0, 1.0)
        assert f < 0

    def test_algebraic_round_trip(self):
        chi = 1.0
        for f in range(1, 21):
            for t in (0.05, 0.3, 1.7):
                k_mean, excess = coherent_count_moments(float(f), chi, t)
                assert abs(infer_total_mean_photons(k_mean, excess, chi, t) - f) < 1e-9

    def test_composition_with_measured_moments(self):
        # time independence of the estimate from actual state moments
        f = 4.0
        s = make_coherent_product(math.sqrt(2), math.sqrt(2), eps_trunc=1e-16)
        for t in (0.05, 0.2, 0.8):
            k_mean, k_var = pm_mean_variance(s, 1.0, t)
            assert abs(infer_total_mean_photons(k_mean, k_var - k_mean, 1.0, t) - f) < 1e-9


def test_distribution_row_matches_scalar_form(rng):
    from photoent.projective import pm_distribution_row

    s = random_state(rng, 4, 5)
    row = pm_distribution_row(s, 0.8, 0.9, 12)
    for k in range(13):
        assert abs(row[k] - pm_probability(s, 0.8, 0.9, k)) < 1e-15


def test_sampling_is_seed_reproducible():
    s = make_coherent_product(1.0, 1.0, eps_trunc=1e-10)
    a = sample_pm_counts(s, 1.0, 0.5, 200, seed=11)
    b = sample_pm_counts(s, 1.0, 0.5, 200, seed=11)
    assert np.array_equal(a, b)
    c = sample_pm_counts(s, 1.0, 0.5, 200, seed=12)
    assert not np.array_equal(a, c)
