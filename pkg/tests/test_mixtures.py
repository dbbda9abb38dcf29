"""1-D Gaussian mixture fitting, model selection, modes, and z-scores."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from devexplain.dataset import Dataset, MixtureSpec
from devexplain.errors import NumericalError, ValidationError
from devexplain.mixtures import (
    FeaturePriors,
    GaussianMixture1D,
    bic,
    density,
    fit_gmm,
    fit_priors,
    from_mixture_spec,
    log_density,
    log_prior,
    mixture_from_json,
    mixture_to_json,
    mode_z_score,
    modes,
    priors_from_specs,
    select_k,
    z_score,
)

STD_NORMAL_AT_ZERO = 1.0 / math.sqrt(2.0 * math.pi)  # 0.3989422...


def two_bump_samples(n: int, seed: int, sep: float = 5.0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    signs = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    return signs * sep + rng.standard_normal(n)


class TestGaussianMixture1D:
    def test_weight_sum_validated(self):
        with pytest.raises(ValidationError):
            GaussianMixture1D(components=((0.6, 0.0, 1.0), (0.5, 1.0, 1.0)))

    def test_positive_variances(self):
        with pytest.raises(ValidationError):
            GaussianMixture1D(components=((1.0, 0.0, 0.0),))

    def test_sample_deterministic(self):
        gmm = GaussianMixture1D(components=((0.5, -2.0, 1.0), (0.5, 2.0, 1.0)))
        a = gmm.sample(np.random.default_rng(3), 100)
        b = gmm.sample(np.random.default_rng(3), 100)
        assert np.array_equal(a, b)

    def test_from_spec_squares_stds(self):
        spec = MixtureSpec(components=((1.0, 1.0, 3.0),))
        gmm = from_mixture_spec(spec)
        assert gmm.variances[0] == 9.0


class TestFitGmm:
    def test_k1_closed_form(self):
        rng = np.random.default_rng(0)
        samples = rng.normal(2.0, 1.5, size=400)
        gmm = fit_gmm(samples, 1, 0)
        w, m, v = gmm.components[0]
        assert w == pytest.approx(1.0)
        assert m == pytest.approx(samples.mean(), abs=1e-9)
        assert v == pytest.approx(samples.var(), rel=1e-6)

    def test_two_component_recovery(self):
        samples = two_bump_samples(5000, 1)
        gmm = fit_gmm(samples, 2, 0)
        means = np.sort(gmm.means)
        assert abs(means[0] + 5.0) <= 0.15
        assert abs(means[1] - 5.0) <= 0.15
        assert np.all(np.abs(gmm.weights - 0.5) <= 0.03)

    def test_loglik_history_monotone(self):
        samples = two_bump_samples(1000, 2)
        gmm = fit_gmm(samples, 3, 5)
        hist = np.array(gmm.history)
        assert hist.size >= 1
        # EM never decreases the likelihood; allow only float-level wiggle
        assert np.all(np.diff(hist) >= -1e-7 * np.maximum(1.0, np.abs(hist[:-1])))
        assert gmm.log_likelihood == hist[-1]

    def test_reported_loglik_matches_density(self):
        samples = two_bump_samples(500, 8)
        gmm = fit_gmm(samples, 2, 1)
        recomputed = float(np.sum(log_density(gmm, samples)))
        assert gmm.log_likelihood == pytest.approx(recomputed, rel=1e-9)

    def test_deterministic(self):
        samples = two_bump_samples(300, 4)
        assert fit_gmm(samples, 2, 9) == fit_gmm(samples, 2, 9)

    def test_variance_floor(self):
        # two exact point masses; the floor must keep variances positive
        samples = np.array([0.0] * 50 + [1.0] * 50)
        gmm = fit_gmm(samples, 2, 0)
        assert np.all(gmm.variances >= 1e-4 * samples.var())

    def test_small_sample_prefers_clusters_over_spikes(self):
        # duplicate points on a small sample must not buy their own
        # floor-variance component: BIC would reward the likelihood spike
        # if the floor were too low
        rng = np.random.default_rng(7)
        samples = np.concatenate(
            [rng.normal(12.0, 0.5, 15), rng.normal(20.0, 0.3, 3), [12.3, 12.3]]
        )
        for seed in range(10):
            k = select_k(samples, 6, seed)
            gmm = fit_gmm(samples, k, seed)
            assert k <= 3
            # every component keeps a real share of mass
            assert np.all(gmm.weights * samples.size >= 1.5)

    def test_k_domain(self):
        with pytest.raises(ValidationError):
            fit_gmm(np.zeros(10) + np.arange(10), 0, 0)

    def test_needs_2k_samples(self):
        with pytest.raises(ValidationError):
            fit_gmm(np.arange(3.0), 2, 0)

    def test_identical_samples_degenerate(self):
        with pytest.raises(NumericalError):
            fit_gmm(np.ones(50), 1, 0)


class TestSelectK:
    def test_single_gaussian_picks_one(self):
        samples = np.random.default_rng(5).standard_normal(2000)
        assert select_k(samples, 4, 0) == 1

    def test_three_separated_components(self):
        rng = np.random.default_rng(6)
        samples = np.concatenate(
            [rng.normal(-10, 1, 700), rng.normal(0, 1, 700), rng.normal(10, 1, 700)]
        )
        assert select_k(samples, 5, 0) == 3

    def test_k_max_one(self):
        samples = two_bump_samples(500, 7)
        assert select_k(samples, 1, 0) == 1

    def test_k_max_domain(self):
        with pytest.raises(ValidationError):
            select_k(np.arange(10.0), 0, 0)

    def test_bic_formula(self):
        samples = two_bump_samples(400, 9)
        gmm = fit_gmm(samples, 2, 0)
        expected = -2.0 * gmm.log_likelihood + 5 * math.log(400)
        assert bic(gmm) == pytest.approx(expected)


class TestDensity:
    def test_standard_normal_at_zero(self):
        gmm = GaussianMixture1D(components=((1.0, 0.0, 1.0),))
        assert density(gmm, 0.0) == pytest.approx(STD_NORMAL_AT_ZERO, abs=1e-5)

    def test_symmetric_mixture(self):
        gmm = GaussianMixture1D(components=((0.5, -3.0, 1.0), (0.5, 3.0, 1.0)))
        for a in (0.5, 1.0, 4.2):
            assert density(gmm, -a) == pytest.approx(density(gmm, a), rel=1e-12)

    def test_integrates_to_one(self):
        gmm = GaussianMixture1D(
            components=((0.3, -4.0, 0.25), (0.3, 0.0, 1.0), (0.4, 5.0, 4.0))
        )
        lo = float(gmm.means.min() - 12 * gmm.stds.max())
        hi = float(gmm.means.max() + 12 * gmm.stds.max())
        total, _ = quad(lambda y: density(gmm, y), lo, hi, limit=200)
        assert total == pytest.approx(1.0, abs=1e-3)

    def test_vector_input(self):
        gmm = GaussianMixture1D(components=((1.0, 0.0, 1.0),))
        values = density(gmm, np.array([0.0, 1.0]))
        assert values.shape == (2,)


class TestModes:
    def test_single_gaussian(self):
        gmm = GaussianMixture1D(components=((1.0, 3.5, 4.0),))
        found = modes(gmm)
        assert len(found) == 1
        assert found[0].location == pytest.approx(3.5, abs=1e-8)
        assert found[0].sigma_m == pytest.approx(2.0)
        assert found[0].weight == 1.0

    def test_two_bumps(self):
        gmm = GaussianMixture1D(components=((0.5, -5.0, 1.0), (0.5, 5.0, 1.0)))
        found = modes(gmm)
        assert len(found) == 2
        locs = sorted(m.location for m in found)
        # grid-scan oracle: density maxima sit just inside the component means
        grid = np.arange(-8.0, 8.0, 1e-3)
        dens = density(gmm, grid)
        left = grid[(grid < 0)][np.argmax(dens[grid < 0])]
        right = grid[(grid > 0)][np.argmax(dens[grid > 0])]
        assert abs(locs[0] - left) <= 2e-3
        assert abs(locs[1] - right) <= 2e-3

    def test_close_components_merge_to_one_mode(self):
        gmm = GaussianMixture1D(components=((0.5, -0.3, 1.0), (0.5, 0.3, 1.0)))
        assert len(modes(gmm)) == 1

    def test_sorted_by_density_descending(self):
        gmm = GaussianMixture1D(
            components=((0.2, -6.0, 1.0), (0.5, 0.0, 1.0), (0.3, 6.0, 1.0))
        )
        found = modes(gmm)
        dens = [m.density for m in found]
        assert dens == sorted(dens, reverse=True)
        assert found[0].location == pytest.approx(0.0, abs=1e-6)

    def test_mode_density_consistent(self):
        gmm = GaussianMixture1D(components=((0.4, -2.0, 0.5), (0.6, 3.0, 2.0)))
        for m in modes(gmm):
            assert m.density == pytest.approx(float(density(gmm, m.location)))
            assert m.sigma_m == pytest.approx(float(gmm.stds[m.component_index]))


class TestZScores:
    def test_mean_gives_zero(self):
        samples = np.array([1.0, 2.0, 3.0, 4.0])
        assert z_score(samples.mean(), samples) == 0.0

    def test_population_std_convention(self):
        # samples {0, 2}: mean 1, population std 1 -> z(3) = 2
        assert z_score(3.0, [0.0, 2.0]) == pytest.approx(2.0)

    def test_constant_samples_rejected(self):
        with pytest.raises(ValidationError):
            z_score(1.0, [2.0, 2.0])

    def test_mode_location_gives_zero(self):
        gmm = GaussianMixture1D(components=((1.0, 12.2, 0.04),))
        mode = modes(gmm)[0]
        assert mode_z_score(mode.location, mode) == 0.0

    def test_mode_z_scales_by_sigma_m(self):
        gmm = GaussianMixture1D(components=((1.0, 10.0, 4.0),))
        mode = modes(gmm)[0]
        assert mode_z_score(13.0, mode) == pytest.approx(1.5, abs=1e-8)


class TestPriors:
    def test_fit_priors_recovers_spec_means(self, trimodal_spec, synth10k):
        priors = fit_priors(synth10k, 4, 0)
        assert priors.d_x == 3
        for gmm, spec in zip(priors.per_feature, trimodal_spec.feature_specs):
            fitted = np.sort(gmm.means)
            expected = np.sort(spec.means)
            assert fitted.size == expected.size
            assert np.all(np.abs(fitted - expected) <= 0.2)

    def test_constant_plus_noise_column_gets_k1(self):
        rng = np.random.default_rng(12)
        data = Dataset(
            features=rng.normal(5.0, 0.3, size=(2000, 1)),
            labels=rng.standard_normal(2000),
            feature_names=("c",),
        )
        priors = fit_priors(data, 4, 0)
        assert priors.per_feature[0].k == 1

    def test_log_prior_standard_normals_at_origin(self):
        gmm = GaussianMixture1D(components=((1.0, 0.0, 1.0),))
        priors = FeaturePriors(per_feature=(gmm,) * 3)
        assert log_prior(priors, [0.0, 0.0, 0.0]) == pytest.approx(
            3.0 * math.log(STD_NORMAL_AT_ZERO), abs=1e-9
        )

    def test_log_prior_additive(self, exact_priors):
        x = np.array([7.5, 0.3, 4.1])
        total = sum(
            float(log_density(gmm, float(v)))
            for gmm, v in zip(exact_priors.per_feature, x)
        )
        assert log_prior(exact_priors, x) == pytest.approx(total, rel=1e-12)

    def test_log_prior_prefers_consistent_point(self, exact_priors):
        # the third feature's widest component sits at 8, so [8,8,0] beats [8,0,8]
        assert log_prior(exact_priors, [8.0, 8.0, 0.0]) > log_prior(
            exact_priors, [8.0, 0.0, 8.0]
        )

    def test_priors_from_specs_shape(self, trimodal_spec):
        priors = priors_from_specs(trimodal_spec.feature_specs)
        assert priors.d_x == 3
        assert all(gmm.k == 3 for gmm in priors.per_feature)

    def test_sample_columns_independent_shape(self, exact_priors):
        pts = exact_priors.sample(np.random.default_rng(0), 500)
        assert pts.shape == (500, 3)

    def test_log_prior_length_check(self, exact_priors):
        with pytest.raises(ValidationError):
            log_prior(exact_priors, [1.0, 2.0])


class TestMixtureJson:
    def test_roundtrip(self):
        gmm = GaussianMixture1D(components=((0.25, -1.0, 0.25), (0.75, 2.0, 2.25)))
        again = mixture_from_json(mixture_to_json(gmm))
        assert np.allclose(again.weights, gmm.weights)
        assert np.allclose(again.means, gmm.means)
        assert np.allclose(again.variances, gmm.variances)

    def test_bad_document(self):
        with pytest.raises(ValidationError):
            mixture_from_json({"weights": [1.0], "means": [0.0]})

    def test_mismatched_lengths(self):
        with pytest.raises(ValidationError):
            mixture_from_json({"weights": [1.0], "means": [0.0], "stds": [1.0, 2.0]})
