import numpy as np
import pytest

from ocrm.nets import Mlp
from ocrm.policies import CategoricalPolicy, FrozenPolicyError, GaussianPolicy, load_policy

from util import central_diff, rel_err


def mlp_gaussian(seed=0, dims=(1, 8, 2)):
    net = Mlp(list(dims), ["relu"] * (len(dims) - 2) + ["identity"], np.random.default_rng(seed))
    return GaussianPolicy(mean_net=net, log_std=np.array([-0.3, 0.1]))


def random_categorical(seed=0, n_states=3, n_actions=5):
    rng = np.random.default_rng(seed)
    return CategoricalPolicy.from_logit_table(rng.standard_normal((n_states, n_actions)))


class TestGaussianPolicy:
    def test_degenerate_variance_samples_at_mean(self):
        pol = GaussianPolicy(mean=np.array([0.4, -0.2]), log_std=np.log([1e-8, 1e-8]))
        a = pol.sample(np.zeros(100, dtype=int), np.random.default_rng(0))
        np.testing.assert_allclose(a, np.tile([0.4, -0.2], (100, 1)), atol=1e-6)

    def test_sample_mean_within_clt_bound(self):
        pol = GaussianPolicy.isotropic(2, variance=0.7)
        n = 100_000
        a = pol.sample(np.zeros(n, dtype=int), np.random.default_rng(1))
        bound = 3.0 * np.sqrt(0.7) / np.sqrt(n)
        assert np.all(np.abs(a.mean(axis=0)) < bound)

    def test_standard_normal_log_density_at_zero(self):
        pol = GaussianPolicy(mean=np.zeros(1), log_std=np.zeros(1))
        assert pol.log_prob(0, np.zeros(1)) == pytest.approx(-0.9189385332046727)

    def test_density_integrates_to_one_by_quadrature(self):
        pol = GaussianPolicy(mean=np.array([0.3]), log_std=np.array([-0.2]))
        xs = np.linspace(-8, 8, 20001)
        dens = np.exp([pol.log_prob(0, np.array([x])) for x in xs])
        assert np.trapezoid(dens, xs) == pytest.approx(1.0, abs=1e-8)

    def test_kl_identical_policies_is_zero(self):
        pol = mlp_gaussian()
        assert pol.kl_to(pol.snapshot()) == 0.0

    def test_kl_unit_gaussians_closed_form(self):
        p = GaussianPolicy(mean=np.zeros(1), log_std=np.zeros(1))
        q = GaussianPolicy(mean=np.ones(1), log_std=np.zeros(1))
        assert p.kl_to(q) == pytest.approx(0.5)

    def test_kl_nonnegative_on_random_pairs(self):
        rng = np.random.default_rng(5)
        for _ in range(1000):
            p = GaussianPolicy(mean=rng.standard_normal(2), log_std=rng.uniform(-1, 1, 2))
            q = GaussianPolicy(mean=rng.standard_normal(2), log_std=rng.uniform(-1, 1, 2))
            assert p.kl_to(q) >= 0.0
            assert p.kl_to(p) == 0.0

    def test_kl_matches_monte_carlo(self):
        p = GaussianPolicy(mean=np.array([0.2, -0.1]), log_std=np.array([-0.4, 0.3]))
        q = GaussianPolicy(mean=np.array([-0.3, 0.5]), log_std=np.array([0.1, -0.2]))
        rng = np.random.default_rng(2)
        n = 200_000
        a = p.sample(np.zeros(n, dtype=int), rng)
        diff = p.log_prob(np.zeros(n, dtype=int), a) - q.log_prob(np.zeros(n, dtype=int), a)
        se = diff.std() / np.sqrt(n)
        assert abs(p.kl_to(q) - diff.mean()) < 3.0 * se

    def test_mixed_family_kl_rejected(self):
        with pytest.raises(ValueError, match="family"):
            mlp_gaussian().kl_to(random_categorical())

    def test_snapshot_is_frozen_and_stable(self):
        pol = mlp_gaussian()
        snap = pol.snapshot()
        action = np.array([0.3, -0.8])
        before = snap.log_prob(0, action)
        pol.set_params(pol.params + 0.5)
        assert snap.log_prob(0, action) == before
        with pytest.raises(FrozenPolicyError):
            snap.set_params(snap.params)

    def test_logprob_grad_matches_finite_differences(self):
        rng = np.random.default_rng(8)
        pol = mlp_gaussian(seed=3)
        actions = rng.standard_normal((6, 2))
        coeffs = rng.standard_normal(6)
        states = np.zeros(6, dtype=int)

        def scalar(p):
            saved = pol.params
            pol.set_params(p)
            val = float((coeffs * pol.log_prob(states, actions)).sum())
            pol.set_params(saved)
            return val

        analytic = pol.logprob_weighted_grad(states, actions, coeffs)
        numeric = central_diff(scalar, pol.params)
        assert rel_err(analytic, numeric) < 1e-4

    def test_kl_grad_matches_finite_differences(self):
        pol = mlp_gaussian(seed=4)
        ref = mlp_gaussian(seed=9).snapshot()

        def scalar(p):
            saved = pol.params
            pol.set_params(p)
            val = pol.kl_to(ref)
            pol.set_params(saved)
            return val

        analytic = pol.kl_grad(ref)
        numeric = central_diff(scalar, pol.params)
        assert rel_err(analytic, numeric) < 1e-4

    def test_save_load_roundtrip(self, tmp_path):
        pol = mlp_gaussian(seed=6)
        path = tmp_path / "pol.ckpt"
        pol.save(path)
        loaded = load_policy(path)
        a = np.array([0.1, 0.2])
        assert loaded.log_prob(0, a) == pol.log_prob(0, a)

    def test_direct_parameterization_roundtrip(self, tmp_path):
        pol = GaussianPolicy.isotropic(2, 0.7)
        path = tmp_path / "pol.ckpt"
        pol.save(path)
        loaded = load_policy(path)
        assert loaded.kl_to(pol) == 0.0


class TestCategoricalPolicy:
    def test_dominant_logit_selected(self):
        pol = CategoricalPolicy.from_logit_table(np.array([[50.0, 0.0, 0.0]]))
        a = pol.sample(np.zeros(500, dtype=int), np.random.default_rng(0))
        assert np.all(a == 0)

    def test_uniform_log_probs(self):
        pol = CategoricalPolicy.from_logit_table(np.zeros((1, 4)))
        for a in range(4):
            assert pol.log_prob(0, a) == pytest.approx(np.log(0.25))

    def test_probabilities_sum_to_one(self):
        pol = random_categorical(seed=3)
        np.testing.assert_allclose(pol.prob_table().sum(axis=1), 1.0, atol=1e-14)

    def test_every_action_has_positive_probability(self):
        pol = CategoricalPolicy.from_logit_table(np.array([[40.0, -40.0, 0.0]]))
        assert np.all(pol.prob_table() > 0.0)

    def test_sample_frequencies_match_probs(self):
        pol = random_categorical(seed=4, n_states=1, n_actions=4)
        n = 200_000
        a = pol.sample(np.zeros(n, dtype=int), np.random.default_rng(7))
        freqs = np.bincount(a, minlength=4) / n
        np.testing.assert_allclose(freqs, pol.prob_table()[0], atol=0.01)

    def test_kl_identical_is_zero_and_nonnegative_otherwise(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            p = CategoricalPolicy.from_logit_table(rng.standard_normal((2, 6)))
            q = CategoricalPolicy.from_logit_table(rng.standard_normal((2, 6)))
            assert np.all(p.kl_to(q) >= 0.0)
            np.testing.assert_allclose(p.kl_to(p.snapshot()), 0.0, atol=1e-15)

    def test_kl_matches_monte_carlo(self):
        p = random_categorical(seed=10, n_states=1, n_actions=6)
        q = random_categorical(seed=11, n_states=1, n_actions=6)
        rng = np.random.default_rng(3)
        n = 200_000
        states = np.zeros(n, dtype=int)
        a = p.sample(states, rng)
        diff = p.log_prob(states, a) - q.log_prob(states, a)
        se = diff.std() / np.sqrt(n)
        assert abs(p.kl_to(q, states=0) - diff.mean()) < 3.0 * se

    def test_temperature_must_be_positive(self):
        net = Mlp([1, 3], ["identity"], np.random.default_rng(0))
        with pytest.raises(ValueError, match="temperature"):
            CategoricalPolicy(net, 1, temperature=0.0)

    def test_logprob_grad_matches_finite_differences(self):
        pol = random_categorical(seed=5, n_states=2, n_actions=4)
        rng = np.random.default_rng(6)
        states = rng.integers(0, 2, size=8)
        actions = rng.integers(0, 4, size=8)
        coeffs = rng.standard_normal(8)

        def scalar(p):
            saved = pol.params
            pol.set_params(p)
            val = float((coeffs * pol.log_prob(states, actions)).sum())
            pol.set_params(saved)
            return val

        analytic = pol.logprob_weighted_grad(states, actions, coeffs)
        numeric = central_diff(scalar, pol.params)
        assert rel_err(analytic, numeric) < 1e-4

    def test_kl_grad_matches_finite_differences(self):
        pol = random_categorical(seed=7, n_states=2, n_actions=4)
        ref = random_categorical(seed=8, n_states=2, n_actions=4).snapshot()
        weights = np.array([0.25, 0.75])

        def scalar(p):
            saved = pol.params
            pol.set_params(p)
            val = float((weights * pol.kl_to(ref)).sum())
            pol.set_params(saved)
            return val

        analytic = pol.kl_grad(ref, state_weights=weights)
        numeric = central_diff(scalar, pol.params)
        assert rel_err(analytic, numeric) < 1e-4

    def test_save_load_roundtrip(self, tmp_path):
        pol = random_categorical(seed=12)
        path = tmp_path / "cat.ckpt"
        pol.save(path)
        loaded = load_policy(path)
        np.testing.assert_array_equal(loaded.log_prob_table(), pol.log_prob_table())
