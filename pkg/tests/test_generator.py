import numpy as np
import pytest

from opinion_em.generator import (GenConfig, generate_step_actions, generate_step_interactions,
                                  generate_trace, generate_traces, init_latent)
from opinion_em.model import (action_distribution, compute_alpha_all_pairs, kappa_plus, propagate,
                              scenario)
from opinion_em.state import opinion_trajectory, update_matrices


def test_init_latent_range_and_determinism():
    config = GenConfig()
    a = init_latent(config, np.random.default_rng(5))
    b = init_latent(config, np.random.default_rng(5))
    c = init_latent(config, np.random.default_rng(6))
    np.testing.assert_array_equal(a.x0, b.x0)
    assert not np.array_equal(a.x0, c.x0)
    assert a.x0.shape == (30,) and np.all(np.abs(a.x0) <= 1)
    assert np.all((a.sigma >= 0.3) & (a.sigma <= 0.7))


def test_config_validation():
    with pytest.raises(ValueError):
        GenConfig(num_actions=0)
    with pytest.raises(ValueError):
        GenConfig(num_actors=1)


def test_step_interaction_count():
    rng = np.random.default_rng(0)
    src, dst, signs, _ = generate_step_interactions(rng.uniform(-1, 1, 30), GenConfig(), rng)
    assert len(src) == len(dst) == len(signs) == 90
    assert np.all(src != dst)
    assert set(np.bincount(src)) == {3}


def test_identical_opinions_all_positive():
    rng = np.random.default_rng(0)
    src, dst, signs, alpha = generate_step_interactions(np.full(10, 0.3), GenConfig(num_actors=10), rng)
    assert alpha == 1.0
    assert np.all(signs == 1)


def test_sign_frequency_matches_alpha():
    # two far-apart clusters: every actor has candidates of both signs, so no fallback
    x = np.r_[np.linspace(-0.9, -0.7, 20), np.linspace(0.7, 0.9, 20)]
    config = GenConfig(num_actors=40, interactions_per_actor_per_step=250)
    _, _, signs, alpha = generate_step_interactions(x, config, np.random.default_rng(1))
    n = len(signs)
    assert n == 10_000
    freq = np.mean(signs == 1)
    se = np.sqrt(alpha * (1 - alpha) / n)
    assert abs(freq - alpha) <= 3 * se


def test_step_action_count_and_single_action():
    rng = np.random.default_rng(0)
    config = GenConfig()
    latent = init_latent(config, rng)
    actors, actions = generate_step_actions(latent.x0, latent.w, latent.sigma, config, rng)
    assert len(actors) == 450
    one = GenConfig(num_actions=1)
    _, actions = generate_step_actions(latent.x0, [0.2], [0.5], one, rng)
    assert np.all(actions == 0)


def test_action_frequencies_match_probabilities():
    config = GenConfig(num_actors=2, num_actions=5, actions_per_actor_per_step=10_000)
    w = np.array([-0.8, -0.2, 0.1, 0.3, 0.9])
    sigma = np.array([0.4, 0.3, 0.5, 0.2, 0.6])
    x = np.array([0.15, -0.5])
    actors, actions = generate_step_actions(x, w, sigma, config, np.random.default_rng(2))
    actions = actions[actors == 0]
    probs = action_distribution(x[0], w, sigma, config.params)
    freq = np.bincount(actions, minlength=5) / len(actions)
    se = np.sqrt(probs * (1 - probs) / len(actions))
    assert np.all(np.abs(freq - probs) <= 3 * se + 1e-12)


def test_positive_arcs_land_on_accepting_targets():
    config = GenConfig(num_actors=40, interactions_per_actor_per_step=30)
    rng = np.random.default_rng(3)
    x = rng.uniform(-1, 1, 40)
    src, dst, signs, _ = generate_step_interactions(x, config, rng)
    pos = signs == 1
    chosen = kappa_plus(x[src[pos]], x[dst[pos]], config.params)
    random_targets = rng.integers(0, 40, pos.sum())
    baseline = kappa_plus(x[src[pos]], x[random_targets], config.params)
    assert pos.sum() >= 300
    assert chosen.mean() > baseline.mean()


def test_default_trace_counts():
    trace, truth = generate_trace(GenConfig())
    assert trace.n_interactions == 900
    assert trace.n_actor_actions == 4500
    assert truth.trajectory.shape == (11, 30)
    assert len(truth.alpha_series) == 10
    assert len(truth.latent.signs) == 900


def test_generate_trace_deterministic():
    config = GenConfig(scenario=scenario("high_contrast"), seed=11)
    (ta, ga), (tb, gb) = generate_trace(config), generate_trace(config)
    assert ta == tb
    np.testing.assert_array_equal(ga.trajectory, gb.trajectory)
    np.testing.assert_array_equal(ga.latent.signs, gb.latent.signs)
    np.testing.assert_array_equal(ga.alpha_series, gb.alpha_series)


def test_generate_traces_seeds():
    traces = generate_traces(GenConfig(num_timesteps=2, seed=3), 2)
    assert traces[1][0] == generate_trace(GenConfig(num_timesteps=2, seed=4))[0]


@pytest.mark.parametrize("name", ["balanced", "high_contrast", "high_acceptance", "non_commitment"])
def test_trajectory_reproduced_by_propagate(name):
    trace, truth = generate_trace(GenConfig(scenario=scenario(name), seed=1))
    params = scenario(name).params
    np.testing.assert_array_equal(truth.trajectory[0], truth.latent.x0)
    again = propagate(truth.latent.x0, update_matrices(trace, truth.latent.signs, params),
                      return_trajectory=True)
    np.testing.assert_array_equal(again, truth.trajectory)
    np.testing.assert_array_equal(opinion_trajectory(trace, truth.latent, params), truth.trajectory)


def test_alpha_series_is_all_pairs():
    trace, truth = generate_trace(GenConfig(num_timesteps=3, seed=2))
    for t in range(3):
        assert truth.alpha_series[t] == compute_alpha_all_pairs(truth.trajectory[t], GenConfig().params)


def test_consensus_contraction():
    config = GenConfig(scenario=scenario("high_acceptance", mu_plus=0.1), num_timesteps=50, seed=0)
    _, truth = generate_trace(config)
    assert truth.trajectory[-1].std() < truth.trajectory[0].std()


def test_non_commitment_drifts_less_than_balanced():
    drift = {}
    for name in ("non_commitment", "balanced"):
        values = []
        for seed in range(4):
            _, truth = generate_trace(GenConfig(scenario=scenario(name), seed=seed))
            values.append(np.mean(np.abs(truth.trajectory[-1] - truth.trajectory[0])))
        drift[name] = np.mean(values)
    assert drift["non_commitment"] < drift["balanced"]


def test_hard_latitudes_follow_deterministic_rule():
    config = GenConfig(scenario=scenario("balanced"), hard_latitudes=True, seed=0)
    trace, truth = generate_trace(config)
    p = config.params
    for t in range(trace.num_timesteps):
        sl = trace.interaction_slice(t)
        x = truth.trajectory[t]
        d = np.abs(x[trace.int_u[sl]] - x[trace.int_v[sl]])
        s = truth.latent.signs[sl]
        assert np.all(s[d < p.eps_plus - 0.01] == 1)
        assert np.all(s[d > p.eps_minus + 0.01] == -1)
