import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from icvar_rl import (LinearMixtureMDP, TabularMDP, embed_tabular, icvar_optimal_dp, load_mdp,
                      mdp_from_dict, mdp_to_dict, occupancy, psi_feature, random_linear_mixture,
                      random_tabular, sample_episode, save_mdp, transition_distribution,
                      validate_mixture)
from icvar_rl.errors import InvalidModelError
from icvar_rl.instance_gen import HardInstanceParams, hard_instance
from icvar_rl.seeding import make_rng


def chain_params(d=2, H=4, n=2, alpha=0.5, delta=0.1, mu=None):
    mu = (delta,) * (d - 1) if mu is None else mu
    return HardInstanceParams(d, H, n, alpha, delta, mu)


# ---------------------------------------------------------------- validation

def test_embedding_of_valid_tabular_passes():
    rep = validate_mixture(embed_tabular(random_tabular(3, 2, 2, seed=1)))
    assert rep.ok
    assert rep.worst_normalization.max() <= 1e-12


def test_doubled_theta_reports_normalization_failure():
    m = random_linear_mixture(3, 4, 2, 2, seed=0)
    bad = LinearMixtureMDP(m.features, 2 * m.thetas, m.rewards)
    rep = validate_mixture(bad)
    assert not rep.ok
    assert np.allclose(rep.worst_normalization, 1.0)
    assert any("row sum" in msg for msg in rep.messages)


def test_hard_instance_validates():
    rep = validate_mixture(hard_instance(chain_params(d=3, alpha=0.5, delta=0.05)))
    assert rep.ok
    # the action block pushes psi norms past 1; reported, not fatal
    assert rep.psi_norm_max > 1 and any("advisory" in m for m in rep.messages)


def test_negative_probability_reported():
    phi = np.zeros((2, 2, 1, 2))
    phi[0, :, 0] = [1.5, 0.0]
    phi[1, :, 0] = [-0.5, 1.0]
    m = LinearMixtureMDP(phi, [[1.0, 0.0]], np.zeros((1, 2, 1)))
    rep = validate_mixture(m)
    assert not rep.ok and rep.worst_negative.min() == pytest.approx(-0.5)
    with pytest.raises(InvalidModelError):
        _ = m.transitions


def test_theta_norm_bound_is_advisory():
    tab = random_tabular(2, 1, 1, seed=0)
    rep = validate_mixture(embed_tabular(tab))
    assert rep.ok
    assert rep.theta_norm_ok


def test_shape_mismatch_is_structural_error():
    with pytest.raises(InvalidModelError):
        LinearMixtureMDP(np.zeros((3, 3, 2, 4)), np.zeros((2, 5)), np.zeros((2, 3, 2)))
    with pytest.raises(InvalidModelError):
        LinearMixtureMDP(np.zeros((3, 3, 2, 4)), np.zeros((2, 4)), np.zeros((2, 3, 3)))


def test_tabular_rejects_bad_rows_and_rewards():
    P = np.full((1, 2, 1, 2), 0.5)
    with pytest.raises(InvalidModelError):
        TabularMDP(P * 1.1, np.zeros((1, 2, 1)))
    with pytest.raises(InvalidModelError):
        TabularMDP(P, np.full((1, 2, 1), 1.5))


# ---------------------------------------------------------------- transition_distribution

def test_embedding_round_trip_is_exact():
    tab = random_tabular(4, 3, 3, seed=7)
    emb = embed_tabular(tab)
    for h in range(3):
        for s in range(4):
            for a in range(3):
                assert np.array_equal(transition_distribution(emb, h, s, a), tab.transitions[h, s, a])


def test_hard_instance_chain_and_bandit_rows():
    p = chain_params(d=3, H=4, n=3, alpha=0.4, delta=0.04, mu=(0.04, -0.04))
    m = hard_instance(p)
    x1, x2, x3 = 3, 4, 5
    for i in range(2):
        row = transition_distribution(m, 0, i, 1)
        assert row[i + 1] == pytest.approx(0.4) and row[x1] == pytest.approx(0.6)
    acts = np.array([[-1, -1], [-1, 1], [1, -1], [1, 1]])
    for j, a in enumerate(acts):
        row = transition_distribution(m, 2, 2, j)
        want = 1 - 0.4 + 2 * 0.04 + np.dot(p.mu, a)
        assert row[x2] == pytest.approx(want, abs=1e-12)
        assert row[x3] == pytest.approx(1 - want, abs=1e-12)


def test_spec_bandit_example():
    m = hard_instance(HardInstanceParams(2, 3, 1, 0.5, 0.1, (0.1,)))
    row = transition_distribution(m, 0, 0, 1)       # action +1
    assert row[2] == pytest.approx(0.7) and row[3] == pytest.approx(0.3)


def test_small_noise_is_cleaned_large_is_error():
    m = random_linear_mixture(2, 3, 1, 1, seed=3)
    nudged = LinearMixtureMDP(m.features, m.thetas * (1 + 1e-8), m.rewards)
    P = nudged.transitions
    assert np.all(P >= 0) and np.allclose(P.sum(-1), 1, atol=1e-12)
    broken = LinearMixtureMDP(m.features, m.thetas * (1 + 1e-4), m.rewards)
    with pytest.raises(InvalidModelError):
        _ = broken.transitions


def test_transition_rows_are_distributions(rng):
    for seed in range(20):
        m = random_linear_mixture(int(rng.integers(1, 4)), 4, 2, 3, seed=seed)
        P = m.transitions
        assert np.all(P >= 0) and np.max(np.abs(P.sum(-1) - 1)) <= 1e-9


# ---------------------------------------------------------------- psi

def test_psi_zero_and_one():
    m = random_linear_mixture(3, 5, 2, 2, seed=4)
    assert np.all(psi_feature(m, np.zeros(5), 1, 0) == 0)
    for h in range(2):
        assert m.thetas[h] @ psi_feature(m, np.ones(5), 2, 1) == pytest.approx(1.0, abs=1e-12)


def test_psi_on_embedding_places_values(rng):
    tab = random_tabular(3, 2, 1, seed=2)
    emb = embed_tabular(tab)
    f = rng.random(3)
    psi = psi_feature(emb, f, 1, 1).reshape(3, 3, 2)      # coordinates (s', s, a)
    want = np.zeros((3, 3, 2))
    want[:, 1, 1] = f
    assert np.array_equal(psi, want)


@given(st.lists(st.floats(-5, 5), min_size=4, max_size=4),
       st.lists(st.floats(-5, 5), min_size=4, max_size=4),
       st.floats(-3, 3), st.floats(-3, 3))
def test_psi_is_linear(f, g, a, b):
    m = random_linear_mixture(3, 4, 2, 1, seed=9)
    f, g = np.array(f), np.array(g)
    lhs = psi_feature(m, a * f + b * g, 2, 1)
    rhs = a * psi_feature(m, f, 2, 1) + b * psi_feature(m, g, 2, 1)
    assert np.allclose(lhs, rhs, atol=1e-12, rtol=0)


def test_psi_rejects_bad_function():
    m = random_linear_mixture(2, 3, 1, 1, seed=0)
    with pytest.raises(ValueError):
        psi_feature(m, [0.0, np.nan, 1.0], 0, 0)


# ---------------------------------------------------------------- sampling

def test_deterministic_mdp_gives_unique_trajectory():
    P = np.zeros((3, 3, 1, 3))
    for h in range(3):
        for s in range(3):
            P[h, s, 0, (s + 1) % 3] = 1.0
    m = TabularMDP(P, np.zeros((3, 3, 1)))
    pi = np.zeros((3, 3), dtype=int)
    logs = {tuple(sample_episode(m, pi, make_rng(seed)).states) for seed in range(20)}
    assert logs == {(0, 1, 2, 0)}


def test_same_seed_same_log():
    m = random_linear_mixture(3, 5, 2, 4, seed=1)
    pi = np.ones((4, 5), dtype=int)
    a = sample_episode(m, pi, make_rng(5), episode=3)
    b = sample_episode(m, pi, make_rng(5), episode=3)
    assert a == b
    assert len(a) == 4 and a.episode == 3
    for step in a.steps:
        assert step.reward == m.rewards[step.h, step.state, step.action]
        assert 0 <= step.next_state < 5


def test_empirical_frequencies_chi_square():
    m = random_linear_mixture(3, 5, 2, 1, seed=11)
    pi = np.zeros((1, 5), dtype=int)
    rng = make_rng(0)
    counts = np.zeros(5)
    for _ in range(100_000):
        counts[sample_episode(m, pi, rng).steps[0].next_state] += 1
    p = transition_distribution(m, 0, 0, 0)
    _, pval = stats.chisquare(counts, 100_000 * p)
    assert pval > 1e-3
    sigma = np.sqrt(100_000 * p * (1 - p))
    assert np.all(np.abs(counts - 100_000 * p) <= 3 * sigma + 1e-9)


def test_occupancy_matches_sampling():
    m = random_tabular(3, 2, 3, seed=5)
    pi = np.array([[0, 1, 0], [1, 1, 0], [0, 0, 1]])
    w = occupancy(m, pi)
    assert np.allclose(w.sum(1), 1)
    rng = make_rng(1)
    hits = np.zeros(3)
    for _ in range(20_000):
        hits[sample_episode(m, pi, rng).states[-1]] += 1
    assert np.allclose(hits / 20_000, w[-1], atol=0.02)


def test_bad_policy_rejected():
    m = random_tabular(3, 2, 2, seed=0)
    with pytest.raises(ValueError):
        sample_episode(m, np.full((2, 3), 2), make_rng(0))
    with pytest.raises(ValueError):
        sample_episode(m, np.zeros((3, 3), dtype=int), make_rng(0))


# ---------------------------------------------------------------- embedding

def test_two_state_chain_embedding():
    P = np.array([[[[0.3, 0.7]], [[0.0, 1.0]]]])
    emb = embed_tabular(TabularMDP(P, np.zeros((1, 2, 1))))
    assert emb.dim == 4
    assert sorted(emb.thetas[0].tolist()) == sorted(P.ravel().tolist())


def test_embedding_preserves_dp():
    tab = random_tabular(4, 2, 3, seed=8)
    for alpha in (1.0, 0.3):
        assert np.allclose(icvar_optimal_dp(tab, alpha)[0], icvar_optimal_dp(embed_tabular(tab), alpha)[0],
                           atol=1e-12)


# ---------------------------------------------------------------- serialization

def test_json_round_trip(tmp_path):
    for m in (random_linear_mixture(2, 3, 2, 2, seed=0), random_tabular(3, 2, 2, seed=0)):
        save_mdp(m, tmp_path / "m.json")
        back = load_mdp(tmp_path / "m.json")
        assert type(back) is type(m)
        assert np.array_equal(back.transitions, m.transitions)
        assert np.array_equal(back.rewards, m.rewards)


def test_schema_fields():
    data = mdp_to_dict(random_linear_mixture(2, 3, 2, 4, seed=0))
    assert {"S", "A", "H", "d", "phi", "thetas", "rewards", "initial_state"} <= set(data)
    assert np.shape(data["phi"]) == (3, 3, 2, 2)
    assert np.shape(data["thetas"]) == (4, 2)


def test_declared_sizes_checked():
    data = mdp_to_dict(random_tabular(3, 2, 2, seed=0))
    data["S"] = 4
    with pytest.raises(InvalidModelError):
        mdp_from_dict(data)
    del data["rewards"]
    with pytest.raises(InvalidModelError):
        mdp_from_dict(json.loads(json.dumps(data)))
