import numpy as np
import pytest

from rmperception.oracle import product_mdp, value_iteration
from rmperception.perception import Belief, ObservationModel
from rmperception.qrm import (
    EpisodeParams, StepCounter, epsilon_greedy, greedy_policy, new_qtable, q_update,
    qrm_episode_mod,
)
from rmperception.reward_machine import consistent_with, initial_hypothesis

from conftest import s


def vi_seeded_q(mdp, rm):
    """q^v(s, a) from value iteration on the ground-truth product."""
    p = product_mdp(mdp, rm)
    V, _ = value_iteration(p, 1e-12)
    Q = p.expected_reward() + p.discount * (p.transition @ V)
    q = new_qtable(rm.n_states, mdp.n_states, mdp.n_actions)
    for i, (x, v) in enumerate(p.states):
        q[v, x] = Q[i]
    return q


class TestEpsilonGreedy:
    def test_greedy(self):
        q = np.zeros((1, 1, 4))
        q[0, 0, 2] = 1.0
        rng = np.random.default_rng(0)
        assert all(epsilon_greedy(q, 0, 0, 0.0, rng) == 2 for _ in range(100))

    def test_uniform(self):
        q = np.zeros((1, 1, 4))
        q[0, 0, 2] = 1.0
        rng = np.random.default_rng(1)
        draws = [epsilon_greedy(q, 0, 0, 1.0, rng) for _ in range(100_000)]
        np.testing.assert_allclose(np.bincount(draws, minlength=4) / 1e5, 0.25, atol=0.01)

    def test_mixture(self):
        q = np.zeros((1, 1, 4))
        q[0, 0, 1] = 1.0
        rng = np.random.default_rng(2)
        draws = np.array([epsilon_greedy(q, 0, 0, 0.3, rng) for _ in range(100_000)])
        assert abs(np.mean(draws == 1) - (1 - 0.3 + 0.3 / 4)) < 0.01

    def test_random_ties_cover_all_maximisers(self):
        q = np.zeros((1, 1, 4))
        rng = np.random.default_rng(3)
        draws = {epsilon_greedy(q, 0, 0, 0.0, rng, tie_break="random") for _ in range(200)}
        assert draws == {0, 1, 2, 3}


class TestUpdate:
    def test_alpha_one(self):
        q = np.zeros((2, 2, 4))
        q_update(q, 0, 0, 1, 1.0, 1, 1, 1.0, 0.0)
        assert q[0, 0, 1] == 1.0

    def test_half_step(self):
        q = np.zeros((2, 2, 4))
        q_update(q, 0, 0, 1, 1.0, 1, 1, 0.5, 0.9)
        assert q[0, 0, 1] == 0.5

    def test_shrinks_to_zero(self):
        q = np.zeros((1, 2, 4))
        q[0, 0, 0] = 0.8
        q_update(q, 0, 0, 0, 0.0, 1, 0, 0.1, 0.9)
        assert 0 < q[0, 0, 0] < 0.8


class TestGreedyPolicy:
    def test_zero_table(self):
        assert (greedy_policy(np.zeros((2, 3, 4))) == 0).all()

    def test_unique_maxima(self):
        q = np.random.default_rng(0).random((2, 3, 4))
        np.testing.assert_array_equal(greedy_policy(q), q.argmax(axis=2))

    def test_vi_policy_is_shortest(self, office, coffee):
        q = vi_seeded_q(office, coffee)
        pi = greedy_policy(q)
        x, v, steps = office.initial_state, coffee.initial, 0
        while True:
            x = int(office.successor[x, pi[v, x]])
            v, r = coffee.step(v, office.ground_labels[x])
            steps += 1
            if r:
                break
            assert steps < 20
        assert steps == 4  # s11 -> s12 -> s13 -> s14 -> s24


def accurate_run(office, coffee, q, seed=0, **kw):
    params = EpisodeParams(**{"eplength": 100, "epsilon": 0.0, **kw})
    bh = Belief.from_labels(office.ground_labels, office.propositions)
    return qrm_episode_mod(coffee, q, bh, bh.copy(), office, ObservationModel.accurate(),
                           params, np.random.default_rng(seed), StepCounter(), coffee)


class TestEpisode:
    def test_length_one(self, office, coffee):
        res = accurate_run(office, coffee, new_qtable(4, office.n_states, 4), eplength=1)
        assert res.steps_taken <= 1 and len(res.labels) == len(res.rewards) == res.steps_taken

    def test_trained_replay(self, office, coffee):
        res = accurate_run(office, coffee, vi_seeded_q(office, coffee), alpha=0.1)
        assert res.rewards[-1] == 1 and res.steps_taken == 4
        assert consistent_with(coffee, [(res.labels, res.rewards)])

    def test_corrupted_belief_counterexample(self, office, coffee):
        b = Belief.from_labels(office.ground_labels, office.propositions, high=0.9, low=0.1)
        b.table[s(office, 1, 2), office.propositions.index("X")] = 0.6
        path = [s(office, 1, 2), s(office, 1, 3), s(office, 1, 4), s(office, 2, 4), s(office, 2, 4)]
        labels = [b.labels()[x] for x in path]
        v, rewards = coffee.initial, []
        for x in path:
            v, r = coffee.step(v, office.ground_labels[x])
            rewards.append(r)
        assert labels == [{"c", "X"}, set(), set(), {"o"}, {"o"}]
        assert rewards == [0, 0, 0, 1, 0]
        observed = ([frozenset()] + labels[:-1], [0] + rewards[:-1])
        assert observed[1] == [0, 0, 0, 0, 1]
        assert not consistent_with(coffee, [observed])

    def test_update_count_and_bounds(self, office, coffee):
        q = new_qtable(4, office.n_states, 4)
        counter = StepCounter()
        bh = Belief.uniform(office.n_states, office.propositions)
        rng = np.random.default_rng(4)
        params = EpisodeParams(eplength=50, epsilon=0.5, early_stop=False)
        total = 0
        for _ in range(20):
            res = qrm_episode_mod(coffee, q, bh, bh, office, ObservationModel.bernoulli(0.8),
                                  params, rng, counter, coffee)
            total += res.steps_taken
            assert res.labels == [bh.labels()[x] for x in []] or all(
                lab == frozenset(office.propositions) for lab in res.labels)
        assert counter.value == total == 1000
        assert counter.updates == 4 * total
        assert q.min() >= 0 and q.max() <= 1 / (1 - office.discount)

    def test_labels_come_from_bh(self, office, coffee):
        bh = Belief.random(office.n_states, office.propositions, 8)
        params = EpisodeParams(eplength=30, epsilon=1.0, early_stop=False, belief_updates=False)
        res = qrm_episode_mod(initial_hypothesis(), new_qtable(1, office.n_states, 4), bh, bh,
                              office, ObservationModel.accurate(), params,
                              np.random.default_rng(2), StepCounter(), coffee, record_path=True)
        est = bh.labels()
        assert res.labels == [est[x] for x in res.states[1:]]

    def test_deterministic_under_seed(self, office, coffee):
        def run():
            q = new_qtable(4, office.n_states, 4)
            bh = Belief.uniform(office.n_states, office.propositions)
            res = qrm_episode_mod(coffee, q, bh, bh, office, ObservationModel.bernoulli(0.7),
                                  EpisodeParams(eplength=60), np.random.default_rng(11),
                                  StepCounter(), coffee)
            return res.labels, res.rewards, res.q.copy(), res.belief_j.table.copy()
        a, b = run(), run()
        assert a[0] == b[0] and a[1] == b[1]
        np.testing.assert_array_equal(a[2], b[2])
        np.testing.assert_array_equal(a[3], b[3])

    def test_early_stop(self, office, coffee):
        res = accurate_run(office, coffee, vi_seeded_q(office, coffee), early_stop=True)
        assert res.rewards[-1] == 1 and res.steps_taken == 4
        res = accurate_run(office, coffee, vi_seeded_q(office, coffee), early_stop=False)
        assert res.steps_taken == 100

    def test_shape_mismatch(self, office, coffee):
        with pytest.raises(ValueError):
            accurate_run(office, coffee, new_qtable(2, office.n_states, 4))
