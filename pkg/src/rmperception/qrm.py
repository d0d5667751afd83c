"""Tabular q-learning over reward-machine states with counterfactual updates.

A q-table is a float array of shape ``(n_rm_states, n_mdp_states,
n_actions)``; ``q[v, s, a]`` is ``q^v(s, a)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import check_positive_int, check_probability, check_rng
from .exceptions import ValidationError
from .perception import bayes_update, sample_observations

TIE_BREAKS = ("lowest", "random")


def new_qtable(n_rm_states, n_states, n_actions):
    return np.zeros((n_rm_states, n_states, n_actions))


def _argmax(row, rng, tie_break):
    if tie_break == "lowest":
        return int(np.argmax(row))
    best = np.flatnonzero(row == row.max())
    if len(best) == 1:
        return int(best[0])
    return int(best[int(rng.random() * len(best))])


def epsilon_greedy(q, v, s, epsilon, rng=None, tie_break="lowest"):
    """Random action with probability ``epsilon``, otherwise a maximiser of ``q[v, s]``."""
    rng = check_rng(rng)
    n_actions = q.shape[2]
    if rng.random() < epsilon:
        return int(rng.random() * n_actions)
    return _argmax(q[v, s], rng, tie_break)


def q_update(q, v, s, a, r, s_next, v_next, alpha, gamma):
    """In-place ``q[v,s,a] <- (1-alpha) q[v,s,a] + alpha (r + gamma max q[v',s'])``."""
    target = r + gamma * q[v_next, s_next].max()
    q[v, s, a] = (1.0 - alpha) * q[v, s, a] + alpha * target


def greedy_policy(q, H=None):
    """Array ``pi[v, s]`` of greedy actions, lowest index on ties."""
    return np.argmax(q, axis=2)


@dataclass(frozen=True)
class EpisodeParams:
    """Per-episode learning parameters.

    ``tie_break`` controls greedy ties during training; ``early_stop`` ends the
    episode on the first nonzero observed reward.
    """

    eplength: int = 1000
    epsilon: float = 0.3
    alpha: float = 0.1
    early_stop: bool = True
    belief_updates: bool = True
    tie_break: str = "random"

    def __post_init__(self):
        check_positive_int(self.eplength, "eplength", minimum=0)
        check_probability(self.epsilon, "epsilon")
        check_probability(self.alpha, "alpha", open_low=True)
        if self.tie_break not in TIE_BREAKS:
            raise ValidationError(f"tie_break must be one of {TIE_BREAKS}")


class StepCounter:
    """Global training-step counter with an optional per-step callback."""

    def __init__(self, value=0, on_step=None):
        self.value = value
        self.on_step = on_step
        self.updates = 0

    def tick(self):
        self.value += 1
        if self.on_step is not None:
            self.on_step(self.value)


@dataclass
class EpisodeResult:
    labels: list
    rewards: list
    q: np.ndarray
    belief_j: object
    steps_taken: int
    states: list | None = None
    actions: list | None = None

    def __post_init__(self):
        if not len(self.labels) == len(self.rewards) == self.steps_taken:
            raise ValidationError("episode labels, rewards and step count disagree")


def qrm_episode_mod(H, q, bh, bj, mdp, om, params, rng, global_step, truth_rm,
                    belief_update=None, record_path=False):
    """Run one perception-aware QRM episode.

    The agent tracks ``H`` on the label estimates of ``bh``; the environment
    emits rewards from ``truth_rm`` on ground-truth labels. Every step updates
    ``q[v]`` for all hypothesis states: the current state with the observed
    reward, the others with the hypothesis outputs. ``q`` is updated in place.
    When belief updates are on, ``bj`` absorbs one round of observations
    taken from the agent's new position after every step; ``belief_update``
    may replace the Bayesian rule (it receives ``(bj, s_agent, obs)``).
    """
    rng = check_rng(rng)
    if q.shape != (H.n_states, mdp.n_states, mdp.n_actions):
        raise ValidationError(
            f"q-table shape {q.shape} does not match ({H.n_states}, {mdp.n_states}, {mdp.n_actions})"
        )
    est = bh.labels()
    truth_labels = mdp.ground_labels
    truth = mdp.truth_matrix() if params.belief_updates else None
    succ = mdp._successor
    cum = mdp._cumulative
    gamma = mdp.discount
    alpha = params.alpha
    eps = params.epsilon
    n_actions = mdp.n_actions
    all_v = np.arange(H.n_states)
    lowest = params.tie_break == "lowest"

    s = mdp.initial_state
    v = H.initial
    vt = truth_rm.initial
    labels, rewards = [], []
    states, actions = ([s], []) if record_path else (None, None)
    steps = 0
    for _ in range(params.eplength):
        if rng.random() < eps:
            a = int(rng.random() * n_actions)
        else:
            row = q[v, s]
            if lowest:
                a = int(row.argmax())
            else:
                best = np.flatnonzero(row == row.max())
                a = int(best[int(rng.random() * len(best))]) if len(best) > 1 else int(best[0])
        if succ is not None:
            s2 = int(succ[s, a])
        else:
            s2 = int(np.searchsorted(cum[s, a], rng.random(), side="right"))
        lab = est[s2]
        vt, r = truth_rm.step(vt, truth_labels[s2])
        nxt, out = H.step_all(lab)
        target = out.copy()
        target[v] = r
        target += gamma * q[nxt, s2].max(axis=1)
        q[all_v, s, a] += alpha * (target - q[all_v, s, a])
        global_step.updates += H.n_states
        if params.belief_updates:
            obs = sample_observations(om, mdp, s2, rng, truth)
            if belief_update is None:
                bj = bayes_update(bj, s2, obs, om)
            else:
                bj = belief_update(bj, s2, obs)
        labels.append(lab)
        rewards.append(r)
        if record_path:
            states.append(s2)
            actions.append(a)
        steps += 1
        v = int(nxt[v])
        s = s2
        global_step.tick()
        if params.early_stop and r != 0:
            break
    return EpisodeResult(labels, rewards, q, bj, steps, states, actions)
