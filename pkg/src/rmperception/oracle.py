"""Independent checking tools: product MDPs, value iteration, attainability.

Nothing here is used by the learner; these functions exist to certify its
output in tests and through the ``oracle`` CLI command.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from ._validation import check_rng
from .exceptions import TractabilityError, ValidationError

ATTAINABLE_LIMIT = 10**6


def _labelling(mdp, labelling):
    if labelling is None:
        return mdp.ground_labels
    labels = [frozenset(lab) for lab in labelling]
    if len(labels) != mdp.n_states:
        raise ValidationError("labelling must give one label per MDP state")
    return labels


@dataclass(frozen=True)
class ProductMdp:
    """Reachable part of an MDP x reward-machine product.

    ``states[i] = (s, v)``; ``transition[i, a, j]`` and ``reward[i, a, j]``
    follow the MDP kernel and the machine's output on the successor label.
    """

    states: tuple
    initial: int
    transition: np.ndarray
    reward: np.ndarray
    discount: float

    @property
    def n_states(self):
        return len(self.states)

    def index(self, s, v):
        return self.states.index((s, v))

    def expected_reward(self):
        return (self.transition * self.reward).sum(axis=2)


def product_mdp(mdp, rm, labelling=None):
    labels = _labelling(mdp, labelling)
    start = (mdp.initial_state, rm.initial)
    index = {start: 0}
    order = [start]
    edges = []  # (i, a, j, prob, reward)
    queue = deque([start])
    while queue:
        s, v = queue.popleft()
        i = index[(s, v)]
        for a in range(mdp.n_actions):
            for s2 in np.flatnonzero(mdp.transition[s, a]):
                s2 = int(s2)
                v2, r = rm.step(v, labels[s2])
                key = (s2, v2)
                if key not in index:
                    index[key] = len(order)
                    order.append(key)
                    queue.append(key)
                edges.append((i, a, index[key], mdp.transition[s, a, s2], float(r)))
    n = len(order)
    T = np.zeros((n, mdp.n_actions, n))
    R = np.zeros((n, mdp.n_actions, n))
    for i, a, j, p, r in edges:
        T[i, a, j] += p
        R[i, a, j] = r
    return ProductMdp(tuple(order), 0, T, R, mdp.discount)


def value_iteration(p, tol=1e-9, max_iter=100_000):
    """Optimal values and a greedy policy (lowest action index on ties)."""
    if tol <= 0:
        raise ValidationError("tol must be positive")
    if not 0 <= p.discount < 1:
        raise ValidationError("value iteration needs a discount in [0, 1)")
    rbar = p.expected_reward()
    V = np.zeros(p.n_states)
    for _ in range(max_iter):
        Q = rbar + p.discount * (p.transition @ V)
        V_new = Q.max(axis=1)
        residual = np.abs(V_new - V).max() if p.n_states else 0.0
        V = V_new
        if residual < tol:
            break
    Q = rbar + p.discount * (p.transition @ V)
    return V, np.argmax(Q, axis=1)


def shortest_reward_distance(mdp, rm, labelling=None):
    """Fewest actions until a nonzero reward along positive-probability moves, or None."""
    p = product_mdp(mdp, rm, labelling)
    dist = {p.initial: 0}
    queue = deque([p.initial])
    while queue:
        i = queue.popleft()
        for a in range(p.transition.shape[1]):
            for j in np.flatnonzero(p.transition[i, a]):
                if p.reward[i, a, j] != 0:
                    return dist[i] + 1
                if j not in dist:
                    dist[j] = dist[i] + 1
                    queue.append(j)
    return None


def attainable_label_sequences(mdp, labelling=None, m=1, limit=ATTAINABLE_LIMIT):
    """All label sequences of length <= m produced by positive-probability paths."""
    if m < 0:
        raise ValidationError("m must be non-negative")
    labels = _labelling(mdp, labelling)
    succ = [sorted({int(s2) for a in range(mdp.n_actions)
                    for s2 in np.flatnonzero(mdp.transition[s, a])})
            for s in range(mdp.n_states)]
    frontier = {((), mdp.initial_state)}
    result = {()}
    for _ in range(m):
        nxt = set()
        for seq, s in frontier:
            for s2 in succ[s]:
                nxt.add((seq + (labels[s2],), s2))
        frontier = nxt
        result.update(seq for seq, _ in frontier)
        if len(result) > limit or len(frontier) > limit:
            raise TractabilityError(f"more than {limit} attainable sequences for m={m}")
    return result


def attainable_trajectories(mdp, m):
    """All ``(s0, a0, s1, ..., s_m)`` paths of exactly ``m`` positive-probability moves."""
    paths = [(mdp.initial_state,)]
    for _ in range(m):
        paths = [p + (a, int(s2)) for p in paths for a in range(mdp.n_actions)
                 for s2 in np.flatnonzero(mdp.transition[p[-1], a])]
        if len(paths) > ATTAINABLE_LIMIT:
            raise TractabilityError(f"more than {ATTAINABLE_LIMIT} trajectories")
    return set(paths)


def equivalent_on_attainable(a, b, mdp, labelling=None, m=None):
    """True iff ``a`` and ``b`` emit equal rewards on every m-attainable label sequence.

    Synchronised BFS over ``(s, v_a, v_b)``; ``m=None`` explores until closure,
    which covers every length at once.
    """
    labels = _labelling(mdp, labelling)
    succ = [sorted({int(s2) for act in range(mdp.n_actions)
                    for s2 in np.flatnonzero(mdp.transition[s, act])})
            for s in range(mdp.n_states)]
    start = (mdp.initial_state, a.initial, b.initial)
    depth = {start: 0}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        d = depth[node]
        if m is not None and d >= m:
            continue
        s, va, vb = node
        for s2 in succ[s]:
            lab = labels[s2]
            na, ra = a.step(va, lab)
            nb, rb = b.step(vb, lab)
            if ra != rb:
                return False
            key = (s2, na, nb)
            if key not in depth:
                depth[key] = d + 1
                queue.append(key)
    return True


def policy_return(mdp, H, q, bh, truth_rm, *, n_rollouts=1, horizon=200, rng=None):
    """Monte-Carlo discounted return of the greedy policy at ``(s_I, v_I)``.

    The agent tracks ``H`` on the label estimates of ``bh``; rewards come from
    ``truth_rm`` on ground-truth labels. Returns ``(mean, standard error)``.
    """
    rng = check_rng(rng)
    est = bh.labels()
    pi = np.argmax(q, axis=2)
    gamma = mdp.discount
    returns = np.empty(n_rollouts)
    for n in range(n_rollouts):
        s, v, vt = mdp.initial_state, H.initial, truth_rm.initial
        total, disc = 0.0, 1.0
        for _ in range(horizon):
            a = int(pi[v, s])
            if mdp.deterministic:
                s2 = int(mdp.successor[s, a])
            else:
                s2 = int(np.searchsorted(mdp._cumulative[s, a], rng.random(), side="right"))
            vt, r = truth_rm.step(vt, mdp.ground_labels[s2])
            v = H.step(v, est[s2])[0]
            total += disc * float(r)
            disc *= gamma
            s = s2
        returns[n] = total
    se = returns.std(ddof=1) / np.sqrt(n_rollouts) if n_rollouts > 1 else 0.0
    return float(returns.mean()), float(se)


def exploration_episode_bound(n_mdp_states, n_machine_states):
    """Episode length ``2**(|S|+1) * (|V|+1) - 1`` sufficient for exhaustive exploration."""
    return 2 ** (n_mdp_states + 1) * (n_machine_states + 1) - 1
