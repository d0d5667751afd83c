"""Propositional encoding of "a k-state reward machine consistent with X".

The traces are merged into a prefix tree. Variables:

* ``d[v, l, w]`` -- the machine moves from ``v`` to ``w`` on label ``l``;
* ``o[v, l, r]`` -- the machine outputs reward ``r`` on ``(v, l)``;
* ``x[u, v]``    -- the run on prefix-tree node ``u`` may be in state ``v``.

Clauses: ``x[root, 0]``; exactly one ``w`` per ``(v, l)`` and exactly one
``r`` per ``(v, l)``; ``x[u, v] & d[v, l, w] -> x[ul, w]``; and
``x[u, v] -> o[v, l, r]`` whenever the sample shows reward ``r`` after ``ul``.
Spurious ``x`` variables only add constraints, so the formula is satisfiable
iff a consistent machine exists. Labels outside the sample alphabet are left
to the per-state default (self-loop, reward 0).

With ``symmetry_breaking=True`` the node-state relation is made functional and
states must be numbered in breadth-first order (edges explored by state, then
by label in canonical order). Every machine whose states are all reachable has
exactly one such numbering, so the formula is then satisfiable iff a
consistent machine with exactly ``k`` reachable states exists. When ``k - 1``
states are known to be insufficient the two questions coincide.
"""
from dataclasses import dataclass

import numpy as np

from ..exceptions import EncodingError, ValidationError
from ..reward_machine import Edge, ExactLabel, RewardMachine
from .cnf import CnfFormula
from .sample import Sample, label_key


@dataclass(frozen=True)
class PrefixTree:
    parent: np.ndarray      # parent node of every non-root node
    symbol: np.ndarray      # label index on the edge into the node
    outputs: tuple          # per non-root node: tuple of reward indices seen
    alphabet: tuple
    rewards: tuple

    @property
    def n_nodes(self):
        return len(self.parent) + 1


def build_prefix_tree(sample):
    if not isinstance(sample, Sample):
        sample = Sample(sample)
    alphabet = tuple(sample.alphabet())
    rewards = tuple(sample.reward_values())
    lab_idx = {lab: i for i, lab in enumerate(alphabet)}
    rew_idx = {r: i for i, r in enumerate(rewards)}
    children = {}
    parent, symbol, outputs = [], [], []
    for labels, rews in sample:
        node = 0
        for lab, r in zip(labels, rews):
            key = (node, lab_idx[lab])
            child = children.get(key)
            if child is None:
                child = children[key] = len(parent) + 1
                parent.append(node)
                symbol.append(key[1])
                outputs.append(set())
            outputs[child - 1].add(rew_idx[r])
            node = child
    return PrefixTree(
        np.array(parent, dtype=np.int64), np.array(symbol, dtype=np.int64),
        tuple(tuple(sorted(o)) for o in outputs), alphabet, rewards,
    )


@dataclass(frozen=True)
class DecodeContext:
    """Maps the encoding's variables back to machine components."""

    k: int
    alphabet: tuple
    rewards: tuple
    d_base: int
    o_base: int
    x_base: int
    n_nodes: int

    def d_var(self, v, l, w):
        return self.d_base + (v * len(self.alphabet) + l) * self.k + w

    def o_var(self, v, l, r):
        return self.o_base + (v * len(self.alphabet) + l) * len(self.rewards) + r

    def x_var(self, node, v):
        return self.x_base + node * self.k + v

    def meaning(self, var):
        """Human-readable description of a variable index."""
        L, R, k = len(self.alphabet), len(self.rewards), self.k
        if self.d_base <= var < self.o_base:
            i = var - self.d_base
            (v, l), w = divmod(i // k, L), i % k
            return ("transition", v, self.alphabet[l], w)
        if self.o_base <= var < self.x_base:
            i = var - self.o_base
            (v, l), r = divmod(i // R, L), i % R
            return ("output", v, self.alphabet[l], self.rewards[r])
        if self.x_base <= var < self.x_base + self.n_nodes * k:
            node, v = divmod(var - self.x_base, k)
            return ("run", node, v)
        raise ValidationError(f"variable {var} is not part of this encoding")


def _exactly_one(groups):
    """Clauses forcing exactly one true variable in each row of ``groups``."""
    groups = np.asarray(groups)
    clauses = groups.tolist()
    n = groups.shape[1]
    if n > 1:
        i, j = np.triu_indices(n, 1)
        pairs = np.stack([-groups[:, i], -groups[:, j]], axis=2).reshape(-1, 2)
        clauses += pairs.tolist()
    return clauses


def _bfs_clauses(k, L, ctx, fresh):
    """Breadth-first canonical numbering of the states over ``d`` variables."""
    clauses = []
    d = ctx.d_var
    t = {}
    for i in range(k):
        for j in range(1, k):
            if i == j:
                continue
            t[i, j] = fresh()
            lits = [d(i, l, j) for l in range(L)]
            clauses.append([-t[i, j]] + lits)
            clauses += [[t[i, j], -x] for x in lits]
    p = {}
    for j in range(1, k):
        for i in range(j):
            p[j, i] = fresh()
            # p[j, i] <-> t[i, j] & no earlier state reaches j
            earlier = [t[h, j] for h in range(i)]
            clauses.append([-p[j, i], t[i, j]])
            clauses += [[-p[j, i], -e] for e in earlier]
            clauses.append([p[j, i], -t[i, j]] + earlier)
        clauses.append([p[j, i] for i in range(j)])
    for j in range(1, k - 1):
        for i in range(j):
            for h in range(i):
                clauses.append([-p[j, i], -p[j + 1, h]])
    m = {}
    for i in range(k):
        for j in range(1, k):
            if i >= j:
                continue
            for l in range(L):
                # m[i, l, j] <-> d[i, l, j] & no smaller label goes i -> j
                m[i, l, j] = fresh()
                earlier = [d(i, h, j) for h in range(l)]
                clauses.append([-m[i, l, j], d(i, l, j)])
                clauses += [[-m[i, l, j], -e] for e in earlier]
                clauses.append([m[i, l, j], -d(i, l, j)] + earlier)
    for j in range(1, k - 1):
        for i in range(j):
            for l in range(L):
                for h in range(l):
                    clauses.append([-p[j, i], -p[j + 1, i], -m[i, l, j], -m[i, h, j + 1]])
    return clauses


def encode_phi(sample, k, symmetry_breaking=False):
    """Return ``(formula, context)`` for the k-state consistency question.

    ``sample`` may also be a prebuilt :class:`PrefixTree`.
    """
    if k < 1:
        raise ValidationError("k must be at least 1")
    tree = sample if isinstance(sample, PrefixTree) else build_prefix_tree(sample)
    L, R = len(tree.alphabet), len(tree.rewards)
    d_base = 1
    o_base = d_base + k * L * k
    x_base = o_base + k * L * R
    ctx = DecodeContext(k, tree.alphabet, tree.rewards, d_base, o_base, x_base, tree.n_nodes)
    n_vars = x_base + tree.n_nodes * k - 1
    clauses = [[ctx.x_var(0, 0)]]
    if L:
        d = d_base + np.arange(k * L * k).reshape(k * L, k)
        clauses += _exactly_one(d)
        if R:
            o = o_base + np.arange(k * L * R).reshape(k * L, R)
            clauses += _exactly_one(o)
    if len(tree.parent):
        child = np.arange(1, tree.n_nodes)
        v = np.arange(k)
        # x[u, v] & d[v, l, w] -> x[c, w], shape (edges, v, w)
        x_u = x_base + tree.parent[:, None, None] * k + v[None, :, None]
        d_vlw = d_base + (v[None, :, None] * L + tree.symbol[:, None, None]) * k + v[None, None, :]
        x_c = x_base + child[:, None, None] * k + v[None, None, :]
        shape = np.broadcast_shapes(x_u.shape, d_vlw.shape, x_c.shape)
        prop = np.stack([
            -np.broadcast_to(x_u, shape), -np.broadcast_to(d_vlw, shape),
            np.broadcast_to(x_c, shape),
        ], axis=-1).reshape(-1, 3)
        clauses += prop.tolist()
        # x[u, v] -> o[v, l, r]
        pairs = [(e, r) for e, outs in enumerate(tree.outputs) for r in outs]
        if pairs:
            e_idx = np.array([p[0] for p in pairs])
            r_idx = np.array([p[1] for p in pairs])
            x_u = x_base + tree.parent[e_idx, None] * k + v[None, :]
            o_v = o_base + (v[None, :] * L + tree.symbol[e_idx, None]) * R + r_idx[:, None]
            clauses += np.stack([-x_u, o_v], axis=-1).reshape(-1, 2).tolist()
    if symmetry_breaking and k > 1:
        x_all = x_base + np.arange(tree.n_nodes * k).reshape(tree.n_nodes, k)
        i, j = np.triu_indices(k, 1)
        clauses += np.stack([-x_all[:, i], -x_all[:, j]], axis=2).reshape(-1, 2).tolist()
        counter = [n_vars]

        def fresh():
            counter[0] += 1
            return counter[0]

        clauses += _bfs_clauses(k, L, ctx, fresh)
        n_vars = counter[0]
    return CnfFormula.trusted(n_vars, clauses), ctx


def decode_model(assignment, ctx):
    """Read the reward machine off a satisfying assignment."""
    k, L, R = ctx.k, len(ctx.alphabet), len(ctx.rewards)
    edges = [[] for _ in range(k)]
    for v in range(k):
        for l, label in enumerate(ctx.alphabet):
            targets = [w for w in range(k) if assignment[ctx.d_var(v, l, w)]]
            if len(targets) != 1:
                raise EncodingError(f"transition ({v}, {sorted(label)}) has {len(targets)} targets")
            if R:
                outs = [r for r in range(R) if assignment[ctx.o_var(v, l, r)]]
                if len(outs) != 1:
                    raise EncodingError(f"output ({v}, {sorted(label)}) has {len(outs)} values")
                reward = ctx.rewards[outs[0]]
            else:
                reward = 0
            edges[v].append(Edge(ExactLabel(label), targets[0], reward))
    return RewardMachine(k, 0, tuple(map(tuple, edges)), tuple((v, 0) for v in range(k)))


def machine_from_tables(k, alphabet, delta, sigma):
    """Build a machine from dict tables ``delta[(v, label)]`` / ``sigma[(v, label)]``."""
    alphabet = sorted(alphabet, key=label_key)
    edges = [[] for _ in range(k)]
    for v in range(k):
        for label in alphabet:
            if (v, label) in delta:
                edges[v].append(Edge(ExactLabel(label), delta[(v, label)], sigma.get((v, label), 0)))
    return RewardMachine(k, 0, tuple(map(tuple, edges)), tuple((v, 0) for v in range(k)))
