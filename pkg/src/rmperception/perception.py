"""Beliefs over proposition truth values and their Bayesian maintenance.

A belief is a table ``b[s, i] = Pr(s |= propositions[i])``; propositions are
independent within and across states, so joint probabilities are products.
The observation model gives, for an agent at ``s1`` looking at ``(s2, p)``,
the probability that the sensor reports True when the truth value of ``p`` is
``b`` (``prob_true`` for b=True, ``prob_false`` for b=False).
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import compress

import numpy as np
from scipy.special import rel_entr

from ._validation import check_probability, check_probability_array, check_rng
from .exceptions import DomainError, ValidationError

CLAMP = 1e-9
RESAMPLE_POLICIES = ("never", "per_episode")


class Belief:
    """Per-(state, proposition) Bernoulli probabilities."""

    __slots__ = ("table", "propositions")

    def __init__(self, table, propositions):
        table = check_probability_array(table, "belief").copy()
        propositions = tuple(propositions)
        if table.ndim != 2 or table.shape[1] != len(propositions):
            raise ValidationError(
                f"belief table must have shape (n_states, {len(propositions)}), got {table.shape}"
            )
        self.table = table
        self.propositions = propositions

    @classmethod
    def uniform(cls, n_states, propositions, value=0.5):
        return cls(np.full((n_states, len(propositions)), value), propositions)

    @classmethod
    def from_labels(cls, labels, propositions, *, high=1.0, low=0.0):
        """Belief putting ``high`` on propositions in each label and ``low`` elsewhere."""
        propositions = tuple(propositions)
        table = np.array([[high if p in lab else low for p in propositions] for lab in labels])
        return cls(table.reshape(len(labels), len(propositions)), propositions)

    @classmethod
    def random(cls, n_states, propositions, rng=None):
        rng = check_rng(rng)
        return cls(rng.random((n_states, len(propositions))), propositions)

    @property
    def n_states(self):
        return self.table.shape[0]

    def copy(self):
        return Belief(self.table, self.propositions)

    def labels(self):
        """Label estimate for every state at once."""
        props = self.propositions
        return [frozenset(compress(props, row)) for row in (self.table >= 0.5).tolist()]

    def __eq__(self, other):
        return (
            isinstance(other, Belief)
            and self.propositions == other.propositions
            and np.array_equal(self.table, other.table)
        )

    def __repr__(self):
        return f"Belief(n_states={self.n_states}, propositions={self.propositions})"


def _check_state(b, s):
    if not 0 <= s < b.table.shape[0]:
        raise DomainError(f"unknown state {s!r}")


def estimate_label(b, s):
    """Most probable label at ``s``: propositions with probability >= 0.5."""
    _check_state(b, s)
    return frozenset(p for p, q in zip(b.propositions, b.table[s]) if q >= 0.5)


def joint_probability(b, s, props):
    """Probability that every proposition in ``props`` holds at ``s``."""
    _check_state(b, s)
    index = {p: i for i, p in enumerate(b.propositions)}
    unknown = set(props) - set(index)
    if unknown:
        raise ValidationError(f"unknown propositions {sorted(unknown)}")
    result = 1.0
    for p in sorted(props, key=index.get):
        result *= float(b.table[s, index[p]])
    return result


# -- observation models --------------------------------------------------------


class ObservationModel:
    """Sensor accuracy table ``O(s_agent, s, p, truth)``.

    ``prob_true`` and ``prob_false`` broadcast to shape
    ``(n_agent_states, n_states, n_props)``; a leading axis of length one means
    the model does not depend on where the agent stands.
    """

    def __init__(self, prob_true, prob_false, *, kind="custom", resample="never",
                 radius=None, low=None, high=None):
        pt = check_probability_array(prob_true, "prob_true")
        pf = check_probability_array(prob_false, "prob_false")
        if pt.ndim != 3 or pf.ndim != 3:
            raise ValidationError("observation tables must be three-dimensional")
        if resample not in RESAMPLE_POLICIES:
            raise ValidationError(f"resample must be one of {RESAMPLE_POLICIES}, got {resample!r}")
        if radius is not None and (isinstance(radius, bool) or not isinstance(radius, int) or radius < 0):
            raise ValidationError(f"radius must be a non-negative integer or null, got {radius!r}")
        pt.setflags(write=False)
        pf.setflags(write=False)
        self.prob_true = pt
        self.prob_false = pf
        self.kind = kind
        self.resample = resample
        self.radius = radius
        self.low = low
        self.high = high

    @classmethod
    def accurate(cls, radius=None):
        return cls(np.ones((1, 1, 1)), np.zeros((1, 1, 1)), kind="accurate", radius=radius)

    @classmethod
    def bernoulli(cls, accuracy, radius=None):
        """Symmetric sensor reporting the true value with probability ``accuracy``."""
        acc = check_probability(accuracy, "accuracy")
        return cls(np.full((1, 1, 1), acc), np.full((1, 1, 1), 1.0 - acc),
                   kind="bernoulli", radius=radius)

    @classmethod
    def per_proposition(cls, accuracies, radius=None):
        acc = check_probability_array(accuracies, "accuracies").reshape(1, 1, -1)
        return cls(acc, 1.0 - acc, kind="per_proposition", radius=radius)

    @classmethod
    def range_uniform(cls, low, high, n_states, n_props, rng=None, *,
                      resample="never", radius=None):
        """Accuracies drawn uniformly from ``[low, high]`` per (agent cell, cell, proposition)."""
        low = check_probability(low, "low")
        high = check_probability(high, "high")
        if low > high:
            raise ValidationError(f"low ({low}) exceeds high ({high})")
        rng = check_rng(rng)
        acc = rng.uniform(low, high, size=(n_states, n_states, n_props))
        return cls(acc, 1.0 - acc, kind="range_uniform", resample=resample,
                   radius=radius, low=low, high=high)

    def resampled(self, rng):
        """Fresh draw for stochastic models; deterministic models return ``self``."""
        if self.kind != "range_uniform":
            return self
        acc = rng.uniform(self.low, self.high, size=self.prob_true.shape)
        out = object.__new__(ObservationModel)
        out.__dict__.update(self.__dict__)
        pf = 1.0 - acc
        acc.setflags(write=False)
        pf.setflags(write=False)
        out.prob_true = acc
        out.prob_false = pf
        return out

    def slices(self, s_agent):
        """``(prob_true, prob_false)`` rows seen from ``s_agent``."""
        i = s_agent if self.prob_true.shape[0] > 1 else 0
        return self.prob_true[i], self.prob_false[i]

    def observed_mask(self, mdp, s_agent):
        """Cells within Chebyshev distance ``radius`` of the agent; None means all."""
        if self.radius is None:
            return None
        if mdp.coords is None:
            raise ValidationError("a sensing radius requires grid coordinates")
        dist = np.abs(mdp.coords - mdp.coords[s_agent]).max(axis=1)
        return dist <= self.radius

    def to_config(self):
        cfg = {"kind": self.kind, "resample": self.resample, "radius": self.radius}
        if self.kind == "bernoulli":
            cfg["accuracy"] = float(self.prob_true.flat[0])
        if self.kind == "range_uniform":
            cfg.update(low=self.low, high=self.high)
        return cfg


def observation_model_from_config(cfg, mdp, rng=None):
    """Build a model from its JSON config (see the README for the schema)."""
    if not isinstance(cfg, dict):
        raise ValidationError("observation config must be an object")
    kind = cfg.get("kind", "accurate")
    radius = cfg.get("radius")
    resample = cfg.get("resample", "never")
    if kind == "accurate":
        return ObservationModel.accurate(radius=radius)
    if kind == "bernoulli":
        if "accuracy" not in cfg:
            raise ValidationError("bernoulli observation model needs 'accuracy'")
        return ObservationModel.bernoulli(cfg["accuracy"], radius=radius)
    if kind == "range_uniform":
        return ObservationModel.range_uniform(
            cfg.get("low", 0.1), cfg.get("high", 0.9), mdp.n_states,
            len(mdp.propositions), rng, resample=resample, radius=radius,
        )
    raise ValidationError(f"unknown observation model kind {kind!r}")


@dataclass(frozen=True)
class Observation:
    """Sensor outputs; ``mask`` marks which (state, proposition) pairs were seen."""

    values: np.ndarray
    mask: np.ndarray | None = None

    def items(self):
        """Yield ``((state, proposition_index), value)`` for observed entries."""
        for (s, i), z in np.ndenumerate(self.values):
            if self.mask is None or self.mask[s]:
                yield (s, i), bool(z)


def sample_observations(om, mdp, s_agent, rng=None, truth=None):
    """Draw sensor outputs for every observed (state, proposition).

    The output is True with probability ``O(s_agent, s, p, truth(s, p))``.
    ``truth`` may be passed to avoid rebuilding the ground-truth matrix.
    """
    if not 0 <= s_agent < mdp.n_states:
        raise DomainError(f"unknown state {s_agent!r}")
    rng = check_rng(rng)
    if truth is None:
        truth = mdp.truth_matrix()
    pt, pf = om.slices(s_agent)
    p_report = np.where(truth, pt, pf)
    values = rng.random(truth.shape) < p_report
    return Observation(values, om.observed_mask(mdp, s_agent))


def _posterior(prior, z, pt, pf):
    o = np.where(z, pt, pf)
    num = prior * o
    den = num + (1.0 - prior) * (1.0 - o)
    safe = den > 0
    post = np.where(safe, num / np.where(safe, den, 1.0), prior)
    interior = (prior > 0.0) & (prior < 1.0)
    return np.where(interior, np.clip(post, CLAMP, 1.0 - CLAMP), post)


def bayes_update(b, s_agent, obs, om):
    """Posterior belief after observations ``obs`` taken from ``s_agent``.

    Uses the update ``b*O / (b*O + (1-b)*(1-O))`` with ``O = O(True)`` for a
    True report and ``O = O(False)`` for a False report. Posteriors of
    non-degenerate priors are clamped to ``[1e-9, 1 - 1e-9]``; priors of
    exactly 0 or 1 are absorbing, and a zero denominator keeps the prior.
    """
    if not 0 <= s_agent < b.table.shape[0]:
        raise DomainError(f"unknown state {s_agent!r}")
    pt, pf = om.slices(s_agent)
    post = _posterior(b.table, obs.values, pt, pf)
    if obs.mask is not None:
        post = np.where(obs.mask[:, None], post, b.table)
    out = Belief.__new__(Belief)
    out.table = post
    out.propositions = b.propositions
    return out


class FrequentistBelief(Belief):
    """Counter-based estimate: fraction of True reports per (state, proposition).

    Entries that have never been observed keep the prior value.
    """

    __slots__ = ("true_counts", "counts", "prior")

    def __init__(self, n_states, propositions, prior=0.5):
        super().__init__(np.full((n_states, len(propositions)), prior), propositions)
        self.true_counts = np.zeros(self.table.shape)
        self.counts = np.zeros(self.table.shape)
        self.prior = prior

    def update(self, obs):
        seen = np.ones(self.table.shape, dtype=bool) if obs.mask is None else \
            np.broadcast_to(obs.mask[:, None], self.table.shape)
        self.counts += seen
        self.true_counts += seen & obs.values
        observed = self.counts > 0
        self.table = np.where(observed, self.true_counts / np.maximum(self.counts, 1), self.prior)
        return self

    def copy(self):
        out = FrequentistBelief(self.table.shape[0], self.propositions, self.prior)
        out.table = self.table.copy()
        out.true_counts = self.true_counts.copy()
        out.counts = self.counts.copy()
        return out


# -- divergence ---------------------------------------------------------------


def _table(b):
    return b.table if isinstance(b, Belief) else np.asarray(b, dtype=float)


def jsd(bh, bj):
    """Cumulative Jensen-Shannon divergence (natural log) between two beliefs.

    Each (state, proposition) entry is treated as a Bernoulli distribution and
    the per-entry divergences are summed, so the result is at most
    ``n_states * n_props * ln 2``.
    """
    p = _table(bh)
    q = _table(bj)
    if p.shape != q.shape:
        raise ValidationError(f"beliefs differ in shape: {p.shape} != {q.shape}")
    m = 0.5 * (p + q)
    kl_p = rel_entr(p, m) + rel_entr(1.0 - p, 1.0 - m)
    kl_q = rel_entr(q, m) + rel_entr(1.0 - q, 1.0 - m)
    return 0.5 * (float(kl_p.sum()) + float(kl_q.sum()))


def signif_change(bh, bj, threshold):
    """True iff the divergence strictly exceeds ``threshold``."""
    if threshold < 0:
        raise ValidationError("divergence threshold must be non-negative")
    return jsd(bh, bj) > threshold
