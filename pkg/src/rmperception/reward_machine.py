"""Deterministic Mealy machines over label sets with reward outputs."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from numbers import Real

import numpy as np

from .exceptions import DomainError, ValidationError
from .mdp import fixture_text


@dataclass(frozen=True)
class Conjunction:
    """Guard matching labels that contain ``all_of`` and avoid ``none_of``."""

    all_of: frozenset = frozenset()
    none_of: frozenset = frozenset()

    def matches(self, label):
        return self.all_of <= label and not (self.none_of & label)

    def overlaps(self, other):
        if isinstance(other, ExactLabel):
            return self.matches(other.label)
        return not ((self.all_of | other.all_of) & (self.none_of | other.none_of))

    def to_json(self, propositions=None):
        return {"all_of": sorted(self.all_of), "none_of": sorted(self.none_of)}


@dataclass(frozen=True)
class ExactLabel:
    """Guard matching exactly one label set (used by inferred machines)."""

    label: frozenset

    def matches(self, label):
        return label == self.label

    def overlaps(self, other):
        if isinstance(other, ExactLabel):
            return self.label == other.label
        return other.matches(self.label)

    def to_json(self, propositions):
        rest = set(propositions) - self.label
        return {"all_of": sorted(self.label), "none_of": sorted(rest)}


@dataclass(frozen=True)
class Edge:
    guard: Conjunction | ExactLabel
    target: int
    reward: Real


@dataclass(frozen=True, eq=False)
class RewardMachine:
    """Reward machine with explicit guarded edges plus one default per state.

    ``edges[v]`` lists the guarded edges leaving ``v``; ``defaults[v]`` is the
    ``(target, reward)`` pair taken when no guard matches. Guards leaving the
    same state must not overlap, so the machine is deterministic and total.
    """

    n_states: int
    initial: int
    edges: tuple
    defaults: tuple
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.n_states < 1:
            raise ValidationError("a reward machine needs at least one state")
        if not 0 <= self.initial < self.n_states:
            raise ValidationError(f"initial state {self.initial} is not a machine state")
        if len(self.edges) != self.n_states or len(self.defaults) != self.n_states:
            raise ValidationError("edges and defaults must list every state")
        object.__setattr__(self, "edges", tuple(tuple(e) for e in self.edges))
        object.__setattr__(self, "defaults", tuple(tuple(d) for d in self.defaults))
        for v, out in enumerate(self.edges):
            for e in out:
                if not 0 <= e.target < self.n_states:
                    raise ValidationError(f"edge from {v} targets unknown state {e.target}")
            for i, e in enumerate(out):
                for f in out[i + 1:]:
                    if e.guard.overlaps(f.guard):
                        raise ValidationError(
                            f"overlapping guards on state {v}: {e.guard} and {f.guard}"
                        )
        for v, (target, _) in enumerate(self.defaults):
            if not 0 <= target < self.n_states:
                raise ValidationError(f"default of state {v} targets unknown state {target}")

    @property
    def states(self):
        return range(self.n_states)

    @property
    def reward_alphabet(self):
        values = {r for _, r in self.defaults}
        values.update(e.reward for out in self.edges for e in out)
        return frozenset(values)

    def step(self, v, label):
        if type(label) is not frozenset:
            label = frozenset(label)
        key = (v, label)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if not 0 <= v < self.n_states:
            raise DomainError(f"unknown reward-machine state {v!r}")
        for e in self.edges[v]:
            if e.guard.matches(label):
                hit = (e.target, e.reward)
                break
        else:
            hit = self.defaults[v]
        self._cache[key] = hit
        return hit

    def step_all(self, label):
        """Successors and outputs of every state on ``label`` as two arrays."""
        key = ("*", label)
        hit = self._cache.get(key)
        if hit is None:
            pairs = [self.step(v, label) for v in range(self.n_states)]
            nxt = np.array([p[0] for p in pairs], dtype=np.intp)
            rew = np.array([float(p[1]) for p in pairs])
            nxt.setflags(write=False)
            rew.setflags(write=False)
            hit = self._cache[key] = (nxt, rew)
        return hit

    def run(self, labels):
        states = [self.initial]
        rewards = []
        v = self.initial
        for label in labels:
            v, r = self.step(v, label)
            states.append(v)
            rewards.append(r)
        return states, rewards

    def __call__(self, labels):
        return self.run(labels)[1]

    def to_document(self, propositions=()):
        transitions = []
        for v in range(self.n_states):
            for e in self.edges[v]:
                transitions.append({
                    "from": v, "guard": e.guard.to_json(propositions),
                    "to": e.target, "reward": e.reward,
                })
            target, reward = self.defaults[v]
            transitions.append({"from": v, "guard": "else", "to": target, "reward": reward})
        return {"states": self.n_states, "initial": self.initial, "transitions": transitions}


def rm_step(rm, v, label):
    return rm.step(v, frozenset(label))


def rm_run(rm, labels):
    """Return ``(states, rewards)`` of the run of ``rm`` on ``labels``."""
    return rm.run(frozenset(lab) for lab in labels)


def _iter_traces(sample):
    traces = getattr(sample, "traces", sample)
    for labels, rewards in traces:
        if len(labels) != len(rewards):
            raise ValidationError(
                f"trace has {len(labels)} labels but {len(rewards)} rewards"
            )
        yield labels, rewards


def consistent_with(rm, sample):
    """True iff ``rm`` reproduces the reward sequence of every trace."""
    for labels, rewards in _iter_traces(sample):
        if rm.run(labels)[1] != list(rewards):
            return False
    return True


def initial_hypothesis():
    """The one-state machine that self-loops with reward 0 on every label."""
    return RewardMachine(1, 0, ((),), ((0, 0),))


# -- documents ---------------------------------------------------------------


def _as_reward(value, where):
    if isinstance(value, bool) or not isinstance(value, Real):
        raise ValidationError(f"{where}: reward must be a number, got {value!r}")
    if isinstance(value, float) and value.is_integer():
        return int(value)
    return value


def rm_from_dict(doc):
    if not isinstance(doc, dict):
        raise ValidationError("reward-machine document must be a JSON object")
    n = doc.get("states")
    initial = doc.get("initial", 0)
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise ValidationError(f"'states' must be a positive integer, got {n!r}")
    if isinstance(initial, bool) or not isinstance(initial, int):
        raise ValidationError(f"'initial' must be an integer, got {initial!r}")
    edges = [[] for _ in range(n)]
    defaults = [None] * n
    for i, tr in enumerate(doc.get("transitions", [])):
        where = f"transition {i}"
        try:
            src, dst, guard = tr["from"], tr["to"], tr["guard"]
        except (KeyError, TypeError):
            raise ValidationError(f"{where}: needs 'from', 'guard' and 'to'") from None
        for name, val in (("from", src), ("to", dst)):
            if isinstance(val, bool) or not isinstance(val, int) or not 0 <= val < n:
                raise ValidationError(f"{where}: '{name}' must be a state in [0, {n})")
        reward = _as_reward(tr.get("reward", 0), where)
        if guard == "else":
            if defaults[src] is not None:
                raise ValidationError(f"{where}: state {src} has two 'else' entries")
            defaults[src] = (dst, reward)
            continue
        if not isinstance(guard, dict) or set(guard) - {"all_of", "none_of"}:
            raise ValidationError(f"{where}: guard must be 'else' or {{all_of, none_of}}")
        all_of = frozenset(guard.get("all_of", []))
        none_of = frozenset(guard.get("none_of", []))
        if all_of & none_of:
            raise ValidationError(f"{where}: guard is unsatisfiable")
        edges[src].append(Edge(Conjunction(all_of, none_of), dst, reward))
    missing = [v for v, d in enumerate(defaults) if d is None]
    if missing:
        raise ValidationError(f"states {missing} lack an 'else' default entry")
    return RewardMachine(n, initial, tuple(map(tuple, edges)), tuple(defaults))


def parse_rm(text):
    """Parse a JSON reward-machine document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"line {exc.lineno}: {exc.msg}") from None
    return rm_from_dict(doc)


def load_rm_file(path):
    from pathlib import Path

    return parse_rm(Path(path).read_text())


def coffee_rm():
    """Coffee-to-office task: reward 1 on reaching ``o`` after ``c``, never after ``X``."""
    return parse_rm(fixture_text("coffee_rm.json"))


def phi1_rm():
    """Go to bedroom or office, then to the kitchen."""
    return parse_rm(fixture_text("phi1_rm.json"))


def phi2_rm():
    """Kitchen while avoiding bathroom, then bathroom while avoiding bedroom."""
    return parse_rm(fixture_text("phi2_rm.json"))
