"""Labeled grid MDPs: the environment the agent acts in.

States are dense integer ids (``row * width + col`` for grids); grid
coordinates are metadata only. Labels are ``frozenset`` objects of
proposition names.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from ._validation import check_probability, check_rng
from .exceptions import DomainError, LayoutParseError, ValidationError

GRID_ACTIONS = ("up", "down", "left", "right")
_MOVES = {"up": (-1, 0), "down": (1, 0), "left": (0, -1), "right": (0, 1)}
_LATERAL = {
    "up": ("left", "right"),
    "down": ("left", "right"),
    "left": ("up", "down"),
    "right": ("up", "down"),
}
EMPTY = frozenset()


@dataclass(frozen=True, eq=False)
class LabeledMdp:
    """Finite MDP with a ground-truth labelling function.

    Parameters
    ----------
    transition : array of shape (n_states, n_actions, n_states)
        Row-stochastic kernel ``T[s, a, s']``.
    ground_labels : sequence of label sets, one per state.
    propositions : ordered proposition names.
    initial_state : int
    discount : float in [0, 1)
    actions : action names, defaults to the four grid moves.
    coords : optional (n_states, 2) array of grid ``(row, col)``.
    """

    transition: np.ndarray
    ground_labels: tuple
    propositions: tuple
    initial_state: int
    discount: float
    actions: tuple = GRID_ACTIONS
    coords: np.ndarray | None = None
    name: str = "mdp"
    _successor: np.ndarray | None = field(default=None, repr=False)
    _cumulative: np.ndarray | None = field(default=None, repr=False)
    _truth: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        T = np.array(self.transition, dtype=float)
        if T.ndim != 3 or T.shape[0] != T.shape[2]:
            raise ValidationError(f"transition must have shape (S, A, S), got {T.shape}")
        n_states, n_actions, _ = T.shape
        if n_actions != len(self.actions):
            raise ValidationError("number of actions disagrees with transition shape")
        if (T < 0).any() or not np.allclose(T.sum(axis=2), 1.0, atol=1e-9, rtol=0):
            raise ValidationError("every transition row must be a probability distribution")
        if not 0 <= self.initial_state < n_states:
            raise ValidationError(f"initial state {self.initial_state} is not a state")
        gamma = check_probability(self.discount, "discount")
        if gamma >= 1.0:
            raise ValidationError("discount must lie in [0, 1)")
        labels = tuple(frozenset(lab) for lab in self.ground_labels)
        if len(labels) != n_states:
            raise ValidationError("one ground label per state is required")
        props = tuple(self.propositions)
        if len(set(props)) != len(props):
            raise ValidationError("duplicate proposition names")
        unknown = set().union(*labels) - set(props) if labels else set()
        if unknown:
            raise ValidationError(f"labels use undeclared propositions: {sorted(unknown)}")
        T.setflags(write=False)
        object.__setattr__(self, "transition", T)
        object.__setattr__(self, "ground_labels", labels)
        object.__setattr__(self, "propositions", props)
        object.__setattr__(self, "discount", gamma)
        object.__setattr__(self, "actions", tuple(self.actions))
        if self.coords is not None:
            coords = np.asarray(self.coords, dtype=int)
            coords.setflags(write=False)
            object.__setattr__(self, "coords", coords)
        if np.all(T.max(axis=2) == 1.0):
            succ = T.argmax(axis=2)
            succ.setflags(write=False)
            object.__setattr__(self, "_successor", succ)
        truth = np.array([[p in lab for p in props] for lab in labels], dtype=bool)
        truth = truth.reshape(len(labels), len(props))
        truth.setflags(write=False)
        object.__setattr__(self, "_truth", truth)
        cum = np.cumsum(T, axis=2)
        cum[:, :, -1] = 1.0
        cum.setflags(write=False)
        object.__setattr__(self, "_cumulative", cum)

    @property
    def n_states(self):
        return self.transition.shape[0]

    @property
    def n_actions(self):
        return self.transition.shape[1]

    @property
    def deterministic(self):
        return self._successor is not None

    @property
    def successor(self):
        """(S, A) successor table; only defined for deterministic MDPs."""
        if self._successor is None:
            raise ValidationError("successor table requires a deterministic MDP")
        return self._successor

    def truth_matrix(self):
        """Boolean (S, P) matrix with ``[s, i]`` true iff ``s |= propositions[i]`` (read-only)."""
        return self._truth

    def state_of(self, row, col):
        if self.coords is None:
            raise ValidationError("MDP has no grid coordinates")
        hits = np.flatnonzero((self.coords[:, 0] == row) & (self.coords[:, 1] == col))
        if hits.size == 0:
            raise DomainError(f"no state at ({row}, {col})")
        return int(hits[0])

    def action_index(self, action):
        if isinstance(action, str):
            try:
                return self.actions.index(action)
            except ValueError:
                raise DomainError(f"unknown action {action!r}") from None
        if not 0 <= action < self.n_actions:
            raise DomainError(f"unknown action {action!r}")
        return int(action)


@dataclass(frozen=True)
class Trajectory:
    """A realised run: ``states`` has one more entry than the other fields.

    ``observed_labels[j]`` and ``rewards[j]`` belong to the successor
    ``states[j + 1]`` of action ``actions[j]``.
    """

    states: tuple
    actions: tuple
    observed_labels: tuple
    rewards: tuple

    def __post_init__(self):
        n = len(self.actions)
        if not (len(self.states) == n + 1 and len(self.observed_labels) == n == len(self.rewards)):
            raise ValidationError("trajectory fields have inconsistent lengths")


def step(mdp, s, a, rng=None):
    """Sample a successor of ``s`` under action ``a`` (name or index)."""
    if not 0 <= s < mdp.n_states:
        raise DomainError(f"unknown state {s!r}")
    a = mdp.action_index(a)
    if mdp._successor is not None:
        return int(mdp._successor[s, a])
    rng = check_rng(rng)
    return int(np.searchsorted(mdp._cumulative[s, a], rng.random(), side="right"))


def ground_label(mdp, s):
    if not 0 <= s < mdp.n_states:
        raise DomainError(f"unknown state {s!r}")
    return mdp.ground_labels[s]


# -- layouts -----------------------------------------------------------------


def _require(doc, key, kind):
    if key not in doc:
        raise LayoutParseError("missing required field", field=key)
    value = doc[key]
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise LayoutParseError(f"expected an integer, got {value!r}", field=key)
    if kind is list and not isinstance(value, list):
        raise LayoutParseError(f"expected a list, got {type(value).__name__}", field=key)
    return value


def _grid_kernel(width, height, slip):
    n = width * height
    T = np.zeros((n, len(GRID_ACTIONS), n))

    def move(r, c, name):
        dr, dc = _MOVES[name]
        nr, nc = r + dr, c + dc
        if 0 <= nr < height and 0 <= nc < width:
            return nr * width + nc
        return r * width + c

    for r in range(height):
        for c in range(width):
            s = r * width + c
            for a, name in enumerate(GRID_ACTIONS):
                T[s, a, move(r, c, name)] += 1.0 - slip
                for lateral in _LATERAL[name]:
                    T[s, a, move(r, c, lateral)] += slip / 2.0
    return T


def layout_from_dict(doc, name="layout"):
    """Build a grid :class:`LabeledMdp` from a parsed layout document."""
    if not isinstance(doc, dict):
        raise LayoutParseError("layout document must be a JSON object")
    width = _require(doc, "width", int)
    height = _require(doc, "height", int)
    if width < 1 or height < 1:
        raise LayoutParseError("grid dimensions must be positive", field="width" if width < 1 else "height")
    props = _require(doc, "propositions", list)
    if not all(isinstance(p, str) for p in props):
        raise LayoutParseError("proposition names must be strings", field="propositions")
    initial = _require(doc, "initial", list)
    if len(initial) != 2 or not all(isinstance(v, int) for v in initial):
        raise LayoutParseError("initial must be [row, col]", field="initial")
    row0, col0 = initial
    if not (0 <= row0 < height and 0 <= col0 < width):
        raise ValidationError(f"initial cell {initial} lies outside the {height}x{width} grid")
    discount = doc.get("discount", 0.9)
    slip = doc.get("slip", 0.0)
    if not isinstance(discount, (int, float)) or isinstance(discount, bool):
        raise LayoutParseError("discount must be a number", field="discount")
    if not isinstance(slip, (int, float)) or isinstance(slip, bool) or not 0 <= slip <= 1:
        raise LayoutParseError("slip must be a number in [0, 1]", field="slip")
    labels = [EMPTY] * (width * height)
    for i, cell in enumerate(doc.get("cells", [])):
        if not (isinstance(cell, list) and len(cell) == 3 and isinstance(cell[2], list)):
            raise LayoutParseError(f"cell entry {i} must be [row, col, [labels]]", field="cells")
        r, c, lab = cell
        if not (isinstance(r, int) and isinstance(c, int) and 0 <= r < height and 0 <= c < width):
            raise LayoutParseError(f"cell entry {i} lies outside the grid", field="cells")
        unknown = set(lab) - set(props)
        if unknown:
            raise ValidationError(f"cell ({r}, {c}) uses undeclared propositions {sorted(unknown)}")
        labels[r * width + c] = frozenset(lab)
    coords = np.array([(r, c) for r in range(height) for c in range(width)])
    return LabeledMdp(
        transition=_grid_kernel(width, height, float(slip)),
        ground_labels=tuple(labels),
        propositions=tuple(props),
        initial_state=row0 * width + col0,
        discount=float(discount),
        coords=coords,
        name=name,
    )


def load_layout(text, name="layout"):
    """Parse a JSON layout document (string) into a :class:`LabeledMdp`."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LayoutParseError(exc.msg, line=exc.lineno) from None
    return layout_from_dict(doc, name=name)


def load_layout_file(path):
    from pathlib import Path

    path = Path(path)
    return load_layout(path.read_text(), name=path.stem)


def layout_to_dict(mdp, slip=0.0):
    """Inverse of :func:`layout_from_dict` for grid MDPs."""
    if mdp.coords is None:
        raise ValidationError("only grid MDPs can be written as layouts")
    height = int(mdp.coords[:, 0].max()) + 1
    width = int(mdp.coords[:, 1].max()) + 1
    cells = [
        [int(r), int(c), sorted(lab)]
        for (r, c), lab in zip(mdp.coords.tolist(), mdp.ground_labels)
        if lab
    ]
    r0, c0 = mdp.coords[mdp.initial_state].tolist()
    doc = {
        "width": width,
        "height": height,
        "propositions": list(mdp.propositions),
        "initial": [r0, c0],
        "cells": cells,
        "discount": mdp.discount,
    }
    if slip:
        doc["slip"] = slip
    return doc


def fixture_text(name):
    return resources.files("rmperception.fixtures").joinpath(name).read_text()


def office_layout():
    """The 2x5 coffee/office workspace (states ``s_ij`` at row i-1, col j-1)."""
    return load_layout(fixture_text("office.json"), name="office")


def micro_grid():
    return load_layout(fixture_text("micro2x2.json"), name="micro2x2")


def random_room_layout(width, height, propositions, rng=None, *, n_rooms=None,
                       hall_fraction=0.25, discount=0.9):
    """Generate a floor-plan-like layout document.

    The grid is split recursively into rectangular rooms. Every proposition
    labels at least one room; remaining rooms get a random proposition or no
    label (a hall). The agent starts in a random cell.
    """
    rng = check_rng(rng)
    props = list(propositions)
    if n_rooms is None:
        n_rooms = int(rng.integers(len(props) + 1, len(props) + 4))
    rooms = [(0, 0, height, width)]  # (row, col, h, w)
    while len(rooms) < n_rooms:
        rooms.sort(key=lambda rm: rm[2] * rm[3], reverse=True)
        r, c, h, w = rooms[0]
        if max(h, w) < 2:
            break
        rooms.pop(0)
        if h >= w:
            cut = int(rng.integers(1, h))
            rooms += [(r, c, cut, w), (r + cut, c, h - cut, w)]
        else:
            cut = int(rng.integers(1, w))
            rooms += [(r, c, h, cut), (r, c + cut, h, w - cut)]
    order = rng.permutation(len(rooms))
    kinds = []
    for k in range(len(rooms)):
        if k < len(props):
            kinds.append(props[k])
        elif rng.random() < hall_fraction:
            kinds.append(None)
        else:
            kinds.append(props[int(rng.integers(len(props)))])
    cells = []
    for idx, kind in zip(order, kinds):
        r, c, h, w = rooms[idx]
        if kind is None:
            continue
        cells += [[rr, cc, [kind]] for rr in range(r, r + h) for cc in range(c, c + w)]
    cells.sort()
    initial = [int(rng.integers(height)), int(rng.integers(width))]
    return {
        "width": width,
        "height": height,
        "propositions": props,
        "initial": initial,
        "cells": cells,
        "discount": discount,
    }
