"""Counterexample samples: ordered, capacity-bounded sets of traces."""
from collections import deque

from ..exceptions import ValidationError


def label_key(label):
    """Canonical sort key for label sets, independent of hash seeds."""
    return (len(label), tuple(sorted(label)))


class Sample:
    """Ordered traces ``(labels, rewards)``; the oldest trace is evicted first.

    Labels are stored as tuples of ``frozenset`` and rewards as tuples.
    """

    def __init__(self, traces=(), capacity=None):
        if capacity is not None and capacity < 1:
            raise ValidationError("sample capacity must be positive")
        self.capacity = capacity
        self._traces = deque(maxlen=capacity)
        for labels, rewards in traces:
            self.add(labels, rewards)

    def add(self, labels, rewards):
        """Append a trace; returns True when an older trace was evicted."""
        labels = tuple(frozenset(lab) for lab in labels)
        rewards = tuple(rewards)
        if len(labels) != len(rewards):
            raise ValidationError(
                f"trace has {len(labels)} labels but {len(rewards)} rewards"
            )
        evicted = self.capacity is not None and len(self._traces) == self.capacity
        self._traces.append((labels, rewards))
        return evicted

    def clear(self):
        self._traces.clear()

    @property
    def traces(self):
        return list(self._traces)

    def __len__(self):
        return len(self._traces)

    def __iter__(self):
        return iter(self._traces)

    def alphabet(self):
        """Distinct labels occurring in the sample, canonically ordered."""
        seen = {lab for labels, _ in self._traces for lab in labels}
        return sorted(seen, key=label_key)

    def reward_values(self):
        values = {r for _, rewards in self._traces for r in rewards}
        return sorted(values)

    def to_json(self):
        return [
            {"labels": [sorted(lab) for lab in labels], "rewards": list(rewards)}
            for labels, rewards in self._traces
        ]

    @classmethod
    def from_json(cls, doc, capacity=None):
        if not isinstance(doc, list):
            raise ValidationError("a sample file must hold a JSON list of traces")
        sample = cls(capacity=capacity)
        for i, tr in enumerate(doc):
            if not isinstance(tr, dict) or "labels" not in tr or "rewards" not in tr:
                raise ValidationError(f"trace {i} needs 'labels' and 'rewards'")
            sample.add(tr["labels"], tr["rewards"])
        return sample

    def __repr__(self):
        return f"Sample(n_traces={len(self)}, capacity={self.capacity})"
