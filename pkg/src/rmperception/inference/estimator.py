"""Estimator-style front end for reward-machine inference."""
from sklearn.base import BaseEstimator

from ..reward_machine import consistent_with
from .sample import Sample
from .search import NoConsistentMachine, infer_minimal


class RewardMachineInferrer(BaseEstimator):
    """Fit a minimal reward machine to ``(labels, rewards)`` traces.

    Parameters
    ----------
    k_max : int
        Largest state count tried.
    backend : str or solver object, optional
        SAT backend passed to :func:`get_backend`.

    Attributes
    ----------
    machine_ : RewardMachine or NoConsistentMachine
    n_states_ : int or None
    found_ : bool
    """

    def __init__(self, k_max=4, backend=None):
        self.k_max = k_max
        self.backend = backend

    def fit(self, X, y=None):
        sample = X if isinstance(X, Sample) else Sample(X)
        self.machine_ = infer_minimal(sample, self.k_max, self.backend)
        self.found_ = self.machine_ is not NoConsistentMachine
        self.n_states_ = self.machine_.n_states if self.found_ else None
        return self

    def _check_fitted(self):
        if not hasattr(self, "machine_"):
            from sklearn.exceptions import NotFittedError

            raise NotFittedError("RewardMachineInferrer is not fitted yet")
        if not self.found_:
            raise ValueError("no consistent machine was found within k_max states")

    def predict(self, label_sequences):
        """Reward sequences the fitted machine assigns to each label sequence."""
        self._check_fitted()
        return [self.machine_(list(map(frozenset, seq))) for seq in label_sequences]

    def score(self, X, y=None):
        """Fraction of traces whose rewards the fitted machine reproduces."""
        self._check_fitted()
        traces = list(X)
        if not traces:
            return 1.0
        hits = sum(consistent_with(self.machine_, [t]) for t in traces)
        return hits / len(traces)
