"""Joint perception, reward-machine inference and q-learning."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_positive_int, check_probability, check_rng
from .exceptions import SolverError, ValidationError
from .inference import NoConsistentMachine, Sample, get_backend, infer_minimal
from .perception import (
    Belief, FrequentistBelief, jsd, observation_model_from_config, signif_change,
)
from .qrm import EpisodeParams, StepCounter, TIE_BREAKS, new_qtable, qrm_episode_mod
from .reward_machine import consistent_with, initial_hypothesis, rm_from_dict

logger = logging.getLogger(__name__)

PRIORS = ("uniform", "random", "truth")


@dataclass(frozen=True)
class TrainConfig:
    """Training hyper-parameters.

    ``observation`` is an observation-model config (``kind`` plus its
    parameters); ``prior`` is ``"uniform"``, ``"random"``, ``"truth"`` or an
    explicit ``(n_states, n_props)`` table.
    """

    total_steps: int = 500_000
    eplength: int = 1000
    epsilon: float = 0.3
    alpha: float = 0.1
    gamma_d: float = 1e-5
    k_max: int = 4
    trace_capacity: int = 20
    eval_every: int = 100
    seed: int = 0
    belief_updates_enabled: bool = True
    observation: dict = field(default_factory=lambda: {"kind": "accurate"})
    prior: object = "uniform"
    early_stop: bool = True
    tie_break: str = "random"
    estimator: str = "bayes"
    backend: str = "auto"
    conflict_budget: int | None = 2_000

    def __post_init__(self):
        check_positive_int(self.eplength, "eplength")
        check_positive_int(self.total_steps, "total_steps")
        if self.total_steps < self.eplength:
            raise ValidationError("total_steps must be at least eplength")
        check_positive_int(self.eval_every, "eval_every")
        check_positive_int(self.k_max, "k_max")
        check_positive_int(self.trace_capacity, "trace_capacity")
        check_positive_int(self.seed, "seed", minimum=0)
        check_probability(self.epsilon, "epsilon")
        check_probability(self.alpha, "alpha", open_low=True)
        if isinstance(self.gamma_d, bool) or not isinstance(self.gamma_d, (int, float)) \
                or self.gamma_d < 0:
            raise ValidationError("gamma_d must be a non-negative number")
        if self.tie_break not in TIE_BREAKS:
            raise ValidationError(f"tie_break must be one of {TIE_BREAKS}")
        if self.estimator not in ("bayes", "frequentist"):
            raise ValidationError("estimator must be 'bayes' or 'frequentist'")
        if isinstance(self.prior, str) and self.prior not in PRIORS:
            raise ValidationError(f"prior must be one of {PRIORS} or a table")
        if self.conflict_budget is not None:
            check_positive_int(self.conflict_budget, "conflict_budget")
        if not isinstance(self.observation, dict):
            raise ValidationError("observation must be a config object")

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ValidationError("train config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainResult:
    final_hypothesis: object
    final_q: np.ndarray
    final_belief: Belief
    eval_curve: list
    belief_update_log: list
    inference_log: list
    converged_step: int | None
    total_steps: int
    episodes: int
    final_sample: Sample
    inference_consistent: bool
    update_count: int = 0
    budget_exhausted: int = 0

    def to_dict(self):
        props = self.final_belief.propositions
        return {
            "final_hypothesis": self.final_hypothesis.to_document(props),
            "final_q": self.final_q.tolist(),
            "final_belief": {"propositions": list(props),
                             "table": self.final_belief.table.tolist()},
            "eval_curve": [list(p) for p in self.eval_curve],
            "belief_update_log": [list(p) for p in self.belief_update_log],
            "inference_log": [list(p) for p in self.inference_log],
            "converged_step": self.converged_step,
            "total_steps": self.total_steps,
            "episodes": self.episodes,
            "final_sample": self.final_sample.to_json(),
            "inference_consistent": self.inference_consistent,
            "update_count": self.update_count,
            "budget_exhausted": self.budget_exhausted,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc):
        try:
            belief = Belief(doc["final_belief"]["table"], doc["final_belief"]["propositions"])
            return cls(
                final_hypothesis=rm_from_dict(doc["final_hypothesis"]),
                final_q=np.asarray(doc["final_q"], dtype=float),
                final_belief=belief,
                eval_curve=[tuple(p) for p in doc["eval_curve"]],
                belief_update_log=[tuple(p) for p in doc["belief_update_log"]],
                inference_log=[tuple(p) for p in doc["inference_log"]],
                converged_step=doc["converged_step"],
                total_steps=doc["total_steps"],
                episodes=doc["episodes"],
                final_sample=Sample.from_json(doc.get("final_sample", [])),
                inference_consistent=doc.get("inference_consistent", True),
                update_count=doc.get("update_count", 0),
                budget_exhausted=doc.get("budget_exhausted", 0),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed train result: {exc}") from None


def converged_step(eval_curve):
    """Earliest eval step after which every recorded eval reward is 1."""
    step = None
    for s, r in eval_curve:
        if r == 1:
            if step is None:
                step = s
        else:
            step = None
    return step


def evaluate(H, q, bh, mdp, truth_rm, eplength):
    """Undiscounted reward of one greedy episode (lowest-index ties).

    The agent tracks ``H`` on the label estimates of ``bh``; rewards come from
    ``truth_rm``. Deterministic MDPs are cut short once the joint state
    repeats, since the rest of the episode then cycles.
    """
    if eplength <= 0:
        return 0.0
    est = bh.labels()
    pi = np.argmax(q, axis=2)
    s, v, vt = mdp.initial_state, H.initial, truth_rm.initial
    deterministic = mdp.deterministic
    seen = {}
    cum = [0.0]
    rng = None
    for t in range(eplength):
        if deterministic:
            key = (s, v, vt)
            t0 = seen.get(key)
            if t0 is not None:
                period = t - t0
                cycle = cum[t] - cum[t0]
                left = eplength - t
                return cum[t] + (left // period) * cycle + (cum[t0 + left % period] - cum[t0])
            seen[key] = t
            s2 = int(mdp.successor[s, pi[v, s]])
        else:
            if rng is None:
                rng = np.random.default_rng(0)
            s2 = int(np.searchsorted(mdp._cumulative[s, pi[v, s]], rng.random(), side="right"))
        vt, r = truth_rm.step(vt, mdp.ground_labels[s2])
        v = H.step(v, est[s2])[0]
        cum.append(cum[-1] + float(r))
        s = s2
    return cum[-1]


def initial_belief(prior, mdp, rng):
    props = mdp.propositions
    if isinstance(prior, str):
        if prior == "uniform":
            return Belief.uniform(mdp.n_states, props)
        if prior == "random":
            return Belief.random(mdp.n_states, props, rng)
        if prior == "truth":
            return Belief.from_labels(mdp.ground_labels, props)
        raise ValidationError(f"unknown prior {prior!r}")
    if isinstance(prior, Belief):
        return prior.copy()
    return Belief(prior, props)


def train(config, mdp, truth_rm, rng=None, *, prior=None, on_episode=None):
    """Train with belief updates, counterexample-driven inference and resets.

    ``prior`` overrides ``config.prior`` with an explicit :class:`Belief`.
    ``on_episode(episode, result)`` is called after every episode with its
    :class:`~rmperception.qrm.EpisodeResult`, including the visited states
    and actions.
    """
    rng = check_rng(config.seed if rng is None else rng)
    om = observation_model_from_config(config.observation, mdp, rng)
    bh = initial_belief(config.prior if prior is None else prior, mdp, rng)
    return _run(config, mdp, truth_rm, rng, om, bh, config.belief_updates_enabled, on_episode)


def train_baseline_jirp(config, mdp, truth_rm, labelling=None, rng=None):
    """Inference and q-learning on exact labels, without beliefs or resets."""
    rng = check_rng(config.seed if rng is None else rng)
    labels = mdp.ground_labels if labelling is None else [frozenset(x) for x in labelling]
    bh = Belief.from_labels(labels, mdp.propositions)
    om = observation_model_from_config({"kind": "accurate"}, mdp, rng)
    return _run(config, mdp, truth_rm, rng, om, bh, False)


def _run(config, mdp, truth_rm, rng, om, bh, updates, on_episode=None):
    params = EpisodeParams(
        eplength=config.eplength, epsilon=config.epsilon, alpha=config.alpha,
        early_stop=config.early_stop, belief_updates=updates, tie_break=config.tie_break,
    )
    if config.estimator == "frequentist":
        bj = FrequentistBelief(mdp.n_states, mdp.propositions)
        bj.table = bh.table.copy()
        belief_update = lambda b, s, obs: b.update(obs)  # noqa: E731
    else:
        bj = bh.copy()
        belief_update = None
    H = initial_hypothesis()
    q = new_qtable(1, mdp.n_states, mdp.n_actions)
    X = Sample(capacity=config.trace_capacity)
    # Smallest k not yet ruled out for the current X; k_max + 1 means UNSAT
    # or the conflict budget ran out, so X must lose a trace before a retry.
    k_floor = 1
    solver = get_backend(config.backend, config.conflict_budget)
    exhausted = 0
    eval_curve, belief_log, inference_log = [], [], []
    current = {"H": H, "q": q, "bh": bh}

    def on_step(step):
        if step % config.eval_every == 0:
            c = current
            eval_curve.append((step, evaluate(c["H"], c["q"], c["bh"], mdp, truth_rm,
                                              config.eplength)))

    counter = StepCounter(on_step=on_step)
    episode = 0
    while counter.value < config.total_steps:
        episode += 1
        if om.resample == "per_episode":
            om = om.resampled(rng)
        if params.eplength > config.total_steps - counter.value:
            params = EpisodeParams(**{**asdict(params),
                                      "eplength": config.total_steps - counter.value})
        res = qrm_episode_mod(H, q, bh, bj, mdp, om, params, rng, counter, truth_rm,
                              belief_update=belief_update, record_path=on_episode is not None)
        if on_episode is not None:
            on_episode(episode, res)
        bj = res.belief_j
        if H(res.labels) != res.rewards:
            if X.add(res.labels, res.rewards):
                k_floor = 1
            if k_floor > config.k_max:
                new = NoConsistentMachine
            else:
                try:
                    new = infer_minimal(X, config.k_max, solver, k_start=k_floor)
                except SolverError as exc:
                    logger.info("episode %d: inference gave up: %s", episode, exc)
                    new = NoConsistentMachine
                    exhausted += 1
            if new:
                k_floor = new.n_states
                H = new
                q = new_qtable(H.n_states, mdp.n_states, mdp.n_actions)
                inference_log.append((episode, H.n_states))
            else:
                k_floor = config.k_max + 1
                inference_log.append((episode, None))
        if updates and signif_change(bh, bj, config.gamma_d):
            belief_log.append((episode, counter.value, jsd(bh, bj)))
            H = initial_hypothesis()
            q = new_qtable(1, mdp.n_states, mdp.n_actions)
            X.clear()
            k_floor = 1
            bh = Belief(bj.table, bj.propositions)
        current.update(H=H, q=q, bh=bh)
    return TrainResult(
        final_hypothesis=H, final_q=q, final_belief=bh, eval_curve=eval_curve,
        belief_update_log=belief_log, inference_log=inference_log,
        converged_step=converged_step(eval_curve), total_steps=counter.value,
        episodes=episode, final_sample=X, inference_consistent=consistent_with(H, X),
        update_count=counter.updates, budget_exhausted=exhausted,
    )


class JointPerceptionLearner(BaseEstimator):
    """Estimator wrapper around :func:`train`.

    ``fit(mdp, truth_rm)`` trains; ``predict`` maps ``(machine_state,
    mdp_state)`` pairs to greedy actions; ``score`` is the greedy evaluation
    reward.
    """

    def __init__(self, total_steps=500_000, eplength=1000, epsilon=0.3, alpha=0.1,
                 gamma_d=1e-5, k_max=4, trace_capacity=20, eval_every=100, seed=0,
                 belief_updates_enabled=True, observation=None, prior="uniform",
                 early_stop=True, tie_break="random", estimator="bayes", backend="auto",
                 conflict_budget=2_000):
        self.total_steps = total_steps
        self.eplength = eplength
        self.epsilon = epsilon
        self.alpha = alpha
        self.gamma_d = gamma_d
        self.k_max = k_max
        self.trace_capacity = trace_capacity
        self.eval_every = eval_every
        self.seed = seed
        self.belief_updates_enabled = belief_updates_enabled
        self.observation = observation
        self.prior = prior
        self.early_stop = early_stop
        self.tie_break = tie_break
        self.estimator = estimator
        self.backend = backend
        self.conflict_budget = conflict_budget

    def _config(self):
        params = self.get_params()
        if params["observation"] is None:
            params["observation"] = {"kind": "accurate"}
        return TrainConfig(**params)

    def fit(self, mdp, truth_rm):
        self.result_ = train(self._config(), mdp, truth_rm)
        self.hypothesis_ = self.result_.final_hypothesis
        self.q_ = self.result_.final_q
        self.belief_ = self.result_.final_belief
        return self

    def _check_fitted(self):
        if not hasattr(self, "result_"):
            from sklearn.exceptions import NotFittedError

            raise NotFittedError("JointPerceptionLearner is not fitted yet")

    def predict(self, X):
        self._check_fitted()
        X = np.asarray(X, dtype=int).reshape(-1, 2)
        return np.argmax(self.q_[X[:, 0], X[:, 1]], axis=1)

    def score(self, mdp, truth_rm):
        self._check_fitted()
        return evaluate(self.hypothesis_, self.q_, self.belief_, mdp, truth_rm, self.eplength)
