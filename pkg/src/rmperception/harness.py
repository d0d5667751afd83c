"""Multi-seed experiment batches and their aggregate statistics."""
from __future__ import annotations

import csv
import json
import math
import platform
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .exceptions import ValidationError
from .jirp import TrainConfig, train
from .mdp import fixture_text, layout_from_dict, load_layout, load_layout_file
from .reward_machine import load_rm_file, parse_rm

BUILTIN_PREFIX = "builtin:"
BUILTIN_LAYOUTS = {"office": "office.json", "micro2x2": "micro2x2.json"}
BUILTIN_RMS = {"coffee": "coffee_rm.json", "phi1": "phi1_rm.json", "phi2": "phi2_rm.json",
               "goal": "goal_rm.json"}

# Named observation settings; each maps to (observation config, updates, prior).
SETTINGS = {
    "accurate": ({"kind": "accurate"}, True, "uniform"),
    "random": ({"kind": "range_uniform", "low": 0.1, "high": 0.9,
                "resample": "per_episode"}, True, "uniform"),
    "random2": ({"kind": "range_uniform", "low": 0.4, "high": 0.5,
                 "resample": "per_episode"}, True, "uniform"),
    "no_update": ({"kind": "accurate"}, False, "random"),
}
PERCENTILES = (10, 25, 50, 75, 90)


def _resolve(ref, base, builtins, kind):
    if isinstance(ref, dict):
        return ref
    if not isinstance(ref, str):
        raise ValidationError(f"{kind} reference must be a path, builtin name or object")
    if ref.startswith(BUILTIN_PREFIX):
        name = ref[len(BUILTIN_PREFIX):]
        if name not in builtins:
            raise ValidationError(f"unknown builtin {kind} {name!r}; have {sorted(builtins)}")
        return ref
    path = Path(ref)
    if not path.is_absolute() and base is not None:
        path = Path(base) / path
    if not path.exists():
        raise ValidationError(f"{kind} file not found: {path}")
    return str(path)


def _load_layout(ref):
    if isinstance(ref, dict):
        return layout_from_dict(ref)
    if ref.startswith(BUILTIN_PREFIX):
        name = ref[len(BUILTIN_PREFIX):]
        return load_layout(fixture_text(BUILTIN_LAYOUTS[name]), name=name)
    return load_layout_file(ref)


def _load_rm(ref):
    if isinstance(ref, str) and ref.startswith(BUILTIN_PREFIX):
        return parse_rm(fixture_text(BUILTIN_RMS[ref[len(BUILTIN_PREFIX):]]))
    if isinstance(ref, dict):
        from .reward_machine import rm_from_dict

        return rm_from_dict(ref)
    return load_rm_file(ref)


def _layout_name(ref, i):
    if isinstance(ref, dict):
        return f"layout{i}"
    if ref.startswith(BUILTIN_PREFIX):
        return ref[len(BUILTIN_PREFIX):]
    return Path(ref).stem


@dataclass
class ExperimentSpec:
    """A batch of training runs: every layout crossed with every seed.

    Layout and machine references are file paths (relative to ``base_dir``),
    ``builtin:<name>`` fixtures, or inline documents.
    """

    layouts: list
    rm: object
    train: dict = field(default_factory=dict)
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    out: str = "results"
    setting: str | None = None
    base_dir: str | None = None

    def __post_init__(self):
        if not self.layouts:
            raise ValidationError("an experiment needs at least one layout")
        if not self.seeds:
            raise ValidationError("seeds must be nonempty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValidationError("seeds must be distinct")
        if self.setting is not None and self.setting not in SETTINGS:
            raise ValidationError(f"unknown setting {self.setting!r}; have {sorted(SETTINGS)}")
        self.layouts = [_resolve(r, self.base_dir, BUILTIN_LAYOUTS, "layout")
                        for r in self.layouts]
        self.rm = _resolve(self.rm, self.base_dir, BUILTIN_RMS, "reward machine")
        if not isinstance(self.train, dict):
            raise ValidationError("'train' must be an object")
        self.config(self.seeds[0])

    def config(self, seed):
        doc = dict(self.train)
        if self.setting is not None:
            obs, updates, prior = SETTINGS[self.setting]
            doc.setdefault("observation", obs)
            doc.setdefault("belief_updates_enabled", updates)
            doc.setdefault("prior", prior)
        doc["seed"] = seed
        return TrainConfig.from_dict(doc)

    def runs(self):
        """``(run_id, layout_ref, seed)`` triples in a fixed order."""
        out = []
        for i, ref in enumerate(self.layouts):
            name = _layout_name(ref, i)
            for seed in self.seeds:
                out.append((f"{i:03d}-{name}-s{seed}", ref, seed))
        return out

    @classmethod
    def from_dict(cls, doc, base_dir=None):
        if not isinstance(doc, dict):
            raise ValidationError("experiment spec must be a JSON object")
        allowed = {"layouts", "rm", "train", "seeds", "out", "setting"}
        unknown = set(doc) - allowed
        if unknown:
            raise ValidationError(f"unknown experiment keys: {sorted(unknown)}")
        for key in ("layouts", "rm"):
            if key not in doc:
                raise ValidationError(f"experiment spec needs {key!r}")
        return cls(base_dir=base_dir, **doc)

    @classmethod
    def from_file(cls, path):
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: line {exc.lineno}: {exc.msg}") from None
        except OSError as exc:
            raise ValidationError(f"cannot read spec: {exc}") from None
        return cls.from_dict(doc, base_dir=str(path.parent))


def _one_run(args):
    run_id, layout_ref, rm_ref, config = args
    try:
        mdp = _load_layout(layout_ref)
        truth = _load_rm(rm_ref)
        result = train(config, mdp, truth)
        return run_id, result.to_dict(), None
    except Exception:  # noqa: BLE001 - recorded per run, batch continues
        return run_id, None, traceback.format_exc()


def nearest_rank(values, pct):
    """Nearest-rank percentile: the ``ceil(pct/100 * n)``-th smallest value."""
    xs = sorted(values)
    if not xs:
        raise ValidationError("percentile of an empty list")
    rank = max(1, math.ceil(pct / 100.0 * len(xs)))
    return xs[rank - 1]


def percentile_curves(tables, percentiles=PERCENTILES):
    """Per-step nearest-rank percentiles of eval rewards across runs.

    ``tables`` maps run ids (or positions) to lists of ``(step, reward)``.
    """
    curves = list(tables.values()) if isinstance(tables, dict) else list(tables)
    if not curves:
        return []
    grid = [s for s, _ in curves[0]]
    for c in curves[1:]:
        if [s for s, _ in c] != grid:
            raise ValidationError("runs do not share the same evaluation grid")
    rows = []
    for i, step in enumerate(grid):
        values = [c[i][1] for c in curves]
        rows.append((step,) + tuple(nearest_rank(values, p) for p in percentiles))
    return rows


def summarize(results, total_steps=None):
    """Table-style summary over finished runs (``TrainResult`` or their dicts).

    LP, MP and UP are the step at which the 25th, 50th and 75th percentile
    reward curves settle, i.e. the 75th, 50th and 25th percentile of the
    per-run convergence step. Runs that never converge count as
    ``total_steps``.
    """
    docs = [r.to_dict() if hasattr(r, "to_dict") else r for r in results]
    if not docs:
        raise ValidationError("cannot summarize an empty batch")
    steps = []
    for d in docs:
        cap = total_steps if total_steps is not None else d["total_steps"]
        steps.append(d["converged_step"] if d["converged_step"] is not None else cap)
    ok = sum(bool(d["inference_consistent"]) for d in docs)
    bu = [len(d["belief_update_log"]) for d in docs]
    return {
        "LP": nearest_rank(steps, 75),
        "MP": nearest_rank(steps, 50),
        "UP": nearest_rank(steps, 25),
        "RS": ok / len(docs),
        "RS_count": f"{ok}/{len(docs)}",
        "BU": float(np.mean(bu)),
        "converged": sum(d["converged_step"] is not None for d in docs),
        "runs": len(docs),
    }


def run_experiment(spec, out=None, jobs=1):
    """Execute every run of ``spec`` and write the artifact directory.

    Returns ``(out_dir, summary)``. Per-run results go to ``runs/<id>.json``;
    ``eval.csv``, ``belief.csv``, ``curves.csv`` and ``summary.json`` are
    deterministic for fixed seeds; wall-clock data lives in ``metadata.json``.
    """
    out_dir = Path(out if out is not None else spec.out)
    if not out_dir.is_absolute() and out is None and spec.base_dir is not None:
        out_dir = Path(spec.base_dir) / out_dir
    (out_dir / "runs").mkdir(parents=True, exist_ok=True)
    started = time.time()
    tasks = [(rid, ref, spec.rm, spec.config(seed)) for rid, ref, seed in spec.runs()]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_one_run, tasks))
    else:
        outcomes = [_one_run(t) for t in tasks]
    finished, failures = [], []
    for run_id, doc, err in outcomes:
        if err is not None:
            failures.append({"run_id": run_id, "error": err})
            (out_dir / "runs" / f"{run_id}.error.txt").write_text(err)
            continue
        finished.append((run_id, doc))
        (out_dir / "runs" / f"{run_id}.json").write_text(json.dumps(doc, sort_keys=True))
    with open(out_dir / "eval.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run_id", "step", "reward"])
        for run_id, doc in finished:
            for step, reward in doc["eval_curve"]:
                w.writerow([run_id, step, repr(float(reward))])
    with open(out_dir / "belief.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run_id", "episode", "step", "jsd"])
        for run_id, doc in finished:
            for episode, step, value in doc["belief_update_log"]:
                w.writerow([run_id, episode, step, repr(float(value))])
    curves = []
    if finished:
        try:
            curves = percentile_curves({rid: d["eval_curve"] for rid, d in finished})
        except ValidationError:
            curves = []
    with open(out_dir / "curves.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step"] + [f"p{p}" for p in PERCENTILES])
        for row in curves:
            w.writerow([row[0]] + [repr(float(x)) for x in row[1:]])
    total = spec.config(spec.seeds[0]).total_steps
    summary = summarize([d for _, d in finished], total) if finished else {}
    summary["failed"] = [f["run_id"] for f in failures]
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    meta = {
        "started": started, "finished": time.time(), "jobs": jobs,
        "python": platform.python_version(), "version": __version__,
    }
    (out_dir / "metadata.json").write_text(json.dumps(meta, indent=2) + "\n")
    return out_dir, summary
