"""Command-line interface.

Exit codes: 0 success, 1 invalid input, 2 runtime failure.
"""
import json
import logging
import sys
from pathlib import Path

import click

from .exceptions import DomainError, TractabilityError, ValidationError

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _echo_json(doc):
    click.echo(json.dumps(doc, indent=2, sort_keys=True))


def _layout(ref):
    from .harness import BUILTIN_LAYOUTS, _load_layout, _resolve

    return _load_layout(_resolve(ref, None, BUILTIN_LAYOUTS, "layout"))


def _rm(ref):
    from .harness import BUILTIN_RMS, _load_rm, _resolve

    return _load_rm(_resolve(ref, None, BUILTIN_RMS, "reward machine"))


def _label_doc(label):
    return sorted(label)


@click.group()
@click.option("-v", "--verbose", count=True, help="Increase log verbosity.")
def cli(verbose):
    """Joint reward-machine inference and perception-aware q-learning."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@cli.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(dir_okay=False),
              help="Experiment spec JSON.")
@click.option("--jobs", default=1, show_default=True, type=click.IntRange(min=1))
@click.option("--out", default=None, type=click.Path(file_okay=False),
              help="Output directory (overrides the experiment file).")
def train(spec_path, jobs, out):
    """Run every (layout, seed) pair of an experiment spec."""
    from .harness import ExperimentSpec, run_experiment

    spec = ExperimentSpec.from_file(spec_path)
    out_dir, summary = run_experiment(spec, out=out, jobs=jobs)
    _echo_json({"out": str(out_dir), "summary": summary})
    return EXIT_RUNTIME if summary.get("failed") else EXIT_OK


@cli.command()
@click.option("--sample", "sample_path", required=True, type=click.Path(dir_okay=False))
@click.option("--kmax", required=True, type=click.IntRange(min=1))
@click.option("--backend", default="auto", show_default=True,
              help="auto, cdcl, pysat[:name] or external:<command>.")
def infer(sample_path, kmax, backend):
    """Infer a minimal reward machine consistent with a trace file."""
    from .inference import Sample, infer_minimal

    try:
        doc = json.loads(Path(sample_path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"line {exc.lineno}: {exc.msg}") from None
    except OSError as exc:
        raise ValidationError(str(exc)) from None
    sample = Sample.from_json(doc)
    rm = infer_minimal(sample, kmax, backend)
    if not rm:
        _echo_json({"result": "NoConsistentMachine", "k_max": kmax})
        return EXIT_OK
    props = sorted({p for lab in sample.alphabet() for p in lab})
    _echo_json({"result": "machine", "machine": rm.to_document(props)})
    return EXIT_OK


@cli.group()
def oracle():
    """Verification tools (product MDP, value iteration, attainability)."""


_layout_opt = click.option("--layout", required=True, help="Layout file or builtin:<name>.")


@oracle.command("product")
@_layout_opt
@click.option("--rm", "rm_ref", required=True, help="Machine file or builtin:<name>.")
def oracle_product(layout, rm_ref):
    """Reachable states of the layout x machine product."""
    from .oracle import product_mdp

    p = product_mdp(_layout(layout), _rm(rm_ref))
    _echo_json({"n_states": p.n_states, "states": [list(x) for x in p.states]})
    return EXIT_OK


@oracle.command("vi")
@_layout_opt
@click.option("--rm", "rm_ref", required=True)
@click.option("--tol", default=1e-9, show_default=True, type=float)
def oracle_vi(layout, rm_ref, tol):
    """Optimal value at the initial product state."""
    from .oracle import product_mdp, shortest_reward_distance, value_iteration

    mdp, rm = _layout(layout), _rm(rm_ref)
    p = product_mdp(mdp, rm)
    V, pi = value_iteration(p, tol)
    _echo_json({
        "value": float(V[p.initial]),
        "policy": {f"{s},{v}": mdp.actions[int(a)] for (s, v), a in zip(p.states, pi)},
        "shortest_reward_distance": shortest_reward_distance(mdp, rm),
    })
    return EXIT_OK


@oracle.command("equiv")
@_layout_opt
@click.option("--a", "rm_a", required=True)
@click.option("--b", "rm_b", required=True)
@click.option("--m", default=None, type=click.IntRange(min=0),
              help="Sequence length bound (default: unbounded).")
def oracle_equiv(layout, rm_a, rm_b, m):
    """Whether two machines agree on every attainable label sequence."""
    from .oracle import equivalent_on_attainable

    result = equivalent_on_attainable(_rm(rm_a), _rm(rm_b), _layout(layout), None, m)
    _echo_json({"equivalent": result})
    return EXIT_OK


@oracle.command("attainable")
@_layout_opt
@click.option("--m", required=True, type=click.IntRange(min=0))
def oracle_attainable(layout, m):
    """List the label sequences of length at most m."""
    from .inference.sample import label_key
    from .oracle import attainable_label_sequences

    seqs = attainable_label_sequences(_layout(layout), None, m)
    ordered = sorted(seqs, key=lambda seq: (len(seq), [label_key(x) for x in seq]))
    _echo_json({"count": len(ordered), "sequences": [[_label_doc(x) for x in s] for s in ordered]})
    return EXIT_OK


@cli.command("eval")
@click.option("--result", "result_path", required=True, type=click.Path(dir_okay=False))
@_layout_opt
@click.option("--rm", "rm_ref", required=True)
@click.option("--eplength", default=1000, show_default=True, type=click.IntRange(min=0))
def eval_cmd(result_path, layout, rm_ref, eplength):
    """Greedy evaluation of a stored training result."""
    from .jirp import TrainResult, evaluate
    from .oracle import policy_return

    try:
        doc = json.loads(Path(result_path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"line {exc.lineno}: {exc.msg}") from None
    except OSError as exc:
        raise ValidationError(str(exc)) from None
    res = TrainResult.from_dict(doc)
    mdp, rm = _layout(layout), _rm(rm_ref)
    if res.final_q.shape[1:] != (mdp.n_states, mdp.n_actions):
        raise ValidationError("stored q-table does not match the layout")
    H, q, bh = res.final_hypothesis, res.final_q, res.final_belief
    reward = evaluate(H, q, bh, mdp, rm, eplength)
    ret, _ = policy_return(mdp, H, q, bh, rm, horizon=max(eplength, 1))
    _echo_json({"reward": reward, "discounted_return": ret})
    return EXIT_OK


def main(argv=None):
    try:
        code = cli.main(args=argv, prog_name="rmperception", standalone_mode=False)
    except click.UsageError as exc:
        exc.show()
        return EXIT_INVALID
    except click.ClickException as exc:
        exc.show()
        return EXIT_INVALID
    except click.exceptions.Abort:
        return EXIT_RUNTIME
    except (ValidationError, DomainError, TractabilityError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        click.echo(f"runtime failure: {type(exc).__name__}: {exc}", err=True)
        return EXIT_RUNTIME
    return code if isinstance(code, int) else EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
