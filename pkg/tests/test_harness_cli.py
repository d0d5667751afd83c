import json

import pytest

from rmperception import harness
from rmperception.cli import main
from rmperception.exceptions import ValidationError
from rmperception.harness import (
    ExperimentSpec, nearest_rank, percentile_curves, run_experiment, summarize,
)

TINY = {"total_steps": 1000, "eplength": 100, "eval_every": 100}


def spec_doc(**kw):
    return {"layouts": ["builtin:office"], "rm": "builtin:coffee", "train": dict(TINY),
            "seeds": [0], **kw}


def fake_result(converged, n_updates=0, total=500_000, consistent=True):
    return {"converged_step": converged, "total_steps": total,
            "inference_consistent": consistent, "belief_update_log": [[1, 1, 0.1]] * n_updates}


class TestPercentiles:
    def test_nearest_rank(self):
        xs = [0, 0, 1, 1, 1]
        assert (nearest_rank(xs, 25), nearest_rank(xs, 50), nearest_rank(xs, 75)) == (0, 1, 1)

    def test_curves(self):
        runs = [[(100, r)] for r in (0, 0, 1, 1, 1)]
        assert percentile_curves(runs) == [(100, 0, 0, 1, 1, 1)]

    def test_single_run(self):
        assert percentile_curves({"a": [(100, 0.5), (200, 1)]}) == [
            (100,) + (0.5,) * 5, (200,) + (1,) * 5]

    def test_mismatched_grid(self):
        with pytest.raises(ValidationError):
            percentile_curves([[(100, 1)], [(200, 1)]])

    def test_empty(self):
        with pytest.raises(ValidationError):
            nearest_rank([], 50)


class TestSummary:
    def test_all_converge(self):
        s = summarize([fake_result(100) for _ in range(5)])
        assert s["LP"] == s["MP"] == s["UP"] == 100 and s["RS"] == 1.0

    def test_none_converge(self):
        s = summarize([fake_result(None) for _ in range(5)], 500_000)
        assert s["LP"] == 500_000 and s["converged"] == 0

    def test_bu_mean(self):
        assert summarize([fake_result(1, n) for n in (1, 2, 3)])["BU"] == 2.0

    def test_ordering(self):
        s = summarize([fake_result(c) for c in (100, 200, 300, None, 50)], 1000)
        assert s["LP"] >= s["MP"] >= s["UP"]
        assert (s["LP"], s["MP"], s["UP"]) == (300, 200, 100)

    def test_rs(self):
        s = summarize([fake_result(1, consistent=c) for c in (True, False, True, True)])
        assert s["RS"] == 0.75 and s["RS_count"] == "3/4"

    def test_empty(self):
        with pytest.raises(ValidationError):
            summarize([])


class TestSpec:
    def test_missing_layout(self, tmp_path):
        with pytest.raises(ValidationError):
            ExperimentSpec.from_dict(spec_doc(layouts=["nowhere.json"]), base_dir=str(tmp_path))

    @pytest.mark.parametrize("bad", [{"seeds": []}, {"seeds": [1, 1]}, {"setting": "foggy"},
                                     {"layouts": []}, {"train": {"eplength": 0}},
                                     {"colour": "blue"}])
    def test_invalid(self, bad):
        with pytest.raises(ValidationError):
            ExperimentSpec.from_dict(spec_doc(**bad))

    def test_settings(self):
        spec = ExperimentSpec.from_dict(spec_doc(setting="no_update"))
        cfg = spec.config(3)
        assert cfg.seed == 3 and not cfg.belief_updates_enabled and cfg.prior == "random"
        cfg = ExperimentSpec.from_dict(spec_doc(setting="random2")).config(0)
        assert (cfg.observation["low"], cfg.observation["high"]) == (0.4, 0.5)

    def test_run_ids(self):
        spec = ExperimentSpec.from_dict(spec_doc(seeds=[4, 7]))
        assert [r[0] for r in spec.runs()] == ["000-office-s4", "000-office-s7"]


class TestRunExperiment:
    def test_artifacts(self, tmp_path):
        spec = ExperimentSpec.from_dict(spec_doc())
        out, summary = run_experiment(spec, out=tmp_path / "res")
        rows = (out / "eval.csv").read_text().splitlines()
        assert rows[0] == "run_id,step,reward" and len(rows) == 11
        assert (out / "belief.csv").read_text().splitlines()[0] == "run_id,episode,step,jsd"
        assert (out / "runs" / "000-office-s0.json").exists()
        assert json.loads((out / "summary.json").read_text()) == summary
        assert summary["failed"] == [] and summary["runs"] == 1

    def test_failure_is_recorded(self, tmp_path, monkeypatch):
        real = harness.train

        def flaky(config, mdp, truth):
            if config.seed == 1:
                raise RuntimeError("boom")
            return real(config, mdp, truth)

        monkeypatch.setattr(harness, "train", flaky)
        spec = ExperimentSpec.from_dict(spec_doc(seeds=[0, 1]))
        out, summary = run_experiment(spec, out=tmp_path)
        assert summary["failed"] == ["000-office-s1"] and summary["runs"] == 1
        assert "boom" in (out / "runs" / "000-office-s1.error.txt").read_text()

    def test_byte_identical(self, tmp_path):
        spec = ExperimentSpec.from_dict(spec_doc(seeds=[0, 1], setting="random"))
        a, _ = run_experiment(spec, out=tmp_path / "a")
        b, _ = run_experiment(spec, out=tmp_path / "b", jobs=2)
        for name in ("eval.csv", "belief.csv", "curves.csv", "summary.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestCli:
    def test_train(self, tmp_path, capsys):
        path = tmp_path / "spec.json"
        path.write_text(json.dumps(spec_doc(out="res")))
        code, out, _ = run_cli(capsys, "train", "--spec", str(path))
        assert code == 0 and (tmp_path / "res" / "eval.csv").exists()
        assert json.loads(out)["summary"]["runs"] == 1

    def test_train_bad_spec(self, tmp_path, capsys):
        path = tmp_path / "spec.json"
        path.write_text("{not json")
        code, _, err = run_cli(capsys, "train", "--spec", str(path))
        assert code == 1 and "line 1" in err

    def test_train_failure_exit(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setattr(harness, "train", lambda *a: 1 / 0)
        path = tmp_path / "spec.json"
        path.write_text(json.dumps(spec_doc()))
        code, _, _ = run_cli(capsys, "train", "--spec", str(path), "--out", str(tmp_path / "o"))
        assert code == 2

    def test_infer(self, tmp_path, capsys):
        path = tmp_path / "sample.json"
        path.write_text(json.dumps([
            {"labels": [[], ["c"]], "rewards": [0, 0]},
            {"labels": [["c"], ["o"]], "rewards": [0, 1]},
            {"labels": [[], ["o"]], "rewards": [0, 0]},
        ]))
        code, out, _ = run_cli(capsys, "infer", "--sample", str(path), "--kmax", "4")
        doc = json.loads(out)
        assert code == 0 and doc["result"] == "machine" and doc["machine"]["states"] == 2

    def test_infer_no_machine(self, tmp_path, capsys):
        path = tmp_path / "sample.json"
        path.write_text(json.dumps([{"labels": [["c"]], "rewards": [0]},
                                    {"labels": [["c"]], "rewards": [1]}]))
        code, out, _ = run_cli(capsys, "infer", "--sample", str(path), "--kmax", "2")
        assert code == 0 and json.loads(out)["result"] == "NoConsistentMachine"

    def test_infer_bad_sample(self, tmp_path, capsys):
        path = tmp_path / "sample.json"
        path.write_text(json.dumps([{"labels": [["c"]], "rewards": [0, 1]}]))
        assert run_cli(capsys, "infer", "--sample", str(path), "--kmax", "2")[0] == 1

    def test_usage_error(self, capsys):
        assert run_cli(capsys, "infer", "--kmax", "0")[0] == 1
        assert run_cli(capsys, "frobnicate")[0] == 1

    def test_oracle_vi(self, capsys):
        code, out, _ = run_cli(capsys, "oracle", "vi", "--layout", "builtin:office",
                               "--rm", "builtin:coffee")
        doc = json.loads(out)
        assert code == 0 and doc["value"] == pytest.approx(0.729)
        assert doc["shortest_reward_distance"] == 4

    def test_oracle_product(self, capsys):
        code, out, _ = run_cli(capsys, "oracle", "product", "--layout", "builtin:micro2x2",
                               "--rm", "builtin:goal")
        assert code == 0 and json.loads(out)["n_states"] > 0

    def test_oracle_equiv(self, capsys):
        code, out, _ = run_cli(capsys, "oracle", "equiv", "--layout", "builtin:office",
                               "--a", "builtin:coffee", "--b", "builtin:coffee")
        assert code == 0 and json.loads(out)["equivalent"] is True

    def test_oracle_attainable(self, capsys):
        code, out, _ = run_cli(capsys, "oracle", "attainable", "--layout", "builtin:office",
                               "--m", "1")
        assert code == 0 and json.loads(out) == {"count": 3, "sequences": [[], [[]], [["c"]]]}

    def test_unknown_builtin(self, capsys):
        code, _, err = run_cli(capsys, "oracle", "vi", "--layout", "builtin:mars",
                               "--rm", "builtin:coffee")
        assert code == 1 and "mars" in err

    def test_eval(self, tmp_path, capsys):
        spec = ExperimentSpec.from_dict(spec_doc(train={**TINY, "total_steps": 20_000,
                                                        "early_stop": False}, seeds=[1]))
        out, _ = run_experiment(spec, out=tmp_path)
        result = out / "runs" / "000-office-s1.json"
        code, text, _ = run_cli(capsys, "eval", "--result", str(result),
                                "--layout", "builtin:office", "--rm", "builtin:coffee")
        doc = json.loads(text)
        assert code == 0 and doc["reward"] == 1 and doc["discounted_return"] == pytest.approx(0.729)

    def test_eval_layout_mismatch(self, tmp_path, capsys):
        out, _ = run_experiment(ExperimentSpec.from_dict(spec_doc()), out=tmp_path)
        code, _, _ = run_cli(capsys, "eval", "--result", str(out / "runs" / "000-office-s0.json"),
                             "--layout", "builtin:micro2x2", "--rm", "builtin:coffee")
        assert code == 1
