import json

import pytest

from edgeplan.cli import main
from edgeplan.estimator import TraceConfig, gen_traces, traces_to_csv
from edgeplan.models import serialize_model
from edgeplan.simulator import make_testbed, serialize_testbed
from edgeplan.zoo import builtin_model


@pytest.fixture
def testbed_file(tmp_path):
    path = tmp_path / "testbed.json"
    path.write_text(serialize_testbed(make_testbed(4, 1e10, "ring", 5e8)))
    return path


@pytest.fixture
def model_file(tmp_path):
    path = tmp_path / "model.json"
    path.write_text(serialize_model(builtin_model("resnet18-like", 0.25)))
    return path


def run(args):
    return main([str(a) for a in args])


class TestCmdPlan:
    def test_plan_writes_document_and_exits_zero(self, tmp_path, model_file,
                                                 testbed_file, capsys):
        out = tmp_path / "plan.json"
        code = run(["plan", "--model", model_file, "--testbed", testbed_file,
                    "--out", out])
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["estimator"] == "oracle"
        assert len(doc["entries"]) == 18
        assert doc["entries"][-1]["mode"] == "t"
        printed = capsys.readouterr().out
        assert "predicted_seconds" in printed and "simulated_seconds" in printed

    def test_rerun_is_byte_identical(self, tmp_path, model_file, testbed_file):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert run(["plan", "--model", model_file, "--testbed", testbed_file,
                    "--out", a]) == 0
        assert run(["plan", "--model", model_file, "--testbed", testbed_file,
                    "--out", b]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_builtin_model_name_accepted(self, tmp_path, testbed_file):
        out = tmp_path / "plan.json"
        code = run(["plan", "--model", "bert-like", "--testbed", testbed_file,
                    "--out", out])
        assert code == 0
        assert len(json.loads(out.read_text())["entries"]) == 12

    def test_no_prune_same_plan(self, tmp_path, model_file, testbed_file):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        run(["plan", "--model", model_file, "--testbed", testbed_file, "--out", a])
        run(["plan", "--model", model_file, "--testbed", testbed_file,
             "--out", b, "--no-prune"])
        da, db = json.loads(a.read_text()), json.loads(b.read_text())
        assert da["entries"] == db["entries"]
        assert da["predicted_seconds"] == db["predicted_seconds"]
        assert da["evaluations"] <= db["evaluations"]

    def test_missing_s_model_exits_one_naming_flag(self, tmp_path, model_file,
                                                   testbed_file, capsys):
        i_model = tmp_path / "i.json"
        i_model.write_text("{}")
        code = run(["plan", "--model", model_file, "--testbed", testbed_file,
                    "--estimator", "learned", "--i-model", i_model,
                    "--out", tmp_path / "p.json"])
        assert code == 1
        assert "--s-model" in capsys.readouterr().err

    def test_bad_model_document_exits_one(self, tmp_path, testbed_file, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        code = run(["plan", "--model", bad, "--testbed", testbed_file,
                    "--out", tmp_path / "p.json"])
        assert code == 1
        assert "error" in capsys.readouterr().err

    def test_missing_file_exits_one(self, tmp_path, testbed_file):
        code = run(["plan", "--model", tmp_path / "nope.json",
                    "--testbed", testbed_file, "--out", tmp_path / "p.json"])
        assert code == 1


class TestCmdCompare:
    def test_compare_default_matrix_scores(self, tmp_path):
        out = tmp_path / "report.json"
        matrix = tmp_path / "matrix.json"
        matrix.write_text(json.dumps({"topologies": ["ring"],
                                      "bandwidths_bps": [1e9],
                                      "node_counts": [3, 4]}))
        code = run(["compare", "--model", "bert-like",
                    "--testbed-matrix", matrix, "--out", out])
        assert code == 0
        report = json.loads(out.read_text())
        assert len(report["cells"]) == 2
        for cell in report["cells"]:
            dpp = [s for s in cell["strategies"] if s["name"] == "dpp"][0]
            assert dpp["performance_score"] == 1.0

class TestCmdVerify:
    def test_trivial_pass(self, capsys):
        code = run(["verify", "--max-layers", 1, "--instances", 5,
                    "--seed", 3])
        assert code == 0
        out = capsys.readouterr().out
        assert "PASS" in out
        assert "evaluations" in out

    def test_max_layers_capped(self, capsys):
        code = run(["verify", "--max-layers", 9, "--instances", 1, "--seed", 1])
        assert code == 1
        assert "--max-layers" in capsys.readouterr().err


class TestCmdTraces:
    def test_gen_and_train_roundtrip(self, tmp_path, capsys):
        traces = tmp_path / "traces.csv"
        code = run(["gen-traces", "--samples", 400, "--seed", 2,
                    "--out", traces])
        assert code == 0
        lines = traces.read_text().splitlines()
        assert len(lines) == 1 + 800  # header + both kinds

        model_a = tmp_path / "i_a.json"
        code = run(["train", "--traces", traces, "--kind", "inference",
                    "--trees", 20, "--depth", 4, "--lr", 0.2,
                    "--min-leaf", 5, "--holdout", 0.25, "--out", model_a])
        assert code == 0
        summary = json.loads(capsys.readouterr().out.splitlines()[-1])
        assert {"median_relative_error", "p90_relative_error",
                "max_abs_error"} <= set(summary)

        model_b = tmp_path / "i_b.json"
        code = run(["train", "--traces", traces, "--kind", "inference",
                    "--trees", 20, "--depth", 4, "--lr", 0.2,
                    "--min-leaf", 5, "--holdout", 0.25, "--out", model_b])
        assert code == 0
        assert model_a.read_bytes() == model_b.read_bytes()

    def test_gen_traces_rerun_identical(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run(["gen-traces", "--samples", 100, "--seed", 4, "--out", a])
        run(["gen-traces", "--samples", 100, "--seed", 4, "--out", b])
        assert a.read_bytes() == b.read_bytes()

    def test_holdout_one_rejected(self, tmp_path, capsys):
        traces = tmp_path / "traces.csv"
        run(["gen-traces", "--samples", 50, "--seed", 2, "--out", traces])
        code = run(["train", "--traces", traces, "--kind", "sync",
                    "--trees", 5, "--holdout", 1.0, "--out", tmp_path / "m.json"])
        assert code == 1
        assert "holdout" in capsys.readouterr().err


class TestLearnedPlanEndToEnd:
    def test_learned_mode_plan(self, tmp_path, testbed_file):
        traces = tmp_path / "traces.csv"
        config = TraceConfig(models=("bert-like", "resnet18-like"), scale=0.5)
        traces.write_text(traces_to_csv(gen_traces(800, seed=6, config=config)))
        i_model, s_model = tmp_path / "i.json", tmp_path / "s.json"
        for kind, path in (("inference", i_model), ("sync", s_model)):
            assert run(["train", "--traces", traces, "--kind", kind,
                        "--trees", 30, "--depth", 5, "--lr", 0.15,
                        "--min-leaf", 4, "--holdout", 0.2, "--out", path]) == 0
        model = tmp_path / "model.json"
        model.write_text(serialize_model(builtin_model("resnet18-like", 0.5)))
        out = tmp_path / "plan.json"
        code = run(["plan", "--model", model, "--testbed", testbed_file,
                    "--estimator", "learned", "--i-model", i_model,
                    "--s-model", s_model, "--out", out])
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["estimator"] == "learned"
        assert doc["simulated_seconds"] > 0
