import json
import subprocess
import sys

import pytest

from homgraph.cli import main, read_features_csv
from homgraph.model import InputError, serialize_graph
from homgraph.pipeline import worker_count

from conftest import make_graph

GEN_FLAGS = ["--benign", "3", "--covert", "3", "--seed", "7"]


def run(*argv):
    return main(list(argv))


def gen_corpus(tmp_path, name="corpus", extra=()):
    out = tmp_path / name
    assert run("gen", *GEN_FLAGS, *extra, "--out", str(out)) == 0
    return out


def read_tree(root):
    return {p.name: p.read_bytes() for p in sorted(root.iterdir())}


class TestGen:
    def test_writes_documents_and_manifest(self, tmp_path):
        out = gen_corpus(tmp_path)
        files = sorted(p.name for p in out.iterdir())
        assert "manifest.json" in files
        assert len([f for f in files if f != "manifest.json"]) == 6
        manifest = json.loads((out / "manifest.json").read_text())
        assert len(manifest["graphs"]) == 6
        assert {g["label"] for g in manifest["graphs"]} == {"benign", "malware"}
        for entry in manifest["graphs"]:
            assert (out / entry["file"]).exists()

    def test_rerun_byte_identical(self, tmp_path):
        first = gen_corpus(tmp_path, "a")
        second = gen_corpus(tmp_path, "b")
        assert read_tree(first) == read_tree(second)

    def test_infeasible_spec_exit_2(self, tmp_path, capsys):
        code = run("gen", "--covert", "1", "--nodes", "10",
                   "--planted-size", "20", "--out", str(tmp_path / "x"))
        assert code == 2
        assert "error" in capsys.readouterr().err

    def test_missing_out_is_input_error(self):
        assert run("gen", "--benign", "1") == 2


class TestUsageErrors:
    def test_unknown_subcommand_exit_1(self):
        assert run("definitely-not-a-command") == 1

    def test_no_subcommand_exit_1(self):
        assert run() == 1

    def test_bad_flag_value_exit_1(self):
        assert run("gen", "--benign", "not-a-number") == 1

    def test_help_exit_0(self, capsys):
        assert run("--help") == 0
        assert "COMMAND" in capsys.readouterr().out

    def test_bad_flag_range_exit_2(self, tmp_path):
        corpus = gen_corpus(tmp_path)
        graph = next(p for p in sorted(corpus.iterdir()) if p.name.startswith("benign"))
        assert run("partition", str(graph), "--threshold", "-1") == 2
        assert run("covertness", str(graph), "--hops", "-2") == 2

    def test_internal_error_exit_3(self, tmp_path, monkeypatch):
        corpus = gen_corpus(tmp_path)
        graph = next(p for p in sorted(corpus.iterdir()) if p.name.startswith("benign"))

        def boom(*args, **kwargs):
            raise RuntimeError("synthetic fault")

        monkeypatch.setattr("homgraph.pipeline.analyze_graph", boom)
        assert run("partition", str(graph), "--out", str(tmp_path / "x.json")) == 3


class TestCommunities:
    def test_report_deterministic(self, tmp_path, capsys):
        corpus = gen_corpus(tmp_path)
        out1 = tmp_path / "comm1.json"
        out2 = tmp_path / "comm2.json"
        assert run("communities", str(corpus), "--out", str(out1)) == 0
        assert run("communities", str(corpus), "--out", str(out2)) == 0
        assert out1.read_bytes() == out2.read_bytes()
        report = json.loads(out1.read_text())
        algos = [row["algorithm"] for row in report["rows"]]
        assert algos == ["multilevel", "label_propagation"]
        assert report["graph_count"] == 6
        # wall-clock numbers stay out of the deterministic report file
        assert b"runtime" not in out1.read_bytes()
        assert "runtime" in capsys.readouterr().err


class TestPartition:
    def test_report_fields(self, tmp_path):
        corpus = gen_corpus(tmp_path)
        graph = next(p for p in sorted(corpus.iterdir()) if p.name.startswith("malware"))
        out = tmp_path / "part.json"
        assert run("partition", str(graph), "--out", str(out)) == 0
        report = json.loads(out.read_text())
        assert report["app_id"].startswith("malware")
        assert report["community_count"] >= 1
        assert report["sensitive_communities"]
        for sc in report["sensitive_communities"]:
            assert sc["verdict"] in ("suspicious", "filtered_benign")
            assert set(sc["coupling"]) == {"n_a", "n_b", "e_a", "e_b", "s", "c",
                                           "denominator"}

    def test_no_sensitive_nodes_reports_empty(self, tmp_path):
        g = make_graph(6, [(0, 1), (1, 2), (3, 4), (4, 5), (2, 3)], app_id="plain")
        path = tmp_path / "plain.json"
        path.write_text(serialize_graph(g))
        out = tmp_path / "part.json"
        assert run("partition", str(path), "--out", str(out)) == 0
        report = json.loads(out.read_text())
        assert report["sensitive_communities"] == []
        assert report["suspicious_nodes"] == []


class TestCovertness:
    def test_covert_graph_is_candidate(self, tmp_path):
        corpus = gen_corpus(tmp_path)
        graph = next(p for p in sorted(corpus.iterdir()) if p.name.startswith("malware"))
        out = tmp_path / "cov.json"
        assert run("covertness", str(graph), "--out", str(out)) == 0
        report = json.loads(out.read_text())
        assert report["covert_candidate"] is True
        assert report["category"] in ("[0,1%)", "[1,2%)")

    def test_benign_graph_not_candidate(self, tmp_path):
        corpus = gen_corpus(tmp_path)
        graph = next(p for p in sorted(corpus.iterdir()) if p.name.startswith("benign"))
        out = tmp_path / "cov.json"
        assert run("covertness", str(graph), "--out", str(out)) == 0
        assert json.loads(out.read_text())["covert_candidate"] is False

    def test_sensitive_free_graph_diagnostic_exit_2(self, tmp_path, capsys):
        g = make_graph(4, [(0, 1), (2, 3)], app_id="clean")
        path = tmp_path / "clean.json"
        path.write_text(serialize_graph(g))
        assert run("covertness", str(path)) == 2
        assert "no sensitive" in capsys.readouterr().err


class TestAnalyze:
    def test_outputs(self, tmp_path):
        corpus = gen_corpus(tmp_path)
        out = tmp_path / "analysis"
        assert run("analyze", str(corpus), "--out", str(out)) == 0
        samples = read_features_csv(out / "features.csv")
        assert len(samples) == 6
        assert [s.app_id for s in samples] == sorted(s.app_id for s in samples)
        partitions = json.loads((out / "partitions.json").read_text())
        assert [p["app_id"] for p in partitions] == [s.app_id for s in samples]
        by_label = {}
        for s in samples:
            by_label.setdefault(s.label, []).append(s)
        for s in by_label["benign"]:
            assert not s.vector.any(), "benign graphs should featurize to zero"
        for s in by_label["malware"]:
            assert s.vector.any()

    def test_covert_suspicious_nodes_cover_planted(self, tmp_path):
        corpus = gen_corpus(tmp_path)
        out = tmp_path / "analysis"
        assert run("analyze", str(corpus), "--out", str(out)) == 0
        manifest = json.loads((corpus / "manifest.json").read_text())
        planted = {
            g["app_id"]: set(g["planted_nodes"])
            for g in manifest["graphs"]
            if g["label"] == "malware"
        }
        partitions = json.loads((out / "partitions.json").read_text())
        for report in partitions:
            if report["app_id"] not in planted:
                continue
            susp = set(report["suspicious_nodes"])
            expected = planted[report["app_id"]]
            jaccard = len(susp & expected) / len(susp | expected)
            assert jaccard >= 0.9

    def test_malformed_file_skipped(self, tmp_path, capsys):
        corpus = gen_corpus(tmp_path)
        (corpus / "broken.json").write_text("{not json")
        out = tmp_path / "analysis"
        assert run("analyze", str(corpus), "--out", str(out)) == 0
        assert len(read_features_csv(out / "features.csv")) == 6

    def test_nothing_readable_exit_2(self, tmp_path):
        bad = tmp_path / "junk"
        bad.mkdir()
        (bad / "a.json").write_text("{")
        assert run("analyze", str(bad), "--out", str(tmp_path / "o")) == 2

    def test_deterministic(self, tmp_path):
        corpus = gen_corpus(tmp_path)
        out1, out2 = tmp_path / "a1", tmp_path / "a2"
        assert run("analyze", str(corpus), "--out", str(out1)) == 0
        assert run("analyze", str(corpus), "--out", str(out2)) == 0
        assert read_tree(out1) == read_tree(out2)


@pytest.fixture(scope="module")
def eval_corpus(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("eval")
    out = tmp / "corpus"
    assert run("gen", "--benign", "12", "--covert", "12", "--seed", "3",
               "--out", str(out)) == 0
    return out


class TestEval:
    def test_report_schema(self, eval_corpus, tmp_path):
        out = tmp_path / "report.json"
        assert run("eval", str(eval_corpus), "--folds", "4", "--out", str(out)) == 0
        report = json.loads(out.read_text())
        assert set(report["report"]["macro"]) == {
            "TPR", "FNR", "TNR", "FPR", "A", "P", "R", "F1"
        }
        assert set(report["report"]["micro_counts"]) == {"TP", "TN", "FP", "FN"}
        assert report["samples"] == 24

    def test_deterministic(self, eval_corpus, tmp_path):
        out1, out2 = tmp_path / "r1.json", tmp_path / "r2.json"
        assert run("eval", str(eval_corpus), "--folds", "4", "--out", str(out1)) == 0
        assert run("eval", str(eval_corpus), "--folds", "4", "--out", str(out2)) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_sweep_rows(self, eval_corpus, tmp_path):
        out = tmp_path / "sweep.json"
        assert run("eval", str(eval_corpus), "--folds", "4",
                   "--sweep", "1,2,3,4,5", "--out", str(out)) == 0
        report = json.loads(out.read_text())
        assert [row["threshold"] for row in report["sweep"]] == [1, 2, 3, 4, 5]

    def test_analyze_then_eval_equals_one_shot(self, eval_corpus, tmp_path):
        analysis = tmp_path / "analysis"
        assert run("analyze", str(eval_corpus), "--out", str(analysis)) == 0
        via_features = tmp_path / "via_features.json"
        assert run("eval", "--features", str(analysis / "features.csv"),
                   "--folds", "4", "--out", str(via_features)) == 0
        one_shot = tmp_path / "one_shot.json"
        assert run("eval", str(eval_corpus), "--folds", "4", "--out", str(one_shot)) == 0
        assert via_features.read_bytes() == one_shot.read_bytes()

    def test_features_and_paths_mutually_exclusive(self, eval_corpus, tmp_path):
        assert run("eval", str(eval_corpus), "--features", "x.csv") == 2
        assert run("eval") == 2

    def test_sweep_requires_paths(self, eval_corpus, tmp_path):
        analysis = tmp_path / "analysis2"
        assert run("analyze", str(eval_corpus), "--out", str(analysis)) == 0
        assert run("eval", "--features", str(analysis / "features.csv"),
                   "--sweep", "1,3") == 2


class TestCrossProcessDeterminism:
    def test_gen_identical_across_hash_seeds(self, tmp_path):
        outputs = []
        for tag, hash_seed in (("a", "1"), ("b", "99")):
            out = tmp_path / tag
            env = {"PYTHONHASHSEED": hash_seed, "PATH": "/usr/bin:/bin"}
            proc = subprocess.run(
                [sys.executable, "-m", "homgraph.cli", "gen", "--benign", "2",
                 "--covert", "2", "--seed", "4", "--out", str(out)],
                capture_output=True, env=env,
            )
            assert proc.returncode == 0, proc.stderr.decode()
            outputs.append(read_tree(out))
        assert outputs[0] == outputs[1]


class TestAlgorithmFlag:
    def test_label_propagation_pipeline(self, tmp_path):
        corpus = gen_corpus(tmp_path)
        out = tmp_path / "lp"
        assert run("analyze", str(corpus), "--algo", "label_propagation",
                   "--out", str(out)) == 0
        assert len(read_features_csv(out / "features.csv")) == 6

    def test_unknown_algorithm_usage_error(self, tmp_path):
        corpus = gen_corpus(tmp_path)
        assert run("analyze", str(corpus), "--algo", "bogus",
                   "--out", str(tmp_path / "x")) == 1


class TestWorkerPool:
    def test_env_var_caps_workers(self, monkeypatch):
        monkeypatch.setenv("HOMGRAPH_WORKERS", "2")
        assert worker_count() == 2

    def test_default_without_env(self, monkeypatch):
        monkeypatch.delenv("HOMGRAPH_WORKERS", raising=False)
        assert worker_count() >= 1

    def test_invalid_env_rejected(self, monkeypatch):
        monkeypatch.setenv("HOMGRAPH_WORKERS", "many")
        with pytest.raises(InputError):
            worker_count()
        monkeypatch.setenv("HOMGRAPH_WORKERS", "0")
        with pytest.raises(InputError):
            worker_count()
