import json

import numpy as np
import pytest

from ddcs_eval.cli import main
from ddcs_eval.data import FeatureSet, LogitsTable, load_feature_set, save_feature_set, save_labels, save_logits


@pytest.fixture
def pair(tmp_path):
    rng = np.random.default_rng(0)
    tar = FeatureSet(rng.standard_normal((20, 4)), labels=np.arange(20) % 4)
    rec = FeatureSet(rng.standard_normal((15, 4)), labels=np.arange(15) % 5)
    paths = {
        "tar": tmp_path / "tar.fmat",
        "rec": tmp_path / "rec.csv",
        "tar_labels": tmp_path / "tar_labels.csv",
        "rec_labels": tmp_path / "rec_labels.csv",
    }
    save_feature_set(tar, paths["tar"])
    save_feature_set(rec, paths["rec"])
    save_labels(tar, paths["tar_labels"])
    save_labels(rec, paths["rec_labels"])
    return {k: str(v) for k, v in paths.items()}


def run_json(args, out):
    assert main(args + ["--out", str(out)]) == 0
    return json.loads(out.read_text())


def test_ddcs_perfect_attack(tmp_path, pair):
    rep = run_json(["ddcs", "--rec", pair["tar"], "--tar", pair["tar"]], tmp_path / "r.json")
    assert rep["ddcs_avg"] == rep["ddcs_best"] == rep["match_fraction"] == 1.0
    assert rep["config"]["c"] == 1.0
    assert len(rep["per_target"]) == 20


@pytest.mark.parametrize(
    "cmd, extra, key",
    [
        ("fid", [], "fid"),
        ("coverage", ["--k", "2"], "coverage"),
        ("knn-dist", [], "knn_dist"),
    ],
)
def test_metric_commands(tmp_path, pair, cmd, extra, key):
    rep = run_json([cmd, "--rec", pair["rec"], "--tar", pair["tar"], *extra], tmp_path / "o.json")
    assert isinstance(rep[key], float)
    assert "config" in rep


def test_feature_dist_reports_excluded(tmp_path, pair):
    rep = run_json(["feature-dist", "--rec", pair["rec"], "--tar", pair["tar"],
                    "--rec-labels", pair["rec_labels"], "--tar-labels", pair["tar_labels"]],
                   tmp_path / "o.json")
    assert rep["excluded_rec_ids"] == [4, 9, 14]


def test_pairs_and_per_label(tmp_path, pair):
    rep = run_json(["pairs", "--rec", pair["rec"], "--tar", pair["tar"], "--top-m", "3"], tmp_path / "p.json")
    assert len(rep["ranked"]) == 3 and rep["mode"] == "best"
    out = tmp_path / "l.csv"
    assert main(["per-label", "--rec", pair["rec"], "--tar", pair["tar"], "--labels", pair["tar_labels"],
                 "--out", str(out)]) == 0
    assert out.read_text().splitlines()[0] == "label,matched_fraction,avg_reconstruction_distance"


def test_accuracy(tmp_path):
    p = tmp_path / "logits.csv"
    save_logits(LogitsTable([[0.1, 0.2, 0.9], [0.5, 0.4, 0.1]], [2, 1]), p)
    rep = run_json(["accuracy", "--logits", str(p)], tmp_path / "a.json")
    assert rep["acc_top1"] == 0.5 and "acc_top5" not in rep
    rep = run_json(["accuracy", "--logits", str(p), "--k", "1,2"], tmp_path / "a.json")
    assert rep["acc_top2"] == 1.0


def test_synth_gen_and_sweep(tmp_path):
    tar, labels = tmp_path / "t.fmat", tmp_path / "l.csv"
    assert main(["synth-gen", "--n-labels", "3", "--per-label", "4", "--dim", "5", "--seed", "1",
                 "--out", str(tar), "--labels-out", str(labels)]) == 0
    assert load_feature_set(tar, labels_path=labels).n_samples == 12
    out = tmp_path / "s.csv"
    assert main(["sweep", "--mode", "d1", "--tar", str(tar), "--labels", str(labels), "--grid", "1..4",
                 "--metrics", "ddcs_avg,synthetic_accuracy", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "grid_value,ddcs_avg,synthetic_accuracy"
    assert lines[-1] == "4,1,1"


def test_sweep_empty_metrics_fails(tmp_path):
    tar, labels = tmp_path / "t.fmat", tmp_path / "l.csv"
    main(["synth-gen", "--n-labels", "2", "--per-label", "3", "--dim", "2",
          "--out", str(tar), "--labels-out", str(labels)])
    out = tmp_path / "s.csv"
    assert main(["sweep", "--mode", "d2", "--tar", str(tar), "--labels", str(labels),
                 "--metrics", "", "--out", str(out)]) == 1
    assert not out.exists()


def test_ngd_demo(tmp_path):
    out = tmp_path / "traj.csv"
    assert main(["ngd-demo", "--steps", "5", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 7
    assert json.loads(out.with_suffix(".json").read_text())["steps"] == 5


def test_convert_roundtrip(tmp_path, pair):
    fm = tmp_path / "x.fmat"
    back = tmp_path / "x.csv"
    assert main(["convert", "--in", pair["rec"], "--out", str(fm)]) == 0
    assert main(["convert", "--in", str(fm), "--out", str(back)]) == 0
    a = load_feature_set(pair["rec"]).features.astype(np.float32)
    np.testing.assert_array_equal(load_feature_set(back).features, a)


def test_usage_error_exit_code(capsys):
    assert main(["ddcs", "--rec", "x"]) == 1
    assert "usage" in capsys.readouterr().err


def test_bad_input_exit_code(tmp_path, pair):
    bad = tmp_path / "bad.csv"
    bad.write_text("0,1.0\n1,nan\n")
    out = tmp_path / "o.json"
    assert main(["ddcs", "--rec", str(bad), "--tar", pair["tar"], "--out", str(out)]) == 1
    assert not out.exists()


def test_computation_error_exit_code(tmp_path, pair):
    out = tmp_path / "o.json"
    assert main(["ddcs", "--rec", pair["tar"], "--tar", pair["tar"], "--c", "0", "--out", str(out)]) == 2
    assert not out.exists()


def test_threads_do_not_change_output(tmp_path, pair):
    outs = []
    for t in ("1", "4"):
        out = tmp_path / f"o{t}.json"
        assert main(["ddcs", "--rec", pair["rec"], "--tar", pair["tar"], "--threads", t, "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
