"""End-to-end CLI behavior: pipeline chaining, exit codes, reproducibility."""

import json
import os

import numpy as np
import pytest

from vabark.cli import main
from vabark.manifest import read_manifest

N = 120


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """synth -> features -> anchors -> label, shared by the tests below."""
    root = tmp_path_factory.mktemp("pipe")
    corpus = root / "corpus"
    assert main(["synth", "--n", str(N), "--seed", "42", "--out-dir", str(corpus), "--jobs", "2"]) == 0
    assert main(["features", "--manifest", str(corpus / "manifest.jsonl"),
                 "--out-dir", str(root), "--jobs", "2"]) == 0
    assert main(["anchors", "--features", str(root / "features.jsonl"), "--out-dir", str(root)]) == 0
    assert main(["label", "--manifest", str(corpus / "manifest.jsonl"),
                 "--anchors", str(root / "anchors.json"),
                 "--features", str(root / "features.jsonl"), "--out-dir", str(corpus)]) == 0
    return root, corpus


def test_pipeline_produces_labeled_manifest(pipeline):
    root, corpus = pipeline
    rows = read_manifest(corpus / "labeled.jsonl")
    assert len(rows) == N
    assert all("valence" in r and "arousal" in r for r in rows)
    assert all(-1 <= r["valence"] <= 1 and 0 <= r["arousal"] <= 1 for r in rows)


def test_emotion_mix_matches_defaults(pipeline):
    _, corpus = pipeline
    rows = read_manifest(corpus / "manifest.jsonl")
    counts = {}
    for r in rows:
        counts[r["emotion"]] = counts.get(r["emotion"], 0) + 1
    assert abs(counts["anxious"] - 0.353 / 0.998 * N) <= 1
    shares = sum(1 for r in rows if r["source"] == "enhanced") / len(rows)
    assert abs(shares - 0.628) < 0.05


def test_split_subcommand(pipeline, tmp_path):
    _, corpus = pipeline
    assert main(["split", "--manifest", str(corpus / "labeled.jsonl"),
                 "--seed", "7", "--out-dir", str(tmp_path)]) == 0
    splits = json.load(open(tmp_path / "splits.json"))
    total = sum(len(v) for v in splits.values())
    assert total == N
    assert set(splits) == {"train", "val", "test"}


def test_rerun_outputs_byte_identical_and_jobs_invariant(tmp_path):
    outs = []
    for tag, jobs in (("a", "1"), ("b", "4"), ("c", "1")):
        d = tmp_path / tag
        assert main(["synth", "--n", "100", "--seed", "5", "--out-dir", str(d), "--jobs", jobs]) == 0
        assert main(["features", "--manifest", str(d / "manifest.jsonl"),
                     "--out-dir", str(d), "--jobs", jobs]) == 0
        outs.append(d)
    m0 = (outs[0] / "manifest.jsonl").read_bytes()
    f0 = (outs[0] / "features.jsonl").read_bytes()
    for d in outs[1:]:
        assert (d / "manifest.jsonl").read_bytes() == m0
        assert (d / "features.jsonl").read_bytes() == f0
    w0 = sorted(os.listdir(outs[0] / "wav"))
    assert sorted(os.listdir(outs[1] / "wav")) == w0
    for name in w0[:10]:
        assert (outs[0] / "wav" / name).read_bytes() == (outs[1] / "wav" / name).read_bytes()


def test_unknown_subcommand_and_missing_flag_exit_1(capsys):
    assert main(["definitely-not-a-command"]) == 1
    assert main(["synth", "--n", "100"]) == 1  # missing --out-dir
    assert main([]) == 1


def test_unknown_config_key_rejected(pipeline, tmp_path):
    _, corpus = pipeline
    bad_cfg = tmp_path / "bad.json"
    bad_cfg.write_text(json.dumps({"epochs": 1, "not_a_real_key": 2}))
    rc = main(["train", "--manifest", str(corpus / "labeled.jsonl"),
               "--train-config", str(bad_cfg), "--out-dir", str(tmp_path / "run")])
    assert rc == 1


def test_bias_table_override(pipeline, tmp_path):
    root, corpus = pipeline
    table = {
        "fearful": -0.5, "separation_anxiety": -0.4, "anxious": -0.3, "territorial": -0.2,
        "alert": -0.1, "playful": 0.1, "content": 0.2, "excited": 0.3,
    }
    bias_path = tmp_path / "bias.json"
    bias_path.write_text(json.dumps(table))
    assert main(["label", "--manifest", str(corpus / "manifest.jsonl"),
                 "--anchors", str(root / "anchors.json"),
                 "--features", str(root / "features.jsonl"),
                 "--bias-table", str(bias_path), "--out-dir", str(tmp_path)]) == 0
    default_rows = {r["id"]: r for r in read_manifest(corpus / "labeled.jsonl")}
    new_rows = read_manifest(tmp_path / "labeled.jsonl")
    moved = [r for r in new_rows if r["emotion"] == "fearful"
             and abs(r["valence"] - default_rows[r["id"]]["valence"]) > 1e-9]
    assert moved  # stronger negative bias shifts unclipped fearful valences

    bad = dict(table, fearful=0.9)
    bias_path.write_text(json.dumps(bad))
    assert main(["label", "--manifest", str(corpus / "manifest.jsonl"),
                 "--anchors", str(root / "anchors.json"),
                 "--features", str(root / "features.jsonl"),
                 "--bias-table", str(bias_path), "--out-dir", str(tmp_path)]) == 1


def test_anchor_scope_train(pipeline, tmp_path):
    root, corpus = pipeline
    assert main(["split", "--manifest", str(corpus / "labeled.jsonl"),
                 "--seed", "3", "--out-dir", str(tmp_path)]) == 0
    assert main(["anchors", "--features", str(root / "features.jsonl"),
                 "--anchor-scope", "train", "--splits", str(tmp_path / "splits.json"),
                 "--out-dir", str(tmp_path)]) == 0
    scoped = json.load(open(tmp_path / "anchors.json"))
    full = json.load(open(root / "anchors.json"))
    assert scoped != full
    assert main(["anchors", "--features", str(root / "features.jsonl"),
                 "--anchor-scope", "train", "--out-dir", str(tmp_path)]) == 1


def test_report_roundtrip_from_scatter(tmp_path):
    rng = np.random.default_rng(0)
    rows = []
    for i in range(40):
        tv, ta = rng.uniform(-1, 1), rng.uniform(0, 1)
        rows.append({"id": f"x{i}", "pred_v": tv + rng.normal(0, 0.05), "true_v": tv,
                     "pred_a": ta + rng.normal(0, 0.05), "true_a": ta,
                     "emotion": "alert", "size": "large", "gender": "male"})
    import csv

    scatter = tmp_path / "va_scatter.csv"
    with open(scatter, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    assert main(["report", "--scatter", str(scatter), "--out-dir", str(tmp_path / "rep")]) == 0
    rep = json.load(open(tmp_path / "rep" / "report.json"))
    assert rep["n_samples"] == 40
    assert 0 <= rep["va_mae"] < 0.5
    assert (tmp_path / "rep" / "top_errors.csv").exists()
