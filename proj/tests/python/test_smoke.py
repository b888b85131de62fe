import json
import math
import os
import subprocess

import numpy as np
import pytest

import xferbench as xb


@pytest.fixture
def task(tmp_path):
    return xb.make_synthetic_task(tmp_path / "task", separations=[3.0, 2.0, 1.0], seed=1)


def blobs(seed=0, n_per=40, d=6, classes=3, sep=3.0, with_logits=True):
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(classes), n_per)
    means = rng.normal(size=(classes, d)) * sep
    features = means[labels] + rng.normal(size=(labels.size, d))
    logits = None
    if with_logits:
        logits = rng.normal(size=(labels.size, 5))
        logits[np.arange(labels.size), labels % 5] += 2.0
    return xb.ProbeSet(features, labels, outputs=logits)


def test_version():
    assert xb.__version__ == "0.3.0"


def test_array_round_trip(tmp_path):
    for arr in (np.arange(12, dtype=np.float64).reshape(3, 4) / 7,
                np.linspace(0, 1, 5, dtype=np.float32),
                np.array([[1], [-2], [3]], dtype=np.int64)):
        path = tmp_path / "a.npy"
        xb.write_array(arr, path)
        back = xb.read_array(path)
        assert back.dtype == arr.dtype
        np.testing.assert_array_equal(back, arr)
        np.testing.assert_array_equal(np.load(path), arr)


def test_reads_numpy_files(tmp_path):
    arr = np.random.default_rng(0).normal(size=(4, 3))
    np.save(tmp_path / "np.npy", arr)
    np.testing.assert_array_equal(xb.read_array(tmp_path / "np.npy"), arr)


def test_bad_array_raises_format_error(tmp_path):
    path = tmp_path / "bad.npy"
    path.write_bytes(b"not an array")
    with pytest.raises(xb.ArrayFormatError):
        xb.read_array(path)
    with pytest.raises(xb.DataError):
        xb.write_array(np.array([np.nan]), path)


def test_probe_set_properties():
    p = blobs()
    assert p.sample_count == 120
    assert p.feature_dim == 6
    assert p.class_count == 3
    assert p.outputs_kind == "logits"
    np.testing.assert_allclose(p.source_probabilities().sum(axis=1), 1.0)
    with pytest.raises(xb.DataError):
        xb.ProbeSet(np.zeros((3, 2)), np.array([0, 1]))


def test_every_scorer_is_finite_and_prefers_separable_data():
    good, bad = blobs(sep=4.0), blobs(sep=0.2)
    for name in xb.scorer_names():
        a, b = xb.score(good, name), xb.score(bad, name)
        assert math.isfinite(a) and math.isfinite(b)
        if name not in ("nce", "leep"):
            assert a > b, name
    assert xb.h_score(good) == xb.score(good, "h_score")
    assert xb.gbc(good) <= 0.0
    with pytest.raises(ValueError):
        xb.score(good, "nope")


def test_kendall():
    assert xb.kendall_tau([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0)
    assert xb.kendall_tau([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    assert xb.kendall_tau([1, 1, 1], [1, 2, 3]) is None
    assert xb.weighted_kendall_tau([1, 2, 3, 4], [1, 2, 3, 4]) == pytest.approx(1.0)
    assert list(xb.importance_ranks([0.9, 0.5, 0.9, 0.1])) == [0.5, 2.0, 0.5, 3.0]


def test_plan():
    configs = xb.plan()
    assert len(configs) == 75
    assert configs[0]["index"] == 1
    assert all(1e-4 <= c["learning_rate"] <= 1e-1 for c in configs)
    assert all(1e-6 <= c["weight_decay"] <= 1e-4 for c in configs)
    assert xb.halton(5, 3) == pytest.approx(7 / 9)
    with pytest.raises(ValueError):
        xb.plan(learning_rate=(1.0, 0.5))


def test_pipeline(task):
    manifest = xb.load_manifest(task)
    assert len(manifest.checkpoint_ids) == 3
    table = xb.score_all(manifest, "train", scorers=["logme", "gbc"])
    assert len(table) == 6
    assert xb.ScoreTable.from_json(table.to_json()) == table
    report = xb.correlate(table, manifest, "test_ood", method="tau")
    assert report["method"] == "tau-b"
    assert {r["scorer"] for r in report["rows"]} == {"logme", "gbc"}
    ranking = xb.rank_checkpoints(table, "logme")
    assert sorted(ranking) == sorted(manifest.checkpoint_ids)
    probe = manifest.probe_set(manifest.checkpoint_ids[0], "train")
    assert xb.logme(probe) == table.get(manifest.checkpoint_ids[0], "logme")


def test_run_cli_matches_bindings(task, tmp_path):
    out = tmp_path / "scores.json"
    code, _, err = xb.run_cli(["score", "--manifest", str(task), "--split", "train", "--out", str(out)])
    assert code == 0, err
    table = xb.score_all(xb.load_manifest(task), "train")
    assert out.read_text() == table.to_json()
    assert xb.run_cli(["score", "--manifest", str(task), "--split", "train", "--scorers", "bad",
                       "--out", str(out)])[0] == 2


@pytest.mark.skipif("XFERBENCH_CLI" not in os.environ, reason="cli binary path not provided")
def test_cli_binary(task, tmp_path):
    exe = os.environ["XFERBENCH_CLI"]
    out = tmp_path / "plan"
    subprocess.run([exe, "plan-hpo", "--n", "5", "--out", str(out)], check=True)
    lines = (out / "plan.jsonl").read_text().splitlines()
    assert [json.loads(line)["index"] for line in lines] == [1, 2, 3, 4, 5]
    done = subprocess.run([exe, "validate", "--manifest", str(task)], capture_output=True, text=True)
    assert done.returncode == 0, done.stderr
