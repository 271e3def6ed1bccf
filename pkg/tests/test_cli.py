import json

import pytest

from corroborate.cli import RunConfig, main
from corroborate.classifier import RandomForest

SMALL = {
    "seed": 5,
    "synthetic": {"devices_per_session": 3, "sessions_per_activity": 2, "session_length_s": 40.0},
    "forest": {"n_trees": 5},
}


@pytest.fixture()
def config(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(SMALL))
    return path


def run(*argv):
    return main([str(a) for a in argv])


def pipeline(tmp_path, config, tag, *train_flags):
    base = tmp_path / tag
    data, model, traces, report = base / "data", base / "model.json", base / "t.jsonl", base / "r.json"
    assert run("generate", "--config", config, "--out", data) == 0
    assert run("train", "--config", config, "--data", data, "--out", model, *train_flags) == 0
    assert run("simulate", "--config", config, "--data", data, "--model", model, "--out", traces) == 0
    assert run("evaluate", "--traces", traces, "--model", model, "--out", report) == 0
    return data, model, traces, report


def test_generate_writes_one_file_per_session(tmp_path, config):
    assert run("generate", "--config", config, "--out", tmp_path / "d") == 0
    assert len(list((tmp_path / "d").glob("*.csv"))) == 8


def test_generate_invalid_json_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    assert run("generate", "--config", bad, "--out", tmp_path / "d") == 2
    assert "invalid JSON" in capsys.readouterr().err


def test_unknown_section_exit_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"forest": {}, "nonsense": 1}))
    assert run("generate", "--config", bad, "--out", tmp_path / "d") == 2


def test_end_to_end_deterministic(tmp_path, config, capsys):
    a = pipeline(tmp_path, config, "a")
    out = capsys.readouterr().out
    assert "trees: 5" in out and "Accuracy" in out
    b = pipeline(tmp_path, config, "b")
    for pa, pb in zip(a[1:], b[1:]):
        assert pa.read_bytes() == pb.read_bytes()
    for fa in sorted(a[0].glob("*.csv")):
        assert fa.read_bytes() == (b[0] / fa.name).read_bytes()
    assert (a[3].with_suffix(".confusion.csv")).read_bytes() == b[3].with_suffix(".confusion.csv").read_bytes()


def test_seed_flag_changes_output(tmp_path, config):
    run("generate", "--config", config, "--out", tmp_path / "x")
    run("generate", "--config", config, "--seed", 6, "--out", tmp_path / "y")
    name = sorted(p.name for p in (tmp_path / "x").glob("*.csv"))[0]
    assert (tmp_path / "x" / name).read_bytes() != (tmp_path / "y" / name).read_bytes()


def test_train_report_and_split_manifest(tmp_path, config, capsys):
    data, model, traces, report = pipeline(tmp_path, config, "s", "--split", "session", "--test-fraction", "0.5")
    out = capsys.readouterr().out
    manifest = json.loads(model.with_name("model.split.json").read_text())
    held = set(manifest["test_sessions"])
    assert len(held) == 4
    seen = {json.loads(line)["session_id"] for line in traces.read_text().splitlines()}
    assert seen == held
    assert "test windows:" in out
    doc = json.loads(report.read_text())
    assert set(doc) >= {"standalone", "corroborated", "accuracy_delta_points", "accuracy_delta_relative"}


def test_train_counts_match_fraction(tmp_path, config, capsys):
    data = tmp_path / "d"
    run("generate", "--config", config, "--out", data)
    capsys.readouterr()
    assert run("train", "--config", config, "--data", data, "--out", tmp_path / "m.json", "--test-fraction", 0.25, "--trees", 3) == 0
    out = capsys.readouterr().out
    # 24 streams x 7 windows = 168 windows, 25% held out
    assert "test windows: 42" in out
    assert "train windows: 126" in out
    assert len(RandomForest.load(tmp_path / "m.json").trees) == 3


def test_single_class_training_fails(tmp_path):
    data = tmp_path / "d"
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"labels": ["eating"], "synthetic": {"sessions_per_activity": 2, "session_length_s": 20.0, "devices_per_session": 2}}))
    assert run("generate", "--config", cfg, "--out", data) == 0
    assert run("train", "--config", cfg, "--data", data, "--out", tmp_path / "m.json") == 1


def test_simulate_label_mismatch_and_empty_dir(tmp_path, config):
    data, model, _, _ = pipeline(tmp_path, config, "p")
    other = tmp_path / "other"
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"labels": ["eating", "yoga"], "synthetic": {"sessions_per_activity": 1, "session_length_s": 20.0}}))
    run("generate", "--config", cfg, "--out", other)
    assert run("simulate", "--data", other, "--model", model, "--out", tmp_path / "t.jsonl", "--all-windows") != 0
    (tmp_path / "empty").mkdir()
    assert run("simulate", "--data", tmp_path / "empty", "--model", model, "--out", tmp_path / "t.jsonl") == 1


def test_evaluate_empty_trace_fails(tmp_path):
    empty = tmp_path / "t.jsonl"
    empty.write_text("")
    assert run("evaluate", "--traces", empty, "--out", tmp_path / "r.json") == 1


def test_ablate_identical_modes(tmp_path, capsys):
    rec = {
        "session_id": "s", "device_id": "d", "tick_ms": 10000, "truth": "eating",
        "standalone": "eating", "corroborated": "eating",
        "standalone_probs": [1, 0, 0, 0], "corroborated_probs": [1, 0, 0, 0], "n_neighbors_used": 0,
    }
    path = tmp_path / "t.jsonl"
    path.write_text(json.dumps(rec) + "\n")
    assert run("ablate", "--traces", path, "--out", tmp_path / "a.csv") == 0
    out = capsys.readouterr().out
    assert "+0.00 points" in out
    assert (tmp_path / "a.csv").read_text().splitlines()[1].startswith("standalone,1.0")


def test_simulate_flags(tmp_path, config):
    data, model, traces, _ = pipeline(tmp_path, config, "f")
    lossy = tmp_path / "lossy.jsonl"
    assert run("simulate", "--config", config, "--data", data, "--model", model, "--out", lossy,
               "--drop-prob", 1.0, "--aggregation", "vote") == 0
    for line in lossy.read_text().splitlines():
        rec = json.loads(line)
        assert rec["n_neighbors_used"] == 0 and rec["standalone"] == rec["corroborated"]
    assert run("simulate", "--data", data, "--model", model, "--out", lossy, "--drop-prob", 2.0) == 2


def test_sub_seeds_fan_out():
    cfg = RunConfig.from_dict({"seed": 1})
    seeds = {cfg.synthetic_config().seed, cfg.forest_config().seed, cfg.smote_config().seed}
    assert len(seeds) == 3
    pinned = RunConfig.from_dict({"seed": 1, "forest": {"seed": 42}})
    assert pinned.forest_config().seed == 42
