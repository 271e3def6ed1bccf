import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corroborate.classifier import ForestConfig
from corroborate.dataset import (
    CSV_COLUMNS,
    GWS_LABELS,
    ActivityMotion,
    ImuSample,
    LabelDictionary,
    Session,
    SubjectStream,
    SyntheticConfig,
    corpus_summary,
    generate_synthetic,
    load_sessions,
    repair_gaps,
    write_sessions,
)
from corroborate.errors import ConfigError, DictionaryError, FormatError, IntegrityError
from corroborate.pipeline import train_pipeline

HEADER = ",".join(CSV_COLUMNS)


def write_csv(path, rows, header=HEADER):
    path.write_text(header + "\n" + "\n".join(",".join(map(str, r)) for r in rows) + "\n")


def rows_for(subject, activity, n, start=0, step=10):
    return [(start + i * step, subject, activity, 0.1 * i, 0, 1, 0, 0, i) for i in range(n)]


def test_label_dictionary_contiguous_and_unique():
    d = LabelDictionary(["a", "b", "c"])
    assert [lab.id for lab in d] == [0, 1, 2]
    assert d.label("b").id == 1
    with pytest.raises(DictionaryError):
        LabelDictionary(["a", "a"])
    with pytest.raises(DictionaryError):
        d.label("zzz")


def test_loader_groups_subjects(tmp_path):
    write_csv(tmp_path / "m1.csv", rows_for("p2", "meeting", 50) + rows_for("p1", "meeting", 40))
    sessions = load_sessions(tmp_path)
    assert len(sessions) == 1
    s = sessions[0]
    assert s.session_id == "m1"
    assert s.activity == GWS_LABELS.label("meeting")
    assert [st.subject_id for st in s.streams] == ["p1", "p2"]
    assert [len(st) for st in s.streams] == [40, 50]


def test_loader_unknown_activity(tmp_path):
    write_csv(tmp_path / "y.csv", rows_for("p1", "yoga", 10))
    with pytest.raises(DictionaryError, match="yoga"):
        load_sessions(tmp_path)


def test_loader_missing_column_names_file_and_column(tmp_path):
    path = tmp_path / "bad.csv"
    write_csv(path, [r[:-1] for r in rows_for("p1", "eating", 5)], header=HEADER.rsplit(",", 1)[0])
    with pytest.raises(FormatError) as err:
        load_sessions(tmp_path)
    assert "bad.csv" in str(err.value) and "gz" in str(err.value)


def test_loader_rejects_unparseable_rows(tmp_path):
    rows = rows_for("p1", "office", 20)
    rows[3] = (30, "p1", "office", "abc", 0, 1, 0, 0, 0)
    rows[5] = ("x", "p1", "office", 0, 0, 1, 0, 0, 0)
    rows[7] = (-70, "p1", "office", 0, 0, 1, 0, 0, 0)
    write_csv(tmp_path / "o.csv", rows)
    (s,) = load_sessions(tmp_path)
    assert len(s.streams[0]) == 17
    assert 30 not in s.streams[0].t


def test_loader_sorts_and_dedupes(tmp_path):
    rows = rows_for("p1", "eating", 10)
    write_csv(tmp_path / "e.csv", rows[::-1] + rows[:3])
    (s,) = load_sessions(tmp_path)
    assert np.array_equal(s.streams[0].t, np.arange(10) * 10)


def test_loader_conflicting_duplicate_is_integrity_error(tmp_path):
    rows = rows_for("p1", "eating", 10)
    rows.append((20, "p1", "eating", 9, 9, 9, 9, 9, 9))
    write_csv(tmp_path / "e.csv", rows)
    with pytest.raises(IntegrityError, match="t=20"):
        load_sessions(tmp_path)


def test_loader_mixed_activity(tmp_path):
    write_csv(tmp_path / "x.csv", rows_for("p1", "eating", 5) + rows_for("p2", "office", 5))
    with pytest.raises(FormatError, match="constant"):
        load_sessions(tmp_path)


def test_loader_rate_check(tmp_path):
    write_csv(tmp_path / "x.csv", rows_for("p1", "eating", 20, step=40))
    with pytest.raises(IntegrityError, match="median"):
        load_sessions(tmp_path)


# GWS corpus shape: hours, sessions and participants per session for each activity.
GWS_TABLE = {
    "eating": (5.00022, [3, 3]),
    "lecture": (39.992534, [5, 5, 5, 4]),
    "meeting": (9.850402, [4, 4, 4]),
    "office": (3.525118, [3, 3]),
}


def test_loader_reports_gws_table_totals(tmp_path):
    # 0.1 Hz keeps a 58-hour corpus to a few tens of thousands of rows.
    period = 10_000
    for activity, (hours, members) in GWS_TABLE.items():
        total_ms = round(hours * 3.6e6)
        n_streams = sum(members)
        base = total_ms // n_streams
        durations = [base] * n_streams
        durations[-1] += total_ms - base * n_streams
        k = 0
        for j, m in enumerate(members):
            rows = []
            for subj in range(m):
                d = durations[k]
                k += 1
                ts = list(range(0, d - period, period)) + [d - period]
                rows += [(t, f"p{subj}", activity, 0, 0, 1, 0, 0, 0) for t in sorted(set(ts))]
            write_csv(tmp_path / f"{activity}_{j}.csv", rows)

    sessions = load_sessions(tmp_path, nominal_rate_hz=0.1)
    summary = corpus_summary(sessions)
    assert len(sessions) == 11
    for activity, (hours, members) in GWS_TABLE.items():
        row = summary[activity]
        assert row["hours"] == pytest.approx(hours, abs=1e-6)
        assert row["sessions"] == len(members)
        assert row["mean_participants"] == pytest.approx(np.mean(members))
    assert sum(r["hours"] for r in summary.values()) == pytest.approx(58.368274, abs=1e-5)
    n_streams = sum(len(s.streams) for s in sessions)
    assert round(n_streams / len(sessions), 2) == 3.91


def test_round_trip(tmp_path, small_corpus):
    write_sessions(small_corpus, tmp_path)
    back = load_sessions(tmp_path)
    by_id = {s.session_id: s for s in back}
    for s in small_corpus:
        other = by_id[s.session_id]
        assert other.activity == s.activity
        assert sorted(other.streams, key=lambda x: x.subject_id) == sorted(
            s.streams, key=lambda x: x.subject_id
        )


def test_sample_view_round_trip():
    samples = [ImuSample(0, (0.0, 0.0, 1.0), (1.0, 2.0, 3.0)), ImuSample(10, (0.1, 0.0, 1.0), (0, 0, 0))]
    stream = SubjectStream.from_samples("p", samples)
    assert list(stream.samples) == samples


def test_stream_rejects_non_monotone():
    with pytest.raises(IntegrityError):
        SubjectStream("p", [0, 10, 10], np.zeros((3, 6)))
    with pytest.raises(IntegrityError):
        Session("s", GWS_LABELS[0], ())


# ---------------------------------------------------------------- gap repair


def stream_at(ts, values=None):
    ts = np.asarray(ts)
    if values is None:
        values = np.outer(ts, np.arange(1, 7)).astype(float)
    return SubjectStream("p", ts, values)


def test_repair_fills_short_gap():
    out = repair_gaps(stream_at([0, 10, 40]), max_gap_ms=50)
    assert out.t.tolist() == [0, 10, 20, 30, 40]
    # values linear in t, so interpolation reproduces the line
    assert np.allclose(out.values, np.outer(out.t, np.arange(1, 7)))
    assert out.breaks == ()


def test_repair_marks_long_gap():
    ts = list(range(0, 1000, 10)) + list(range(6000, 7000, 10))
    out = repair_gaps(stream_at(ts), max_gap_ms=200)
    assert out.t.tolist() == ts
    assert out.breaks == ((990, 6000),)


def test_repair_constant_stream():
    ts = [0, 10, 20, 90, 100]
    out = repair_gaps(stream_at(ts, np.full((5, 6), 3.25)), max_gap_ms=200)
    assert out.t.tolist() == [0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100]
    assert np.all(out.values == 3.25)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.integers(1, 400), min_size=1, max_size=40),
    st.integers(20, 300),
)
def test_repair_only_inserts(gaps, max_gap):
    ts = np.concatenate([[0], np.cumsum(gaps)])
    rng = np.random.default_rng(len(gaps))
    stream = SubjectStream("p", ts, rng.normal(size=(ts.size, 6)))
    out = repair_gaps(stream, max_gap)
    pos = np.searchsorted(out.t, stream.t)
    assert np.array_equal(out.t[pos], stream.t)
    assert np.array_equal(out.values[pos], stream.values)
    assert np.all(np.diff(out.t) > 0)


# ---------------------------------------------------------------- synthetic corpus


def test_synthetic_deterministic():
    cfg = SyntheticConfig(seed=7, session_length_s=20.0, sessions_per_activity=1, devices_per_session=2)
    a, b = generate_synthetic(cfg), generate_synthetic(cfg)
    for sa, sb in zip(a, b):
        for x, y in zip(sa.streams, sb.streams):
            assert x.t.tobytes() == y.t.tobytes()
            assert x.values.tobytes() == y.values.tobytes()
    other = generate_synthetic(SyntheticConfig(**{**cfg.to_dict(), "seed": 8}))
    assert not np.array_equal(other[0].streams[0].values, a[0].streams[0].values)


def test_synthetic_shape():
    cfg = SyntheticConfig(devices_per_session=4, sessions_per_activity=2, session_length_s=12.0)
    sessions = generate_synthetic(cfg)
    assert len(sessions) == 8
    assert sum(len(s.streams) for s in sessions) == 32
    for s in sessions:
        for stream in s.streams:
            assert stream.nominal_rate_hz == 100.0
            assert stream.values.shape == (1200, 6)
            stream.check_rate()


def test_synthetic_subjects_differ_within_session():
    (s, *_) = generate_synthetic(SyntheticConfig(sessions_per_activity=1, session_length_s=20.0))
    assert not np.array_equal(s.streams[0].values, s.streams[1].values)


def test_synthetic_config_json(tmp_path):
    cfg = SyntheticConfig(seed=3, devices_per_session=2)
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert SyntheticConfig.from_json(path) == cfg
    with pytest.raises(ConfigError):
        SyntheticConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        SyntheticConfig(devices_per_session=0)
    with pytest.raises(ConfigError):
        SyntheticConfig(session_length_s=5.0)


def test_synthetic_gaps_are_repairable():
    cfg = SyntheticConfig(sessions_per_activity=1, session_length_s=60.0, gap_rate_per_min=10, seed=2)
    stream = generate_synthetic(cfg)[0].streams[0]
    assert len(stream) < 6000
    repaired = repair_gaps(stream, 200)
    assert len(repaired) > len(stream)


def test_zero_amplitude_gives_chance_accuracy():
    # Overlapping windows share half their samples, so a window split would
    # let the forest recognise neighbours of training windows; hold out sessions.
    motions = {n: ActivityMotion(0.0, r, 1.0) for n, r in zip(GWS_LABELS.names, (0.1, 0.2, 0.3, 0.4))}
    cfg = SyntheticConfig(motions=motions, sessions_per_activity=2, session_length_s=180.0, seed=4)
    result = train_pipeline(
        generate_synthetic(cfg), GWS_LABELS, forest=ForestConfig(n_trees=30, seed=1),
        split="session",
        test_fraction=0.5,
        split_seed=2,
    )
    assert abs(result.test_accuracy - 0.25) <= 0.1
