import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from harfuse import dataset as ds
from harfuse.errors import (
    ContractError,
    EmptyDatasetError,
    InputFileError,
    ParseError,
    ProvenanceError,
    SchemaError,
    TooShortError,
)


def write_csv(path, rows, header="t,ax,ay,az,gx,gy,gz"):
    lines = [header] + [",".join(str(v) for v in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")


def toy_dataset(root, n_samples=60, classes=("walk", "sit")):
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    rng = np.random.default_rng(0)
    for k, c in enumerate(classes):
        rel = f"{c}_{k}.csv"
        write_csv(root / rel, np.column_stack([np.arange(n_samples) / 50, rng.normal(size=(n_samples, 6))]))
        entries.append({"path": rel, "label": c, "subject": "s1", "trial": "t1"})
    (root / "manifest.json").write_text(json.dumps({"name": "toy", "classes": list(classes), "sampling_rate_hz": 50, "entries": entries}))
    return root


def originals(n, n_classes=3, seed=0):
    rng = np.random.default_rng(seed)
    return [
        ds.SignalWindow(rng.normal(size=(6, 52)), i % n_classes, f"s{i % 4}", source=f"rec{i}#w0")
        for i in range(n)
    ]


# -- manifest ---------------------------------------------------------------


def test_manifest_two_classes(tmp_path):
    m = ds.load_manifest(toy_dataset(tmp_path))
    assert m.class_names == ("walk", "sit")
    assert [e.label for e in m.entries] == [1, 0]  # sorted by path: sit_1, walk_0


def test_manifest_is_stable(tmp_path):
    root = toy_dataset(tmp_path)
    assert ds.load_manifest(root) == ds.load_manifest(root)


def test_manifest_six_column_csv_names_file(tmp_path):
    root = toy_dataset(tmp_path)
    bad = root / "walk_0.csv"
    write_csv(bad, [[0.0, 1, 2, 3, 4, 5]], header="t,ax,ay,az,gx,gy")
    with pytest.raises(ParseError) as info:
        ds.load_manifest(root)
    assert "walk_0.csv" in str(info.value)


def test_malformed_row_reports_line_number(tmp_path):
    path = tmp_path / "r.csv"
    write_csv(path, [[0, 1, 2, 3, 4, 5, 6], [0, 1, 2, 3, 4, 5]])
    with pytest.raises(ParseError) as info:
        ds.read_recording(path)
    assert info.value.line == 3


def test_non_numeric_value(tmp_path):
    path = tmp_path / "r.csv"
    write_csv(path, [[0, 1, 2, "x", 4, 5, 6]])
    with pytest.raises(ParseError):
        ds.read_recording(path)


def test_manifest_absent_file(tmp_path):
    root = toy_dataset(tmp_path)
    (root / "sit_1.csv").unlink()
    with pytest.raises(InputFileError) as info:
        ds.load_manifest(root)
    assert "sit_1.csv" in str(info.value)


def test_manifest_missing(tmp_path):
    with pytest.raises(InputFileError):
        ds.load_manifest(tmp_path)


def test_manifest_unknown_label(tmp_path):
    root = toy_dataset(tmp_path)
    raw = json.loads((root / "manifest.json").read_text())
    raw["entries"][0]["label"] = "fly"
    (root / "manifest.json").write_text(json.dumps(raw))
    with pytest.raises(SchemaError):
        ds.load_manifest(root)


def test_manifest_label_index_out_of_range(tmp_path):
    root = toy_dataset(tmp_path)
    raw = json.loads((root / "manifest.json").read_text())
    raw["entries"][0]["label"] = 5
    (root / "manifest.json").write_text(json.dumps(raw))
    with pytest.raises(SchemaError):
        ds.load_manifest(root)


# -- windowing ----------------------------------------------------------------


def test_window_single():
    assert len(ds.window(np.zeros((52, 6)))) == 1


def test_window_counts_104():
    rec = np.arange(104 * 6, dtype=float).reshape(104, 6)
    assert len(ds.window(rec, overlap=0.0)) == 2
    w = ds.window(rec, overlap=0.5)
    assert len(w) == 3
    assert [int(x.channels[0, 0]) // 6 for x in w] == [0, 26, 52]


def test_window_too_short():
    with pytest.raises(TooShortError) as info:
        ds.window(np.zeros((51, 6)))
    assert info.value.length == 51


@given(st.integers(52, 400), st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.75, 0.9]))
def test_window_count_formula(L, overlap):
    stride = ds.round_half_up(52 * (1 - overlap))
    got = ds.window(np.zeros((L, 6)), overlap=overlap)
    assert len(got) == (L - 52) // stride + 1
    assert all(w.channels.shape == (6, 52) for w in got)


def test_window_rejects_bad_overlap():
    with pytest.raises(ContractError):
        ds.window(np.zeros((60, 6)), overlap=1.0)


def test_signal_window_invariants():
    with pytest.raises(ContractError):
        ds.SignalWindow(np.zeros((5, 52)), 0, "s")
    with pytest.raises(ContractError):
        ds.SignalWindow(np.full((6, 52), np.inf), 0, "s")


def test_load_windows_from_directory(tmp_path):
    m = ds.load_manifest(toy_dataset(tmp_path, n_samples=110))
    w = ds.load_windows(m)
    assert len(w) == 4
    assert len({x.key for x in w}) == 4


# -- augmentation ---------------------------------------------------------------


def test_augment_count_and_provenance():
    w = originals(1)[0]
    out = ds.augment(w, 3)
    assert len(out) == 7
    assert all(v.is_augmented and v.provenance.startswith("augmented:") for v in out)
    assert len({v.key for v in out} | {w.key}) == 8


def test_augment_zero_signal_jitter_is_zero():
    w = ds.SignalWindow(np.zeros((6, 52)), 0, "s", source="z")
    for v in ds.augment(w, 1)[:3]:
        assert np.all(v.channels == 0)


def test_augment_deterministic():
    w = originals(1)[0]
    a, b = ds.augment(w, 7), ds.augment(w, 7)
    assert all(np.array_equal(x.channels, y.channels) for x, y in zip(a, b))
    c = ds.augment(w, 8)
    assert not np.array_equal(a[0].channels, c[0].channels)


def test_augment_recipe():
    w = originals(1)[0]
    out = ds.augment(w, 0)
    x = w.channels
    for v in out[:3]:
        noise = v.channels - x
        assert np.all(np.abs(noise) < 0.05 * x.std(axis=1, keepdims=True) * 6)
    for v in out[3:5]:
        ratio = v.channels / x
        assert np.allclose(ratio, ratio[:, :1])
        assert np.all((ratio[:, 0] >= 0.9) & (ratio[:, 0] <= 1.1))
    assert np.array_equal(out[5].channels, np.roll(x, 2, axis=1))
    assert np.array_equal(out[6].channels, np.roll(x, -2, axis=1))


def test_augment_preserves_identity_fields():
    w = originals(1)[0]
    for v in ds.augment(w, 0):
        assert (v.label, v.subject, v.source, v.channels.shape) == (w.label, w.subject, w.source, (6, 52))


def test_augment_twice_is_an_error():
    v = ds.augment(originals(1)[0], 0)[0]
    with pytest.raises(ProvenanceError):
        ds.augment(v, 0)


# -- splitting ----------------------------------------------------------------


def test_split_ten():
    tr, te = ds.split(originals(10), ds.SplitPlan(), 0)
    assert len(tr) == 8 and len(te) == 2


def test_split_paper_counts():
    fam = 1722
    pool = ds.augment_all(originals(fam), 0)
    assert len(pool) == 13776
    tr, te = ds.split(pool, ds.SplitPlan(split_before_augmentation=False), 0)
    assert (len(tr), len(te)) == (11021, 2755)


@given(st.integers(1, 80), st.integers(0, 5), st.floats(0.05, 0.95), st.booleans())
def test_split_is_partition(n, seed, frac, stratified):
    plan = ds.SplitPlan(seed=seed, train_fraction=frac, repeats=3, stratified=stratified)
    tr, te = ds.split(originals(n), plan, 2)
    both = np.concatenate([tr, te])
    assert sorted(both) == list(range(n))
    if not stratified:
        assert len(tr) == ds.round_half_up(frac * n)


def test_split_deterministic_and_varies_by_repeat():
    w = originals(50)
    plan = ds.SplitPlan(seed=3)
    a = ds.split(w, plan, 1)
    b = ds.split(w, plan, 1)
    c = ds.split(w, plan, 2)
    assert np.array_equal(a[0], b[0])
    assert not np.array_equal(a[0], c[0])


def test_split_before_augmentation_has_no_leakage():
    pool = ds.augment_all(originals(40), 0)
    tr, te = ds.split(pool, ds.SplitPlan(seed=1), 0)
    train_sources = {pool[i].source for i in tr}
    leaked = [i for i in te if pool[i].source in train_sources]
    assert leaked == []
    assert len(tr) == 8 * 32


def test_split_stratified_within_one():
    w = originals(97, n_classes=4)
    tr, _ = ds.split(w, ds.SplitPlan(stratified=True), 0)
    labels = np.array([x.label for x in w])
    for c in range(4):
        total = np.sum(labels == c)
        got = np.sum(labels[tr] == c)
        assert abs(got - 0.8 * total) <= 1


def test_split_subject_holdout():
    w = originals(40)
    tr, te = ds.split(w, ds.SplitPlan(subject_holdout=True), 0)
    assert not {w[i].subject for i in tr} & {w[i].subject for i in te}


def test_split_errors():
    with pytest.raises(EmptyDatasetError):
        ds.split([], ds.SplitPlan(), 0)
    with pytest.raises(ContractError):
        ds.split(originals(3), ds.SplitPlan(repeats=2), 2)
    with pytest.raises(ContractError):
        ds.SplitPlan(train_fraction=1.0)
