"""
Evaluation Tests

Covers the split protocols, the confusion-matrix metrics, the end-to-end
pipeline on a synthetic dataset, cross-validation, grid search and the
saved recognizer bundle.
"""

import numpy as np
import pandas as pd
import pytest

from errors import (
    ConfigError,
    EmptyClassAfterFilter,
    LabelOutOfRange,
    MissingClassInTrain,
    UnknownSample,
    UnknownSubject,
)
from evaluation import (
    MSR_ACTION_SETS,
    Recognizer,
    average_accuracy,
    compare_feature_sets,
    confusion_matrix,
    cross_validate,
    evaluate_features,
    extract_dataset_features,
    fit_recognizer,
    make_split,
    per_class_accuracy,
    run_experiment,
    tune_grid,
)
from representation import assemble_vector
from schemas import PipelineSettings, Protocol, SynthSpec
from synth import generate

SETTINGS = PipelineSettings(workers=1)


def make_index(actions, subjects, trials):
    rows = [
        {"seq_id": f"a{a:02d}_s{s:02d}_e{t:02d}", "action": a, "subject": s, "trial": t}
        for a in actions
        for s in subjects
        for t in trials
    ]
    return pd.DataFrame(rows)


@pytest.fixture(scope="module")
def synth_dataset():
    return generate(SynthSpec(subjects=4, trials=5))


@pytest.fixture(scope="module")
def synth_features(synth_dataset):
    return extract_dataset_features(synth_dataset, SETTINGS)


@pytest.fixture(scope="module")
def cross_subject_split(synth_dataset):
    protocol = Protocol(name="custom", train_subjects=(1, 3), params=SETTINGS)
    return make_split(synth_dataset, protocol)


# ============================================================================
# Test 1: Split Protocols
# ============================================================================

def test_msr_subset_cross_uses_odd_subjects():
    index = make_index(range(1, 21), range(1, 11), range(1, 4))
    train, test = make_split(index, Protocol(name="msr_subset_cross", subset="AS1"))
    lookup = index.set_index("seq_id")
    assert set(lookup.loc[train, "action"]) == set(MSR_ACTION_SETS["AS1"])
    assert set(lookup.loc[train, "subject"]) == {1, 3, 5, 7, 9}
    assert set(lookup.loc[test, "subject"]) == {2, 4, 6, 8, 10}
    assert len(train) + len(test) == 8 * 10 * 3


def test_utd_cross_split():
    index = make_index(range(1, 28), range(1, 9), range(1, 5))
    train, test = make_split(index, Protocol(name="utd_cross"))
    lookup = index.set_index("seq_id")
    assert set(lookup.loc[train, "subject"]) == {1, 3, 5, 7}
    assert set(lookup.loc[test, "subject"]) == {2, 4, 6, 8}


def test_dha_cross_split():
    index = make_index([1, 2], range(1, 22), [1])
    train, _ = make_split(index, Protocol(name="dha_cross"))
    assert len(train) == 2 * 11


@pytest.mark.parametrize("name, n_train", [("msr_subset_test1", 3), ("msr_subset_test2", 6)])
def test_trial_share_per_class(name, n_train):
    index = make_index(MSR_ACTION_SETS["AS2"], [1], range(1, 10))
    train, test = make_split(index, Protocol(name=name, subset="AS2"))
    lookup = index.set_index("seq_id")
    counts = lookup.loc[train].groupby("action").size()
    assert (counts == n_train).all()
    assert len(test) == 8 * (9 - n_train)
    # first trials train
    assert lookup.loc[train, "trial"].max() == n_train


@pytest.mark.parametrize(
    "protocol",
    [
        Protocol(name="msr_subset_test1", subset="AS3"),
        Protocol(name="msr_subset_test2", subset="AS1"),
        Protocol(name="msr_subset_cross", subset="AS2"),
        Protocol(name="msr_all_cross"),
    ],
)
def test_splits_are_disjoint_and_exhaustive(protocol):
    index = make_index(range(1, 21), range(1, 11), range(1, 4))
    train, test = make_split(index, protocol)
    assert not set(train) & set(test)
    if protocol.subset:
        expected = set(index.seq_id[index.action.isin(MSR_ACTION_SETS[protocol.subset])])
    else:
        expected = set(index.seq_id)
    assert set(train) | set(test) == expected


def test_unknown_subject_rejected():
    index = make_index([1, 2], [1, 9], [1])
    with pytest.raises(UnknownSubject):
        make_split(index, Protocol(name="utd_cross"))


def test_missing_action_set_class_rejected():
    index = make_index([2, 3, 5, 6, 10, 13, 18], [1, 2], [1])
    with pytest.raises(EmptyClassAfterFilter):
        make_split(index, Protocol(name="msr_subset_cross", subset="AS1"))


def test_custom_id_lists():
    index = make_index([1, 2], [1], [1, 2])
    protocol = Protocol(name="custom", train_ids=("a01_s01_e01", "a02_s01_e01"), test_ids=("a01_s01_e02",))
    assert make_split(index, protocol) == (["a01_s01_e01", "a02_s01_e01"], ["a01_s01_e02"])
    with pytest.raises(UnknownSample):
        make_split(index, Protocol(name="custom", train_ids=("a09_s01_e01",), test_ids=("a01_s01_e02",)))


def test_protocol_requires_subset():
    with pytest.raises(ValueError):
        Protocol(name="msr_subset_cross")
    with pytest.raises(ValueError):
        Protocol(name="utd_cross", subset="AS1")


# ============================================================================
# Test 2: Metrics
# ============================================================================

def test_perfect_predictions():
    labels = [1, 2, 3, 3, 2]
    matrix = confusion_matrix(labels, labels, 3)
    np.testing.assert_array_equal(matrix, np.diag([1, 2, 2]))
    assert average_accuracy(matrix) == 1.0
    np.testing.assert_array_equal(per_class_accuracy(matrix), [1.0, 1.0, 1.0])


def test_everything_predicted_as_class_one():
    truths = [1, 1, 2, 3, 3]
    matrix = confusion_matrix(truths, [1] * 5, 3)
    np.testing.assert_array_equal(matrix[:, 0], [2, 1, 2])
    assert matrix[:, 1:].sum() == 0
    assert average_accuracy(matrix) == pytest.approx(2 / 5)


def test_confusion_matches_tally():
    rng = np.random.default_rng(0)
    classes = [2, 5, 9, 11]
    truths = rng.choice(classes, 200).tolist()
    preds = rng.choice(classes, 200).tolist()
    tally = np.zeros((4, 4), dtype=int)
    for t, p in zip(truths, preds):
        tally[classes.index(t), classes.index(p)] += 1
    matrix = confusion_matrix(truths, preds, classes)
    np.testing.assert_array_equal(matrix, tally)
    assert matrix.sum() == 200
    np.testing.assert_array_equal(matrix.sum(axis=1), [truths.count(c) for c in classes])


def test_label_out_of_range():
    with pytest.raises(LabelOutOfRange):
        confusion_matrix([1, 2], [1, 4], 3)


# ============================================================================
# Test 3: End-to-End on Synthetic Data
# ============================================================================

def test_cross_subject_accuracy(synth_features, cross_subject_split):
    train, test = cross_subject_split
    report = evaluate_features(synth_features, train, test, SETTINGS)
    assert report.average_accuracy >= 0.9
    assert report.n_test == len(test) == 30
    np.testing.assert_array_equal(report.confusion.sum(axis=1), [10, 10, 10])
    assert report.input_dim == 3168
    assert 1 <= report.reduced_dim < len(train)


def test_fusion_is_at_least_as_good_as_either_half(synth_features, cross_subject_split):
    reports = compare_feature_sets(synth_features, *cross_subject_split, SETTINGS)
    assert reports["fused"].average_accuracy >= max(
        reports["gmhi"].average_accuracy,
        reports["gshi"].average_accuracy,
    )
    assert reports["gmhi"].input_dim == 3168 // 2


def test_training_set_scored_on_itself_is_perfect(synth_dataset):
    ids = tuple(seq.seq_id for seq in synth_dataset if seq.subject_id == 1)
    protocol = Protocol(name="custom", train_ids=ids, test_ids=ids, params=SETTINGS)
    assert run_experiment(synth_dataset, protocol).average_accuracy == 1.0


def test_missing_class_in_training(synth_features):
    index = synth_features.index
    train = index.seq_id[(index.action != 3) & (index.subject == 1)].tolist()
    test = index.seq_id[index.subject == 2].tolist()
    with pytest.raises(MissingClassInTrain):
        evaluate_features(synth_features, train, test, SETTINGS)


def test_report_files_are_deterministic(synth_features, cross_subject_split, tmp_path):
    first = evaluate_features(synth_features, *cross_subject_split, SETTINGS)
    second = evaluate_features(synth_features, *cross_subject_split, SETTINGS)
    for path_a, path_b in zip(first.write(tmp_path / "a"), second.write(tmp_path / "b")):
        assert path_a.read_bytes() == path_b.read_bytes()
    summary = pd.read_csv(tmp_path / "a" / "report.csv")
    assert "average_accuracy" in summary.metric.tolist()


def test_library_report_writes_its_parameters(synth_features, cross_subject_split, tmp_path):
    report = evaluate_features(synth_features, *cross_subject_split, SETTINGS, feature_set="gshi")
    report.write(tmp_path)
    lines = (tmp_path / "manifest.txt").read_text(encoding="utf-8").splitlines()
    assert "protocol = custom" in lines
    assert "zeta_m = 10.0" in lines
    assert "mu = 0.0001" in lines
    assert "spatial_bins = 1x2" in lines
    assert "feature_set = gshi" in lines
    assert [line.split(" = ")[0] for line in lines] == sorted(line.split(" = ")[0] for line in lines)


def test_protocol_report_names_its_split(synth_dataset):
    ids = tuple(seq.seq_id for seq in synth_dataset if seq.subject_id == 1)
    protocol = Protocol(name="custom", train_ids=ids, test_ids=ids, params=SETTINGS)
    config = run_experiment(synth_dataset, protocol).config
    assert "protocol = custom" in config
    assert f"train_ids = {', '.join(ids)}" in config
    assert "train_subjects = " in config


@pytest.mark.parametrize("feature_set", ["fused", "gmhi", "gshi"])
def test_table_vectors_match_single_assembly(synth_features, feature_set):
    ids = synth_features.index.seq_id.tolist()[:7]
    batch = synth_features.vectors(feature_set, ids)
    for row, position in zip(batch, synth_features.positions(ids)):
        segments = {name: values[position] for name, values in synth_features.segments.items()}
        np.testing.assert_allclose(row, assemble_vector(segments, feature_set), rtol=1e-12, atol=0)
    np.testing.assert_allclose(np.linalg.norm(batch, axis=1), 1.0, rtol=1e-12)


def test_feature_extraction_independent_of_pool_size(synth_dataset):
    subset = synth_dataset[:6]
    serial = extract_dataset_features(subset, SETTINGS)
    pooled = extract_dataset_features(subset, PipelineSettings(workers=2))
    assert serial.index.seq_id.tolist() == pooled.index.seq_id.tolist()
    for name, values in serial.segments.items():
        np.testing.assert_array_equal(values, pooled.segments[name])


# ============================================================================
# Test 4: Cross-Validation and Grid Search
# ============================================================================

def test_cross_validation_on_training_split(synth_features, cross_subject_split):
    train, _ = cross_subject_split
    score = cross_validate(synth_features, train, SETTINGS)
    assert 0.0 <= score <= 1.0
    assert score == cross_validate(synth_features, train, SETTINGS)


def test_single_cell_grid_is_selected(synth_dataset):
    protocol = Protocol(name="custom", train_subjects=(1, 3), params=SETTINGS)
    result = tune_grid(synth_dataset, protocol, {"mu": [1e-3]})
    assert len(result.table) == 1
    assert result.table.selected.tolist() == [True]
    assert result.best["mu"] == 1e-3
    assert result.best["spatial_bins"] == "1x2"


def test_grid_picks_first_maximum(synth_dataset, tmp_path):
    protocol = Protocol(name="custom", train_subjects=(1, 3), params=SETTINGS)
    result = tune_grid(synth_dataset, protocol, {"orientation_bins": [4, 8], "mu": [1e-4, 1e-2]})
    scores = result.table.cv_accuracy.to_numpy()
    assert len(scores) == 4
    best = int(np.flatnonzero(scores == scores.max())[0])
    assert result.table.selected.tolist() == [i == best for i in range(4)]
    paths = result.write(tmp_path)
    assert [p.name for p in paths] == ["tune.csv", "best.txt"]


def test_empty_grid_rejected(synth_dataset):
    protocol = Protocol(name="custom", train_subjects=(1,), params=SETTINGS)
    with pytest.raises(ConfigError):
        tune_grid(synth_dataset, protocol, {})
    with pytest.raises(ConfigError):
        tune_grid(synth_dataset, protocol, {"mu": []})
    with pytest.raises(ConfigError):
        tune_grid(synth_dataset, protocol, {"zeta_m": [5]})


# ============================================================================
# Test 5: Recognizer Bundle
# ============================================================================

def test_recognizer_round_trip(synth_dataset, cross_subject_split, tmp_path):
    train, test = cross_subject_split
    recognizer = fit_recognizer(synth_dataset, train, SETTINGS)
    loaded = Recognizer.load(recognizer.save(tmp_path / "model"))
    by_id = {seq.seq_id: seq for seq in synth_dataset}
    for seq_id in test[:5]:
        original = recognizer.recognize(by_id[seq_id])
        restored = loaded.recognize(by_id[seq_id])
        assert original.predicted_class == restored.predicted_class
        np.testing.assert_allclose(original.residuals, restored.residuals, rtol=1e-12)


def test_recognizer_load_missing_bundle(tmp_path):
    with pytest.raises(FileNotFoundError):
        Recognizer.load(tmp_path)
