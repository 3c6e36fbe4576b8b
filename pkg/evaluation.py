"""
Evaluation Protocols and Experiment Runner

Splits a dataset according to the benchmark protocols, runs the full
pipeline (MTM -> GLAC -> PCA -> CRC) and aggregates the predictions into
accuracy figures, a confusion matrix and CSV reports.

Protocols:
- msr_subset_test1 / msr_subset_test2: per action set (AS1..AS3), 1/3 resp.
  2/3 of every (class, subject) group trains, the rest tests
- msr_subset_cross / msr_all_cross: subjects 1, 3, 5, 7, 9 train
- dha_cross: odd subjects 1..21 train
- utd_cross: subjects 1, 3, 5, 7 train
- custom: explicit train subjects, or explicit train/test id lists
"""

import logging
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import ValidationError
from sklearn.metrics import confusion_matrix as count_confusions
from sklearn.model_selection import StratifiedKFold

from crc import CrcDecision, CrcModel, classify, classify_many, decisions_to_frame, load_crc, save_crc
from depth_io import DepthSequence
from errors import (
    ConfigError,
    DeptrailError,
    EmptyClassAfterFilter,
    EmptyInput,
    LabelOutOfRange,
    MissingClassInTrain,
    UnknownSample,
    UnknownSubject,
)
from mtm import compute_mtm
from representation import (
    FEATURE_SEGMENTS,
    SEGMENTS,
    PcaModel,
    assemble_vector,
    fit_pca,
    history_templates,
    l2_normalize,
    load_pca,
    project_pca,
    save_pca,
    template_segments,
)
from schemas import GlacConfig, PipelineSettings, Protocol, manifest_lines, parse_grid_shape

logger = logging.getLogger(__name__)

# ============================================================================
# Protocol Constants
# ============================================================================

MSR_ACTION_SETS = {
    "AS1": (2, 3, 5, 6, 10, 13, 18, 20),
    "AS2": (1, 4, 7, 8, 9, 11, 14, 12),
    "AS3": (6, 14, 15, 16, 17, 18, 19, 20),
}

SUBJECT_ROSTERS = {
    "msr": tuple(range(1, 11)),
    "dha": tuple(range(1, 22)),
    "utd": tuple(range(1, 9)),
}

CROSS_SUBJECT_TRAIN = {
    "msr": (1, 3, 5, 7, 9),
    "dha": tuple(range(1, 22, 2)),
    "utd": (1, 3, 5, 7),
}

PROTOCOL_FAMILY = {
    "msr_subset_test1": "msr",
    "msr_subset_test2": "msr",
    "msr_subset_cross": "msr",
    "msr_all_cross": "msr",
    "dha_cross": "dha",
    "utd_cross": "utd",
}

# Published accuracy and the acceptance floor used when real data is present
REFERENCE_TARGETS = {
    "msr_all_cross": (0.945, 0.88),
    "dha_cross": (0.991, 0.92),
    "utd_cross": (0.895, 0.82),
}

TUNABLE_KEYS = ("orientation_bins", "delta_r", "spatial_bins", "mu")


# ============================================================================
# Splits
# ============================================================================

def dataset_index(dataset: Sequence[DepthSequence]) -> pd.DataFrame:
    """One row per sequence: seq_id, action, subject, trial (dataset order)."""
    index = pd.DataFrame(
        {
            "seq_id": [seq.seq_id for seq in dataset],
            "action": [seq.action_id for seq in dataset],
            "subject": [seq.subject_id for seq in dataset],
            "trial": [seq.trial_id for seq in dataset],
        }
    )
    duplicated = index.seq_id[index.seq_id.duplicated()].tolist()
    if duplicated:
        raise DeptrailError(f"duplicate sequence ids in dataset: {sorted(set(duplicated))}")
    return index


def _trial_share(index: pd.DataFrame, numerator: int, denominator: int) -> pd.Series:
    """Mark the first ceil(N * num / den) trials of every (class, subject) group as train."""
    train = pd.Series(False, index=index.index)
    for _, group in index.groupby(["action", "subject"], sort=True):
        ordered = group.sort_values(["subject", "trial"], kind="stable")
        n_train = -(-len(ordered) * numerator // denominator)
        train.loc[ordered.index[:n_train]] = True
    return train


def _custom_split(index: pd.DataFrame, protocol: Protocol) -> Tuple[List[str], List[str]]:
    if protocol.train_ids is not None and protocol.test_ids is not None:
        known = set(index.seq_id)
        missing = sorted((set(protocol.train_ids) | set(protocol.test_ids)) - known)
        if missing:
            raise UnknownSample(f"sequence ids not in the dataset: {missing}")
        overlap = set(protocol.train_ids) & set(protocol.test_ids)
        if overlap:
            # smoke mode: scoring the training set itself
            logger.warning("%d sequence ids are on both sides of the custom split", len(overlap))
        return list(protocol.train_ids), list(protocol.test_ids)
    train = index.subject.isin(protocol.train_subjects)
    return index.seq_id[train].tolist(), index.seq_id[~train].tolist()


def make_split(
    dataset: Union[Sequence[DepthSequence], pd.DataFrame],
    protocol: Protocol,
) -> Tuple[List[str], List[str]]:
    """
    Split a dataset into train and test sequence ids.

    Args:
        dataset: sequences, or an index frame from dataset_index
        protocol: split protocol

    Returns:
        tuple: (train ids, test ids), disjoint; together they cover every
               sample that survives the subset filter

    Raises:
        UnknownSubject: a subject outside the protocol's roster
        EmptyClassAfterFilter: an action set class has no samples

    Example:
        >>> make_split(dataset, Protocol(name="utd_cross"))   # subjects 1,3,5,7 train
    """
    index = dataset if isinstance(dataset, pd.DataFrame) else dataset_index(dataset)
    if protocol.name == "custom":
        return _custom_split(index, protocol)

    family = PROTOCOL_FAMILY[protocol.name]
    if protocol.name.startswith("msr_subset"):
        classes = MSR_ACTION_SETS[protocol.subset]
        index = index[index.action.isin(classes)]
        empty = [label for label in classes if label not in set(index.action)]
        if empty:
            raise EmptyClassAfterFilter(f"{protocol.subset} classes without samples: {empty}")

    roster = SUBJECT_ROSTERS[family]
    unknown = sorted(set(index.subject) - set(roster))
    if unknown:
        raise UnknownSubject(f"subjects {unknown} are not in the {family} roster {roster[0]}..{roster[-1]}")

    if protocol.name == "msr_subset_test1":
        train = _trial_share(index, 1, 3)
    elif protocol.name == "msr_subset_test2":
        train = _trial_share(index, 2, 3)
    else:
        train = index.subject.isin(protocol.train_subjects or CROSS_SUBJECT_TRAIN[family])
    return index.seq_id[train].tolist(), index.seq_id[~train].tolist()


# ============================================================================
# Metrics
# ============================================================================

def confusion_matrix(truths: Sequence[int], preds: Sequence[int], classes: Union[int, Sequence[int]]) -> np.ndarray:
    """
    C x C count matrix, rows = actual class, columns = predicted class.

    Args:
        classes: C (labels 1..C) or the explicit ordered list of class ids

    Raises:
        LabelOutOfRange: a truth or prediction is not one of the classes
    """
    labels = list(range(1, classes + 1)) if isinstance(classes, int) else [int(c) for c in classes]
    if len(truths) != len(preds):
        raise ValueError(f"{len(truths)} truths for {len(preds)} predictions")
    stray = sorted({int(v) for v in list(truths) + list(preds)} - set(labels))
    if stray:
        raise LabelOutOfRange(f"labels {stray} are outside the class list {labels}")
    if len(truths) == 0:
        return np.zeros((len(labels), len(labels)), dtype=np.int64)
    return count_confusions(truths, preds, labels=labels).astype(np.int64)


def per_class_accuracy(confusion: np.ndarray) -> np.ndarray:
    """Diagonal over row sums; NaN for classes without test samples."""
    totals = confusion.sum(axis=1).astype(np.float64)
    hits = np.diag(confusion).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(totals > 0, hits / totals, np.nan)


def average_accuracy(confusion: np.ndarray) -> float:
    """Sample-weighted accuracy: trace / total."""
    total = confusion.sum()
    return float(np.trace(confusion) / total) if total else 0.0


# ============================================================================
# Reports
# ============================================================================

@dataclass(eq=False)
class EvalReport:
    """
    Outcome of one experiment.

    Attributes:
        classes: class ids labelling the confusion rows/columns
        confusion: C x C counts, rows = actual, columns = predicted
        predictions: per-sample table (seq_id, true_class, predicted_class, q_<c>)
        reduced_dim: PCA dimension k
        input_dim: action vector length before PCA
        config: resolved "key = value" lines for the manifest
    """

    protocol: str
    subset: Optional[str]
    feature_set: str
    classes: Tuple[int, ...]
    confusion: np.ndarray
    predictions: pd.DataFrame
    reduced_dim: int
    input_dim: int
    n_train: int
    config: List[str] = field(default_factory=list)

    @property
    def n_test(self) -> int:
        return int(self.confusion.sum())

    @property
    def average_accuracy(self) -> float:
        return average_accuracy(self.confusion)

    @property
    def per_class_accuracy(self) -> Dict[int, float]:
        return dict(zip(self.classes, per_class_accuracy(self.confusion).tolist()))

    @property
    def class_mean_accuracy(self) -> float:
        values = per_class_accuracy(self.confusion)
        return float(np.nanmean(values)) if np.isfinite(values).any() else 0.0

    def summary_frame(self) -> pd.DataFrame:
        """Two-column metric table written as report.csv."""
        rows = [
            ("protocol", self.protocol),
            ("subset", self.subset or ""),
            ("feature_set", self.feature_set),
            ("n_train", self.n_train),
            ("n_test", self.n_test),
            ("input_dim", self.input_dim),
            ("reduced_dim", self.reduced_dim),
            ("average_accuracy", f"{self.average_accuracy:.6f}"),
            ("class_mean_accuracy", f"{self.class_mean_accuracy:.6f}"),
        ]
        if self.protocol in REFERENCE_TARGETS:
            target, floor = REFERENCE_TARGETS[self.protocol]
            rows += [
                ("reference_accuracy", f"{target:.3f}"),
                ("acceptance_floor", f"{floor:.3f}"),
                ("meets_floor", str(self.average_accuracy >= floor).lower()),
            ]
        rows += [(f"accuracy_class_{c}", f"{acc:.6f}") for c, acc in self.per_class_accuracy.items()]
        return pd.DataFrame(rows, columns=["metric", "value"])

    def confusion_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            self.confusion,
            index=pd.Index([f"actual_{c}" for c in self.classes], name="class"),
            columns=[f"predicted_{c}" for c in self.classes],
        )

    def write(self, out_dir: Path) -> List[Path]:
        """
        Write report.csv, confusion.csv, predictions.csv and manifest.txt.

        Nothing time-dependent is written, so reruns are byte-identical.
        """
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = [out_dir / name for name in ("report.csv", "confusion.csv", "predictions.csv", "manifest.txt")]
        self.summary_frame().to_csv(paths[0], index=False)
        self.confusion_frame().to_csv(paths[1])
        self.predictions.to_csv(paths[2], index=False, float_format="%.10g")
        paths[3].write_text("\n".join(self.config) + "\n", encoding="utf-8")
        logger.info("Wrote report files to %s", out_dir)
        return paths


# ============================================================================
# Feature Extraction (worker pool over sequences)
# ============================================================================

@dataclass(frozen=True, eq=False)
class FeatureTable:
    """
    Raw GLAC segments of a set of sequences.

    Attributes:
        index: seq_id, action, subject, trial per row
        segments: segment name -> (N, segment length) matrix
    """

    index: pd.DataFrame
    segments: Dict[str, np.ndarray]

    def positions(self, seq_ids: Sequence[str]) -> np.ndarray:
        rows = pd.Index(self.index.seq_id).get_indexer(list(seq_ids))
        if (rows < 0).any():
            missing = [sid for sid, row in zip(seq_ids, rows) if row < 0]
            raise UnknownSample(f"sequence ids without features: {missing}")
        return rows

    def labels(self, seq_ids: Sequence[str]) -> np.ndarray:
        return self.index.action.to_numpy()[self.positions(seq_ids)]

    def vectors(self, feature_set: str, seq_ids: Sequence[str]) -> np.ndarray:
        """l2-normalized action vectors (rows) of the requested sequences."""
        rows = self.positions(seq_ids)
        return l2_normalize(np.hstack([self.segments[name][rows] for name in FEATURE_SEGMENTS[feature_set]]))


def _n_jobs(workers: Optional[int]) -> int:
    return workers if workers else -1


def sequence_templates(seq: DepthSequence, settings: PipelineSettings) -> Dict[str, np.ndarray]:
    """MTM of one sequence, turned into the six gray templates."""
    return history_templates(compute_mtm(seq, settings.mtm), settings.template)


def extract_templates(dataset: Sequence[DepthSequence], settings: PipelineSettings) -> List[Dict[str, np.ndarray]]:
    logger.info("Computing motion trail templates for %d sequences", len(dataset))
    return Parallel(n_jobs=_n_jobs(settings.workers))(
        delayed(sequence_templates)(seq, settings) for seq in dataset
    )


def features_from_templates(
    templates: Sequence[Dict[str, np.ndarray]],
    index: pd.DataFrame,
    glac: GlacConfig,
    workers: Optional[int] = None,
) -> FeatureTable:
    """GLAC segments of precomputed templates (rows follow `index`)."""
    rows = Parallel(n_jobs=_n_jobs(workers))(delayed(template_segments)(item, glac) for item in templates)
    segments = {name: np.vstack([row[name] for row in rows]) for name in SEGMENTS}
    return FeatureTable(index=index.reset_index(drop=True), segments=segments)


def extract_dataset_features(dataset: Sequence[DepthSequence], settings: PipelineSettings) -> FeatureTable:
    """
    Raw GLAC segments of every sequence, computed on a joblib worker pool.

    Results keep dataset order whatever the pool size.
    """
    if len(dataset) == 0:
        raise EmptyInput("no sequences to extract features from")
    index = dataset_index(dataset)
    table = features_from_templates(extract_templates(dataset, settings), index, settings.glac, settings.workers)
    logger.info(
        "Extracted %s features for %d sequences (%d values per image)",
        "x".join(str(b) for b in settings.glac.spatial_bins),
        len(index),
        settings.glac.descriptor_length,
    )
    return table


# ============================================================================
# Recognizer (trained PCA + CRC bundle)
# ============================================================================

@dataclass(frozen=True, eq=False)
class Recognizer:
    """Everything needed to classify a raw depth sequence."""

    settings: PipelineSettings
    pca: PcaModel
    crc: CrcModel

    def vector(self, seq: DepthSequence) -> np.ndarray:
        segments = template_segments(sequence_templates(seq, self.settings), self.settings.glac)
        return assemble_vector(segments, self.settings.feature_set)

    def recognize(self, seq: DepthSequence) -> CrcDecision:
        return classify(self.crc, project_pca(self.pca, self.vector(seq)))

    def save(self, model_dir: Path) -> Path:
        model_dir = Path(model_dir)
        model_dir.mkdir(parents=True, exist_ok=True)
        save_pca(self.pca, model_dir / "pca.bin")
        save_crc(self.crc, model_dir / "crc.npz")
        (model_dir / "settings.json").write_text(self.settings.model_dump_json(indent=2), encoding="utf-8")
        logger.info("Saved recognizer to %s", model_dir)
        return model_dir

    @classmethod
    def load(cls, model_dir: Path) -> "Recognizer":
        model_dir = Path(model_dir)
        for name in ("pca.bin", "crc.npz", "settings.json"):
            if not (model_dir / name).is_file():
                raise FileNotFoundError(f"recognizer bundle {model_dir} lacks {name}")
        settings = PipelineSettings.model_validate_json((model_dir / "settings.json").read_text(encoding="utf-8"))
        return cls(settings=settings, pca=load_pca(model_dir / "pca.bin"), crc=load_crc(model_dir / "crc.npz"))


def train_recognizer(vectors: np.ndarray, labels: Sequence[int], settings: PipelineSettings) -> Recognizer:
    """Fit PCA on the training vectors and build the CRC dictionary in the reduced space."""
    pca = fit_pca(vectors, settings.retention)
    crc = CrcModel.from_vectors(project_pca(pca, vectors), labels, settings.mu)
    return Recognizer(settings=settings, pca=pca, crc=crc)


def fit_recognizer(
    dataset: Sequence[DepthSequence],
    train_ids: Sequence[str],
    settings: PipelineSettings,
) -> Recognizer:
    """Train a recognizer on the named sequences of a dataset."""
    wanted = set(train_ids)
    table = extract_dataset_features([seq for seq in dataset if seq.seq_id in wanted], settings)
    ids = table.index.seq_id.tolist()
    return train_recognizer(table.vectors(settings.feature_set, ids), table.labels(ids), settings)


# ============================================================================
# Experiments
# ============================================================================

def evaluate_features(
    table: FeatureTable,
    train_ids: Sequence[str],
    test_ids: Sequence[str],
    settings: PipelineSettings,
    feature_set: Optional[str] = None,
    protocol: Optional[Protocol] = None,
) -> EvalReport:
    """
    Train on one split of precomputed features and score the test side.

    Raises:
        EmptyInput: no test samples
        MissingClassInTrain: a test class never occurs in training
    """
    feature_set = feature_set or settings.feature_set
    if len(test_ids) == 0:
        raise EmptyInput("the split has no test samples")
    train_labels = table.labels(train_ids)
    test_labels = table.labels(test_ids)
    missing = sorted(set(test_labels.tolist()) - set(train_labels.tolist()))
    if missing:
        raise MissingClassInTrain(f"test classes {missing} have no training samples")

    recognizer = train_recognizer(table.vectors(feature_set, train_ids), train_labels, settings)
    queries = project_pca(recognizer.pca, table.vectors(feature_set, test_ids))
    decisions = classify_many(recognizer.crc, queries)

    classes = tuple(int(c) for c in recognizer.crc.classes)
    items = protocol.manifest_items() if protocol else {"protocol": "custom", **settings.flat_items()}
    items["feature_set"] = feature_set
    report = EvalReport(
        protocol=protocol.name if protocol else "custom",
        subset=protocol.subset if protocol else None,
        feature_set=feature_set,
        classes=classes,
        confusion=confusion_matrix(test_labels, [d.predicted_class for d in decisions], classes),
        predictions=decisions_to_frame(list(test_ids), test_labels, decisions),
        reduced_dim=recognizer.pca.n_components,
        input_dim=recognizer.pca.input_dim,
        n_train=len(train_ids),
        config=manifest_lines(items),
    )
    logger.info(
        "%s accuracy %.4f on %d test samples (k=%d of %d)",
        feature_set,
        report.average_accuracy,
        report.n_test,
        report.reduced_dim,
        report.input_dim,
    )
    return report


def run_experiment(
    dataset: Sequence[DepthSequence],
    protocol: Protocol,
    feature_set: Optional[str] = None,
) -> EvalReport:
    """
    Run the whole pipeline for one protocol.

    How it works:
    1. Split the dataset (subset filter first for the MSR action sets)
    2. Compute MTM templates and GLAC features on the worker pool
    3. Fit PCA on the training vectors, project both sides
    4. Code every test vector with the CRC and aggregate the decisions
    """
    # ========================================================================
    # Step 1: Split
    # ========================================================================
    train_ids, test_ids = make_split(dataset, protocol)
    logger.info("Protocol %s: %d train / %d test sequences", protocol.name, len(train_ids), len(test_ids))

    # ========================================================================
    # Step 2: Features for the sequences the split uses
    # ========================================================================
    used = set(train_ids) | set(test_ids)
    table = extract_dataset_features([seq for seq in dataset if seq.seq_id in used], protocol.params)

    # ========================================================================
    # Step 3: Train and score
    # ========================================================================
    return evaluate_features(table, train_ids, test_ids, protocol.params, feature_set, protocol)


def compare_feature_sets(
    table: FeatureTable,
    train_ids: Sequence[str],
    test_ids: Sequence[str],
    settings: PipelineSettings,
) -> Dict[str, EvalReport]:
    """Score the fused vector and each half on the same split."""
    return {
        name: evaluate_features(table, train_ids, test_ids, settings, name)
        for name in FEATURE_SEGMENTS
    }


def cross_validate(
    table: FeatureTable,
    train_ids: Sequence[str],
    settings: PipelineSettings,
    feature_set: Optional[str] = None,
) -> float:
    """
    Mean accuracy of stratified k-fold cross-validation on the training split.

    k = min(settings.cv_folds, smallest class count); folds are shuffled
    with settings.seed.
    """
    ids = np.asarray(list(train_ids))
    labels = table.labels(ids)
    smallest = int(pd.Series(labels).value_counts().min()) if len(labels) else 0
    n_splits = min(settings.cv_folds, smallest)
    if n_splits < 2:
        raise EmptyInput(f"cross-validation needs 2 training samples per class, smallest class has {smallest}")

    folds = StratifiedKFold(n_splits=n_splits, shuffle=True, random_state=settings.seed)
    scores = [
        evaluate_features(table, ids[fit].tolist(), ids[held].tolist(), settings, feature_set).average_accuracy
        for fit, held in folds.split(ids, labels)
    ]
    return float(np.mean(scores))


# ============================================================================
# Hyperparameter Grid Search
# ============================================================================

@dataclass(eq=False)
class TuneResult:
    """Per-cell CV accuracy table with the selected row marked."""

    table: pd.DataFrame
    best: Dict[str, object]

    def write(self, out_dir: Path) -> List[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        table_path, best_path = out_dir / "tune.csv", out_dir / "best.txt"
        self.table.to_csv(table_path, index=False, float_format="%.6f")
        best_path.write_text("".join(f"{key} = {value}\n" for key, value in self.best.items()), encoding="utf-8")
        return [table_path, best_path]


def _grid_axes(grid: Dict[str, Sequence], settings: PipelineSettings) -> Dict[str, list]:
    unknown = sorted(set(grid) - set(TUNABLE_KEYS))
    if unknown:
        raise ConfigError(f"cannot tune {unknown}; tunable keys are {list(TUNABLE_KEYS)}")
    if not grid or any(len(values) == 0 for values in grid.values()):
        raise ConfigError("the tuning grid is empty")

    defaults = {
        "orientation_bins": [settings.glac.orientation_bins],
        "delta_r": [settings.glac.delta_r],
        "spatial_bins": [settings.glac.spatial_bins],
        "mu": [settings.mu],
    }
    axes = {key: list(grid.get(key, defaults[key])) for key in TUNABLE_KEYS}
    axes["orientation_bins"] = [int(v) for v in axes["orientation_bins"]]
    axes["delta_r"] = [int(v) for v in axes["delta_r"]]
    axes["spatial_bins"] = [parse_grid_shape(v) for v in axes["spatial_bins"]]
    axes["mu"] = [float(v) for v in axes["mu"]]
    if any(mu <= 0 for mu in axes["mu"]):
        raise ConfigError(f"mu values must be positive, got {axes['mu']}")
    return axes


def tune_grid(
    dataset: Sequence[DepthSequence],
    protocol: Protocol,
    grid: Dict[str, Sequence],
) -> TuneResult:
    """
    Grid search over (D, delta_r, spatial bins, mu) by cross-validation on
    the training split only.

    Templates are computed once; GLAC features once per GLAC setting.
    The best cell is the first maximum in grid order.

    Raises:
        ConfigError: empty grid, unknown key, or an invalid value
    """
    settings = protocol.params
    axes = _grid_axes(grid, settings)
    train_ids, _ = make_split(dataset, protocol)
    wanted = set(train_ids)
    train_set = [seq for seq in dataset if seq.seq_id in wanted]
    index = dataset_index(train_set)
    templates = extract_templates(train_set, settings)

    cache: Dict[tuple, FeatureTable] = {}
    rows = []
    for bins, delta_r, spatial, mu in product(*axes.values()):
        try:
            glac = GlacConfig(**{**settings.glac.model_dump(), "orientation_bins": bins, "delta_r": delta_r, "spatial_bins": spatial})
        except ValidationError as exc:
            raise ConfigError(f"invalid GLAC grid cell: {exc}") from exc
        key = (bins, delta_r, spatial)
        if key not in cache:
            cache[key] = features_from_templates(templates, index, glac, settings.workers)
        cell = settings.model_copy(update={"glac": glac, "mu": mu})
        score = cross_validate(cache[key], train_ids, cell)
        logger.info("Grid cell D=%d dr=%d bins=%dx%d mu=%g -> %.4f", bins, delta_r, spatial[0], spatial[1], mu, score)
        rows.append(
            {
                "orientation_bins": bins,
                "delta_r": delta_r,
                "spatial_bins": f"{spatial[0]}x{spatial[1]}",
                "mu": mu,
                "cv_accuracy": score,
            }
        )

    table = pd.DataFrame(rows)
    best = int(np.argmax(table.cv_accuracy.to_numpy()))
    table["selected"] = False
    table.loc[best, "selected"] = True
    return TuneResult(table=table, best=dict(rows[best]))
