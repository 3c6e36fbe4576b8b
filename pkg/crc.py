"""
l2-Regularized Collaborative Representation Classifier (CRC)

Codes a query as a linear combination of ALL training samples, with a
per-sample Tikhonov penalty that grows with the sample's distance from the
query, then assigns the class whose own samples reconstruct it best.

How it works:
1. A = diag(||s - p_1||, ..., ||s - p_N||)
2. beta = (P^T P + mu A^T A)^-1 P^T s   (Cholesky, SPD for mu > 0)
3. q_j = ||s - P_j beta_j|| for every class j
4. predicted class = argmin q_j (ties: smallest class id)
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from errors import LengthMismatch, SingularSystem

logger = logging.getLogger(__name__)

# Added to the diagonal once when the first factorization fails
FALLBACK_RIDGE = 1e-10
# Relative tolerance under which two residuals count as tied
TIE_TOLERANCE = 1e-10


# ============================================================================
# Model
# ============================================================================

@dataclass(frozen=True, eq=False)
class CrcModel:
    """
    Training dictionary of a collaborative representation classifier.

    Attributes:
        dictionary: (D_f, N) matrix P, one training sample per column
        labels: (N,) class id per column
        mu: regularization weight (> 0)
    """

    dictionary: np.ndarray
    labels: np.ndarray
    mu: float = 1e-4

    def __post_init__(self):
        if self.dictionary.ndim != 2:
            raise ValueError(f"dictionary must be 2D, got shape {self.dictionary.shape}")
        if self.dictionary.shape[1] == 0:
            raise ValueError("dictionary needs at least one training sample")
        if len(self.labels) != self.dictionary.shape[1]:
            raise LengthMismatch(
                f"{len(self.labels)} labels for {self.dictionary.shape[1]} dictionary columns"
            )
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")

    @classmethod
    def from_vectors(cls, vectors: np.ndarray, labels: Sequence[int], mu: float = 1e-4) -> "CrcModel":
        """Build from an (N, D_f) matrix of row vectors."""
        rows = np.asarray(vectors, dtype=np.float64)
        return cls(
            dictionary=np.ascontiguousarray(rows.T),
            labels=np.asarray(labels, dtype=np.int64),
            mu=float(mu),
        )

    @property
    def dim(self) -> int:
        return int(self.dictionary.shape[0])

    @property
    def size(self) -> int:
        return int(self.dictionary.shape[1])

    @cached_property
    def classes(self) -> np.ndarray:
        """Sorted distinct class ids."""
        return np.unique(self.labels)

    @cached_property
    def gram(self) -> np.ndarray:
        """P^T P, shared by every query."""
        return self.dictionary.T @ self.dictionary


@dataclass(frozen=True, eq=False)
class CrcDecision:
    """Outcome of classifying one query."""

    predicted_class: int
    classes: np.ndarray
    residuals: np.ndarray
    coefficients: np.ndarray
    ridge: float = 0.0

    @property
    def residual_map(self) -> Dict[int, float]:
        return {int(c): float(q) for c, q in zip(self.classes, self.residuals)}


# ============================================================================
# Coding
# ============================================================================

def _check_query(model: CrcModel, s: np.ndarray) -> np.ndarray:
    query = np.asarray(s, dtype=np.float64)
    if query.ndim != 1 or query.shape[0] != model.dim:
        raise LengthMismatch(f"query of shape {query.shape} does not match dictionary dimension {model.dim}")
    return query


def build_tikhonov(s: np.ndarray, model: CrcModel) -> np.ndarray:
    """N x N diagonal matrix with the distances ||s - p_i|| on its diagonal."""
    query = _check_query(model, s)
    distances = np.linalg.norm(model.dictionary - query[:, None], axis=0)
    return np.diag(distances)


def _solve(model: CrcModel, s: np.ndarray, distances: np.ndarray) -> Tuple[np.ndarray, float]:
    system = model.gram + model.mu * np.diag(distances * distances)
    rhs = model.dictionary.T @ s
    try:
        return cho_solve(cho_factor(system, lower=True, check_finite=False), rhs), 0.0
    except LinAlgError:
        logger.warning(
            "CRC system is not positive definite (N=%d); retrying with ridge %.0e",
            model.size,
            FALLBACK_RIDGE,
        )
    try:
        factor = cho_factor(system + FALLBACK_RIDGE * np.eye(model.size), lower=True, check_finite=False)
    except LinAlgError as exc:
        raise SingularSystem(f"CRC system could not be factorized even with ridge {FALLBACK_RIDGE}") from exc
    return cho_solve(factor, rhs), FALLBACK_RIDGE


def solve_coefficients(model: CrcModel, s: np.ndarray, tikhonov: np.ndarray = None) -> np.ndarray:
    """
    Coding vector beta = (P^T P + mu A^T A)^-1 P^T s.

    Args:
        model: training dictionary
        s: query vector, length D_f
        tikhonov: the diagonal matrix A (or its diagonal); built from s when omitted

    Raises:
        LengthMismatch: query length differs from the dictionary dimension
        SingularSystem: factorization fails even after the fallback ridge
    """
    query = _check_query(model, s)
    if tikhonov is None:
        tikhonov = build_tikhonov(query, model)
    tikhonov = np.asarray(tikhonov, dtype=np.float64)
    distances = np.diag(tikhonov) if tikhonov.ndim == 2 else tikhonov
    beta, _ = _solve(model, query, distances)
    return beta


def class_residuals(model: CrcModel, s: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """q_j = ||s - P_j beta_j|| for every class in model.classes order."""
    residuals = np.empty(len(model.classes), dtype=np.float64)
    for index, label in enumerate(model.classes):
        members = model.labels == label
        residuals[index] = np.linalg.norm(s - model.dictionary[:, members] @ beta[members])
    return residuals


def classify(model: CrcModel, s: np.ndarray) -> CrcDecision:
    """
    Classify one query vector.

    Example:
        >>> model = CrcModel.from_vectors(np.eye(3), [1, 2, 3], mu=1e-4)
        >>> classify(model, np.array([0.0, 1.0, 0.0])).predicted_class
        2
    """
    query = _check_query(model, s)
    distances = np.linalg.norm(model.dictionary - query[:, None], axis=0)
    beta, ridge = _solve(model, query, distances)
    residuals = class_residuals(model, query, beta)

    best = residuals.min()
    tied = np.flatnonzero(residuals <= best + TIE_TOLERANCE * max(1.0, best))
    return CrcDecision(
        predicted_class=int(model.classes[tied[0]]),
        classes=model.classes,
        residuals=residuals,
        coefficients=beta,
        ridge=ridge,
    )


def classify_many(model: CrcModel, queries: np.ndarray) -> List[CrcDecision]:
    """Classify every row of an (M, D_f) matrix."""
    rows = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    return [classify(model, row) for row in rows]


def decisions_to_frame(
    seq_ids: Sequence[str],
    truths: Sequence[int],
    decisions: Sequence[CrcDecision],
) -> pd.DataFrame:
    """Per-sample table: seq_id, true_class, predicted_class, q_<class>..."""
    records = []
    for seq_id, truth, decision in zip(seq_ids, truths, decisions):
        row = {"seq_id": seq_id, "true_class": int(truth), "predicted_class": decision.predicted_class}
        row.update({f"q_{c}": q for c, q in decision.residual_map.items()})
        records.append(row)
    return pd.DataFrame.from_records(records)


# ============================================================================
# Persistence
# ============================================================================

def save_crc(model: CrcModel, path: Path) -> Path:
    """Store the dictionary, labels and mu as a NumPy .npz archive."""
    path = Path(path)
    with path.open("wb") as handle:
        np.savez(handle, dictionary=model.dictionary, labels=model.labels, mu=np.float64(model.mu))
    return path


def load_crc(path: Path) -> CrcModel:
    with np.load(Path(path)) as archive:
        return CrcModel(
            dictionary=archive["dictionary"].astype(np.float64),
            labels=archive["labels"].astype(np.int64),
            mu=float(archive["mu"]),
        )
