"""Retrieval metrics, loss tables, and code-fitting diagnostics.

Precision and recall are computed per query against the labeled database at
a fixed Hamming radius; MAP averages precision over the full Hamming
ranking. Queries that retrieve nothing score precision 0 by default (the
conservative convention); a flag switches to skipping them for sensitivity
analysis since either reading is defensible.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .codes import expand_codes
from .fsdh import HashModel
from .index import CodeIndex, PackedCodes, hamming_matrix
from .sdh import SdhState, one_hot, w_step

ZERO_RETRIEVAL_MODES = ("zero", "skip")
BIAS_DIAGNOSTICS_MAX_SAMPLES = 5000


@dataclass(frozen=True)
class EvalReport:
    precision_at_radius: float
    recall_at_radius: float
    map: float
    pr_curve: list[tuple[float, float]]  # (recall, precision) per threshold
    radius: int
    per_query: np.ndarray | None = None      # per-query average precision
    losses: "LossRow | None" = None          # paired-run losses, when computed

    def __post_init__(self):
        for name in ("precision_at_radius", "recall_at_radius", "map"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        recalls = [r for r, _ in self.pr_curve]
        if any(b < a for a, b in zip(recalls, recalls[1:])):
            raise ValueError("pr_curve recall must be non-decreasing")


def _check_query_inputs(index: CodeIndex, queries: PackedCodes,
                        query_labels: np.ndarray) -> np.ndarray:
    if index.codes.count == 0:
        raise ValueError("empty database")
    if queries.count == 0:
        raise ValueError("no queries")
    query_labels = np.asarray(query_labels, dtype=np.int64)
    if query_labels.shape != (queries.count,):
        raise ValueError(
            f"query label count {query_labels.shape} does not match {queries.count} queries"
        )
    return query_labels


def precision_recall_at_radius(index: CodeIndex, queries: PackedCodes,
                               query_labels: np.ndarray, radius: int,
                               zero_retrieval: str = "zero") -> tuple[float, float]:
    """Mean per-query precision and recall of radius-limited retrieval."""
    if radius < 0:
        raise ValueError(f"radius must be non-negative, got {radius}")
    if zero_retrieval not in ZERO_RETRIEVAL_MODES:
        raise ValueError(f"zero_retrieval must be one of {ZERO_RETRIEVAL_MODES}")
    query_labels = _check_query_inputs(index, queries, query_labels)
    dist = hamming_matrix(index.codes, queries)
    within = dist <= radius
    match = index.labels[None, :] == query_labels[:, None]
    retrieved = within.sum(axis=1)
    relevant_retrieved = (within & match).sum(axis=1)
    class_sizes = match.sum(axis=1)
    if np.any(class_sizes == 0):
        bad = int(query_labels[np.argmax(class_sizes == 0)])
        raise ValueError(f"query label {bad} absent from database")

    nonzero = retrieved > 0
    precision_per_query = np.zeros(queries.count)
    precision_per_query[nonzero] = relevant_retrieved[nonzero] / retrieved[nonzero]
    if zero_retrieval == "skip":
        precision = float(precision_per_query[nonzero].mean()) if nonzero.any() else 0.0
    else:
        precision = float(precision_per_query.mean())
    recall = float((relevant_retrieved / class_sizes).mean())
    return precision, recall


def average_precisions(index: CodeIndex, queries: PackedCodes,
                       query_labels: np.ndarray) -> np.ndarray:
    """Per-query average precision along the full Hamming ranking.

    The ranking sorts by distance with ties broken by ascending database id,
    so the values are deterministic.
    """
    query_labels = _check_query_inputs(index, queries, query_labels)
    dist = hamming_matrix(index.codes, queries)
    ranks = np.arange(1, index.codes.count + 1)
    ap = np.empty(queries.count)
    for qi in range(queries.count):
        order = np.argsort(dist[qi], kind="stable")
        relevant = index.labels[order] == query_labels[qi]
        total = int(relevant.sum())
        if total == 0:
            raise ValueError(f"query label {int(query_labels[qi])} absent from database")
        hits = np.cumsum(relevant)
        ap[qi] = float((hits[relevant] / ranks[relevant]).sum() / total)
    return ap


def mean_average_precision(index: CodeIndex, queries: PackedCodes,
                           query_labels: np.ndarray) -> float:
    """Mean over queries of average precision along the full Hamming ranking."""
    return float(average_precisions(index, queries, query_labels).mean())


def pr_curve(index: CodeIndex, queries: PackedCodes, query_labels: np.ndarray,
             zero_retrieval: str = "zero") -> list[tuple[float, float]]:
    """Averaged (recall, precision) at every integer Hamming threshold 0..L.

    Sweeping distance thresholds matches Hamming-ranking semantics; recall
    is non-decreasing in the threshold and reaches 1 at threshold L.
    """
    if zero_retrieval not in ZERO_RETRIEVAL_MODES:
        raise ValueError(f"zero_retrieval must be one of {ZERO_RETRIEVAL_MODES}")
    query_labels = _check_query_inputs(index, queries, query_labels)
    bits = index.codes.bits
    dist = hamming_matrix(index.codes, queries)
    match = index.labels[None, :] == query_labels[:, None]
    class_sizes = match.sum(axis=1)
    if np.any(class_sizes == 0):
        bad = int(query_labels[np.argmax(class_sizes == 0)])
        raise ValueError(f"query label {bad} absent from database")

    # Per query: histogram distances once, cumulative sums give counts at
    # every threshold in one pass.
    retrieved_at = np.zeros((queries.count, bits + 1))
    relevant_at = np.zeros((queries.count, bits + 1))
    for qi in range(queries.count):
        retrieved_at[qi] = np.cumsum(np.bincount(dist[qi], minlength=bits + 1))
        relevant_at[qi] = np.cumsum(
            np.bincount(dist[qi][match[qi]], minlength=bits + 1))
    curve = []
    for t in range(bits + 1):
        nonzero = retrieved_at[:, t] > 0
        prec = np.zeros(queries.count)
        prec[nonzero] = relevant_at[nonzero, t] / retrieved_at[nonzero, t]
        if zero_retrieval == "skip":
            precision = float(prec[nonzero].mean()) if nonzero.any() else 0.0
        else:
            precision = float(prec.mean())
        recall = float((relevant_at[:, t] / class_sizes).mean())
        curve.append((recall, precision))
    return curve


def evaluate_retrieval(index: CodeIndex, queries: PackedCodes,
                       query_labels: np.ndarray, radius: int = 2,
                       zero_retrieval: str = "zero") -> EvalReport:
    """Precision/recall at the given radius, MAP, and the full PR curve."""
    precision, recall = precision_recall_at_radius(
        index, queries, query_labels, radius, zero_retrieval)
    ap = average_precisions(index, queries, query_labels)
    return EvalReport(
        precision_at_radius=precision,
        recall_at_radius=recall,
        map=float(ap.mean()),
        pr_curve=pr_curve(index, queries, query_labels, zero_retrieval),
        radius=radius,
        per_query=ap,
    )


@dataclass(frozen=True)
class BiasDiagnostics:
    """Grids and traces behind the code-fitting error identity.

    With K = X^T (X X^T)^{-1} X (an orthogonal projection) and P the
    least-squares projection, ||B - P^T X||^2 = Tr(B^T B) - Tr(B K B^T).
    When B holds per-class codes over label-sorted samples, B^T B is
    block-diagonal and the trace can be regrouped into sums of K entries
    over same-label pairs; both evaluations are carried and must agree.
    """

    k_matrix: np.ndarray    # (N, N) projection grid, for heatmap export
    btb_matrix: np.ndarray  # (N, N) code Gram grid
    trace_value: float      # Tr(B K B^T), direct evaluation
    trace_grouped: float    # same trace via the grouped label-block sum
    bias_value: float       # Tr(B^T B) - Tr(B K B^T)


def bias_term_diagnostics(features: np.ndarray, codes: np.ndarray,
                          labels: np.ndarray) -> BiasDiagnostics:
    """Materialize the projection grid K and code Gram B^T B.

    Expects samples sorted by label and per-class codes, so the grouped-sum
    evaluation of Tr(B K B^T) is valid; the direct and grouped values are
    asserted to agree. N x N grids are materialized, so sample count is
    capped.
    """
    x = np.asarray(features, dtype=np.float64)
    b = np.asarray(codes, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = x.shape[1]
    if n > BIAS_DIAGNOSTICS_MAX_SAMPLES:
        raise ValueError(
            f"sample count {n} exceeds the {BIAS_DIAGNOSTICS_MAX_SAMPLES} guard "
            f"for materializing N x N grids"
        )
    if b.shape[1] != n or labels.shape[0] != n:
        raise ValueError("features, codes, and labels must agree on sample count")
    if np.any(np.diff(labels) < 0):
        raise ValueError("samples must be sorted by label")

    gram = x.T @ np.linalg.solve(x @ x.T, x)
    btb = b.T @ b
    trace_direct = float(np.einsum("ln,nm,lm->", b, gram, b))
    bits = b.shape[0]

    # Grouped form: L * sum_i sum_over_classes (row sum of K within class)^2.
    grouped = 0.0
    for cls in np.unique(labels):
        cols = labels == cls
        grouped += float((gram[:, cols].sum(axis=1) ** 2).sum())
    grouped *= bits

    if abs(trace_direct - grouped) > 1e-9 * max(1.0, abs(trace_direct)):
        raise ValueError(
            f"grouped trace {grouped!r} disagrees with direct trace {trace_direct!r}; "
            f"codes are not per-class constants"
        )
    return BiasDiagnostics(
        k_matrix=gram,
        btb_matrix=btb,
        trace_value=trace_direct,
        trace_grouped=grouped,
        bias_value=float(np.trace(btb)) - trace_direct,
    )


@dataclass(frozen=True)
class LossRow:
    """Classification and code-fitting losses of a paired training run."""

    bits: int
    sdh_w_loss: float
    sdh_p_loss: float
    fsdh_w_loss: float
    fsdh_p_loss: float


def loss_table(sdh_state: SdhState, fsdh_model: HashModel, features: np.ndarray,
               labels: np.ndarray) -> LossRow:
    """W-loss ||Y - W^T B||^2 and P-loss ||B - P^T X||^2 for both trainers.

    Both models must have been trained on the same kernel features and code
    length. For a like-for-like comparison the classifier entering each
    W-loss is the exact ridge solution recomputed from that method's final
    codes (with one sample per class this is exactly the closed-form
    classifier of `optimal_weights`).
    """
    if fsdh_model.class_codes is None:
        raise ValueError("model has no class codes; train it with the closed-form trainer")
    x = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    bits = sdh_state.codes.shape[0]
    if fsdh_model.bits != bits:
        raise ValueError(f"bit mismatch: {bits} vs {fsdh_model.bits}")
    if sdh_state.projection.shape[0] != x.shape[0] or fsdh_model.projection.shape[0] != x.shape[0]:
        raise ValueError("projection rows do not match the feature dimension")
    class_count = sdh_state.weights.shape[1]

    def losses(b: np.ndarray, projection: np.ndarray, lam: float) -> tuple[float, float]:
        y = one_hot(labels, class_count)
        w = w_step(b, labels, class_count, lam)
        w_loss = float(((y - w.T @ b) ** 2).sum())
        p_loss = float(((b - projection.T @ x) ** 2).sum())
        return w_loss, p_loss

    b_sdh = sdh_state.codes.astype(np.float64)
    sdh_w, sdh_p = losses(b_sdh, sdh_state.projection, sdh_state.lam)
    b_fsdh = expand_codes(fsdh_model.class_codes, labels).astype(np.float64)
    fsdh_w, fsdh_p = losses(b_fsdh, fsdh_model.projection, fsdh_model.lam)
    return LossRow(bits=bits, sdh_w_loss=sdh_w, sdh_p_loss=sdh_p,
                   fsdh_w_loss=fsdh_w, fsdh_p_loss=fsdh_p)


def write_summary(path: str | Path, values: dict[str, object]) -> None:
    """Plain metric=value lines, one per entry."""
    with open(path, "w") as f:
        for key, value in values.items():
            f.write(f"{key}={value}\n")


def write_pr_curve_csv(path: str | Path, curve: list[tuple[float, float]]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["threshold", "recall", "precision"])
        for t, (recall, precision) in enumerate(curve):
            writer.writerow([t, repr(recall), repr(precision)])


def write_matrix_csv(path: str | Path, matrix: np.ndarray) -> None:
    """Dense numeric grid as CSV rows, for heatmap rendering elsewhere."""
    np.savetxt(path, np.asarray(matrix), delimiter=",")
