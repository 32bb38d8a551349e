"""Evaluation and analysis quantities: per-dimension accuracy / macro-F1 /
QWK / ECE, evidence-alignment scores, and dimension-embedding similarity
traces. Everything here is a pure function over numpy inputs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import DIMENSIONS, NUM_CLASSES, NUM_DIMENSIONS
from .errors import EmptyGold
from .validation import as_labels, check_equal_length, check_prob_rows


def accuracy_f1(y_true, y_pred, m: int = NUM_CLASSES) -> tuple[float, float]:
    """Exact-match accuracy and macro-F1. Classes absent from both the truth
    and the predictions contribute F1 = 0 (they are not excluded)."""
    yt, yp = as_labels(y_true, "y_true"), as_labels(y_pred, "y_pred")
    check_equal_length(yt, yp)
    accuracy = float(np.mean(yt == yp))
    f1s = []
    for c in range(m):
        tp = int(np.sum((yt == c) & (yp == c)))
        fp = int(np.sum((yt != c) & (yp == c)))
        fn = int(np.sum((yt == c) & (yp != c)))
        f1s.append(2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) > 0 else 0.0)
    return accuracy, float(np.mean(f1s))


def qwk(y_true, y_pred, m: int = NUM_CLASSES) -> float:
    """Quadratic weighted kappa with w_ij = (i-j)^2 / (m-1)^2.

    The expected matrix is the outer product of the marginals normalized to
    the observed total; a zero denominator (truth and prediction both
    constant and equal) returns 0.0.
    """
    yt, yp = as_labels(y_true, "y_true"), as_labels(y_pred, "y_pred")
    check_equal_length(yt, yp)
    weights = np.array([[(i - j) ** 2 for j in range(m)] for i in range(m)], dtype=np.float64)
    weights /= (m - 1) ** 2
    observed = np.zeros((m, m), dtype=np.float64)
    for t, p in zip(yt, yp):
        observed[t, p] += 1
    n = observed.sum()
    expected = np.outer(observed.sum(axis=1), observed.sum(axis=0)) / n
    denominator = float((weights * expected).sum())
    if denominator == 0.0:
        return 0.0
    return float(1.0 - (weights * observed).sum() / denominator)


def ece(probs, y_true, bins: int = 10) -> float:
    """Expected calibration error over equal-width, right-closed confidence
    bins: sum_b (n_b / N) |acc_b - conf_b|."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 2:
        raise ValueError(f"probs must be (N, m), got shape {p.shape}")
    yt = as_labels(y_true, "y_true")
    check_equal_length(p, yt, "probs/y_true")
    check_prob_rows(p)
    confidence = p.max(axis=1)
    predicted = p.argmax(axis=1)
    correct = (predicted == yt).astype(np.float64)
    # right-closed bins: (0, 1/B], (1/B, 2/B], ...; confidence >= 1/m > 0
    idx = np.clip(np.ceil(confidence * bins).astype(int) - 1, 0, bins - 1)
    total = len(yt)
    value = 0.0
    for b in range(bins):
        mask = idx == b
        count = int(mask.sum())
        if count == 0:
            continue
        value += (count / total) * abs(correct[mask].mean() - confidence[mask].mean())
    return float(value)


def top_fraction_indices(attention_row: np.ndarray, top_frac: float = 0.2) -> list[int]:
    """Indices of the ceil(top_frac * n) largest entries, ties to lower index."""
    a = np.asarray(attention_row, dtype=np.float64)
    n = a.shape[0]
    size = int(math.ceil(top_frac * n))
    order = np.lexsort((np.arange(n), -a))
    return sorted(int(i) for i in order[:size])


def evidence_alignment(
    attention_row, gold: set[int], top_frac: float = 0.2
) -> tuple[float, float, float, float]:
    """Precision / recall / IoU of the top-attended token set against the gold
    rationale set, plus the natural-log entropy of the attention row."""
    a = np.asarray(attention_row, dtype=np.float64)
    check_prob_rows(a[None, :], tol=1e-6)
    if not gold:
        raise EmptyGold("gold rationale set is empty; caller should skip this record")
    n = a.shape[0]
    if any(g < 0 or g >= n for g in gold):
        raise ValueError(f"gold indices must lie in 0..{n - 1}")
    predicted = set(top_fraction_indices(a, top_frac))
    inter = len(predicted & gold)
    precision = inter / len(predicted)
    recall = inter / len(gold)
    iou = inter / len(predicted | gold)
    positive = a[a > 0]
    entropy = float(-(positive * np.log(positive)).sum())
    return float(precision), float(recall), float(iou), entropy


# ---------------------------------------------------------------------------
# Report containers

@dataclass
class MetricsReport:
    per_dimension: dict[str, dict[str, float]]
    average: dict[str, float]
    sample_count: int

    def to_json_dict(self) -> dict:
        return {
            "per_dimension": self.per_dimension,
            "average": self.average,
            "sample_count": self.sample_count,
        }


@dataclass
class AlignmentReport:
    """Per-record macro-averaged alignment scores; dimensions with no
    annotated records report a count of zero."""

    per_dimension: dict[str, dict[str, float]]
    mean: dict[str, float]
    top_frac: float
    averaging: str = "per-record macro"

    def to_json_dict(self) -> dict:
        return {
            "per_dimension": self.per_dimension,
            "mean": self.mean,
            "top_frac": self.top_frac,
            "averaging": self.averaging,
        }


def summarize_metrics(y_true: np.ndarray, y_pred: np.ndarray, probs: np.ndarray,
                      ece_bins: int = 10) -> MetricsReport:
    """Per-dimension metric table from stacked (N, k) labels and (N, k, m) probs."""
    per_dim: dict[str, dict[str, float]] = {}
    for i, dim in enumerate(DIMENSIONS):
        acc, f1 = accuracy_f1(y_true[:, i], y_pred[:, i])
        per_dim[dim] = {
            "accuracy": acc,
            "macro_f1": f1,
            "qwk": qwk(y_true[:, i], y_pred[:, i]),
            "ece": ece(probs[:, i, :], y_true[:, i], bins=ece_bins),
        }
    average = {
        key: float(np.mean([per_dim[d][key] for d in DIMENSIONS]))
        for key in ("accuracy", "macro_f1", "qwk", "ece")
    }
    return MetricsReport(per_dimension=per_dim, average=average, sample_count=int(y_true.shape[0]))


def summarize_alignment(
    rows: list[tuple[int, np.ndarray, set[int]]], top_frac: float = 0.2
) -> AlignmentReport:
    """Aggregate (dim_index, attention_row, gold_set) triples; empty-gold rows
    must already have been skipped by the caller."""
    buckets: dict[int, list[tuple[float, float, float, float]]] = {
        i: [] for i in range(NUM_DIMENSIONS)
    }
    for dim_index, attention_row, gold in rows:
        buckets[dim_index].append(evidence_alignment(attention_row, gold, top_frac))
    per_dim: dict[str, dict[str, float]] = {}
    names = ("precision", "recall", "iou", "entropy")
    for i, dim in enumerate(DIMENSIONS):
        values = buckets[i]
        if values:
            arr = np.asarray(values, dtype=np.float64)
            per_dim[dim] = dict(zip(names, arr.mean(axis=0).tolist()))
            per_dim[dim]["records"] = float(len(values))
        else:
            per_dim[dim] = {name: float("nan") for name in names}
            per_dim[dim]["records"] = 0.0
    covered = [d for d in DIMENSIONS if per_dim[d]["records"] > 0]
    mean = {
        name: float(np.mean([per_dim[d][name] for d in covered])) if covered else float("nan")
        for name in names
    }
    return AlignmentReport(per_dimension=per_dim, mean=mean, top_frac=top_frac)


# ---------------------------------------------------------------------------
# Dimension-embedding similarity

@dataclass
class SimilarityTrace:
    """Stage name -> k x k cosine matrix; pairs involving a zero vector are
    set to 0 and flagged."""

    stages: dict[str, np.ndarray]
    zero_flags: dict[str, list[int]] = field(default_factory=dict)

    STAGE_NAMES = ("queries", "refined_queries", "normalized_queries", "evidence")


def cosine_matrix(vectors: np.ndarray) -> tuple[np.ndarray, list[int]]:
    v = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(v, axis=1)
    zero_rows = [int(i) for i in np.nonzero(norms == 0)[0]]
    safe = np.where(norms == 0, 1.0, norms)
    unit = v / safe[:, None]
    c = unit @ unit.T
    c = (c + c.T) / 2.0
    c = np.clip(c, -1.0, 1.0)
    for i in range(v.shape[0]):
        c[i, i] = 0.0 if norms[i] == 0 else 1.0
    for i in zero_rows:
        c[i, :] = 0.0
        c[:, i] = 0.0
    return c, zero_rows


def similarity_trace(model, precomp) -> SimilarityTrace:
    """Cosine-similarity matrices of the five dimension vectors at each stage
    of the evidence pipeline (initial, refined, post-DyT, evidence)."""
    was_training = model.training
    model.eval()
    try:
        import torch

        with torch.no_grad():
            result = model.forward_comment(precomp)
    finally:
        model.train(was_training)
    stage_vectors = {
        "queries": result.queries.detach().numpy(),
        "refined_queries": result.refined_queries.detach().numpy(),
        "normalized_queries": result.normalized_queries.detach().numpy(),
        "evidence": result.evidence.detach().numpy(),
    }
    stages, flags = {}, {}
    for name, vectors in stage_vectors.items():
        matrix, zero_rows = cosine_matrix(vectors)
        stages[name] = matrix
        if zero_rows:
            flags[name] = zero_rows
    return SimilarityTrace(stages=stages, zero_flags=flags)


# ---------------------------------------------------------------------------
# Whole-split evaluation

def evaluate_split(
    model,
    precomps,
    class_weights=(1.0, 1.0, 1.0),
    ece_bins: int = 10,
    top_frac: float = 0.2,
) -> dict:
    """Forward every comment in eval mode; returns loss, MetricsReport, and
    AlignmentReport (over records/dimensions with non-empty gold sets)."""
    import torch

    from .heads import classification_loss

    if not precomps:
        raise ValueError("evaluate_split requires at least one comment")
    was_training = model.training
    model.eval()
    losses, y_true, y_pred, probs, alignment_rows = [], [], [], [], []
    try:
        with torch.no_grad():
            for pc in precomps:
                result = model.forward_comment(pc)
                probs.append(result.prediction.probs.numpy())
                y_pred.append(result.prediction.labels)
                if pc.y is not None:
                    y_true.append(pc.y)
                    losses.append(float(classification_loss(result.prediction, pc.y, class_weights)))
                attn = result.attention.numpy()
                for dim_index, gold in enumerate(pc.gold_sets):
                    if gold:
                        alignment_rows.append((dim_index, attn[dim_index], gold))
    finally:
        model.train(was_training)
    out: dict = {
        "loss": float(np.mean(losses)) if losses else float("nan"),
        "alignment": summarize_alignment(alignment_rows, top_frac=top_frac),
        "y_pred": np.stack(y_pred),
        "probs": np.stack(probs),
    }
    if y_true:
        out["metrics"] = summarize_metrics(
            np.stack(y_true), out["y_pred"], out["probs"], ece_bins=ece_bins
        )
    return out
