"""Weighted F-scores and majority-class baselines for binary decision tasks.

The weighted F-score computes per-label precision/recall/F1 and averages the
per-label F1 values weighted by label support. A label that is never
predicted (or never occurs) contributes F1 = 0; this zero-division
convention is what makes an always-majority predictor score its published
baseline values instead of being undefined.
"""

from collections import Counter
from typing import Sequence, Tuple

LabelPair = Tuple[str, str]  # (true, predicted)


def weighted_f1(pairs: Sequence[LabelPair]) -> float:
    """Support-weighted mean of per-label F1 over the labels present."""
    if not pairs:
        raise ValueError("weighted_f1 requires at least one (true, predicted) pair")
    support = Counter(true for true, _ in pairs)
    labels = sorted(set(support) | {pred for _, pred in pairs})
    n = len(pairs)
    total = 0.0
    for label in labels:
        tp = sum(1 for t, p in pairs if t == label and p == label)
        fp = sum(1 for t, p in pairs if t != label and p == label)
        fn = sum(1 for t, p in pairs if t == label and p != label)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        total += (support[label] / n) * f1
    return total


def majority_baseline(true_labels: Sequence[str]) -> float:
    """Weighted F of the predictor that always emits the most frequent label.

    Ties between label counts break to the lexicographically first label.
    """
    if not true_labels:
        raise ValueError("majority_baseline requires at least one label")
    counts = Counter(true_labels)
    best = max(sorted(counts), key=lambda lab: counts[lab])
    return weighted_f1([(t, best) for t in true_labels])
