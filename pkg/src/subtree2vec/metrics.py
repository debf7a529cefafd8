"""Evaluation metrics: ARI, cosine similarity, P/R/F1, MRR, sub-word scores."""

from __future__ import annotations

from collections import Counter
from math import comb
from typing import Hashable, Iterable, Sequence

import numpy as np

from .vocab import split_subtokens


def adjusted_rand_index(assignment: Sequence[Hashable], ground_truth: Sequence[Hashable]) -> float:
    """Adjusted Rand Index via the pair-counting contingency table."""
    if len(assignment) != len(ground_truth):
        raise ValueError("label sequences differ in length")
    n = len(assignment)
    if n < 2:
        raise ValueError("ARI needs at least two samples")
    table = Counter(zip(assignment, ground_truth))
    rows = Counter(assignment)
    cols = Counter(ground_truth)
    index = sum(comb(c, 2) for c in table.values())
    sum_rows = sum(comb(c, 2) for c in rows.values())
    sum_cols = sum(comb(c, 2) for c in cols.values())
    # (index - expected) / (max - expected) with everything scaled by 2 * C(n, 2),
    # so numerator and denominator are integers and only one rounding happens
    pairs = comb(n, 2)
    num = 2 * (index * pairs - sum_rows * sum_cols)
    den = (sum_rows + sum_cols) * pairs - 2 * sum_rows * sum_cols
    if den == 0:
        # both partitions trivial (one cluster or all singletons): perfect agreement
        return 1.0
    return num / den


def cosine_similarity(v1, v2) -> float:
    a = np.asarray(getattr(v1, "values", v1), dtype=np.float64)
    b = np.asarray(getattr(v2, "values", v2), dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine similarity of a zero vector is undefined")
    if np.array_equal(a, b):
        return 1.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def detect_clone(v1, v2, threshold: float = 0.8) -> bool:
    if not -1.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [-1, 1]")
    return cosine_similarity(v1, v2) >= threshold


def precision_recall_f1(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def clone_metrics(pairs: Iterable[tuple[bool, bool]]) -> tuple[float, float, float]:
    """(precision, recall, F1) from ``(predicted, actual)`` pairs."""
    tp = fp = fn = 0
    for predicted, actual in pairs:
        tp += predicted and actual
        fp += predicted and not actual
        fn += actual and not predicted
    return precision_recall_f1(tp, fp, fn)


def mean_reciprocal_rank(queries: Sequence[tuple[Sequence[str], str]]) -> float:
    if not queries:
        raise ValueError("no queries")
    total = 0.0
    for ranked, relevant in queries:
        ranked = list(ranked)
        if relevant in ranked:
            total += 1.0 / (ranked.index(relevant) + 1)
    return total / len(queries)


def subword_counts(predicted: str, truth: str) -> tuple[int, int, int]:
    """(overlap, |predicted|, |truth|) over case-insensitive sub-token multisets."""
    pred, gold = Counter(split_subtokens(predicted)), Counter(split_subtokens(truth))
    if not pred or not gold:
        raise ValueError("empty name after sub-tokenization")
    return sum((pred & gold).values()), sum(pred.values()), sum(gold.values())


def subword_f1(predicted: str, truth: str) -> tuple[float, float, float]:
    overlap, n_pred, n_gold = subword_counts(predicted, truth)
    return precision_recall_f1(overlap, n_pred - overlap, n_gold - overlap)
