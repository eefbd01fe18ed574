"""Rank statistics and retrieval metrics.

The central object is a ScorePool: the scores a model assigned to
relevant (positive) and irrelevant (negative) passages, pooled across
queries. The Mann-Whitney U statistic counts correctly ordered
positive-negative pairs (ties at half weight), U / (n_pos * n_neg) is
the area under the ROC curve, and 1 - AUC is the area over it.

Tie conventions: U and AUC give ties half weight, the standard
Mann-Whitney treatment. ``strict_aoc`` counts only strict inversions
(s+ < s-), the form the pairwise-loss bound is stated against. For
tie-free pools strict_aoc == 1 - auc exactly; with ties they differ by
half the tie mass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import Corpus, QuerySet, Scorer


@dataclass
class ScorePool:
    """Pooled positive and negative scores. Sides may be empty while a
    pool is being accumulated; the rank statistics require both."""

    positives: np.ndarray
    negatives: np.ndarray

    def __post_init__(self):
        self.positives = np.asarray(self.positives, dtype=np.float64).ravel()
        self.negatives = np.asarray(self.negatives, dtype=np.float64).ravel()
        if len(self.positives) and not np.isfinite(self.positives).all():
            raise ValueError("positive scores must be finite")
        if len(self.negatives) and not np.isfinite(self.negatives).all():
            raise ValueError("negative scores must be finite")

    @property
    def n_pos(self) -> int:
        return len(self.positives)

    @property
    def n_neg(self) -> int:
        return len(self.negatives)


def _require_both_sides(pool: ScorePool, op: str) -> None:
    if pool.n_pos == 0 or pool.n_neg == 0:
        raise ValueError(
            f"{op} needs scores on both sides "
            f"(n_pos={pool.n_pos}, n_neg={pool.n_neg})"
        )


def mann_whitney_u(pool: ScorePool) -> float:
    """U = #(s+ > s-) + 0.5 * #(s+ = s-) over all positive-negative pairs.

    Computed in O((n_pos + n_neg) log(n_pos + n_neg)) from midranks:
    U = sum of positive midranks - n_pos (n_pos + 1) / 2. Midrank sums
    stay below 2^53, so the result is exact.
    """
    _require_both_sides(pool, "mann_whitney_u")
    scores = np.concatenate([pool.positives, pool.negatives])
    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    ranks = np.empty(len(scores), dtype=np.float64)
    # midranks: equal values share the mean of their 1-based rank range
    i = 0
    n = len(scores)
    while i < n:
        j = i
        while j + 1 < n and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    n_pos = pool.n_pos
    rank_sum = float(ranks[:n_pos].sum())
    return rank_sum - n_pos * (n_pos + 1) / 2.0


def auc(pool: ScorePool) -> float:
    """U normalized by the pair count: the probability that a random
    positive outscores a random negative (ties at half weight)."""
    return mann_whitney_u(pool) / (pool.n_pos * pool.n_neg)


def strict_aoc(pool: ScorePool) -> float:
    """Fraction of pairs strictly misordered (s+ < s-); ties count zero."""
    _require_both_sides(pool, "strict_aoc")
    neg_sorted = np.sort(pool.negatives)
    # for each positive, number of negatives strictly above it
    above = pool.n_neg - np.searchsorted(neg_sorted, pool.positives, side="right")
    return float(above.sum()) / (pool.n_pos * pool.n_neg)


@dataclass
class ROCCurve:
    """Threshold sweep of (false positive rate, true positive rate),
    from (0, 0) to (1, 1), both coordinates non-decreasing."""

    points: np.ndarray  # k x 2, columns (fpr, tpr)

    def area(self) -> float:
        """Trapezoidal area under the curve."""
        fpr = self.points[:, 0]
        tpr = self.points[:, 1]
        return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1])) * 0.5)


def roc_curve(pool: ScorePool) -> ROCCurve:
    """Sweep thresholds over the distinct scores, descending. Tied scores
    advance both rates jointly, producing a diagonal segment, so the
    trapezoidal area equals ``auc`` including its half-weight ties."""
    _require_both_sides(pool, "roc_curve")
    thresholds = np.unique(np.concatenate([pool.positives, pool.negatives]))[::-1]
    pos_sorted = np.sort(pool.positives)
    neg_sorted = np.sort(pool.negatives)
    n_pos, n_neg = pool.n_pos, pool.n_neg
    # counts of scores >= threshold
    tp = n_pos - np.searchsorted(pos_sorted, thresholds, side="left")
    fp = n_neg - np.searchsorted(neg_sorted, thresholds, side="left")
    points = np.empty((len(thresholds) + 1, 2))
    points[0] = (0.0, 0.0)
    points[1:, 0] = fp / n_neg
    points[1:, 1] = tp / n_pos
    return ROCCurve(points=points)


def pooled_auc_protocol(
    queries: QuerySet,
    corpus: Corpus,
    scorer: Scorer,
    top_k: int = 500,
) -> tuple[ScorePool, float]:
    """Pool every query's positive scores with its top_k highest-scoring
    non-positive scores, then compute one AUC over the pool.

    When a query has fewer than top_k non-positives the available ones
    are used. Only score values enter the pool, so boundary ties need no
    id-based tie-breaking here.
    """
    if top_k < 1:
        raise ValueError(f"top_k must be >= 1, got {top_k}")
    if len(queries) == 0:
        raise ValueError("query set is empty")
    scores = np.asarray(scorer([q.text for q in queries], corpus.texts), dtype=np.float64)
    if scores.shape != (len(queries), len(corpus)):
        raise ValueError(
            f"scorer returned shape {scores.shape}, "
            f"expected {(len(queries), len(corpus))}"
        )
    pos_parts: list[np.ndarray] = []
    neg_parts: list[np.ndarray] = []
    for i, q in enumerate(queries):
        pos_idx = np.array([corpus.index_of(d) for d in q.positive_ids])
        if len(pos_idx) >= len(corpus):
            raise ValueError(
                f"query {q.id!r}: corpus has no non-positive documents"
            )
        pos_parts.append(scores[i, pos_idx])
        neg_scores = np.delete(scores[i], pos_idx)
        k = min(top_k, len(neg_scores))
        if k < len(neg_scores):
            neg_scores = np.partition(neg_scores, len(neg_scores) - k)[-k:]
        neg_parts.append(neg_scores)
    pool = ScorePool(np.concatenate(pos_parts), np.concatenate(neg_parts))
    return pool, auc(pool)


@dataclass
class RankedList:
    """One query's retrieved ids, best first, plus its relevant-id set."""

    ranked_ids: list[str]
    relevant_ids: set[str] = field(default_factory=set)

    def __post_init__(self):
        if len(set(self.ranked_ids)) != len(self.ranked_ids):
            raise ValueError("ranked_ids contains duplicates")


def mrr_at_k(lists: Sequence[RankedList], k: int = 10) -> float:
    """Mean reciprocal rank of the first relevant hit within the top k;
    queries with no hit contribute 0."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not lists:
        raise ValueError("no ranked lists given")
    total = 0.0
    for rl in lists:
        for rank, doc_id in enumerate(rl.ranked_ids[:k], start=1):
            if doc_id in rl.relevant_ids:
                total += 1.0 / rank
                break
    return total / len(lists)


def ndcg_at_k(lists: Sequence[RankedList], k: int = 10) -> float:
    """Binary-gain nDCG@k averaged over queries.

    DCG = sum over hit ranks r <= k of 1 / log2(r + 1); the ideal DCG
    places all relevant documents first. Queries without relevant
    documents contribute 0 and still count in the mean.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not lists:
        raise ValueError("no ranked lists given")
    discounts = 1.0 / np.log2(np.arange(2, k + 2))
    total = 0.0
    for rl in lists:
        n_rel = len(rl.relevant_ids)
        if n_rel == 0:
            continue
        gains = [1.0 if d in rl.relevant_ids else 0.0 for d in rl.ranked_ids[:k]]
        dcg = float(np.dot(gains, discounts[: len(gains)]))
        idcg = float(discounts[: min(n_rel, k)].sum())
        total += dcg / idcg
    return total / len(lists)


def precision_at_k(lists: Sequence[RankedList], k: int = 10) -> float:
    """Mean fraction of the top k that is relevant."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not lists:
        raise ValueError("no ranked lists given")
    total = sum(
        sum(1 for d in rl.ranked_ids[:k] if d in rl.relevant_ids) / k for rl in lists
    )
    return total / len(lists)


def recall_at_k(lists: Sequence[RankedList], k: int = 10) -> float:
    """Mean fraction of each query's relevant documents found in the top k;
    queries with no relevant documents contribute 0."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not lists:
        raise ValueError("no ranked lists given")
    total = 0.0
    for rl in lists:
        if not rl.relevant_ids:
            continue
        hits = sum(1 for d in rl.ranked_ids[:k] if d in rl.relevant_ids)
        total += hits / len(rl.relevant_ids)
    return total / len(lists)


def ranked_lists(
    queries: QuerySet, corpus: Corpus, scorer: Scorer, depth: int = 10
) -> list[RankedList]:
    """Rank the corpus for each query (descending score, ties by ascending
    document id) and keep the top ``depth`` ids."""
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    scores = np.asarray(scorer([q.text for q in queries], corpus.texts), dtype=np.float64)
    doc_ids = np.array(corpus.ids)
    id_rank = np.argsort(np.argsort(doc_ids, kind="stable"), kind="stable")
    out = []
    for i, q in enumerate(queries):
        depth_i = min(depth, len(corpus))
        order = np.lexsort((id_rank, -scores[i]))
        top = order[:depth_i]
        out.append(RankedList(
            ranked_ids=[str(doc_ids[j]) for j in top],
            relevant_ids=set(q.positive_ids),
        ))
    return out


@dataclass
class Histogram:
    """Equal-width per-side counts over the pooled score range. Bins are
    right-open except the last, so counts sum to the pool sizes."""

    edges: np.ndarray      # bins + 1 edges
    pos_counts: np.ndarray
    neg_counts: np.ndarray

    @property
    def bins(self) -> int:
        return len(self.pos_counts)

    def overlap_coefficient(self) -> float:
        """Shared mass of the two normalized histograms: sum over bins of
        min(pos fraction, neg fraction). 0 = disjoint, 1 = identical."""
        n_pos = self.pos_counts.sum()
        n_neg = self.neg_counts.sum()
        if n_pos == 0 or n_neg == 0:
            raise ValueError("overlap needs scores on both sides")
        return float(np.minimum(self.pos_counts / n_pos, self.neg_counts / n_neg).sum())


def histogram(pool: ScorePool, bins: int) -> Histogram:
    """Bin both sides over [min, max] of the union. A degenerate range
    (all scores identical) puts everything in the first bin."""
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    if pool.n_pos == 0 and pool.n_neg == 0:
        raise ValueError("histogram needs a non-empty pool")
    union = np.concatenate([pool.positives, pool.negatives])
    lo, hi = float(union.min()), float(union.max())
    edges = np.linspace(lo, hi, bins + 1)
    width = (hi - lo) / bins

    def side_counts(values: np.ndarray) -> np.ndarray:
        counts = np.zeros(bins, dtype=np.int64)
        if len(values) == 0:
            return counts
        if width == 0.0:
            counts[0] = len(values)
            return counts
        idx = np.floor((values - lo) / width).astype(np.int64)
        np.clip(idx, 0, bins - 1, out=idx)
        np.add.at(counts, idx, 1)
        return counts

    return Histogram(
        edges=edges,
        pos_counts=side_counts(pool.positives),
        neg_counts=side_counts(pool.negatives),
    )


def pool_summary(pool: ScorePool) -> dict:
    """The standard summary dict: auc, aoc (= 1 - auc), and pool sizes."""
    a = auc(pool)
    return {
        "auc": a,
        "aoc": 1.0 - a,
        "n_pos": pool.n_pos,
        "n_neg": pool.n_neg,
    }
