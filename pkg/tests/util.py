"""Shared helpers for the test suite: oracles and random fixtures.

The oracles here are intentionally naive (brute-force pair loops, direct
formula evaluation, central finite differences) and independent of the
library's fast paths.
"""

from __future__ import annotations

import numpy as np

from mwlab.scoring import ScoreBatch


def brute_force_u(positives, negatives) -> float:
    """O(n_pos * n_neg) pair count with half-weight ties."""
    u = 0.0
    for p in positives:
        for n in negatives:
            if p > n:
                u += 1.0
            elif p == n:
                u += 0.5
    return u


def brute_force_strict_aoc(positives, negatives) -> float:
    """O(n_pos * n_neg) strictly-misordered fraction."""
    bad = sum(1 for p in positives for n in negatives if p < n)
    return bad / (len(positives) * len(negatives))


def random_unit_rows(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    """Rows uniform on the unit sphere."""
    x = rng.normal(size=(n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def random_score_batch(
    rng: np.random.Generator, b: int, h: int, tau: float, d: int = 16
) -> ScoreBatch:
    """A ScoreBatch from random unit embeddings."""
    q = random_unit_rows(rng, b, d)
    p = random_unit_rows(rng, b + h * b, d)
    return ScoreBatch(sim=q @ p.T, tau=tau)


def central_difference(f, x: float, h: float) -> float:
    """(f(x + h) - f(x - h)) / 2h."""
    return (f(x + h) - f(x - h)) / (2.0 * h)


def relative_error(a: float, b: float, floor: float = 1e-12) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)
