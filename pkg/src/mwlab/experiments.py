"""Side-by-side training of the two objectives under identical conditions.

For each seed the same data, the same mined hard negatives, and the same
parameter initialization feed two training runs differing only in the
loss. Both winners are then scored on the held-out test split with the
pooled AUC protocol, ranked-list metrics, and the positive/negative
histogram overlap.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .data import Corpus, QuerySet, SplitSpec, mine_hard_negatives, split_queries
from .encoder import EncoderConfig, init_params, make_scorer
from .metrics import histogram, mrr_at_k, ndcg_at_k, pooled_auc_protocol, ranked_lists
from .prng import derive_seed
from .synthetic import SyntheticSpec, make_benchmark
from .trainer import TrainConfig, train

DataProvider = Callable[[int], tuple[Corpus, QuerySet]]


@dataclass(frozen=True)
class ComparisonSettings:
    """Everything about a comparison run except the seed list."""

    base_config: TrainConfig
    hash_dim: int = 8192
    embed_dim: int = 32
    proj_dim: int = 16
    mine_k: int = 50
    eval_top_k: int = 500
    bins: int = 50
    train_fraction: float = 0.8
    eval_fraction: float = 0.1


def synthetic_provider(template: SyntheticSpec) -> DataProvider:
    """Regenerate the planted benchmark per seed (sizes fixed, content
    reseeded), so each comparison seed is a fully independent draw."""
    def provide(seed: int) -> tuple[Corpus, QuerySet]:
        return make_benchmark(replace(template, seed=derive_seed(seed, 10)))
    return provide


def fixed_provider(corpus: Corpus, queries: QuerySet) -> DataProvider:
    def provide(seed: int) -> tuple[Corpus, QuerySet]:
        return corpus, queries
    return provide


def _evaluate_side(params, queries, corpus, settings) -> dict:
    scorer = make_scorer(params)
    pool, auc_value = pooled_auc_protocol(
        queries, corpus, scorer, top_k=settings.eval_top_k
    )
    lists = ranked_lists(queries, corpus, scorer, depth=10)
    overlap = histogram(pool, settings.bins).overlap_coefficient()
    return {
        "auc": auc_value,
        "mrr10": mrr_at_k(lists, 10),
        "ndcg10": ndcg_at_k(lists, 10),
        "overlap": overlap,
    }


def run_single_seed(
    seed: int, provider: DataProvider, settings: ComparisonSettings
) -> dict:
    """Mine, split, train both losses, and evaluate on the test split."""
    corpus, queries = provider(seed)
    encoder_config = EncoderConfig(
        hash_dim=settings.hash_dim,
        embed_dim=settings.embed_dim,
        proj_dim=settings.proj_dim,
        seed=derive_seed(seed, 1),
    )
    if settings.base_config.H > 0:
        scorer = make_scorer(init_params(encoder_config))
        queries = mine_hard_negatives(queries, corpus, scorer, k=settings.mine_k)
    split = SplitSpec(
        train_fraction=settings.train_fraction,
        eval_fraction=settings.eval_fraction,
        seed=derive_seed(seed, 12),
    )
    train_qs, eval_qs, test_qs = split_queries(queries, split)

    result: dict = {"seed": seed}
    for kind in ("cl", "mw"):
        cfg = replace(settings.base_config, loss_kind=kind, seed=seed)
        best, report = train(cfg, train_qs, eval_qs, corpus, encoder_config)
        side = _evaluate_side(best, test_qs, corpus, settings)
        side["best_checkpoint_step"] = report.best_checkpoint_step
        result[kind] = side
    result["auc_gain"] = result["mw"]["auc"] - result["cl"]["auc"]
    return result


def run_comparison(
    seeds: list[int], provider: DataProvider, settings: ComparisonSettings
) -> dict:
    """Per-seed results plus means; ``auc_gain`` is AUC(mw) - AUC(cl)."""
    if not seeds:
        raise ValueError("need at least one seed")
    per_seed = [run_single_seed(s, provider, settings) for s in seeds]
    mean = {}
    for kind in ("cl", "mw"):
        for key in ("auc", "mrr10", "ndcg10", "overlap"):
            mean[f"{key}_{kind}"] = float(np.mean([r[kind][key] for r in per_seed]))
    mean["auc_gain"] = float(np.mean([r["auc_gain"] for r in per_seed]))
    return {"per_seed": per_seed, "mean": mean}


def write_comparison(result: dict, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(result, f, sort_keys=True, indent=2)
        f.write("\n")
