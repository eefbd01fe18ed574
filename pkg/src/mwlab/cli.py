"""Command-line entry point for the full experiment lifecycle.

Commands: mine, train, evaluate, roc, histogram, compare, lemma1-demo,
lemma2-check, ablate, counts. All figure data is emitted as CSV/JSON;
no images are rendered. Every command is deterministic given --seed and
read-only on its inputs apart from the declared outputs.

Exit codes: 0 success, 1 a checked bound or assertion failed, 2 usage or
IO error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields as dataclass_fields
from pathlib import Path

import numpy as np

from . import encoder as enc
from .data import SplitSpec, load_corpus, load_queries, mine_hard_negatives, save_queries, split_queries
from .experiments import (
    ComparisonSettings,
    fixed_provider,
    run_comparison,
    synthetic_provider,
    write_comparison,
)
from .metrics import (
    ScorePool,
    histogram,
    mrr_at_k,
    ndcg_at_k,
    pooled_auc_protocol,
    ranked_lists,
    roc_curve,
)
from .objectives import gaussian_degradation_demo, mw_bound_check
from .prng import Xoshiro256StarStar, derive_seed
from .scoring import comparison_counts
from .synthetic import SyntheticSpec, make_benchmark, make_offset_demo_pools
from .trainer import TrainConfig, train

# Encoder shape used when no checkpoint or config supplies one. Smaller
# than the EncoderConfig defaults so CLI runs stay fast on a laptop.
CLI_HASH_DIM = 8192
CLI_EMBED_DIM = 32
CLI_PROJ_DIM = 16

_TRAIN_FIELDS = {f.name for f in dataclass_fields(TrainConfig)}
_ENCODER_KEYS = {"hash_dim", "embed_dim", "proj_dim"}


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as f:
        raw = json.load(f)
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    unknown = set(raw) - _TRAIN_FIELDS - _ENCODER_KEYS
    if unknown:
        raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
    return raw


def _build_configs(args, config: dict) -> tuple[TrainConfig, enc.EncoderConfig]:
    overrides = {k: v for k, v in config.items() if k in _TRAIN_FIELDS}
    if getattr(args, "loss", None) is not None:
        overrides["loss_kind"] = args.loss
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    train_cfg = TrainConfig(**overrides)
    encoder_cfg = enc.EncoderConfig(
        hash_dim=config.get("hash_dim", CLI_HASH_DIM),
        embed_dim=config.get("embed_dim", CLI_EMBED_DIM),
        proj_dim=config.get("proj_dim", CLI_PROJ_DIM),
        seed=derive_seed(train_cfg.seed, 1),
    )
    return train_cfg, encoder_cfg


def _scorer_from_args(args) -> "callable":
    if getattr(args, "checkpoint", None):
        params, _ = enc.load_checkpoint(args.checkpoint)
    else:
        params = enc.init_params(enc.EncoderConfig(
            hash_dim=CLI_HASH_DIM, embed_dim=CLI_EMBED_DIM,
            proj_dim=CLI_PROJ_DIM, seed=args.seed,
        ))
    return enc.make_scorer(params)


def _eval_pool(args) -> tuple[ScorePool, float, "QuerySet", "Corpus", "callable"]:
    corpus = load_corpus(args.corpus)
    queries = load_queries(args.queries, corpus)
    params, _ = enc.load_checkpoint(args.checkpoint)
    scorer = enc.make_scorer(params)
    pool, auc_value = pooled_auc_protocol(queries, corpus, scorer, top_k=args.top_k)
    return pool, auc_value, queries, corpus, scorer


def cmd_mine(args) -> int:
    corpus = load_corpus(args.corpus)
    queries = load_queries(args.queries, corpus)
    scorer = _scorer_from_args(args)
    mined = mine_hard_negatives(queries, corpus, scorer, k=args.top_k)
    save_queries(mined, args.out)
    short = sum(1 for q in mined if len(q.hard_negative_ids) < args.top_k)
    print(f"mined {len(mined)} queries -> {args.out} "
          f"({short} with fewer than {args.top_k} negatives)")
    return 0


def cmd_train(args) -> int:
    corpus = load_corpus(args.corpus)
    queries = load_queries(args.queries, corpus)
    train_cfg, encoder_cfg = _build_configs(args, _load_config(args.config))
    split = SplitSpec(args.train_fraction, args.eval_fraction,
                      seed=derive_seed(train_cfg.seed, 12))
    train_qs, eval_qs, _ = split_queries(queries, split)
    best, report = train(train_cfg, train_qs, eval_qs, corpus, encoder_cfg, out_dir=args.out)
    best_ckpt = Path(args.out) / f"ckpt_{report.best_checkpoint_step}"
    if not best_ckpt.exists():
        enc.save_checkpoint(best, report.best_checkpoint_step, best_ckpt)
    print(f"trained {train_cfg.loss_kind} for {len(report.steps)} steps; "
          f"best step {report.best_checkpoint_step}; report in {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    pool, auc_value, queries, corpus, scorer = _eval_pool(args)
    lists = ranked_lists(queries, corpus, scorer, depth=10)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {
        "auc": auc_value,
        "aoc": 1.0 - auc_value,
        "mrr_at_10": mrr_at_k(lists, 10),
        "ndcg_at_10": ndcg_at_k(lists, 10),
        "n_pos": pool.n_pos,
        "n_neg": pool.n_neg,
    }
    with open(out_dir / "metrics.json", "w", encoding="utf-8") as f:
        json.dump(summary, f, sort_keys=True, indent=2)
        f.write("\n")
    print(f"auc={auc_value!r} n_pos={pool.n_pos} n_neg={pool.n_neg}")
    return 0


def cmd_roc(args) -> int:
    pool, _, _, _, _ = _eval_pool(args)
    curve = roc_curve(pool)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "roc.csv", "w", encoding="utf-8") as f:
        for fpr, tpr in curve.points:
            f.write(f"{float(fpr)!r},{float(tpr)!r}\n")
    print(f"wrote {len(curve.points)} roc points, area={curve.area()!r}")
    return 0


def cmd_histogram(args) -> int:
    pool, _, _, _, _ = _eval_pool(args)
    hist = histogram(pool, bins=args.bins)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "hist.csv", "w", encoding="utf-8") as f:
        for i in range(hist.bins):
            f.write(f"{float(hist.edges[i])!r},{float(hist.edges[i + 1])!r},"
                    f"{int(hist.pos_counts[i])},{int(hist.neg_counts[i])}\n")
    print(f"wrote {hist.bins} bins, overlap={hist.overlap_coefficient()!r}")
    return 0


def cmd_compare(args) -> int:
    config = _load_config(args.config)
    train_cfg, encoder_cfg = _build_configs(args, config)
    settings = ComparisonSettings(
        base_config=train_cfg,
        hash_dim=encoder_cfg.hash_dim,
        embed_dim=encoder_cfg.embed_dim,
        proj_dim=encoder_cfg.proj_dim,
        mine_k=args.mine_k,
        eval_top_k=args.top_k,
        bins=args.bins,
    )
    if args.synthetic:
        template = SyntheticSpec(n_queries=args.synth_queries, n_docs=args.synth_docs)
        provider = synthetic_provider(template)
    else:
        if not (args.corpus and args.queries):
            raise ValueError("compare needs --synthetic or both --corpus and --queries")
        corpus = load_corpus(args.corpus)
        queries = load_queries(args.queries, corpus)
        provider = fixed_provider(corpus, queries)
    result = run_comparison(args.seeds, provider, settings)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_comparison(result, out_dir / "compare.json")
    mean = result["mean"]
    print(f"auc cl={mean['auc_cl']!r} mw={mean['auc_mw']!r} gain={mean['auc_gain']!r}")
    return 0


def _load_pools(path: str) -> list[ScorePool]:
    pools = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                pools.append(ScorePool(np.asarray(obj["positives"], dtype=np.float64),
                                       np.asarray(obj["negatives"], dtype=np.float64)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from exc
    if not pools:
        raise ValueError(f"{path}: no pools found")
    return pools


def cmd_lemma1_demo(args) -> int:
    if args.pool:
        pools = _load_pools(args.pool)
    elif args.synthetic:
        rng = Xoshiro256StarStar(derive_seed(args.seed, 20))
        pools = make_offset_demo_pools(args.n_queries, rng)
    else:
        raise ValueError("lemma1-demo needs --pool FILE or --synthetic")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as f:
        f.write("sigma,aoc_before,aoc_after,cl_before,cl_after\n")
        for i, sigma in enumerate(args.sigma):
            rng = Xoshiro256StarStar(derive_seed(args.seed, 100 + i))
            before, after, cl_before, cl_after = gaussian_degradation_demo(
                pools, sigma, rng, tau=args.tau,
            )
            f.write(f"{sigma!r},{before!r},{after!r},{cl_before!r},{cl_after!r}\n")
    print(f"wrote {len(args.sigma)} rows -> {out}")
    return 0


def cmd_lemma2_check(args) -> int:
    rng = Xoshiro256StarStar(derive_seed(args.seed, 30))
    violations = 0
    for trial in range(args.trials):
        tau = args.tau[trial % len(args.tau)]
        n_pos = 1 + rng.below(args.max_side)
        n_neg = 1 + rng.below(args.max_side)
        # random per-trial location and width keep the pools varied
        center = rng.uniform(-0.5, 0.5, 2)
        pos = rng.uniform(center[0] - 1.0, center[0] + 1.0, n_pos)
        neg = rng.uniform(center[1] - 1.0, center[1] + 1.0, n_neg)
        pool = ScorePool(pos, neg)
        aoc, mw, holds = mw_bound_check(pool, tau)
        if not holds:
            violations += 1
            dump = {"tau": tau, "aoc": aoc, "mw": mw,
                    "positives": pos.tolist(), "negatives": neg.tolist()}
            print(json.dumps(dump, sort_keys=True), file=sys.stderr)
    print(f"trials={args.trials} violations={violations}")
    return 0 if violations == 0 else 1


def cmd_counts(args) -> int:
    cl_terms, mw_terms = comparison_counts(args.B, args.H)
    print(f"cl_terms={cl_terms} mw_terms={mw_terms}")
    return 0


def cmd_ablate(args) -> int:
    from .trainer import ablation_sweep, write_sweep_csv

    corpus = load_corpus(args.corpus)
    queries = load_queries(args.queries, corpus)
    train_cfg, encoder_cfg = _build_configs(args, _load_config(args.config))
    split = SplitSpec(args.train_fraction, args.eval_fraction,
                      seed=derive_seed(train_cfg.seed, 12))
    train_qs, eval_qs, _ = split_queries(queries, split)
    rows = ablation_sweep(
        args.lrs, args.batch_sizes, args.hard_negatives,
        train_cfg, train_qs, eval_qs, corpus, encoder_cfg,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(rows, out_dir / "ablation.csv")
    print(f"wrote {len(rows)} rows -> {out_dir / 'ablation.csv'}")
    return 0


def _add_eval_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--corpus", required=True, help="corpus JSONL")
    p.add_argument("--queries", required=True, help="query JSONL")
    p.add_argument("--checkpoint", required=True, help="encoder checkpoint")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--top-k", type=int, default=500, dest="top_k",
                   help="negatives pooled per query (default 500)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mwlab",
        description="Train and dissect dual-encoder retrievers under the "
                    "softmax contrastive loss and the pairwise Mann-Whitney loss.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mine", help="attach brute-force hard negatives to queries")
    p.add_argument("--corpus", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--out", required=True, help="augmented query JSONL")
    p.add_argument("--top-k", type=int, default=500, dest="top_k")
    p.add_argument("--checkpoint", help="scorer checkpoint (default: fresh encoder)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("train", help="train one model and write reports/checkpoints")
    p.add_argument("--corpus", required=True)
    p.add_argument("--queries", required=True, help="query JSONL (mined if H > 0)")
    p.add_argument("--config", help="JSON training config")
    p.add_argument("--out", required=True)
    p.add_argument("--loss", choices=["cl", "mw"])
    p.add_argument("--seed", type=int)
    p.add_argument("--train-fraction", type=float, default=0.8, dest="train_fraction")
    p.add_argument("--eval-fraction", type=float, default=0.1, dest="eval_fraction")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="pooled AUC protocol -> metrics.json")
    _add_eval_args(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("roc", help="pooled ROC sweep -> roc.csv")
    _add_eval_args(p)
    p.set_defaults(func=cmd_roc)

    p = sub.add_parser("histogram", help="pooled score histogram -> hist.csv")
    _add_eval_args(p)
    p.add_argument("--bins", type=int, default=50)
    p.set_defaults(func=cmd_histogram)

    p = sub.add_parser("compare", help="train both losses under identical conditions")
    p.add_argument("--corpus")
    p.add_argument("--queries")
    p.add_argument("--synthetic", action="store_true",
                   help="generate the planted-offset benchmark instead of loading files")
    p.add_argument("--synth-queries", type=int, default=2000, dest="synth_queries")
    p.add_argument("--synth-docs", type=int, default=5000, dest="synth_docs")
    p.add_argument("--config", help="JSON training config (loss_kind ignored)")
    p.add_argument("--seeds", type=int, nargs="+", required=True)
    p.add_argument("--seed", type=int, help=argparse.SUPPRESS)
    p.add_argument("--out", required=True)
    p.add_argument("--mine-k", type=int, default=50, dest="mine_k")
    p.add_argument("--top-k", type=int, default=500, dest="top_k")
    p.add_argument("--bins", type=int, default=50)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("lemma1-demo",
                       help="per-query Gaussian offsets: pooled AoC degrades, softmax loss blind")
    p.add_argument("--pool", help="per-query pools JSONL ({positives, negatives} per line)")
    p.add_argument("--synthetic", action="store_true")
    p.add_argument("--n-queries", type=int, default=250, dest="n_queries")
    p.add_argument("--sigma", type=float, nargs="+", required=True)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_lemma1_demo)

    p = sub.add_parser("lemma2-check",
                       help="verify strict AoC <= pairwise BCE / log 2 on random pools")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--max-side", type=int, default=500, dest="max_side")
    p.add_argument("--tau", type=float, nargs="+", default=[0.01, 0.1, 1.0])
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_lemma2_check)

    p = sub.add_parser("ablate", help="grid sweep over lr/B/H -> ablation.csv")
    p.add_argument("--corpus", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--loss", choices=["cl", "mw"])
    p.add_argument("--seed", type=int)
    p.add_argument("--lrs", type=float, nargs="+", required=True)
    p.add_argument("--batch-sizes", type=int, nargs="+", required=True, dest="batch_sizes")
    p.add_argument("--hard-negatives", type=int, nargs="+", required=True, dest="hard_negatives")
    p.add_argument("--train-fraction", type=float, default=0.8, dest="train_fraction")
    p.add_argument("--eval-fraction", type=float, default=0.1, dest="eval_fraction")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("counts", help="comparison-term counts for a (B, H) batch")
    p.add_argument("B", type=int)
    p.add_argument("H", type=int)
    p.set_defaults(func=cmd_counts)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
