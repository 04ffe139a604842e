"""Command-line driver.

Subcommands: gen (synthetic corpus or template composition), train, eval,
ablate (config grid), inspect (per-query ranking view), stats (temporal word
counts). Every command that writes artifacts records a `manifest.json`
describing inputs and outputs; wall-clock timing goes to a separate
`timing.json` so the primary outputs of identical runs are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from . import __version__, configio, dataset, evaluation, trainer
from .encoders import load_embeddings
from .model import ModelConfig, load_model, save_model
from .temporal import Moment

_GEN_OUTPUTS = ("corpus.manifest", "truth.json")


def _write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _write_manifest(out_dir: str, command: str, inputs: dict, outputs: list[str]) -> None:
    _write_json(
        os.path.join(out_dir, "manifest.json"),
        {
            "schema": 1,
            "command": command,
            "inputs": inputs,
            "outputs": sorted(outputs),
            "version": __version__,
        },
    )


def _write_timing(out_dir: str, started: float) -> None:
    _write_json(
        os.path.join(out_dir, "timing.json"),
        {"schema": 1, "wall_seconds": time.monotonic() - started},
    )


def _load_config_mapping(path: str | None) -> dict[str, str]:
    return configio.load_config_file(path) if path else {}


def cmd_gen(args: argparse.Namespace) -> int:
    started = time.monotonic()
    os.makedirs(args.out, exist_ok=True)
    if args.compose:
        queries = dataset.generate_template_queries(
            [
                dataset.BaseAnnotation(q.video_id, q.sentence, q.moment)
                for q in dataset.load_annotations(args.compose)
            ]
        )
        out_path = os.path.join(args.out, "queries_composed.json")
        dataset.save_annotations(out_path, queries)
        counts = dataset.word_stats(q.sentence for q in queries)
        _write_json(os.path.join(args.out, "stats.json"), {"schema": 1, "word_counts": counts})
        _write_manifest(args.out, "gen", {"compose": args.compose},
                        ["queries_composed.json", "stats.json"])
        _write_timing(args.out, started)
        print(f"composed {len(queries)} queries -> {out_path}")
        return 0
    mapping = _load_config_mapping(args.config)
    if args.seed is not None:
        mapping["seed"] = str(args.seed)
    cfg = dataset.SyntheticCorpusConfig.from_mapping(mapping, source=args.config or "defaults")
    synthetic = dataset.generate_synthetic(cfg)
    manifest_path = dataset.save_corpus(args.out, synthetic)
    outputs = sorted(f for f in os.listdir(args.out) if f not in ("manifest.json", "timing.json"))
    _write_manifest(args.out, "gen", {"config": args.config, "seed": cfg.seed}, outputs)
    _write_timing(args.out, started)
    print(
        f"generated {len(synthetic.train.queries)} train / "
        f"{len(synthetic.test.queries)} test queries -> {manifest_path}"
    )
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    started = time.monotonic()
    os.makedirs(args.out, exist_ok=True)
    corpus = dataset.load_corpus(args.corpus, split=args.split)
    train_mapping = _load_config_mapping(args.train_config)
    if args.seed is not None:
        train_mapping["seed"] = str(args.seed)
    train_cfg = trainer.TrainConfig.from_mapping(train_mapping, source=args.train_config or "defaults")
    init = None
    vocab = None
    start_epoch = 0
    embedding = None
    if args.resume:
        if args.model_config:
            raise ValueError("--model-config cannot be combined with --resume")
        prev = load_model(args.resume)
        model_cfg, init, vocab = prev.config, prev.params, prev.vocab
        start_epoch = args.start_epoch
    else:
        mapping = _load_config_mapping(args.model_config)
        if args.embeddings:
            vocab, embedding = load_embeddings(args.embeddings)
            mapping["embed_dim"] = str(embedding.shape[1])
        model_cfg = ModelConfig.from_mapping(mapping, source=args.model_config or "defaults")
    log = None if args.quiet else lambda line: print(line, flush=True)
    bundle, history = trainer.train(
        corpus, model_cfg, train_cfg,
        vocab=vocab, init=init, start_epoch=start_epoch, embedding=embedding, log=log,
    )
    save_model(args.out, bundle)
    trainer.save_history(os.path.join(args.out, "history.csv"), history)
    _write_manifest(
        args.out, "train",
        {
            "corpus": args.corpus,
            "split": args.split,
            "model_config": args.model_config,
            "train_config": args.train_config,
            "seed": train_cfg.seed,
            "resume": args.resume,
        },
        ["checkpoint.bin", "model.cfg", "vocab.json", "history.csv"],
    )
    _write_timing(args.out, started)
    final = history[-1]["loss"] if history else float("nan")
    print(f"trained {len(history)} epochs, final loss {final:.6f} -> {args.out}")
    return 0


def _eval_rows(args, corpus, bundle) -> tuple[list, dict]:
    rows = [(f"model[{args.mode}]", evaluation.evaluate(corpus, bundle, mode=args.mode))]
    analyses: dict = {}
    if args.baseline_prior:
        train_split = dataset.load_corpus(args.corpus, split="train")
        prior = evaluation.FrequencyPrior.fit(train_split.queries)
        rows.append(("frequency_prior", prior.evaluate(corpus)))
    if args.context_delta:
        analyses["context_conditioned_delta"] = evaluation.context_conditioned_delta(corpus, bundle)
    if args.fragment_eval:
        analyses["context_fragment_eval"] = evaluation.context_fragment_eval(corpus, bundle)
    return rows, analyses


def cmd_eval(args: argparse.Namespace) -> int:
    started = time.monotonic()
    os.makedirs(args.out, exist_ok=True)
    corpus = dataset.load_corpus(args.corpus, split=args.split)
    bundle = load_model(args.model)
    rows, analyses = _eval_rows(args, corpus, bundle)
    doc = {
        "schema": 1,
        "split": args.split,
        "mode": args.mode,
        "rows": [{"label": label, "report": rep.to_dict()} for label, rep in rows],
    }
    doc.update(analyses)
    _write_json(os.path.join(args.out, "metrics.json"), doc)
    table = evaluation.format_comparison_table(rows)
    with open(os.path.join(args.out, "metrics.txt"), "w", encoding="utf-8") as fh:
        fh.write(table)
    _write_manifest(
        args.out, "eval",
        {"corpus": args.corpus, "model": args.model, "split": args.split, "mode": args.mode},
        ["metrics.json", "metrics.txt"],
    )
    _write_timing(args.out, started)
    print(table, end="")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    started = time.monotonic()
    os.makedirs(args.out, exist_ok=True)
    grid = configio.load_config_file(args.grid)
    if "cells" not in grid:
        raise ValueError(f"{args.grid}: grid file needs a 'cells' key")
    cells = [c.strip() for c in grid.pop("cells").split(",") if c.strip()]
    if not cells:
        raise ValueError(f"{args.grid}: empty cell list")
    overrides: dict[str, dict[str, str]] = {c: {} for c in cells}
    shared: dict[str, str] = {}
    for key, value in grid.items():
        if "." in key and key.split(".", 1)[0] in overrides:
            cell, field = key.split(".", 1)
            overrides[cell][field] = value
        else:
            shared[key] = value
    train_mapping = _load_config_mapping(args.train_config)
    if args.seed is not None:
        train_mapping["seed"] = str(args.seed)
    train_cfg = trainer.TrainConfig.from_mapping(train_mapping, source=args.train_config or "defaults")
    train_split = dataset.load_corpus(args.corpus, split="train")
    eval_split = dataset.load_corpus(args.corpus, split=args.split)
    rows = []
    for cell in cells:
        try:
            cfg = ModelConfig.from_mapping({**shared, **overrides[cell]}, source=f"cell {cell}")
            bundle, _ = trainer.train(train_split, cfg, train_cfg, log=None)
            cell_dir = os.path.join(args.out, "cells", cell)
            save_model(cell_dir, bundle)
            rows.append((cell, evaluation.evaluate(eval_split, bundle)))
        except Exception as exc:
            raise RuntimeError(f"ablation cell {cell!r} failed: {exc}") from exc
    table = evaluation.format_comparison_table(rows)
    _write_json(
        os.path.join(args.out, "ablation.json"),
        {
            "schema": 1,
            "split": args.split,
            "seed": train_cfg.seed,
            "rows": [{"label": label, "report": rep.to_dict()} for label, rep in rows],
        },
    )
    with open(os.path.join(args.out, "ablation.txt"), "w", encoding="utf-8") as fh:
        fh.write(table)
    _write_manifest(
        args.out, "ablate",
        {"corpus": args.corpus, "grid": args.grid, "train_config": args.train_config,
         "seed": train_cfg.seed, "split": args.split},
        ["ablation.json", "ablation.txt"] + [f"cells/{c}" for c in cells],
    )
    _write_timing(args.out, started)
    print(table, end="")
    return 0


def _timeline(n: int, base: Moment, ctx_segments: frozenset[int]) -> str:
    chars = []
    for s in range(n):
        in_base = base.start_seg <= s <= base.end_seg
        in_ctx = s in ctx_segments
        chars.append("◆" if in_base and in_ctx else "■" if in_base else "▲" if in_ctx else "·")
    return "".join(chars)


def cmd_inspect(args: argparse.Namespace) -> int:
    corpus = dataset.load_corpus(args.corpus, split=args.split)
    bundle = load_model(args.model)
    if not 0 <= args.query < len(corpus.queries):
        raise ValueError(
            f"query index {args.query} out of range; split {args.split!r} has "
            f"{len(corpus.queries)} queries"
        )
    query = corpus.queries[args.query]
    video = corpus.features[query.video_id]
    n = corpus.n_segments(query.video_id)
    ranking = evaluation.rank_moments(video, query, bundle, mode=args.mode)
    lines = [
        f"query {args.query} ({args.split}): {query.sentence!r}",
        f"video {query.video_id} ({n} segments), temporal word: {query.temporal_word}",
        f"ground truth: segments [{query.moment.start_seg}, {query.moment.end_seg}]"
        f"  {_timeline(n, query.moment, query.context.segment_set() if query.context else frozenset())}",
        "",
        "rank  score        moment    context            base=■ ctx=▲ both=◆",
    ]
    for rank, sm in enumerate(ranking[: args.top], start=1):
        regions = ",".join(
            f"[{r.start_seg},{r.end_seg}]" for r in sm.chosen_context.regions
        ) or "(padded)"
        lines.append(
            f"{rank:>4}  {sm.score:+.6f}  [{sm.moment.start_seg},{sm.moment.end_seg}]"
            f"{'':6}{regions:<18} {_timeline(n, sm.moment, sm.chosen_context.segment_set())}"
        )
    print("\n".join(lines))
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    queries = dataset.load_annotations(args.annotations)
    counts = dataset.word_stats(q.sentence for q in queries)
    width = max(len(w) for w in counts)
    for word, count in counts.items():
        print(f"{word:<{width}}  {count}")
    print(f"{'total queries':<{width}}  {len(queries)}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_json(
            os.path.join(args.out, "stats.json"),
            {"schema": 1, "word_counts": counts, "total_queries": len(queries)},
        )
        _write_manifest(args.out, "stats", {"annotations": args.annotations}, ["stats.json"])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="momentloc",
        description="Localize natural-language moments in segmented videos.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic corpus or compose template queries")
    p.add_argument("--config", help="flat key=value synthetic corpus config")
    p.add_argument("--compose", metavar="ANNOTATIONS",
                   help="compose temporal queries from base annotations instead")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("train", help="train a model on a corpus split")
    p.add_argument("--corpus", required=True, help="corpus manifest path")
    p.add_argument("--split", default="train")
    p.add_argument("--model-config", help="flat key=value model config")
    p.add_argument("--train-config", help="flat key=value training config")
    p.add_argument("--embeddings", help="pretrained token embedding file (frozen)")
    p.add_argument("--resume", metavar="MODEL_DIR", help="continue from a saved model")
    p.add_argument("--start-epoch", type=int, default=0)
    p.add_argument("--seed", type=int, default=None, help="override the training seed")
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained model")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True, help="directory written by train")
    p.add_argument("--split", default="test")
    p.add_argument("--mode", choices=evaluation.EVAL_MODES, default="latent")
    p.add_argument("--baseline-prior", action="store_true",
                   help="add a train-split frequency prior row")
    p.add_argument("--context-delta", action="store_true",
                   help="context-conditioned metric deltas")
    p.add_argument("--fragment-eval", action="store_true",
                   help="context fragment localization analysis")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("ablate", help="train and evaluate a grid of model configs")
    p.add_argument("--corpus", required=True)
    p.add_argument("--grid", required=True, help="grid config: cells = a,b + cell.key overrides")
    p.add_argument("--train-config")
    p.add_argument("--split", default="test")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("inspect", help="show the ranked moments for one query")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--query", type=int, required=True, help="query index within the split")
    p.add_argument("--mode", choices=evaluation.EVAL_MODES, default="latent")
    p.add_argument("--top", type=int, default=5)
    p.set_defaults(fn=cmd_inspect)

    p = sub.add_parser("stats", help="temporal word counts over an annotation file")
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", help="also write stats.json here")
    p.set_defaults(fn=cmd_stats)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
