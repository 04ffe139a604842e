"""SGD training loop for the moment scoring model.

One seeded generator drives everything stochastic: parameter initialization,
epoch shuffling, and negative sampling. Identical corpus + configs + seed give
an identical parameter trajectory.
"""

from __future__ import annotations

import csv
from collections.abc import Callable, Sequence
from dataclasses import dataclass, replace

import numpy as np

from . import configio
from .autodiff import Node, Tape, backward, sgd_step
from .dataset import Corpus, TemporalQuery
from .encoders import Vocabulary, encode_query
from .model import (
    ModelBundle,
    ModelConfig,
    ModelParams,
    conform_context,
    init_params,
    log_logistic_loss,
    ranking_loss,
    score_base,
)
from .temporal import Moment, context_set, enumerate_moments, validate_moment

TrainingExample = TemporalQuery


@dataclass
class TrainConfig:
    epochs: int = 90
    batch_size: int = 32
    lr: float = 0.05
    lr_decay_every: int = 30
    lr_decay_factor: float = 0.1
    negatives_intra: int = 1
    negatives_inter: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr <= 0 or self.lr_decay_factor <= 0:
            raise ValueError("learning rate and decay factor must be positive")
        if self.lr_decay_every < 1:
            raise ValueError("lr_decay_every must be >= 1")
        if self.negatives_intra < 0 or self.negatives_inter < 0:
            raise ValueError("negative counts must be >= 0")
        if self.negatives_intra + self.negatives_inter == 0:
            raise ValueError("need at least one negative per example")

    @classmethod
    def from_mapping(cls, mapping: dict[str, str], source: str = "train config") -> "TrainConfig":
        return configio.dataclass_from_mapping(cls, mapping, source)


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Step schedule: lr * factor^(epoch // decay_every)."""
    return cfg.lr * cfg.lr_decay_factor ** (epoch // cfg.lr_decay_every)


@dataclass
class Negatives:
    intra: list[Moment]
    inter: list[tuple[str, Moment]]


def sample_negatives(
    rng: np.random.Generator,
    corpus: Corpus,
    example: TrainingExample,
    n_intra: int,
    n_inter: int,
) -> Negatives:
    """Intra: uniform non-ground-truth moments of the example's video. Inter:
    the same moment coordinates in a uniformly drawn other video that is long
    enough (skipped when no such video exists)."""
    n = corpus.n_segments(example.video_id)
    pool = [m for m in enumerate_moments(n) if m != example.moment]
    intra: list[Moment] = []
    if n_intra and pool:
        replace_draw = len(pool) < n_intra
        picks = rng.choice(len(pool), size=n_intra, replace=replace_draw)
        intra = [pool[int(i)] for i in picks]
    inter: list[tuple[str, Moment]] = []
    if n_inter:
        others = [
            v for v in corpus.video_ids()
            if v != example.video_id and corpus.n_segments(v) > example.moment.end_seg
        ]
        for _ in range(n_inter):
            if not others:
                break
            inter.append((others[int(rng.integers(len(others)))], example.moment))
    return Negatives(intra, inter)


@dataclass
class ExampleScores:
    positive: Node
    intra: list[Node]
    inter: list[Node]


def _contexts_for(
    example: TrainingExample,
    base: Moment,
    n_segments: int,
    cfg: ModelConfig,
):
    """Candidate contexts when scoring one moment for this example. Strong
    supervision pins every score in the example's hinge, negatives included,
    to the stored ground-truth context (when it fits the video), so the loss
    compares moments under the same known context rather than letting each
    side pick its own. Examples without a stored context, and weak mode,
    always optimize over the mode's candidate set."""
    if cfg.context_supervision == "strong" and example.context is not None:
        fits = all(r.end_seg < n_segments for r in example.context.regions)
        if fits:
            return [conform_context(example.context, base, cfg.context_slots)]
    return context_set(cfg.context_mode, base, n_segments)


def example_scores(
    tape: Tape,
    cache: dict,
    corpus: Corpus,
    example: TrainingExample,
    negatives: Negatives,
    cfg: ModelConfig,
    params: ModelParams,
    vocab: Vocabulary,
) -> ExampleScores:
    """Positive and negative fused scores for one training example. The query
    is encoded once and shared by all candidates."""
    video = corpus.features[example.video_id]
    n = corpus.n_segments(example.video_id)
    validate_moment(example.moment, n)
    fl = encode_query(tape, vocab.encode(example.tokens), params)
    pos, _ = score_base(
        tape, cache, video, fl, example.moment,
        _contexts_for(example, example.moment, n, cfg), cfg, params,
    )
    intra = [
        score_base(tape, cache, video, fl, neg,
                   _contexts_for(example, neg, n, cfg), cfg, params)[0]
        for neg in negatives.intra
    ]
    inter = []
    for vid, neg in negatives.inter:
        other = corpus.features[vid]
        other_n = corpus.n_segments(vid)
        inter.append(
            score_base(tape, cache, other, fl, neg,
                       _contexts_for(example, neg, other_n, cfg), cfg, params)[0]
        )
    return ExampleScores(pos, intra, inter)


def batch_loss(tape: Tape, scored: Sequence[ExampleScores], cfg: ModelConfig) -> Node:
    """Ranking: per-example hinge losses averaged over the batch. Log-logistic:
    positives and intra-video negatives pooled across the batch."""
    if not scored:
        raise ValueError("empty batch")
    if cfg.loss == "ranking":
        per_example = [
            ranking_loss(tape, s.positive, s.intra, s.inter, cfg.margin)
            for s in scored
        ]
        total = per_example[0]
        for node in per_example[1:]:
            total = tape.add(total, node)
        return tape.scale(total, 1.0 / len(per_example))
    positives = [s.positive for s in scored]
    negs = [n for s in scored for n in s.intra]
    return log_logistic_loss(tape, positives, negs, cfg.tall_alpha_c, cfg.tall_alpha_w)


def train(
    corpus: Corpus,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    *,
    vocab: Vocabulary | None = None,
    init: ModelParams | None = None,
    start_epoch: int = 0,
    embedding: np.ndarray | None = None,
    log: Callable[[str], None] | None = None,
) -> tuple[ModelBundle, list[dict]]:
    """Run SGD to train_cfg.epochs; returns the bundle and per-epoch history.

    Resume by passing the loaded params as `init` with the epoch to continue
    from; the schedule is a function of the absolute epoch index.
    """
    if not corpus.queries:
        raise ValueError("corpus has no training queries")
    _check_corpus(corpus, model_cfg)
    rng = np.random.default_rng(train_cfg.seed)
    if vocab is None:
        vocab = Vocabulary.from_token_lists(q.tokens for q in corpus.queries)
    cfg = replace(model_cfg, vocab_size=vocab.size)
    params = init if init is not None else init_params(cfg, rng, embedding)
    n_inter = 0 if cfg.loss == "tall" else train_cfg.negatives_inter
    examples = list(corpus.queries)
    history: list[dict] = []
    for epoch in range(start_epoch, train_cfg.epochs):
        lr = lr_at(epoch, train_cfg)
        order = rng.permutation(len(examples))
        loss_sum = 0.0
        for lo in range(0, len(order), train_cfg.batch_size):
            batch = [examples[int(i)] for i in order[lo : lo + train_cfg.batch_size]]
            negatives = [
                sample_negatives(rng, corpus, ex, train_cfg.negatives_intra, n_inter)
                for ex in batch
            ]
            tape = Tape()
            cache: dict = {}
            scored = [
                example_scores(tape, cache, corpus, ex, neg, cfg, params, vocab)
                for ex, neg in zip(batch, negatives)
            ]
            loss = batch_loss(tape, scored, cfg)
            backward(tape, loss)
            sgd_step(params.parameters(), lr)
            loss_sum += float(loss.value) * len(batch)
        mean_loss = loss_sum / len(examples)
        history.append({"epoch": epoch, "loss": mean_loss, "lr": lr})
        if log is not None:
            log(f"epoch {epoch:4d}  loss {mean_loss:.6f}  lr {lr:g}")
    return ModelBundle(cfg, params, vocab), history


def _check_corpus(corpus: Corpus, cfg: ModelConfig) -> None:
    corpus.validate()
    have = set(corpus.modalities())
    want = set(cfg.modalities)
    if not want <= have:
        raise ValueError(f"config needs modalities {sorted(want)}, corpus has {sorted(have)}")
    for vid, tables in corpus.features.items():
        for m in cfg.modalities:
            if tables[m].dim != cfg.visual_dim:
                raise ValueError(
                    f"video {vid!r} {m} features have dim {tables[m].dim}, "
                    f"config expects visual_dim={cfg.visual_dim}"
                )


def save_history(path: str, history: Sequence[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "loss", "lr"])
        writer.writeheader()
        for row in history:
            writer.writerow({k: row[k] for k in ("epoch", "loss", "lr")})
