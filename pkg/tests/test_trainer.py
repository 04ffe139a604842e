import csv

import numpy as np
import pytest

from momentloc.autodiff import Tape
from momentloc.dataset import Corpus, TemporalQuery
from momentloc.model import conform_context
from momentloc.temporal import ContextMoment, Moment, context_set
from momentloc.trainer import (
    ExampleScores,
    TrainConfig,
    _contexts_for,
    batch_loss,
    lr_at,
    sample_negatives,
    save_history,
    train,
)

from helpers import tiny_model_config, tiny_video


def small_corpus(rng, n_segments=4, lengths=None):
    lengths = lengths or {}
    features = {
        vid: tiny_video(rng, lengths.get(vid, n_segments), 3, ("rgb",), vid)
        for vid in ("v0", "v1", "v2")
    }
    queries = [
        TemporalQuery("v0", "A before b.", Moment(0, 0), "before",
                      ContextMoment.single(Moment(1, 1)), "b"),
        TemporalQuery("v1", "B after a.", Moment(2, 2), "after",
                      ContextMoment.single(Moment(0, 1)), "a"),
        TemporalQuery("v2", "Plain c.", Moment(1, 2)),
    ]
    return Corpus(features, queries)


def test_lr_schedule():
    cfg = TrainConfig(lr=0.05, lr_decay_every=30, lr_decay_factor=0.1)
    assert lr_at(0, cfg) == 0.05
    assert lr_at(29, cfg) == 0.05
    assert lr_at(30, cfg) == pytest.approx(0.005)
    assert lr_at(60, cfg) == pytest.approx(0.0005)
    assert lr_at(5, TrainConfig(lr=1.0, lr_decay_every=2, lr_decay_factor=0.5)) == 0.25


def test_train_config_validation():
    for bad in (
        {"epochs": -1},
        {"batch_size": 0},
        {"lr": 0.0},
        {"lr_decay_every": 0},
        {"negatives_intra": -1},
        {"negatives_intra": 0, "negatives_inter": 0},
    ):
        with pytest.raises(ValueError):
            TrainConfig(**bad)
    cfg = TrainConfig.from_mapping({"epochs": "5", "lr": "0.01"})
    assert cfg.epochs == 5 and cfg.lr == 0.01


def test_sample_negatives(rng):
    corpus = small_corpus(rng)
    example = corpus.queries[0]  # v0, moment (0,0)
    negs = sample_negatives(np.random.default_rng(5), corpus, example, 3, 2)
    assert len(negs.intra) == 3
    assert all(m != example.moment for m in negs.intra)
    assert all(m.end_seg < 4 for m in negs.intra)
    assert len(negs.inter) == 2
    assert all(vid in ("v1", "v2") for vid, _ in negs.inter)
    assert all(m == example.moment for _, m in negs.inter)
    again = sample_negatives(np.random.default_rng(5), corpus, example, 3, 2)
    assert again.intra == negs.intra and again.inter == negs.inter


def test_sample_negatives_oversized_and_short_videos(rng):
    corpus = small_corpus(rng, lengths={"v1": 2})
    example = TemporalQuery("v0", "x.", Moment(2, 3))
    negs = sample_negatives(np.random.default_rng(0), corpus, example, 12, 4)
    assert len(negs.intra) == 12  # pool only has 9, sampled with replacement
    # v1 has 2 segments, cannot hold a moment ending at 3
    assert all(vid == "v2" for vid, _ in negs.inter)


def test_contexts_for_strong_substitutes_ground_truth(rng):
    cfg = tiny_model_config(context_supervision="strong")
    example = TemporalQuery("v0", "A before b.", Moment(0, 0), "before",
                            ContextMoment.single(Moment(2, 2)), "b")
    got = _contexts_for(example, example.moment, 4, cfg)
    assert got == [conform_context(example.context, example.moment, cfg.context_slots)]
    # negatives in the same hinge are pinned to the identical context
    neg = Moment(1, 2)
    assert _contexts_for(example, neg, 4, cfg) == [
        conform_context(example.context, neg, cfg.context_slots)
    ]
    # context beyond the video falls back to the mode's candidate set
    oob = TemporalQuery("v0", "s.", Moment(0, 0), "before",
                        ContextMoment.single(Moment(5, 9)), "b")
    assert _contexts_for(oob, oob.moment, 4, cfg) == context_set(
        "latent", Moment(0, 0), 4,
    )
    # weak supervision never substitutes
    weak = tiny_model_config(context_supervision="weak")
    assert _contexts_for(example, example.moment, 4, weak) == context_set(
        "latent", Moment(0, 0), 4,
    )
    # examples without a stored context always use the candidate set
    simple = TemporalQuery("v0", "s.", Moment(1, 1))
    assert _contexts_for(simple, simple.moment, 4, cfg) == context_set(
        "latent", Moment(1, 1), 4,
    )


def test_batch_loss_ranking_averages_examples():
    cfg = tiny_model_config(margin=0.1)
    tape = Tape()
    c = lambda x: tape.constant(np.array(x))
    scored = [
        ExampleScores(c(1.0), [c(0.5)], [c(2.0)]),
        ExampleScores(c(0.0), [c(0.0)], []),
    ]
    # example 1: intra hinge max(0, .1 - 1 + .5)=0, inter max(0, .1 - 1 + 2)=1.1 -> 1.1
    # example 2: intra hinge .1, no inter -> .1
    loss = batch_loss(tape, scored, cfg)
    assert float(loss.value) == pytest.approx((1.1 + 0.1) / 2)


def test_batch_loss_tall_pools_and_ignores_inter():
    cfg = tiny_model_config(loss="tall", tall_alpha_c=1.0, tall_alpha_w=2.0)
    tape = Tape()
    c = lambda x: tape.constant(np.array(x))
    scored = [
        ExampleScores(c(1.0), [c(-1.0), c(0.0)], [c(999.0)]),
        ExampleScores(c(2.0), [c(1.0)], [c(999.0)]),
    ]
    pos = np.array([1.0, 2.0])
    neg = np.array([-1.0, 0.0, 1.0])
    want = np.mean(np.logaddexp(0.0, -pos)) + 2.0 * np.mean(np.logaddexp(0.0, neg))
    loss = batch_loss(tape, scored, cfg)
    assert float(loss.value) == pytest.approx(want)
    with pytest.raises(ValueError):
        batch_loss(tape, [], cfg)


def test_train_zero_epochs_returns_init(rng):
    corpus = small_corpus(rng)
    bundle, history = train(corpus, tiny_model_config(), TrainConfig(epochs=0, seed=1))
    assert history == []
    assert bundle.config.vocab_size == bundle.vocab.size
    again, _ = train(corpus, tiny_model_config(), TrainConfig(epochs=0, seed=1))
    for name, arr in bundle.params.arrays().items():
        assert np.array_equal(arr, again.params.arrays()[name])


def test_train_reduces_loss(rng):
    corpus = small_corpus(rng)
    cfg = tiny_model_config()
    bundle, history = train(corpus, cfg, TrainConfig(epochs=12, batch_size=2, lr=0.05, seed=3))
    assert len(history) == 12
    assert all(np.isfinite(row["loss"]) for row in history)
    assert history[-1]["loss"] < history[0]["loss"]
    assert bundle.vocab.encode(("before",)) != (0,)


def test_train_deterministic(rng):
    corpus = small_corpus(rng)
    cfg = tiny_model_config()
    tcfg = TrainConfig(epochs=3, batch_size=2, seed=11)
    a, ha = train(corpus, cfg, tcfg)
    b, hb = train(corpus, cfg, tcfg)
    assert ha == hb
    for name, arr in a.params.arrays().items():
        assert np.array_equal(arr, b.params.arrays()[name])
    c, _ = train(corpus, cfg, TrainConfig(epochs=3, batch_size=2, seed=12))
    assert any(
        not np.array_equal(arr, c.params.arrays()[name])
        for name, arr in a.params.arrays().items()
    )


def test_train_tall_loss_runs(rng):
    corpus = small_corpus(rng)
    cfg = tiny_model_config(loss="tall", similarity="tall_sim", context_mode="before_after")
    bundle, history = train(corpus, cfg, TrainConfig(epochs=4, batch_size=3, seed=2))
    assert all(np.isfinite(row["loss"]) for row in history)
    assert history[-1]["loss"] < history[0]["loss"]


def test_train_strong_supervision_path(rng):
    corpus = small_corpus(rng)
    cfg = tiny_model_config(context_supervision="strong")
    _, history = train(corpus, cfg, TrainConfig(epochs=2, batch_size=3, seed=2))
    assert len(history) == 2


def test_train_frozen_embedding(rng):
    corpus = small_corpus(rng)
    cfg = tiny_model_config(embed_dim=2)
    from momentloc.encoders import Vocabulary

    vocab = Vocabulary.from_token_lists(q.tokens for q in corpus.queries)
    table = np.arange(vocab.size * 2, dtype=float).reshape(vocab.size, 2)
    bundle, _ = train(
        corpus, cfg, TrainConfig(epochs=3, batch_size=2, seed=0),
        vocab=vocab, embedding=table,
    )
    assert np.array_equal(bundle.params["lang.embed"].value, table)
    assert not bundle.params["lang.embed"].trainable


def test_train_resume_uses_absolute_epoch(rng):
    corpus = small_corpus(rng)
    cfg = tiny_model_config()
    tcfg = TrainConfig(epochs=4, batch_size=3, lr=0.1, lr_decay_every=2, lr_decay_factor=0.5, seed=6)
    first, h1 = train(corpus, cfg, TrainConfig(
        epochs=2, batch_size=3, lr=0.1, lr_decay_every=2, lr_decay_factor=0.5, seed=6,
    ))
    second, h2 = train(
        corpus, cfg, tcfg, vocab=first.vocab, init=first.params, start_epoch=2,
    )
    assert [row["epoch"] for row in h2] == [2, 3]
    assert [row["lr"] for row in h2] == [0.05, 0.05]


def test_train_rejects_bad_corpus(rng):
    corpus = small_corpus(rng)
    with pytest.raises(ValueError, match="modalities"):
        train(corpus, tiny_model_config(modalities=("rgb", "flow")), TrainConfig(epochs=0))
    with pytest.raises(ValueError, match="visual_dim"):
        train(corpus, tiny_model_config(visual_dim=7), TrainConfig(epochs=0))
    with pytest.raises(ValueError, match="no training queries"):
        train(Corpus(corpus.features, []), tiny_model_config(), TrainConfig(epochs=0))


def test_save_history(tmp_path):
    history = [
        {"epoch": 0, "loss": 0.5, "lr": 0.05},
        {"epoch": 1, "loss": 0.25, "lr": 0.05},
    ]
    path = tmp_path / "history.csv"
    save_history(str(path), history)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["epoch"] for r in rows] == ["0", "1"]
    assert float(rows[1]["loss"]) == 0.25
