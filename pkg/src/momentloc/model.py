"""Latent-context moment scoring model.

A candidate moment is scored against a query by comparing a visual vector
(base moment + one context drawn from a mode-dependent candidate set) with the
encoded query, taking the max over the candidate contexts, and late-fusing the
per-modality maxima. Training backpropagates through the max, so only the
selected context receives gradient.
"""

from __future__ import annotations

import os
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from . import configio
from .autodiff import (
    Node,
    Parameter,
    Tape,
    load_checkpoint,
    save_checkpoint,
)
from .encoders import (
    SegmentFeatureTable,
    Vocabulary,
    encode_query,
    fusion_weights,
    load_vocabulary,
    mean_pool,
    mlp2,
    pool_context,
    save_vocabulary,
    tef_block,
    tef_length,
)
from .temporal import (
    CONTEXT_MODES,
    ContextMoment,
    Moment,
    context_set,
    context_slot_count,
)

SIMILARITIES = ("distance", "mult", "normalized_mult", "tall_sim")
LOSSES = ("ranking", "tall")
TEF_MODES = ("none", "tef", "contef")
SUPERVISION_MODES = ("weak", "strong")

CHECKPOINT_FILE = "checkpoint.bin"
CONFIG_FILE = "model.cfg"
VOCAB_FILE = "vocab.json"


@dataclass
class ModelConfig:
    """Every architectural and loss choice, serializable as flat key=value."""

    context_mode: str = "latent"
    tef_mode: str = "contef"
    similarity: str = "normalized_mult"
    loss: str = "ranking"
    context_supervision: str = "strong"
    modalities: tuple[str, ...] = ("rgb", "flow")
    fusion_lambda: float = 0.5
    margin: float = 0.1
    tall_alpha_c: float = 1.0
    tall_alpha_w: float = 1.0
    visual_dim: int = 16
    mlp_hidden: int = 128
    visual_out_dim: int = 64
    embed_dim: int = 32
    lstm_hidden: int = 64
    joint_dim: int = 64
    sim_hidden: int = 64
    vocab_size: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.context_mode not in CONTEXT_MODES:
            raise ValueError(f"context_mode must be one of {CONTEXT_MODES}, got {self.context_mode!r}")
        if self.tef_mode not in TEF_MODES:
            raise ValueError(f"tef_mode must be one of {TEF_MODES}, got {self.tef_mode!r}")
        if self.similarity not in SIMILARITIES:
            raise ValueError(f"similarity must be one of {SIMILARITIES}, got {self.similarity!r}")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if self.context_supervision not in SUPERVISION_MODES:
            raise ValueError(
                f"context_supervision must be one of {SUPERVISION_MODES}, got {self.context_supervision!r}"
            )
        self.modalities = tuple(self.modalities)
        if not self.modalities or len(set(self.modalities)) != len(self.modalities):
            raise ValueError(f"modalities must be nonempty and unique, got {self.modalities}")
        fusion_weights(self.modalities, self.fusion_lambda)
        if self.margin <= 0:
            raise ValueError(f"margin must be positive, got {self.margin}")
        if self.tall_alpha_c < 0 or self.tall_alpha_w < 0:
            raise ValueError("loss weights must be non-negative")
        for name in ("visual_dim", "mlp_hidden", "visual_out_dim", "embed_dim",
                     "lstm_hidden", "joint_dim", "sim_hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.vocab_size < 0:
            raise ValueError("vocab_size must be >= 0")

    @property
    def context_slots(self) -> int:
        return context_slot_count(self.context_mode)

    @property
    def tef_len(self) -> int:
        return tef_length(self.tef_mode, self.context_slots)

    def to_text(self) -> str:
        return configio.dataclass_to_text(self)

    @classmethod
    def from_text(cls, text: str, source: str = "<model config>") -> "ModelConfig":
        return cls.from_mapping(configio.parse_flat_config(text, source), source)

    @classmethod
    def from_mapping(cls, mapping: dict[str, str], source: str = "model config") -> "ModelConfig":
        return configio.dataclass_from_mapping(cls, mapping, source)


class ModelParams:
    """Flat, name-addressed parameter collection."""

    def __init__(self, params: dict[str, Parameter]):
        self._params = dict(params)

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return sorted(self._params)

    def parameters(self) -> list[Parameter]:
        return [self._params[n] for n in self.names()]

    def arrays(self) -> dict[str, np.ndarray]:
        return {n: self._params[n].value for n in self.names()}

    def copy(self) -> "ModelParams":
        return ModelParams(
            {
                n: Parameter(n, p.value.copy(), trainable=p.trainable)
                for n, p in self._params.items()
            }
        )


def expected_param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Single source of truth for parameter names and shapes."""
    if cfg.vocab_size < 1:
        raise ValueError("vocab_size must be set before building parameters")
    h, e, j = cfg.lstm_hidden, cfg.embed_dim, cfg.joint_dim
    shapes: dict[str, tuple[int, ...]] = {
        "lang.embed": (cfg.vocab_size, e),
        "lang.w": (4 * h, e),
        "lang.u": (4 * h, h),
        "lang.b": (4 * h,),
        "lang.proj_w": (j, h),
        "lang.proj_b": (j,),
    }
    slots = cfg.context_slots
    fv_dim = 2 * cfg.visual_out_dim + cfg.tef_len
    for m in cfg.modalities:
        shapes[f"{m}.base.w1"] = (cfg.mlp_hidden, cfg.visual_dim)
        shapes[f"{m}.base.b1"] = (cfg.mlp_hidden,)
        shapes[f"{m}.base.w2"] = (cfg.visual_out_dim, cfg.mlp_hidden)
        shapes[f"{m}.base.b2"] = (cfg.visual_out_dim,)
        shapes[f"{m}.ctx.w1"] = (cfg.mlp_hidden, cfg.visual_dim * slots)
        shapes[f"{m}.ctx.b1"] = (cfg.mlp_hidden,)
        shapes[f"{m}.ctx.w2"] = (cfg.visual_out_dim, cfg.mlp_hidden)
        shapes[f"{m}.ctx.b2"] = (cfg.visual_out_dim,)
        shapes[f"{m}.proj_w"] = (j, fv_dim)
        shapes[f"{m}.proj_b"] = (j,)
        if cfg.similarity != "distance":
            sim_in = 4 * j if cfg.similarity == "tall_sim" else j
            shapes[f"{m}.sim.w1"] = (cfg.sim_hidden, sim_in)
            shapes[f"{m}.sim.b1"] = (cfg.sim_hidden,)
            shapes[f"{m}.sim.w2"] = (cfg.sim_hidden,)
            shapes[f"{m}.sim.b2"] = ()
    return shapes


def init_params(
    cfg: ModelConfig,
    rng: np.random.Generator,
    embedding: np.ndarray | None = None,
) -> ModelParams:
    """Fresh parameters: biases zero, token embeddings uniform in [-0.5, 0.5]
    so distinct tokens start well separated, weight matrices fan-in-scaled
    uniform. A supplied embedding matrix is used verbatim and frozen."""
    shapes = expected_param_shapes(cfg)
    params: dict[str, Parameter] = {}
    for name in sorted(shapes):
        shape = shapes[name]
        if name == "lang.embed" and embedding is not None:
            if embedding.shape != shape:
                raise ValueError(
                    f"pretrained embedding shape {embedding.shape} does not match "
                    f"config ({shape[0]} tokens x {shape[1]} dims)"
                )
            params[name] = Parameter(name, embedding.copy(), trainable=False)
            continue
        leaf = name.rsplit(".", 1)[-1]
        if leaf in ("b", "b1", "b2", "proj_b"):
            value = np.zeros(shape)
        elif name == "lang.embed":
            value = rng.uniform(-0.5, 0.5, size=shape)
        else:
            fan_in = shape[-1] if shape else 1
            bound = 1.0 / np.sqrt(fan_in)
            value = rng.uniform(-bound, bound, size=shape)
        params[name] = Parameter(name, value)
    return ModelParams(params)


# -- scoring -------------------------------------------------------------------


@dataclass(frozen=True)
class ScoredMoment:
    moment: Moment
    score: float
    chosen_context: ContextMoment


def similarity(
    tape: Tape,
    fv_raw: Node,
    fl: Node,
    cfg: ModelConfig,
    params: ModelParams,
    modality: str,
) -> Node:
    """Scalar similarity between a raw visual vector and the encoded query.

    The visual vector is first projected into the joint space. `distance` is
    the negated squared distance so that higher is uniformly better; the other
    kinds feed a combination vector through a small MLP.
    """
    m = modality
    fv = tape.add(
        tape.matmul(tape.param(params[f"{m}.proj_w"]), fv_raw),
        tape.param(params[f"{m}.proj_b"]),
    )
    kind = cfg.similarity
    if kind == "distance":
        return tape.scale(tape.squared_distance(fv, fl), -1.0)
    if kind == "mult":
        x = tape.hadamard(fv, fl)
    elif kind == "normalized_mult":
        x = tape.hadamard(tape.l2_normalize(fv), tape.l2_normalize(fl))
    elif kind == "tall_sim":
        x = tape.concat([fv, fl, tape.hadamard(fv, fl), tape.add(fv, fl)])
    else:
        raise ValueError(f"unknown similarity {kind!r}")
    hid = tape.relu(
        tape.add(tape.matmul(tape.param(params[f"{m}.sim.w1"]), x), tape.param(params[f"{m}.sim.b1"]))
    )
    return tape.add(tape.matmul(tape.param(params[f"{m}.sim.w2"]), hid), tape.param(params[f"{m}.sim.b2"]))


def conform_context(context: ContextMoment, base: Moment, n_slots: int) -> ContextMoment:
    """Fit a stored context to the configured slot count.

    A single region is placed before/after the base by position when two slots
    are expected; surplus real regions cannot be dropped and raise.
    """
    if len(context.slots) == n_slots:
        return context
    regions = context.regions
    if n_slots == 2 and len(regions) <= 1:
        if not regions:
            return ContextMoment.pair(None, None)
        region = regions[0]
        if region.start_seg < base.start_seg:
            return ContextMoment.pair(region, None)
        return ContextMoment.pair(None, region)
    if n_slots == 1 and len(regions) == 1:
        return ContextMoment.single(regions[0])
    raise ValueError(
        f"context {context} does not fit a {n_slots}-slot configuration"
    )


def _branch_mlp(tape, cache, key, vec, params, prefix):
    if cache is not None and key in cache:
        return cache[key]
    node = mlp2(
        tape, tape.constant(vec),
        params[f"{prefix}.w1"], params[f"{prefix}.b1"],
        params[f"{prefix}.w2"], params[f"{prefix}.b2"],
    )
    if cache is not None:
        cache[key] = node
    return node


def _fv_projected(tape, cache, table, base, context, cfg, params, modality):
    """Projected (and, for normalized_mult, normalized) visual vector.

    Query-independent, so cached per (video, modality, base, context) within a
    tape's lifetime; on recording tapes reuse is plain subgraph sharing.
    """
    m = modality
    key = ("fv", table.video_id, m, base, context)
    if cache is not None and key in cache:
        return cache[key]
    base_out = _branch_mlp(
        tape, cache, ("base", table.video_id, m, base),
        mean_pool(table, base), params, f"{m}.base",
    )
    ctx_out = _branch_mlp(
        tape, cache, ("ctx", table.video_id, m, context),
        pool_context(table, context), params, f"{m}.ctx",
    )
    parts = [base_out, ctx_out]
    block = tef_block(base, context, table.n_segments, cfg.tef_mode)
    if block.size:
        parts.append(tape.constant(block))
    fv = tape.add(
        tape.matmul(tape.param(params[f"{m}.proj_w"]), tape.concat(parts)),
        tape.param(params[f"{m}.proj_b"]),
    )
    if cfg.similarity == "normalized_mult":
        fv = tape.l2_normalize(fv)
    if cache is not None:
        cache[key] = fv
    return fv


def _sim_from_projected(tape, fv, fl_ready, cfg, params, modality):
    m = modality
    kind = cfg.similarity
    if kind == "distance":
        return tape.scale(tape.squared_distance(fv, fl_ready), -1.0)
    if kind in ("mult", "normalized_mult"):
        x = tape.hadamard(fv, fl_ready)
    elif kind == "tall_sim":
        x = tape.concat([fv, fl_ready, tape.hadamard(fv, fl_ready), tape.add(fv, fl_ready)])
    else:
        raise ValueError(f"unknown similarity {kind!r}")
    hid = tape.relu(
        tape.add(tape.matmul(tape.param(params[f"{m}.sim.w1"]), x), tape.param(params[f"{m}.sim.b1"]))
    )
    return tape.add(tape.matmul(tape.param(params[f"{m}.sim.w2"]), hid), tape.param(params[f"{m}.sim.b2"]))


def score_base(
    tape: Tape,
    cache: dict | None,
    video: Mapping[str, SegmentFeatureTable],
    fl: Node,
    base: Moment,
    contexts: Sequence[ContextMoment],
    cfg: ModelConfig,
    params: ModelParams,
) -> tuple[Node, int]:
    """Score one base moment against its candidate contexts.

    Returns the fused score node (late fusion of per-modality maxima; the
    training loss backpropagates through it) and the index of the context that
    maximizes the fused per-context score (ties to the earliest candidate).
    """
    if not contexts:
        raise ValueError("no candidate contexts")
    weights = fusion_weights(cfg.modalities, cfg.fusion_lambda)
    fused_node: Node | None = None
    fused_per_ctx = np.zeros(len(contexts))
    for m in cfg.modalities:
        table = video[m]
        fl_ready = fl
        if cfg.similarity == "normalized_mult":
            # The node itself is the key: id() would dangle once a previous
            # query's node is collected and its address reused.
            fl_key = ("fl", fl)
            if cache is not None and fl_key in cache:
                fl_ready = cache[fl_key]
            else:
                fl_ready = tape.l2_normalize(fl)
                if cache is not None:
                    cache[fl_key] = fl_ready
        sims = [
            _sim_from_projected(
                tape,
                _fv_projected(tape, cache, table, base, ctx, cfg, params, m),
                fl_ready, cfg, params, m,
            )
            for ctx in contexts
        ]
        best, _ = tape.max_select(sims)
        weighted = tape.scale(best, weights[m])
        fused_node = weighted if fused_node is None else tape.add(fused_node, weighted)
        fused_per_ctx += weights[m] * np.array([float(s.value) for s in sims])
    chosen = int(np.argmax(fused_per_ctx))
    return fused_node, chosen


def score(
    video: Mapping[str, SegmentFeatureTable],
    token_ids: Sequence[int],
    base: Moment,
    cfg: ModelConfig,
    params: ModelParams,
    gt_context: ContextMoment | None = None,
) -> ScoredMoment:
    """Inference-mode score of one (video, query, moment) triple."""
    tape = Tape(recording=False)
    n = next(iter(video.values())).n_segments
    if gt_context is not None:
        contexts = [conform_context(gt_context, base, cfg.context_slots)]
    else:
        contexts = context_set(cfg.context_mode, base, n)
    fl = encode_query(tape, token_ids, params)
    node, chosen = score_base(tape, {}, video, fl, base, contexts, cfg, params)
    return ScoredMoment(base, float(node.value), contexts[chosen])


# -- losses --------------------------------------------------------------------


def _mean(tape: Tape, nodes: Sequence[Node]) -> Node:
    total = nodes[0]
    for n in nodes[1:]:
        total = tape.add(total, n)
    return tape.scale(total, 1.0 / len(nodes))


def ranking_loss(
    tape: Tape,
    positive: Node,
    intra: Sequence[Node],
    inter: Sequence[Node],
    margin: float,
) -> Node:
    """Hinge ranking loss: negatives are averaged within each class
    (intra-video, inter-video) and the class means are summed."""
    if not intra and not inter:
        raise ValueError("ranking loss needs at least one negative")
    class_means = []
    margin_node = tape.constant(margin)
    for group in (intra, inter):
        if not group:
            continue
        hinges = [
            tape.relu(tape.add(margin_node, tape.sub(neg, positive)))
            for neg in group
        ]
        class_means.append(_mean(tape, hinges))
    total = class_means[0]
    for extra in class_means[1:]:
        total = tape.add(total, extra)
    return total


def log_logistic_loss(
    tape: Tape,
    positives: Sequence[Node],
    negatives: Sequence[Node],
    alpha_c: float,
    alpha_w: float,
) -> Node:
    """alpha_c * mean(softplus(-s_pos)) + alpha_w * mean(softplus(s_neg)).

    softplus(x) = log(1 + exp(x)) computed stably; an empty negative list
    drops that term, an empty positive list is an error.
    """
    if not positives:
        raise ValueError("log-logistic loss needs at least one positive score")
    loss = tape.scale(
        _mean(tape, [tape.softplus(tape.scale(p, -1.0)) for p in positives]),
        alpha_c,
    )
    if negatives:
        loss = tape.add(
            loss,
            tape.scale(_mean(tape, [tape.softplus(n) for n in negatives]), alpha_w),
        )
    return loss


# -- persistence ---------------------------------------------------------------


@dataclass
class ModelBundle:
    config: ModelConfig
    params: ModelParams
    vocab: Vocabulary


def save_model(out_dir: str, bundle: ModelBundle) -> None:
    os.makedirs(out_dir, exist_ok=True)
    save_checkpoint(os.path.join(out_dir, CHECKPOINT_FILE), bundle.params.arrays())
    with open(os.path.join(out_dir, CONFIG_FILE), "w", encoding="utf-8") as fh:
        fh.write(bundle.config.to_text())
    save_vocabulary(os.path.join(out_dir, VOCAB_FILE), bundle.vocab)


def load_model(model_dir: str, frozen: Sequence[str] = ()) -> ModelBundle:
    with open(os.path.join(model_dir, CONFIG_FILE), encoding="utf-8") as fh:
        cfg = ModelConfig.from_text(fh.read(), source=os.path.join(model_dir, CONFIG_FILE))
    vocab = load_vocabulary(os.path.join(model_dir, VOCAB_FILE))
    arrays = load_checkpoint(os.path.join(model_dir, CHECKPOINT_FILE))
    params = params_from_arrays(cfg, arrays, frozen)
    return ModelBundle(cfg, params, vocab)


def params_from_arrays(
    cfg: ModelConfig, arrays: Mapping[str, np.ndarray], frozen: Sequence[str] = ()
) -> ModelParams:
    """Wrap raw checkpoint tensors, validating names and shapes against the
    configuration."""
    shapes = expected_param_shapes(cfg)
    missing = sorted(set(shapes) - set(arrays))
    surplus = sorted(set(arrays) - set(shapes))
    if missing or surplus:
        raise ValueError(
            f"checkpoint does not match config: missing {missing}, unexpected {surplus}"
        )
    bad = [
        f"{n}: checkpoint {arrays[n].shape} vs config {shapes[n]}"
        for n in sorted(shapes)
        if tuple(arrays[n].shape) != tuple(shapes[n])
    ]
    if bad:
        raise ValueError("checkpoint/config shape mismatch: " + "; ".join(bad))
    frozen_set = set(frozen)
    return ModelParams(
        {
            n: Parameter(n, np.array(arrays[n]), trainable=n not in frozen_set)
            for n in shapes
        }
    )
