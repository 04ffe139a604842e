"""Visual and language encoders plus their on-disk formats.

The visual side is deliberately small: mean-pool the segment features of a
moment (or of each context region), push the pooled vectors through per-branch
MLPs, and append normalized endpoint features. The language side is a
single-layer LSTM over learned (or pretrained, frozen) token embeddings whose
final hidden state is projected into the joint space.
"""

from __future__ import annotations

import json
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Node, Parameter, Tape, as_array
from .temporal import ContextMoment, Moment, context_tefs, tef, validate_moment

UNK_TOKEN = "<unk>"


@dataclass
class SegmentFeatureTable:
    """Per-segment feature rows for one video in one modality."""

    video_id: str
    modality: str
    features: np.ndarray

    def __post_init__(self) -> None:
        self.features = as_array(self.features)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ValueError(
                f"features for {self.video_id!r}/{self.modality} must be "
                f"(n_segments, dim), got shape {self.features.shape}"
            )

    @property
    def n_segments(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def mean_pool(table: SegmentFeatureTable, moment: Moment) -> np.ndarray:
    """Average the feature rows a moment covers."""
    validate_moment(moment, table.n_segments)
    return table.features[moment.start_seg : moment.end_seg + 1].mean(axis=0)


def pool_context(table: SegmentFeatureTable, context: ContextMoment) -> np.ndarray:
    """Concatenation of per-slot means; a padded slot contributes zeros."""
    parts = [
        np.zeros(table.dim) if m is None else mean_pool(table, m)
        for m in context.slots
    ]
    return np.concatenate(parts)


def tef_block(
    base: Moment, context: ContextMoment, n_segments: int, tef_mode: str
) -> np.ndarray:
    """Endpoint features appended to the visual vector.

    none: empty. tef: the base moment's endpoints. contef: base endpoints
    followed by each context slot's endpoints ((-1, -1) for padded slots).
    """
    if tef_mode == "none":
        return np.zeros(0)
    base_tef = tef(base, n_segments)
    if tef_mode == "tef":
        return np.array(base_tef)
    if tef_mode == "contef":
        flat = list(base_tef)
        for pair in context_tefs(context, n_segments):
            flat.extend(pair)
        return np.array(flat)
    raise ValueError(f"unknown tef mode {tef_mode!r}")


def tef_length(tef_mode: str, n_context_slots: int) -> int:
    if tef_mode == "none":
        return 0
    if tef_mode == "tef":
        return 2
    if tef_mode == "contef":
        return 2 + 2 * n_context_slots
    raise ValueError(f"unknown tef mode {tef_mode!r}")


def mlp2(tape: Tape, x: Node, w1: Parameter, b1: Parameter, w2: Parameter, b2: Parameter) -> Node:
    """Two-layer MLP with a relu hidden layer and linear output."""
    h = tape.relu(tape.add(tape.matmul(tape.param(w1), x), tape.param(b1)))
    return tape.add(tape.matmul(tape.param(w2), h), tape.param(b2))


def visual_feature(
    tape: Tape,
    table: SegmentFeatureTable,
    base: Moment,
    context: ContextMoment,
    tef_mode: str,
    params: Mapping[str, Parameter],
    modality: str,
) -> Node:
    """Raw visual vector for a (base, context) pair in one modality:
    concat(MLP(pool(base)), MLP(pool(context)), endpoint block)."""
    m = modality
    base_out = mlp2(
        tape, tape.constant(mean_pool(table, base)),
        params[f"{m}.base.w1"], params[f"{m}.base.b1"],
        params[f"{m}.base.w2"], params[f"{m}.base.b2"],
    )
    ctx_out = mlp2(
        tape, tape.constant(pool_context(table, context)),
        params[f"{m}.ctx.w1"], params[f"{m}.ctx.b1"],
        params[f"{m}.ctx.w2"], params[f"{m}.ctx.b2"],
    )
    parts = [base_out, ctx_out]
    block = tef_block(base, context, table.n_segments, tef_mode)
    if block.size:
        parts.append(tape.constant(block))
    return tape.concat(parts)


# -- language ----------------------------------------------------------------


class Vocabulary:
    """Token index with a reserved unknown slot at 0."""

    def __init__(self, tokens: Sequence[str]):
        self._tokens: list[str] = []
        self._index: dict[str, int] = {}
        for tok in tokens:
            if tok not in self._index and tok != UNK_TOKEN:
                self._index[tok] = len(self._tokens) + 1
                self._tokens.append(tok)

    @classmethod
    def from_token_lists(cls, token_lists: Iterable[Sequence[str]]) -> "Vocabulary":
        return cls([tok for toks in token_lists for tok in toks])

    @property
    def size(self) -> int:
        return len(self._tokens) + 1

    @property
    def tokens(self) -> tuple[str, ...]:
        return tuple(self._tokens)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self._index.get(tok, 0) for tok in tokens]

    def to_json(self) -> dict:
        return {"schema": 1, "tokens": list(self._tokens)}

    @classmethod
    def from_json(cls, doc: dict) -> "Vocabulary":
        return cls(doc["tokens"] if isinstance(doc, dict) else doc)


# Gates are stacked [input, forget, output, cell] along the first axis of the
# (4H, E) input and (4H, H) recurrent matrices.
def encode_query(
    tape: Tape, token_ids: Sequence[int], params: Mapping[str, Parameter]
) -> Node:
    """LSTM over the token sequence; the final hidden state is projected into
    the joint embedding space."""
    if not token_ids:
        raise ValueError("cannot encode an empty query")
    embed = tape.param(params["lang.embed"])
    w = tape.param(params["lang.w"])
    u = tape.param(params["lang.u"])
    b = tape.param(params["lang.b"])
    hidden = params["lang.u"].value.shape[1]
    vocab_size = params["lang.embed"].value.shape[0]
    h = tape.constant(np.zeros(hidden))
    c = tape.constant(np.zeros(hidden))
    for t in token_ids:
        if not 0 <= t < vocab_size:
            raise ValueError(f"token id {t} out of range for vocabulary of {vocab_size}")
        x = tape.take_row(embed, t)
        z = tape.add(tape.add(tape.matmul(w, x), tape.matmul(u, h)), b)
        gate_i = tape.sigmoid(tape.slice1d(z, 0, hidden))
        gate_f = tape.sigmoid(tape.slice1d(z, hidden, 2 * hidden))
        gate_o = tape.sigmoid(tape.slice1d(z, 2 * hidden, 3 * hidden))
        cand = tape.tanh(tape.slice1d(z, 3 * hidden, 4 * hidden))
        c = tape.add(tape.hadamard(gate_f, c), tape.hadamard(gate_i, cand))
        h = tape.hadamard(gate_o, tape.tanh(c))
    return tape.add(
        tape.matmul(tape.param(params["lang.proj_w"]), h),
        tape.param(params["lang.proj_b"]),
    )


def late_fusion(score_a: float, score_b: float, fusion_lambda: float) -> float:
    """lambda * score_a + (1 - lambda) * score_b."""
    if not 0.0 <= fusion_lambda <= 1.0:
        raise ValueError(f"fusion lambda must lie in [0, 1], got {fusion_lambda}")
    return fusion_lambda * score_a + (1.0 - fusion_lambda) * score_b


def fusion_weights(modalities: Sequence[str], fusion_lambda: float) -> dict[str, float]:
    """Per-modality late-fusion weights: lambda for the first modality and
    1 - lambda for the second; a single modality gets weight 1."""
    if not 0.0 <= fusion_lambda <= 1.0:
        raise ValueError(f"fusion lambda must lie in [0, 1], got {fusion_lambda}")
    if len(modalities) == 1:
        return {modalities[0]: 1.0}
    if len(modalities) == 2:
        return {modalities[0]: fusion_lambda, modalities[1]: 1.0 - fusion_lambda}
    raise ValueError(f"late fusion supports 1 or 2 modalities, got {len(modalities)}")


# -- file formats --------------------------------------------------------------
#
# Feature files are plain text, one block per video:
#   <video_id> <n_segments> <dim>
#   <dim floats> ... one line per segment
# Embedding files are one token per line followed by its vector components.


def save_features(path: str, tables: Mapping[str, SegmentFeatureTable]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for vid in sorted(tables):
            t = tables[vid]
            fh.write(f"{t.video_id} {t.n_segments} {t.dim}\n")
            for row in t.features:
                fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def load_features(path: str, modality: str) -> dict[str, SegmentFeatureTable]:
    tables: dict[str, SegmentFeatureTable] = {}
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    i = 0
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        header = lines[i].split()
        if len(header) != 3:
            raise ValueError(f"{path}:{i + 1}: expected 'video_id n_segments dim'")
        vid, n_str, d_str = header
        try:
            n, d = int(n_str), int(d_str)
        except ValueError:
            raise ValueError(f"{path}:{i + 1}: non-integer header fields") from None
        if vid in tables:
            raise ValueError(f"{path}:{i + 1}: duplicate video id {vid!r}")
        rows = np.zeros((n, d))
        for r in range(n):
            lineno = i + 2 + r
            if lineno > len(lines):
                raise ValueError(f"{path}: truncated block for video {vid!r}")
            vals = lines[lineno - 1].split()
            if len(vals) != d:
                raise ValueError(f"{path}:{lineno}: expected {d} values, got {len(vals)}")
            try:
                rows[r] = [float(v) for v in vals]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric feature value") from None
        tables[vid] = SegmentFeatureTable(vid, modality, rows)
        i += 1 + n
    return tables


def load_embeddings(path: str) -> tuple[Vocabulary, np.ndarray]:
    """Pretrained embedding text file -> (vocabulary, matrix).

    Row 0 of the matrix is the all-zero unknown vector; row k embeds the k-th
    token of the file. The caller freezes the resulting parameter.
    """
    tokens: list[str] = []
    vectors: list[list[float]] = []
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            tok, comps = parts[0], parts[1:]
            if not comps:
                raise ValueError(f"{path}:{lineno}: token {tok!r} has no vector")
            if dim is None:
                dim = len(comps)
            elif len(comps) != dim:
                raise ValueError(
                    f"{path}:{lineno}: expected {dim} components, got {len(comps)}"
                )
            if tok in tokens:
                raise ValueError(f"{path}:{lineno}: duplicate token {tok!r}")
            try:
                vectors.append([float(c) for c in comps])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric component") from None
            tokens.append(tok)
    if dim is None:
        raise ValueError(f"{path}: empty embedding file")
    matrix = np.vstack([np.zeros((1, dim)), np.array(vectors)])
    return Vocabulary(tokens), matrix


def save_vocabulary(path: str, vocab: Vocabulary) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(vocab.to_json(), fh, indent=0, sort_keys=True)
        fh.write("\n")


def load_vocabulary(path: str) -> Vocabulary:
    with open(path, encoding="utf-8") as fh:
        return Vocabulary.from_json(json.load(fh))
