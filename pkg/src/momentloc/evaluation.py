"""Retrieval metrics, context analyses, and the frequency-prior baseline.

Rank-based retrieval over the enumerated candidate moments of each video:
R@1 and R@5 ask whether an exact match to any consensus moment appears in the
top k; mIoU averages the best IoU between the rank-1 moment and the consensus
moments. Scores are bucketed by temporal word, and the Average column is the
unweighted mean over buckets so rare words weigh as much as common ones.
"""

from __future__ import annotations

import itertools
from collections import Counter
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .autodiff import Tape
from .dataset import Corpus, TemporalQuery, tokenize
from .encoders import SegmentFeatureTable, encode_query
from .model import ModelBundle, ScoredMoment, conform_context, score_base
from .temporal import Moment, context_set, enumerate_moments, iou, segment_iou

BUCKET_ORDER = ("none", "before", "after", "then", "while")
EVAL_MODES = ("latent", "gt_context")


def consensus(annotations: Sequence[Moment]) -> list[Moment]:
    """Collapse multi-annotator moments to the agreeable core.

    With four or more annotations, keep the three with the highest total
    pairwise IoU (lexicographically earliest combination on ties); with fewer,
    keep everything.
    """
    if not annotations:
        raise ValueError("no annotations")
    if len(annotations) < 4:
        return list(annotations)
    best_total = -1.0
    best: tuple[Moment, ...] | None = None
    for combo in itertools.combinations(range(len(annotations)), 3):
        moments = [annotations[i] for i in combo]
        total = sum(iou(a, b) for a, b in itertools.combinations(moments, 2))
        if total > best_total:
            best_total = total
            best = tuple(moments)
    assert best is not None
    return list(best)


@dataclass(frozen=True)
class BucketMetrics:
    r_at_1: float
    r_at_5: float
    miou: float
    count: int

    def to_dict(self) -> dict:
        return {"r_at_1": self.r_at_1, "r_at_5": self.r_at_5, "miou": self.miou, "count": self.count}


@dataclass
class MetricsReport:
    buckets: dict[str, BucketMetrics]
    average: BucketMetrics

    def to_dict(self) -> dict:
        return {
            "buckets": {w: b.to_dict() for w, b in self.buckets.items()},
            "average": self.average.to_dict(),
        }


@dataclass(frozen=True)
class QueryResult:
    """What the metrics need from one evaluated query."""

    word: str
    ranked: tuple[Moment, ...]
    annotations: tuple[Moment, ...]


def compute_metrics(results: Sequence[QueryResult]) -> MetricsReport:
    if not results:
        raise ValueError("no results to score")
    per_word: dict[str, list[QueryResult]] = {}
    for r in results:
        per_word.setdefault(r.word, []).append(r)
    buckets: dict[str, BucketMetrics] = {}
    for word in BUCKET_ORDER:
        group = per_word.pop(word, None)
        if group:
            buckets[word] = _bucket(group)
    for word in sorted(per_word):
        buckets[word] = _bucket(per_word[word])
    avg = BucketMetrics(
        float(np.mean([b.r_at_1 for b in buckets.values()])),
        float(np.mean([b.r_at_5 for b in buckets.values()])),
        float(np.mean([b.miou for b in buckets.values()])),
        sum(b.count for b in buckets.values()),
    )
    return MetricsReport(buckets, avg)


def _bucket(group: Sequence[QueryResult]) -> BucketMetrics:
    r1 = r5 = miou = 0.0
    for r in group:
        cons = consensus(r.annotations)
        hits = [m in cons for m in r.ranked[:5]]
        r1 += float(hits[0])
        r5 += float(any(hits))
        miou += max(iou(r.ranked[0], c) for c in cons)
    n = len(group)
    return BucketMetrics(r1 / n, r5 / n, miou / n, n)


# -- model ranking ---------------------------------------------------------------


def rank_moments(
    video: Mapping[str, SegmentFeatureTable],
    query: TemporalQuery,
    bundle: ModelBundle,
    mode: str = "latent",
    tape: Tape | None = None,
    cache: dict | None = None,
    tokens: Sequence[str] | None = None,
) -> list[ScoredMoment]:
    """Score every candidate moment of the video for one query and sort by
    descending score (ties keep enumeration order).

    latent: contexts come from the model's context mode. gt_context: the
    stored ground-truth context is the only candidate; a query without one is
    an error here, callers decide the fallback.
    """
    if mode not in EVAL_MODES:
        raise ValueError(f"eval mode must be one of {EVAL_MODES}, got {mode!r}")
    cfg, params = bundle.config, bundle.params
    if mode == "gt_context" and query.context is None:
        raise ValueError(f"query {query.sentence!r} has no ground-truth context")
    if tape is None:
        tape = Tape(recording=False)
    if cache is None:
        cache = {}
    n = next(iter(video.values())).n_segments
    ids = bundle.vocab.encode(tokens if tokens is not None else query.tokens)
    fl = encode_query(tape, ids, params)
    scored = []
    for base in enumerate_moments(n):
        if mode == "gt_context":
            contexts = [conform_context(query.context, base, cfg.context_slots)]
        else:
            contexts = context_set(cfg.context_mode, base, n)
        node, chosen = score_base(tape, cache, video, fl, base, contexts, cfg, params)
        scored.append(ScoredMoment(base, float(node.value), contexts[chosen]))
    return sorted(scored, key=lambda s: -s.score)


def evaluate(
    corpus: Corpus, bundle: ModelBundle, mode: str = "latent"
) -> MetricsReport:
    """Bucketed metrics over a corpus split. In gt_context mode, queries that
    carry no stored context fall back to latent scoring."""
    results = []
    for query, ranking in iter_rankings(corpus, bundle, mode):
        results.append(
            QueryResult(query.temporal_word, tuple(s.moment for s in ranking), (query.moment,))
        )
    return compute_metrics(results)


def iter_rankings(corpus: Corpus, bundle: ModelBundle, mode: str = "latent"):
    """(query, ranking) pairs, sharing one inference tape per video so
    query-independent visual work is reused."""
    by_video: dict[str, list[TemporalQuery]] = {}
    for q in corpus.queries:
        by_video.setdefault(q.video_id, []).append(q)
    for vid in sorted(by_video):
        video = corpus.features[vid]
        tape = Tape(recording=False)
        cache: dict = {}
        for query in by_video[vid]:
            q_mode = mode if (mode == "latent" or query.context is not None) else "latent"
            yield query, rank_moments(video, query, bundle, q_mode, tape, cache)


# -- context analyses --------------------------------------------------------------


@dataclass(frozen=True)
class FragmentRow:
    r_at_1: float
    miou: float
    count: int

    def to_dict(self) -> dict:
        return {"r_at_1": self.r_at_1, "miou": self.miou, "count": self.count}


def context_conditioned_delta(
    corpus: Corpus, bundle: ModelBundle, words: Sequence[str] = ("before", "after")
) -> dict:
    """How much easier are queries whose context the model already finds?

    For each temporal word: split the queries into those where ranking the
    context sentence fragment alone puts the ground-truth context at rank 1,
    and compute metric deltas of that subset versus all queries of the word.
    Queries lacking a stored context or fragment are excluded and counted.
    """
    out: dict = {}
    by_video: dict[str, list[TemporalQuery]] = {}
    for q in corpus.queries:
        if q.temporal_word in words:
            by_video.setdefault(q.video_id, []).append(q)
    rows: dict[str, dict[str, list]] = {w: {"all": [], "subset": []} for w in words}
    excluded = 0
    for vid in sorted(by_video):
        video = corpus.features[vid]
        tape = Tape(recording=False)
        cache: dict = {}
        for q in by_video[vid]:
            if q.context is None or q.context_sentence is None or len(q.context.regions) != 1:
                excluded += 1
                continue
            ranking = rank_moments(video, q, bundle, "latent", tape, cache)
            result = QueryResult(q.temporal_word, tuple(s.moment for s in ranking), (q.moment,))
            rows[q.temporal_word]["all"].append(result)
            frag_ranking = rank_moments(
                video, q, bundle, "latent", tape, cache,
                tokens=tokenize(q.context_sentence),
            )
            if frag_ranking[0].moment == q.context.regions[0]:
                rows[q.temporal_word]["subset"].append(result)
    for word in words:
        all_results = rows[word]["all"]
        subset = rows[word]["subset"]
        if not all_results or not subset:
            out[word] = None
            continue
        full = _bucket(all_results)
        cond = _bucket(subset)
        out[word] = {
            "full": full.to_dict(),
            "context_found": cond.to_dict(),
            "delta_r_at_1": cond.r_at_1 - full.r_at_1,
            "delta_miou": cond.miou - full.miou,
        }
    out["excluded"] = excluded
    return out


def context_fragment_eval(
    corpus: Corpus, bundle: ModelBundle, words: Sequence[str] = ("before", "after")
) -> dict:
    """Can the model localize the context itself?

    Row "fragment_as_query": rank the context sentence fragment as a
    standalone query and score it against the ground-truth context region.
    Row "chosen_context": take the chosen context of the rank-1 moment of the
    full sentence and compare it to the ground-truth context (R@1 is exact
    segment-set equality; mIoU is segment-set IoU, so two-region contexts are
    handled). Queries without a stored context or fragment are excluded.
    """
    frag_rows: dict[str, list[tuple[float, float]]] = {w: [] for w in words}
    chosen_rows: dict[str, list[tuple[float, float]]] = {w: [] for w in words}
    excluded = 0
    by_video: dict[str, list[TemporalQuery]] = {}
    for q in corpus.queries:
        if q.temporal_word in words:
            by_video.setdefault(q.video_id, []).append(q)
    for vid in sorted(by_video):
        video = corpus.features[vid]
        tape = Tape(recording=False)
        cache: dict = {}
        for q in by_video[vid]:
            if q.context is None or q.context_sentence is None:
                excluded += 1
                continue
            gt_set = q.context.segment_set()
            frag_ranking = rank_moments(
                video, q, bundle, "latent", tape, cache,
                tokens=tokenize(q.context_sentence),
            )
            top = frag_ranking[0].moment
            frag_rows[q.temporal_word].append(
                (
                    float(frozenset(top.segments()) == gt_set),
                    segment_iou(frozenset(top.segments()), gt_set),
                )
            )
            full_ranking = rank_moments(video, q, bundle, "latent", tape, cache)
            pred_ctx = full_ranking[0].chosen_context.segment_set()
            chosen_rows[q.temporal_word].append(
                (float(pred_ctx == gt_set), segment_iou(pred_ctx, gt_set))
            )

    def summarize(rows: dict[str, list[tuple[float, float]]]) -> dict:
        out = {}
        for word, vals in rows.items():
            if vals:
                out[word] = FragmentRow(
                    float(np.mean([v[0] for v in vals])),
                    float(np.mean([v[1] for v in vals])),
                    len(vals),
                ).to_dict()
        return out

    return {
        "fragment_as_query": summarize(frag_rows),
        "chosen_context": summarize(chosen_rows),
        "excluded": excluded,
    }


# -- frequency prior -----------------------------------------------------------------


class FrequencyPrior:
    """Query-blind baseline: rank moments by how often each (temporal word,
    moment) pair is the ground truth in training, ties and unseen words
    falling back to enumeration order."""

    def __init__(self, counts: Mapping[str, Mapping[Moment, int]]):
        self._counts = {w: dict(c) for w, c in counts.items()}

    @classmethod
    def fit(cls, queries: Sequence[TemporalQuery]) -> "FrequencyPrior":
        counts: dict[str, Counter] = {}
        for q in queries:
            counts.setdefault(q.temporal_word, Counter())[q.moment] += 1
        return cls(counts)

    def rank(self, word: str, n_segments: int) -> list[Moment]:
        moments = enumerate_moments(n_segments)
        table = self._counts.get(word, {})
        return sorted(moments, key=lambda m: -table.get(m, 0))

    def evaluate(self, corpus: Corpus) -> MetricsReport:
        results = [
            QueryResult(
                q.temporal_word,
                tuple(self.rank(q.temporal_word, corpus.n_segments(q.video_id))),
                (q.moment,),
            )
            for q in corpus.queries
        ]
        return compute_metrics(results)


# -- text report ---------------------------------------------------------------------


def format_comparison_table(rows: Sequence[tuple[str, MetricsReport]]) -> str:
    """Aligned text table: one row per labelled report, column groups per
    temporal word (R@1, mIoU x100) and a final Average group (R@1, R@5, mIoU)."""
    if not rows:
        raise ValueError("no rows")
    words = [w for w in BUCKET_ORDER if any(w in rep.buckets for _, rep in rows)]
    extra = sorted(
        {w for _, rep in rows for w in rep.buckets} - set(BUCKET_ORDER)
    )
    words += extra
    header_1 = ["model"]
    header_2 = [""]
    for w in words:
        header_1 += [w, ""]
        header_2 += ["R@1", "mIoU"]
    header_1 += ["average", "", ""]
    header_2 += ["R@1", "R@5", "mIoU"]
    table = [header_1, header_2]
    for label, rep in rows:
        row = [label]
        for w in words:
            b = rep.buckets.get(w)
            row += ["-", "-"] if b is None else [f"{100 * b.r_at_1:.2f}", f"{100 * b.miou:.2f}"]
        row += [
            f"{100 * rep.average.r_at_1:.2f}",
            f"{100 * rep.average.r_at_5:.2f}",
            f"{100 * rep.average.miou:.2f}",
        ]
        table.append(row)
    widths = [max(len(r[i]) for r in table) for i in range(len(table[0]))]
    lines = []
    for r in table:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(r)).rstrip())
    return "\n".join(lines) + "\n"
