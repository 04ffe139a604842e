"""Shared test machinery: finite-difference gradient checks and an
independent plain-numpy scorer used as the exactness oracle.

The scorer is written straight from the math definitions (pool, MLP, LSTM,
endpoint features, the four similarities, max over contexts, late fusion) and
never calls into the package's tape; agreement must be bit-exact because both
sides execute the same canonical float64 expressions.
"""

from __future__ import annotations

import numpy as np

from momentloc.temporal import Moment

RTOL = 1e-4
ATOL = 1e-8


def numeric_gradients(f, arrays, h=1e-6):
    """Central finite differences of scalar f with respect to every entry of
    every array (arrays are perturbed in place and restored)."""
    grads = [np.zeros_like(a) for a in arrays]
    for arr, grad in zip(arrays, grads):
        flat, gflat = arr.reshape(-1), grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f()
            flat[i] = orig - h
            fm = f()
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * h)
    return grads


def max_relative_error(analytic, numeric):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), ATOL / RTOL)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def assert_gradients_close(analytic, numeric, what=""):
    err = max_relative_error(analytic, numeric)
    assert err < RTOL, f"gradient mismatch{' for ' + what if what else ''}: rel err {err:.3e}"


# -- independent scorer ------------------------------------------------------------


def np_sigmoid(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def np_encode_query(token_ids, arrays):
    w, u, b = arrays["lang.w"], arrays["lang.u"], arrays["lang.b"]
    hidden = u.shape[1]
    h = np.zeros(hidden)
    c = np.zeros(hidden)
    for t in token_ids:
        x = arrays["lang.embed"][t]
        z = (w @ x + u @ h) + b
        gate_i = np_sigmoid(z[0:hidden])
        gate_f = np_sigmoid(z[hidden : 2 * hidden])
        gate_o = np_sigmoid(z[2 * hidden : 3 * hidden])
        cand = np.tanh(z[3 * hidden : 4 * hidden])
        c = gate_f * c + gate_i * cand
        h = gate_o * np.tanh(c)
    return arrays["lang.proj_w"] @ h + arrays["lang.proj_b"]


def np_l2_normalize(v, eps=1e-8):
    norm = float(np.sqrt(np.dot(v, v)))
    return v / max(norm, eps)


def _np_mlp(x, arrays, prefix):
    h = np.maximum(arrays[f"{prefix}.w1"] @ x + arrays[f"{prefix}.b1"], 0.0)
    return arrays[f"{prefix}.w2"] @ h + arrays[f"{prefix}.b2"]


def np_tef_block(base: Moment, slots, n, tef_mode):
    if tef_mode == "none":
        return np.zeros(0)
    flat = [base.start_seg / n, (base.end_seg + 1) / n]
    if tef_mode == "contef":
        for m in slots:
            if m is None:
                flat.extend((-1.0, -1.0))
            else:
                flat.extend((m.start_seg / n, (m.end_seg + 1) / n))
    return np.array(flat)


def np_score(video, token_ids, base: Moment, contexts, cfg, arrays):
    """Exhaustive per-context scoring: per modality score every context, take
    the max, then late-fuse the maxima. Returns (score, chosen_index)."""
    n = next(iter(video.values())).n_segments
    fl = np_encode_query(token_ids, arrays)
    if len(cfg.modalities) == 1:
        weights = {cfg.modalities[0]: 1.0}
    else:
        weights = {
            cfg.modalities[0]: cfg.fusion_lambda,
            cfg.modalities[1]: 1.0 - cfg.fusion_lambda,
        }
    fused_score = None
    fused_per_ctx = np.zeros(len(contexts))
    for mod in cfg.modalities:
        table = video[mod]
        fl_ready = np_l2_normalize(fl) if cfg.similarity == "normalized_mult" else fl
        base_vec = table.features[base.start_seg : base.end_seg + 1].mean(axis=0)
        base_out = _np_mlp(base_vec, arrays, f"{mod}.base")
        sims = []
        for ctx in contexts:
            parts = [
                np.zeros(table.dim)
                if m is None
                else table.features[m.start_seg : m.end_seg + 1].mean(axis=0)
                for m in ctx.slots
            ]
            ctx_out = _np_mlp(np.concatenate(parts), arrays, f"{mod}.ctx")
            pieces = [base_out, ctx_out]
            block = np_tef_block(base, ctx.slots, n, cfg.tef_mode)
            if block.size:
                pieces.append(block)
            fv = arrays[f"{mod}.proj_w"] @ np.concatenate(pieces) + arrays[f"{mod}.proj_b"]
            if cfg.similarity == "distance":
                diff = fv - fl_ready
                sims.append(np.dot(diff, diff) * -1.0)
                continue
            if cfg.similarity == "normalized_mult":
                x = np_l2_normalize(fv) * fl_ready
            elif cfg.similarity == "mult":
                x = fv * fl_ready
            else:  # tall_sim
                x = np.concatenate([fv, fl_ready, fv * fl_ready, fv + fl_ready])
            hid = np.maximum(arrays[f"{mod}.sim.w1"] @ x + arrays[f"{mod}.sim.b1"], 0.0)
            sims.append(arrays[f"{mod}.sim.w2"] @ hid + arrays[f"{mod}.sim.b2"])
        sims = [float(s) for s in sims]
        best = sims[int(np.argmax(sims))]
        weighted = weights[mod] * best
        fused_score = weighted if fused_score is None else fused_score + weighted
        fused_per_ctx += weights[mod] * np.array(sims)
    return float(fused_score), int(np.argmax(fused_per_ctx))


def tiny_model_config(**overrides):
    from momentloc.model import ModelConfig

    base = dict(
        context_mode="latent",
        tef_mode="contef",
        similarity="normalized_mult",
        loss="ranking",
        context_supervision="weak",
        modalities=("rgb",),
        visual_dim=3,
        mlp_hidden=3,
        visual_out_dim=2,
        embed_dim=2,
        lstm_hidden=3,
        joint_dim=3,
        sim_hidden=2,
        vocab_size=5,
    )
    base.update(overrides)
    return ModelConfig(**base)


def tiny_video(rng, n_segments=3, dim=3, modalities=("rgb",), video_id="v0"):
    from momentloc.encoders import SegmentFeatureTable

    return {
        mod: SegmentFeatureTable(video_id, mod, rng.normal(size=(n_segments, dim)))
        for mod in modalities
    }
