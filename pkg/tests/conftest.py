"""Shared helpers for the test suite."""

import numpy as np

from fuxi_alpha.model import ModelConfig, ModelParams, SequenceBatch, init_params


def tiny_config(**overrides) -> ModelConfig:
    base = dict(
        vocab=7, d=4, d_h=4, heads=1, d_ffn=8, layers=2, n=4,
        n_buckets=8, negatives=3, time_bucket_base=1.0, max_time_span=1000,
    )
    base.update(overrides)
    return ModelConfig(**base)


def random_params(cfg: ModelConfig, kind: str = "full", seed: int = 0) -> ModelParams:
    """Init then overwrite every tensor with lively random values (alpha/beta included)."""
    params = init_params(cfg, kind, seed)
    rng = np.random.default_rng(seed + 77_000)
    for _, t in params.named():
        t.data = rng.normal(0.0, 0.3, size=t.data.shape)
    params.item_emb.data[0, :] = 0.0
    return params


def random_batch(cfg: ModelConfig, batch_size: int, seed: int = 0, width: int | None = None) -> SequenceBatch:
    rng = np.random.default_rng(seed)
    n = cfg.n if width is None else width
    items = np.zeros((batch_size, n), dtype=np.int64)
    ts = np.zeros((batch_size, n), dtype=np.int64)
    lens = rng.integers(1, n + 1, size=batch_size)
    for i, length in enumerate(lens):
        items[i, :length] = rng.integers(1, cfg.vocab, size=length)
        ts[i, :length] = np.cumsum(rng.integers(1, 50, size=length))
    return SequenceBatch(items, ts, lens)


# Independent loop-transcription reference for the full model (single head).


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _silu(z):
    return z * _sigmoid(z)


def _rms_row(v, gain, eps):
    r = np.sqrt(np.mean(v * v) + eps)
    return v / r * (gain if gain is not None else 1.0)


def _bucket_scalar(delta, cfg):
    u = delta / cfg.time_bucket_base
    half = cfg.n_buckets // 2
    if u < half:
        return int(u)
    max_u = cfg.max_time_span / cfg.time_bucket_base
    if max_u <= half or u >= max_u:
        return cfg.n_buckets - 1
    frac = np.log(u / half) / np.log(max_u / half)
    return min(half + int(frac * (cfg.n_buckets - half)), cfg.n_buckets - 1)


def _embed_rows(items, valid_len, params, cfg):
    m = len(items)
    x = np.zeros((m, cfg.d))
    for j in range(valid_len):
        x[j] = params.item_emb.data[items[j]] + params.pos_emb.data[j]
    return x


def _channel_weight_rows(items, ts, valid_len, cfg, q, k, blk, head):
    """Per-head weight matrices (semantic, positional, temporal), causally masked."""
    m = len(items)
    lo, hi = head * cfg.d_h, (head + 1) * cfg.d_h
    sem = np.zeros((m, m))
    posw = np.zeros((m, m))
    tmpw = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            if j <= i and j < valid_len:
                sem[i, j] = _silu(float(q[i, lo:hi] @ k[j, lo:hi])) / cfg.n
                posw[i, j] = blk.beta[head].data[i - j]
                tmpw[i, j] = blk.alpha[head].data[_bucket_scalar(max(ts[i] - ts[j], 0), cfg)]
    return sem, posw, tmpw


def reference_hidden(items, ts, valid_len, params, cfg):
    """Plain-loop re-derivation of the stacked-block hidden states (any head count)."""
    m = len(items)
    eps = cfg.rms_eps
    x = _embed_rows(items, valid_len, params, cfg)
    for blk in params.blocks:
        xt = np.stack([_rms_row(x[i], blk.attn_gain.data, eps) for i in range(m)])
        q = _silu(xt @ blk.w_q.data)
        k = _silu(xt @ blk.w_k.data)
        v = _silu(xt @ blk.w_v.data)
        gate = _silu(xt @ blk.w_u.data)
        sem_parts, pos_parts, tmp_parts = [], [], []
        for head in range(cfg.heads):
            lo, hi = head * cfg.d_h, (head + 1) * cfg.d_h
            sem, posw, tmpw = _channel_weight_rows(items, ts, valid_len, cfg, q, k, blk, head)
            sem_parts.append(sem @ v[:, lo:hi])
            pos_parts.append(posw @ v[:, lo:hi])
            tmp_parts.append(tmpw @ v[:, lo:hi])
        stacked = np.concatenate(sem_parts + pos_parts + tmp_parts, axis=-1)
        normed = np.stack([_rms_row(stacked[i], None, eps) for i in range(m)])
        h = normed * gate
        o = h @ blk.w_o.data + x
        on = np.stack([_rms_row(o[i], blk.ffn_gain.data, eps) for i in range(m)])
        f = (_silu(on @ blk.w_1.data) * (on @ blk.w_2.data)) @ blk.w_3.data
        x = f + o
    return x


def reference_logits(items, ts, valid_len, params, cfg):
    return reference_hidden(items, ts, valid_len, params, cfg) @ params.item_emb.data.T


def reference_vanilla_hidden(items, ts, valid_len, params, cfg):
    """Loop re-derivation of the softmax-attention block stack (relu FFN)."""
    m = len(items)
    eps = cfg.rms_eps
    x = _embed_rows(items, valid_len, params, cfg)
    for blk in params.blocks:
        xt = np.stack([_rms_row(x[i], blk.attn_gain.data, eps) for i in range(m)])
        q = xt @ blk.w_q.data
        k = xt @ blk.w_k.data
        v = xt @ blk.w_v.data
        head_outs = []
        for head in range(cfg.heads):
            lo, hi = head * cfg.d_h, (head + 1) * cfg.d_h
            out = np.zeros((m, cfg.d_h))
            for i in range(m):
                cols = [j for j in range(m) if j <= i and j < valid_len]
                if not cols:
                    continue
                scores = np.array([float(q[i, lo:hi] @ k[j, lo:hi]) for j in cols]) / np.sqrt(cfg.d_h)
                w = np.exp(scores - scores.max())
                w /= w.sum()
                out[i] = sum(wj * v[j, lo:hi] for wj, j in zip(w, cols))
            head_outs.append(out)
        attn = np.concatenate(head_outs, axis=-1)
        o = attn @ blk.w_o.data + x
        on = np.stack([_rms_row(o[i], blk.ffn_gain.data, eps) for i in range(m)])
        f = np.maximum(on @ blk.w_1.data, 0.0) @ blk.w_2.data
        x = f + o
    return x


def reference_hstu_hidden(items, ts, valid_len, params, cfg):
    """Loop re-derivation of the gated additive-bias block stack."""
    m = len(items)
    eps = cfg.rms_eps
    x = _embed_rows(items, valid_len, params, cfg)
    for blk in params.blocks:
        xt = np.stack([_rms_row(x[i], blk.attn_gain.data, eps) for i in range(m)])
        q = _silu(xt @ blk.w_q.data)
        k = _silu(xt @ blk.w_k.data)
        v = _silu(xt @ blk.w_v.data)
        gate = _silu(xt @ blk.w_u.data)
        head_outs = []
        for head in range(cfg.heads):
            lo, hi = head * cfg.d_h, (head + 1) * cfg.d_h
            sem, posw, tmpw = _channel_weight_rows(items, ts, valid_len, cfg, q, k, blk, head)
            combined = np.zeros((m, m))
            for i in range(m):
                for j in range(m):
                    if j <= i and j < valid_len:
                        combined[i, j] = sem[i, j] + posw[i, j] + tmpw[i, j]
            head_outs.append(combined @ v[:, lo:hi])
        attn = np.concatenate(head_outs, axis=-1)
        normed = np.stack([_rms_row(attn[i], None, eps) for i in range(m)])
        x = (normed * gate) @ blk.w_o.data + x
    return x
