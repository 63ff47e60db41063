"""Context-modulated attention gate, straight-through selection, mixing.

The gate runs per grid position on a 3-token sequence (edge, depth,
segmentation features). Keys and values are modulated multiplicatively
by a projected context vector before scaled dot-product attention;
residual and feed-forward updates feed a linear score head.

Batched internally over positions: tokens are (P, 3, D). The manual
backward differentiates the soft surrogate, where the straight-through
weight is replaced by the softmax everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import MetricError, ValidationError
from .params import GateParams

LN_EPS = 1e-6


def _silu(x: np.ndarray) -> np.ndarray:
    return x / (1.0 + np.exp(-x))


def _silu_grad(x: np.ndarray) -> np.ndarray:
    sig = 1.0 / (1.0 + np.exp(-x))
    return sig * (1.0 + x * (1.0 - sig))


def _softmax(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _softmax_backward(pi: np.ndarray, dpi: np.ndarray) -> np.ndarray:
    # d/dz of softmax(z) applied to an upstream gradient.
    return pi * (dpi - np.sum(dpi * pi, axis=-1, keepdims=True))


def _layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * inv
    return gamma * xhat + beta, (xhat, inv)


def _layer_norm_backward(dout: np.ndarray, xhat: np.ndarray, inv: np.ndarray,
                         gamma: np.ndarray):
    dgamma = np.sum(dout * xhat, axis=tuple(range(dout.ndim - 1)))
    dbeta = np.sum(dout, axis=tuple(range(dout.ndim - 1)))
    dxhat = dout * gamma
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * np.mean(dxhat * xhat, axis=-1, keepdims=True)
    )
    return dx, dgamma, dbeta


@dataclass
class GateCache:
    tokens: np.ndarray
    q_ctx: np.ndarray
    qr: np.ndarray
    kr: np.ndarray
    vr: np.ndarray
    q_ln: tuple
    k_ln: tuple
    v_ln: tuple
    qn: np.ndarray
    kn: np.ndarray
    vn: np.ndarray
    ctx: np.ndarray
    kt: np.ndarray
    vt: np.ndarray
    attn: np.ndarray
    att_out: np.ndarray
    x1: np.ndarray
    h1: np.ndarray
    ha: np.ndarray
    x2: np.ndarray
    scores: np.ndarray


def gate_forward_batch(tokens: np.ndarray, q: np.ndarray,
                       params: GateParams,
                       position_label=None) -> tuple[np.ndarray, GateCache]:
    """Scores (P, 3) for a batch of token triples (P, 3, D)."""
    tokens = np.asarray(tokens, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if tokens.ndim != 3 or tokens.shape[1] != 3:
        raise ValidationError(f"tokens must be (P, 3, D), got {tokens.shape}")
    d = params.d
    if tokens.shape[2] != d:
        raise ValidationError(f"token dim {tokens.shape[2]} != param dim {d}")
    if q.shape != (params.wc.shape[1],):
        raise ValidationError(
            f"context dim {q.shape} incompatible with wc {params.wc.shape}"
        )
    g = params

    qr = tokens @ g.wq.T
    kr = tokens @ g.wk.T
    vr = tokens @ g.wv.T
    qn, q_ln = _layer_norm(qr, g.ln_gamma, g.ln_beta)
    kn, k_ln = _layer_norm(kr, g.ln_gamma, g.ln_beta)
    vn, v_ln = _layer_norm(vr, g.ln_gamma, g.ln_beta)

    ctx = g.wc @ q                       # (D,)
    kt = kn * ctx
    vt = vn * ctx

    scale = 1.0 / np.sqrt(d)
    attn = _softmax(qn @ kt.transpose(0, 2, 1) * scale)   # (P, 3, 3)
    att_out = attn @ vt                                   # (P, 3, D)
    y = att_out @ g.wo.T
    x1 = tokens + y

    h1 = x1 @ g.ff_w1.T + g.ff_b1
    ha = _silu(h1)
    x2 = x1 + ha @ g.ff_w2.T + g.ff_b2

    scores = x2 @ g.score_w + g.score_b                   # (P, 3)
    finite = np.isfinite(scores).all(axis=-1)
    if not finite.all():
        bad = int(np.argwhere(~finite)[0][0])
        label = position_label(bad) if position_label else str(bad)
        raise MetricError(f"non-finite gate score at position {label}")
    cache = GateCache(tokens, q, qr, kr, vr, q_ln, k_ln, v_ln, qn, kn, vn,
                      ctx, kt, vt, attn, att_out, x1, h1, ha, x2, scores)
    return scores, cache


def gate_forward(tokens: np.ndarray, q: np.ndarray,
                 params: GateParams) -> tuple[np.ndarray, GateCache]:
    """Single-position convenience wrapper: tokens (3, D) -> scores (3,)."""
    scores, cache = gate_forward_batch(np.asarray(tokens)[None], q, params)
    return scores[0], cache


def gate_backward_batch(cache: GateCache, dscores: np.ndarray,
                        params: GateParams) -> dict[str, np.ndarray]:
    """Gradients of the batch scores wrt parameters, tokens, and context.

    Returns a dict with every gate array name plus "tokens" and "q".
    """
    g = params
    d = g.d
    dscores = np.asarray(dscores, dtype=np.float64)

    grads: dict[str, np.ndarray] = {}
    # Score head.
    dx2 = dscores[..., None] * g.score_w
    grads["score_w"] = np.einsum("pk,pkd->d", dscores, cache.x2)
    grads["score_b"] = np.asarray(dscores.sum())

    # Feed-forward with residual.
    dx1 = dx2.copy()
    dha = dx2 @ g.ff_w2
    grads["ff_w2"] = np.einsum("pkd,pkh->dh", dx2, cache.ha)
    grads["ff_b2"] = dx2.sum(axis=(0, 1))
    dh1 = dha * _silu_grad(cache.h1)
    grads["ff_w1"] = np.einsum("pkh,pkd->hd", dh1, cache.x1)
    grads["ff_b1"] = dh1.sum(axis=(0, 1))
    dx1 += dh1 @ g.ff_w1

    # Attention with residual.
    dtokens = dx1.copy()
    dy = dx1
    datt_out = dy @ g.wo
    grads["wo"] = np.einsum("pkd,pke->de", dy, cache.att_out)
    dattn = datt_out @ cache.vt.transpose(0, 2, 1)
    dvt = cache.attn.transpose(0, 2, 1) @ datt_out
    ds_att = _softmax_backward(cache.attn, dattn) / np.sqrt(d)
    dqn = ds_att @ cache.kt
    dkt = ds_att.transpose(0, 2, 1) @ cache.qn

    dkn = dkt * cache.ctx
    dvn = dvt * cache.ctx
    dctx = np.sum(dkt * cache.kn, axis=(0, 1)) + np.sum(dvt * cache.vn, axis=(0, 1))
    grads["wc"] = np.outer(dctx, cache.q_ctx)
    grads["q"] = g.wc.T @ dctx

    dqr, dg_q, db_q = _layer_norm_backward(dqn, *cache.q_ln, g.ln_gamma)
    dkr, dg_k, db_k = _layer_norm_backward(dkn, *cache.k_ln, g.ln_gamma)
    dvr, dg_v, db_v = _layer_norm_backward(dvn, *cache.v_ln, g.ln_gamma)
    grads["ln_gamma"] = dg_q + dg_k + dg_v
    grads["ln_beta"] = db_q + db_k + db_v

    grads["wq"] = np.einsum("pkd,pke->de", dqr, cache.tokens)
    grads["wk"] = np.einsum("pkd,pke->de", dkr, cache.tokens)
    grads["wv"] = np.einsum("pkd,pke->de", dvr, cache.tokens)
    dtokens += dqr @ g.wq + dkr @ g.wk + dvr @ g.wv

    grads["tokens"] = dtokens
    return grads


@dataclass
class SelectionWeights:
    """Per-position selection triple.

    pi is the softmax over scores/tau, y the one-hot argmax (ties to the
    lowest condition index), and w the straight-through weight whose
    forward value equals y exactly.
    """

    pi: np.ndarray
    y: np.ndarray
    w: np.ndarray


def ste_select(scores: np.ndarray, tau: float) -> SelectionWeights:
    """Straight-through hard selection over the last axis."""
    if not tau > 0:
        raise ValidationError(f"tau must be > 0, got {tau}")
    scores = np.asarray(scores, dtype=np.float64)
    pi = _softmax(scores / tau)
    idx = np.argmax(scores, axis=-1)
    y = np.zeros_like(pi)
    np.put_along_axis(y, np.expand_dims(idx, -1), 1.0, axis=-1)
    return SelectionWeights(pi=pi, y=y, w=y.copy())


def pam_mix(weights: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Mix per-condition features: sum_k w_k f^k over the condition axis.

    weights: (..., K), features: (..., K, D). Exact one-hot weights use a
    gather so the selected feature is returned bit-for-bit.
    """
    weights = np.asarray(weights)
    features = np.asarray(features)
    if weights.shape != features.shape[:-1]:
        raise ValidationError(
            f"weights {weights.shape} incompatible with features {features.shape}"
        )
    idx = np.argmax(weights, axis=-1)
    onehot = np.zeros_like(weights)
    np.put_along_axis(onehot, np.expand_dims(idx, -1), 1.0, axis=-1)
    if np.array_equal(weights, onehot):
        take = np.expand_dims(np.expand_dims(idx, -1), -1)
        return np.take_along_axis(features, take, axis=-2).squeeze(-2).copy()
    return np.einsum("...k,...kd->...d", weights, features)
