"""Grid-level forward and manual backward for the selection module.

Forward: per position, gate scores -> straight-through hard selection ->
feature mix, reassembled into a grid and optionally passed through two
per-position residual blocks. The cache carries the parallel soft path
(selection weights replaced by the softmax) whose exact reverse-mode
derivatives pam_backward computes; that is the surrogate the
finite-difference harness checks against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from .gate import (
    GateCache,
    _silu,
    _silu_grad,
    _softmax,
    _softmax_backward,
    gate_backward_batch,
    gate_forward_batch,
    pam_mix,
    ste_select,
)
from .params import GateParams, PamParams, ResidualBlock

CONDITION_ORDER = ("edge", "depth", "seg")


@dataclass
class ConditionGrid:
    """Per-condition feature grids of identical shape (D, H, W)."""

    edge: np.ndarray
    depth: np.ndarray
    seg: np.ndarray

    def __post_init__(self):
        shapes = {self.edge.shape, self.depth.shape, self.seg.shape}
        if len(shapes) != 1 or self.edge.ndim != 3:
            raise ValidationError(
                f"condition grids must share one (D, H, W) shape, got "
                f"{self.edge.shape}, {self.depth.shape}, {self.seg.shape}"
            )

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.edge.shape

    def stacked(self) -> np.ndarray:
        return np.stack([self.edge, self.depth, self.seg])  # (3, D, H, W)


def make_context(temb: np.ndarray, cpool: np.ndarray,
                 gate: GateParams) -> np.ndarray:
    """q = psi_t(timestep embedding) + psi_c(pooled text context)."""
    temb = np.asarray(temb, dtype=np.float64)
    cpool = np.asarray(cpool, dtype=np.float64)
    return gate.psi_t @ temb + gate.psi_c @ cpool


def make_context_backward(dq: np.ndarray, temb: np.ndarray, cpool: np.ndarray,
                          gate: GateParams) -> dict[str, np.ndarray]:
    return {
        "psi_t": np.outer(dq, temb),
        "psi_c": np.outer(dq, cpool),
        "temb": gate.psi_t.T @ dq,
        "cpool": gate.psi_c.T @ dq,
    }


def _residual_forward(v: np.ndarray, blocks: list[ResidualBlock]):
    """Per-position residual MLP stack; v is (P, D)."""
    inter = []
    for blk in blocks:
        h1 = v @ blk.w1.T + blk.b1
        ha = _silu(h1)
        inter.append((v, h1, ha))
        v = v + ha @ blk.w2.T + blk.b2
    return v, inter


def _residual_backward(g: np.ndarray, blocks: list[ResidualBlock], inter):
    grads = {}
    for i in reversed(range(len(blocks))):
        blk = blocks[i]
        v_in, h1, ha = inter[i]
        grads[f"residual.{i}.w2"] = g.T @ ha
        grads[f"residual.{i}.b2"] = g.sum(axis=0)
        dha = g @ blk.w2
        dh1 = dha * _silu_grad(h1)
        grads[f"residual.{i}.w1"] = dh1.T @ v_in
        grads[f"residual.{i}.b1"] = dh1.sum(axis=0)
        g = g + dh1 @ blk.w1
    return g, grads


@dataclass
class PamCache:
    grid_shape: tuple[int, int, int]
    tokens: np.ndarray           # (P, 3, D)
    gate_cache: GateCache
    pi: np.ndarray               # (P, 3)
    y: np.ndarray                # (P, 3)
    mixed_soft: np.ndarray       # (P, D)
    soft_inter: list
    soft_flat: np.ndarray        # (P, D) soft path after residual blocks
    hard_output: np.ndarray      # (D, H, W)
    soft_output: np.ndarray      # (D, H, W)


def _tokens_from_grids(grids: ConditionGrid) -> np.ndarray:
    d, h, w = grids.shape
    stacked = grids.stacked().astype(np.float64)        # (3, D, H, W)
    return stacked.reshape(3, d, h * w).transpose(2, 0, 1)  # (P, 3, D)


def _grid_from_flat(flat: np.ndarray, shape: tuple[int, int, int]) -> np.ndarray:
    d, h, w = shape
    return flat.T.reshape(d, h, w)


def pam_forward(grids: ConditionGrid, q: np.ndarray,
                params: PamParams) -> tuple[np.ndarray, PamCache]:
    """Hard-selected (D, H, W) grid plus the cache for pam_backward.

    The returned grid is built from straight-through hard selections, so
    before residual enhancement every position equals one condition's
    feature verbatim. The cache additionally carries the soft-surrogate
    output used for gradient verification.
    """
    d, h, w = grids.shape
    tokens = _tokens_from_grids(grids)
    scores, gate_cache = gate_forward_batch(
        tokens, q, params.gate,
        position_label=lambda p: f"({p // w}, {p % w})",
    )
    sel = ste_select(scores, params.gate.tau)
    mixed_hard = pam_mix(sel.w, tokens)                 # (P, D), bit-exact
    mixed_soft = np.einsum("pk,pkd->pd", sel.pi, tokens)

    hard_flat, _ = _residual_forward(mixed_hard, params.residual)
    soft_flat, soft_inter = _residual_forward(mixed_soft, params.residual)

    cache = PamCache(
        grid_shape=(d, h, w),
        tokens=tokens,
        gate_cache=gate_cache,
        pi=sel.pi,
        y=sel.y,
        mixed_soft=mixed_soft,
        soft_inter=soft_inter,
        soft_flat=soft_flat,
        hard_output=_grid_from_flat(hard_flat, (d, h, w)),
        soft_output=_grid_from_flat(soft_flat, (d, h, w)),
    )
    return cache.hard_output, cache


def pam_backward(cache: PamCache, dout: np.ndarray,
                 params: PamParams) -> dict[str, np.ndarray]:
    """Exact gradients of the soft surrogate output wrt everything.

    dout is the upstream gradient with the output grid's (D, H, W)
    shape. Returns gate parameter grads plus "q", residual block grads,
    and "grids" of shape (3, D, H, W) for the stems' outputs.
    """
    d, h, w = cache.grid_shape
    dout = np.asarray(dout, dtype=np.float64)
    if dout.shape != (d, h, w):
        raise ValidationError(
            f"gradient shape {dout.shape} != cached output shape {(d, h, w)}"
        )
    g_flat = dout.reshape(d, h * w).T                    # (P, D)

    g_mixed, grads = _residual_backward(g_flat, params.residual,
                                        cache.soft_inter)

    # Mixing: soft path uses pi both as weights and as the score gradient
    # carrier (straight-through surrogate).
    dpi = np.einsum("pd,pkd->pk", g_mixed, cache.tokens)
    dtokens_mix = cache.pi[..., None] * g_mixed[:, None, :]
    dscores = _softmax_backward(cache.pi, dpi) / params.gate.tau

    gate_grads = gate_backward_batch(cache.gate_cache, dscores, params.gate)
    dtokens = gate_grads.pop("tokens") + dtokens_mix
    grads.update(gate_grads)
    grads["grids"] = dtokens.transpose(1, 2, 0).reshape(3, d, h, w)
    return grads


def pam_forward_soft(grids: ConditionGrid, q: np.ndarray,
                     params: PamParams) -> np.ndarray:
    """Soft-surrogate output only (selection weights = softmax)."""
    d, h, w = grids.shape
    tokens = _tokens_from_grids(grids)
    scores, _ = gate_forward_batch(tokens, q, params.gate)
    pi = _softmax(scores / params.gate.tau)
    mixed = np.einsum("pk,pkd->pd", pi, tokens)
    flat, _ = _residual_forward(mixed, params.residual)
    return _grid_from_flat(flat, (d, h, w))
