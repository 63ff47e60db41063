"""Parameter containers, seeded initialization, and ACTF bundle I/O."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ValidationError
from ..tensorio import read_array, write_array


@dataclass
class GateParams:
    """Attention-gate weights. tau is the selection temperature (> 0)."""

    wq: np.ndarray          # (D, D)
    wk: np.ndarray          # (D, D)
    wv: np.ndarray          # (D, D)
    wc: np.ndarray          # (D, Dq) context projection
    wo: np.ndarray          # (D, D)
    ln_gamma: np.ndarray    # (D,) shared scale for the Q/K/V norms
    ln_beta: np.ndarray     # (D,)
    ff_w1: np.ndarray       # (Dh, D)
    ff_b1: np.ndarray       # (Dh,)
    ff_w2: np.ndarray       # (D, Dh)
    ff_b2: np.ndarray       # (D,)
    score_w: np.ndarray     # (D,)
    score_b: float
    psi_t: np.ndarray       # (Dq, Dt) timestep-embedding projection
    psi_c: np.ndarray       # (Dq, Dc) pooled-text projection
    tau: float = 1.0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValidationError(f"tau must be > 0, got {self.tau}")

    @property
    def d(self) -> int:
        return self.wq.shape[0]


@dataclass
class ResidualBlock:
    """Per-position MLP residual block: v + w2 @ silu(w1 @ v + b1) + b2."""

    w1: np.ndarray  # (Dr, D)
    b1: np.ndarray  # (Dr,)
    w2: np.ndarray  # (D, Dr)
    b2: np.ndarray  # (D,)


@dataclass
class StemParams:
    """Stride-2 convolution stack lifting a 3-channel map to a grid."""

    weights: list[np.ndarray]  # each (Cout, Cin, k, k)
    biases: list[np.ndarray]   # each (Cout,)
    activation: bool = True

    @property
    def total_stride(self) -> int:
        return 2 ** len(self.weights)


@dataclass
class PamParams:
    gate: GateParams
    residual: list[ResidualBlock] = field(default_factory=list)


def _uniform(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.uniform(-0.1, 0.1, size=shape)


def init_gate_params(
    d: int,
    dq: int | None = None,
    dt: int | None = None,
    dc: int | None = None,
    hidden: int | None = None,
    tau: float = 1.0,
    seed: int = 0,
) -> GateParams:
    """Seeded uniform [-0.1, 0.1] desk-test initialization."""
    dq = dq or d
    dt = dt or dq
    dc = dc or dq
    hidden = hidden or 4 * d
    rng = np.random.default_rng(seed)
    return GateParams(
        wq=_uniform(rng, (d, d)),
        wk=_uniform(rng, (d, d)),
        wv=_uniform(rng, (d, d)),
        wc=_uniform(rng, (d, dq)),
        wo=_uniform(rng, (d, d)),
        ln_gamma=_uniform(rng, d),
        ln_beta=_uniform(rng, d),
        ff_w1=_uniform(rng, (hidden, d)),
        ff_b1=_uniform(rng, hidden),
        ff_w2=_uniform(rng, (d, hidden)),
        ff_b2=_uniform(rng, d),
        score_w=_uniform(rng, d),
        score_b=float(rng.uniform(-0.1, 0.1)),
        psi_t=_uniform(rng, (dq, dt)),
        psi_c=_uniform(rng, (dq, dc)),
        tau=tau,
    )


def init_residual_blocks(d: int, hidden: int | None = None, count: int = 2,
                         seed: int = 0) -> list[ResidualBlock]:
    hidden = hidden or 2 * d
    rng = np.random.default_rng(seed)
    return [
        ResidualBlock(
            w1=_uniform(rng, (hidden, d)),
            b1=_uniform(rng, hidden),
            w2=_uniform(rng, (d, hidden)),
            b2=_uniform(rng, d),
        )
        for _ in range(count)
    ]


def init_pam_params(d: int, residual_blocks: int = 2, seed: int = 0,
                    **gate_kwargs) -> PamParams:
    return PamParams(
        gate=init_gate_params(d, seed=seed, **gate_kwargs),
        residual=init_residual_blocks(d, count=residual_blocks, seed=seed + 1),
    )


def init_stem_params(
    out_channels: tuple[int, ...] = (48, 96, 192),
    in_channels: int = 3,
    kernel: int = 3,
    activation: bool = True,
    seed: int = 0,
) -> StemParams:
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    cin = in_channels
    for cout in out_channels:
        weights.append(_uniform(rng, (cout, cin, kernel, kernel)))
        biases.append(_uniform(rng, cout))
        cin = cout
    return StemParams(weights=weights, biases=biases, activation=activation)


_GATE_ARRAYS = (
    "wq", "wk", "wv", "wc", "wo", "ln_gamma", "ln_beta",
    "ff_w1", "ff_b1", "ff_w2", "ff_b2", "score_w", "psi_t", "psi_c",
)


def params_to_arrays(params: PamParams) -> dict[str, np.ndarray]:
    """Flat name -> array view of every gradient-bearing parameter."""
    out = {name: getattr(params.gate, name) for name in _GATE_ARRAYS}
    out["score_b"] = np.asarray(params.gate.score_b, dtype=np.float64)
    for i, block in enumerate(params.residual):
        for name in ("w1", "b1", "w2", "b2"):
            out[f"residual.{i}.{name}"] = getattr(block, name)
    return out


def copy_params(params: PamParams) -> PamParams:
    gate = replace(
        params.gate,
        **{name: getattr(params.gate, name).copy() for name in _GATE_ARRAYS},
    )
    residual = [
        ResidualBlock(b.w1.copy(), b.b1.copy(), b.w2.copy(), b.b2.copy())
        for b in params.residual
    ]
    return PamParams(gate=gate, residual=residual)


def save_params(params: PamParams, out_dir: str | os.PathLike) -> None:
    """One ACTF file per array plus a JSON shape index."""
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    index: dict = {"scalars": {"tau": params.gate.tau,
                               "score_b": float(params.gate.score_b)},
                   "arrays": {}, "residual_blocks": len(params.residual)}
    for name, arr in params_to_arrays(params).items():
        if name == "score_b":
            continue
        fname = name.replace(".", "_") + ".actf"
        write_array(np.asarray(arr, dtype=np.float64), os.path.join(out_dir, fname))
        index["arrays"][name] = {"file": fname, "dims": list(np.asarray(arr).shape)}
    with open(os.path.join(out_dir, "index.json"), "w", encoding="utf-8") as f:
        json.dump(index, f, indent=2, sort_keys=True)


def load_params(in_dir: str | os.PathLike) -> PamParams:
    in_dir = os.fspath(in_dir)
    with open(os.path.join(in_dir, "index.json"), "r", encoding="utf-8") as f:
        index = json.load(f)
    arrays = {}
    for name, meta in index["arrays"].items():
        arr = read_array(os.path.join(in_dir, meta["file"])).astype(np.float64)
        if list(arr.shape) != meta["dims"]:
            raise ValidationError(
                f"{name}: stored dims {list(arr.shape)} != index dims {meta['dims']}"
            )
        arrays[name] = arr
    gate = GateParams(
        **{name: arrays[name] for name in _GATE_ARRAYS},
        score_b=float(index["scalars"]["score_b"]),
        tau=float(index["scalars"]["tau"]),
    )
    residual = []
    for i in range(index.get("residual_blocks", 0)):
        residual.append(ResidualBlock(
            w1=arrays[f"residual.{i}.w1"],
            b1=arrays[f"residual.{i}.b1"],
            w2=arrays[f"residual.{i}.w2"],
            b2=arrays[f"residual.{i}.b2"],
        ))
    return PamParams(gate=gate, residual=residual)
