"""Gated condition-selection numerics with a verified manual backward.

Condition-specific stems lift edge/depth/segmentation maps to feature
grids; a context-modulated attention gate scores the three conditions
per grid position; a straight-through selector picks one condition hard
in the forward pass while gradients follow the softmax surrogate.
"""

from .params import (
    GateParams,
    PamParams,
    ResidualBlock,
    StemParams,
    init_gate_params,
    init_pam_params,
    init_residual_blocks,
    init_stem_params,
    load_params,
    save_params,
)
from .stems import pack_conditions, stem_forward, unpack_conditions
from .gate import SelectionWeights, gate_forward, pam_mix, ste_select
from .module import (
    ConditionGrid,
    make_context,
    make_context_backward,
    pam_backward,
    pam_forward,
)
from .fdcheck import finite_diff_check

__all__ = [
    "ConditionGrid",
    "GateParams",
    "PamParams",
    "ResidualBlock",
    "SelectionWeights",
    "StemParams",
    "finite_diff_check",
    "gate_forward",
    "init_gate_params",
    "init_pam_params",
    "init_residual_blocks",
    "init_stem_params",
    "load_params",
    "make_context",
    "make_context_backward",
    "pack_conditions",
    "pam_backward",
    "pam_forward",
    "pam_mix",
    "save_params",
    "stem_forward",
    "ste_select",
    "unpack_conditions",
]
