"""Central finite-difference verification of the manual backward pass.

The objective is L = sum(soft_output * G) for a fixed random cobasis G,
where soft_output is the surrogate forward (selection weights replaced
by the softmax). pam_backward must match central differences of L on
every parameter group, the condition grids, and the context inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..errors import MetricError, ValidationError
from .module import (
    ConditionGrid,
    make_context,
    make_context_backward,
    pam_backward,
    pam_forward,
    pam_forward_soft,
)
from .params import PamParams, copy_params, params_to_arrays

# Relative error floor: keeps rounding noise on near-zero derivatives
# from dominating the ratio; a wrong gradient still fails by orders of
# magnitude (see the negative-control test).
REL_FLOOR = 1e-6


@dataclass
class CheckResult:
    max_rel_err: float
    per_group: dict[str, float]
    eps: float

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_err <= tol


def _rel_err(fd: np.ndarray, an: np.ndarray) -> float:
    fd = np.atleast_1d(np.asarray(fd, dtype=np.float64))
    an = np.atleast_1d(np.asarray(an, dtype=np.float64))
    denom = np.maximum(np.maximum(np.abs(fd), np.abs(an)), REL_FLOOR)
    return float(np.max(np.abs(fd - an) / denom))


def finite_diff_check(
    params: PamParams,
    grids: ConditionGrid,
    temb: np.ndarray,
    cpool: np.ndarray,
    eps: float = 1e-4,
    seed: int = 0,
    corrupt_group: str | None = None,
) -> CheckResult:
    """Max relative error per parameter group, FD vs manual backward.

    corrupt_group is a test hook: the named analytic gradient entry is
    perturbed before comparison so the check must fail.
    """
    if eps <= 0:
        raise ValidationError(f"eps must be > 0, got {eps}")
    temb = np.asarray(temb, dtype=np.float64)
    cpool = np.asarray(cpool, dtype=np.float64)

    q = make_context(temb, cpool, params.gate)
    _, cache = pam_forward(grids, q, params)
    rng = np.random.default_rng(seed)
    cobasis = rng.standard_normal(cache.soft_output.shape)
    base_loss = float(np.sum(cache.soft_output * cobasis))
    if not np.isfinite(base_loss):
        raise MetricError("non-finite surrogate loss")

    analytic = pam_backward(cache, cobasis, params)
    analytic.update(make_context_backward(analytic["q"], temb, cpool, params.gate))

    if corrupt_group is not None:
        arr = np.atleast_1d(analytic[corrupt_group])
        arr.flat[0] += 1.0 + abs(arr.flat[0])

    stacked = grids.stacked().astype(np.float64)

    def loss_at(params2: PamParams, stacked2: np.ndarray, temb2: np.ndarray,
                cpool2: np.ndarray) -> float:
        grids2 = ConditionGrid(stacked2[0], stacked2[1], stacked2[2])
        q2 = make_context(temb2, cpool2, params2.gate)
        out = pam_forward_soft(grids2, q2, params2)
        return float(np.sum(out * cobasis))

    def central_diff(write_view: np.ndarray, read_args) -> np.ndarray:
        fd = np.zeros(write_view.size)
        flat = write_view.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lo_hi = loss_at(*read_args)
            flat[i] = orig - eps
            lo_lo = loss_at(*read_args)
            flat[i] = orig
            fd[i] = (lo_hi - lo_lo) / (2.0 * eps)
        return fd.reshape(write_view.shape)

    per_group: dict[str, float] = {}

    # Parameter groups (gate, score head, psi projections, residual).
    work = copy_params(params)
    work_arrays = params_to_arrays(work)
    for name, view in work_arrays.items():
        if name == "score_b":
            # Scalar lives on the dataclass, not in an array view.
            fd_plus = replace(work.gate, score_b=params.gate.score_b + eps)
            fd_minus = replace(work.gate, score_b=params.gate.score_b - eps)
            hi = loss_at(PamParams(fd_plus, work.residual), stacked, temb, cpool)
            lo = loss_at(PamParams(fd_minus, work.residual), stacked, temb, cpool)
            fd = np.asarray((hi - lo) / (2.0 * eps))
        else:
            fd = central_diff(view, (work, stacked, temb, cpool))
        per_group[name] = _rel_err(fd, analytic[name])

    # Stem outputs (the condition grids).
    fd = central_diff(stacked, (work, stacked, temb, cpool))
    per_group["grids"] = _rel_err(fd, analytic["grids"])

    # Context inputs, which exercise the q gradient through psi chains.
    temb_work = temb.copy()
    fd = central_diff(temb_work, (work, stacked, temb_work, cpool))
    per_group["temb"] = _rel_err(fd, analytic["temb"])
    cpool_work = cpool.copy()
    fd = central_diff(cpool_work, (work, stacked, temb, cpool_work))
    per_group["cpool"] = _rel_err(fd, analytic["cpool"])

    return CheckResult(
        max_rel_err=max(per_group.values()),
        per_group=per_group,
        eps=eps,
    )
