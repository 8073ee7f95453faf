"""Counting conservation laws through the generated Lie algebra.

Starting from W_0 = span{grad phi_i}, the spaces
W_{k+1} = W_k + [W_0, W_k] are built symbolically. After every step the
trace dimension dim W_k(theta) is evaluated exactly at each sample point.
Once a step leaves every point's dimension unchanged, the trace of the full
Lie algebra has been reached and the number of independent conservation
laws is D minus that dimension.

Only the trace at the sample points matters for the final step, so the new
space is reduced symbolically only when another iteration is needed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

from .exactalg import rank_of_rows
from .poly import DEFAULT_DEGREE_CAP, DegreeCapError
from .vfield import (
    FieldSpace,
    PolyVectorField,
    bracket_closure_step,
    lie_bracket,
    reduce,
    trace_dim,
    trace_matrix,
)

log = logging.getLogger(__name__)

STAGNATED = "stagnated"
MAX_ITER = "max_iter"
DEGREE_CAP = "degree_cap"
DIM_DISAGREEMENT = "dim_disagreement"

__all__ = [
    "ClosureReport",
    "build_W0",
    "closure",
    "check_frobenius",
]


@dataclass
class ClosureReport:
    D: int
    d: int
    sample_points: list = field(default_factory=list)
    dims_per_iteration: list[list[int]] = field(default_factory=list)
    basis_sizes: list[int] = field(default_factory=list)
    final_dim: int | None = None
    num_laws: int | None = None
    frobenius_at_step0: bool | None = None
    stop_reason: str = MAX_ITER
    iterations_used: int = 0
    stagnation_step: int | None = None
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "D": self.D,
            "d": self.d,
            "sample_points": [list(p) for p in self.sample_points],
            "dims_per_iteration": self.dims_per_iteration,
            "basis_sizes": self.basis_sizes,
            "final_dim": self.final_dim,
            "num_laws": self.num_laws,
            "frobenius_at_step0": self.frobenius_at_step0,
            "stop_reason": self.stop_reason,
            "stagnation_step": self.stagnation_step,
            "iterations_used": self.iterations_used,
            "message": self.message,
        }


def build_W0(phi) -> FieldSpace:
    """Reduced basis of span{grad phi_1, ..., grad phi_d}."""
    fields = [PolyVectorField(p.gradient()) for p in phi.phi]
    return reduce(fields, phi.D)


def _dims(fields: Sequence[PolyVectorField], points) -> list[int]:
    return [trace_dim(fields, list(p)) for p in points]


def closure(
    phi,
    points: Sequence[Sequence],
    max_iter: int = 10,
    degree_cap: int | None = DEFAULT_DEGREE_CAP,
) -> ClosureReport:
    """Iterate the bracket recursion until the trace dimension stagnates.

    ``dims_per_iteration[k]`` holds dim W_k(theta) at each point. The loop
    stops at the first ``i`` with dim W_{i+1} = dim W_i at every point; if
    the points then disagree, no law count is reported.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if not points:
        raise ValueError("at least one sample point is required")
    report = ClosureReport(D=phi.D, d=phi.d, sample_points=[tuple(p) for p in points])
    w0 = build_W0(phi)
    wk = w0
    new = list(w0.basis)
    dims = _dims(wk.basis, points)
    report.dims_per_iteration.append(dims)
    report.basis_sizes.append(len(wk))

    for step in range(max_iter):
        try:
            spanning = bracket_closure_step(w0, wk, new=new, degree_cap=degree_cap,
                                            reduce_result=False)
        except DegreeCapError as exc:
            report.stop_reason = DEGREE_CAP
            report.message = str(exc)
            report.iterations_used = step
            return report
        next_dims = _dims(spanning, points)
        report.dims_per_iteration.append(next_dims)
        report.iterations_used = step + 1
        if step == 0:
            report.frobenius_at_step0 = next_dims == dims
        log.debug("step %d: dims %s -> %s (%d spanning fields)",
                  step, dims, next_dims, len(spanning))
        if next_dims == dims:
            report.stagnation_step = step
            if len(set(dims)) == 1:
                report.stop_reason = STAGNATED
                report.final_dim = dims[0]
                report.num_laws = phi.D - dims[0]
            else:
                report.stop_reason = DIM_DISAGREEMENT
                report.message = f"sample points disagree at stagnation: {dims}"
            return report
        if step + 1 == max_iter:
            break
        old = set(wk.basis)
        wk = reduce(spanning, phi.D)
        report.basis_sizes.append(len(wk))
        # fields of the new canonical basis that were not already present
        new = [f for f in wk.basis if f not in old]
        dims = next_dims

    report.stop_reason = MAX_ITER
    report.message = f"no stagnation within {max_iter} iterations"
    return report


def check_frobenius(space: FieldSpace, points: Sequence[Sequence],
                    degree_cap: int | None = DEFAULT_DEGREE_CAP) -> bool:
    """True iff every bracket of basis fields stays in the pointwise span."""
    basis = list(space.basis)
    mats = [trace_matrix(basis, list(p)) for p in points]
    ranks = [rank_of_rows(m) for m in mats]
    for i in range(len(basis)):
        for j in range(i + 1, len(basis)):
            br = lie_bracket(basis[i], basis[j], degree_cap)
            if br.is_zero():
                continue
            for p, m, r in zip(points, mats, ranks):
                if rank_of_rows(m + [br.eval(list(p))]) != r:
                    return False
    return True
