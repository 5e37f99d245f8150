"""Gradient-type fixed-point operators built on a :class:`ProblemInstance`.

The base step maps ``x`` to ``y - gamma * grad f(y)`` with ``y = prox(x)``.
An operator with ``inner_steps = m`` applies the base step ``m`` times; its
fixed point does not depend on ``m``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericError
from .problem import ProblemInstance, _as_vector


@dataclass(frozen=True)
class GradientTypeOperator:
    problem: ProblemInstance
    inner_steps: int = 1

    def __post_init__(self):
        if int(self.inner_steps) != self.inner_steps or self.inner_steps < 1:
            raise InputError(f"inner_steps must be a positive integer, got {self.inner_steps}")

    @property
    def gamma(self) -> float:
        return self.problem.gamma

    def base_step(self, x: np.ndarray) -> np.ndarray:
        p = self.problem
        y = p.g.prox(x, p.gamma)
        return y - p.gamma * p.f.gradient(y)

    def compose(self, x: np.ndarray, steps: int) -> np.ndarray:
        """Apply the base step ``steps`` times."""
        # overflow is reported below as NumericError
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(steps):
                x = self.base_step(x)
        if not np.all(np.isfinite(x)):
            raise NumericError("operator produced non-finite values; instance is mis-scaled")
        return x

    def __call__(self, x) -> np.ndarray:
        return apply(self, x)


def apply(op: GradientTypeOperator, x) -> np.ndarray:
    x = _as_vector(x, op.problem.dim)
    return op.compose(x, op.inner_steps)


def contraction_bound(op: GradientTypeOperator) -> float:
    """Euclidean Lipschitz constant ``(1 - gamma*mu)**m`` of the operator."""
    rho = op.gamma * op.problem.mu
    return max(1.0 - rho, 0.0) ** op.inner_steps


def block_max_contraction(op: GradientTypeOperator) -> float:
    """Upper bound on the operator's Lipschitz constant in the block max norm.

    The bound is ``(max_i sum_j |M_ij|_2)**m`` where ``M = I - gamma * H`` is
    the gradient step's Jacobian split into blocks.  The l1 and box proxes
    act per coordinate and never expand a block.  Asynchronous iterations
    contract per macro-iteration only when this is below one.
    """
    p = op.problem
    M = np.eye(p.dim) - p.gamma * p.f.hessian()
    worst = 0.0
    for bi in p.blocks:
        row = sum(np.linalg.norm(M[np.ix_(bi, bj)], 2) for bj in p.blocks)
        worst = max(worst, row)
    return float(worst) ** op.inner_steps
