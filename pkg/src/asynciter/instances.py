"""Ready-made problem instances used by the test suites and the CLI."""

from __future__ import annotations

import numpy as np

from .errors import InputError
from .problem import DatasetInstance, NonsmoothPart, ProblemInstance, SmoothPart


def coupled_quadratic_matrix(n, mu, lipschitz, coupling, seed):
    """Random SPD matrix with spectrum exactly spanning ``[mu, lipschitz]``.

    A shuffled diagonal ramp plus ``coupling`` times a symmetric Gaussian
    perturbation, affinely rescaled so the extreme eigenvalues land on
    ``mu`` and ``lipschitz``.  Small couplings keep the gradient step a
    contraction in the block max norm.
    """
    rng = np.random.default_rng(seed)
    if n == 1:
        return np.array([[float(mu)]])
    d = np.linspace(mu, lipschitz, n)
    rng.shuffle(d)
    S = rng.standard_normal((n, n))
    S = (S + S.T) / 2
    np.fill_diagonal(S, 0.0)
    A = np.diag(d) + coupling * S
    w = np.linalg.eigvalsh(A)
    A = mu * np.eye(n) + (lipschitz - mu) * (A - w[0] * np.eye(n)) / (w[-1] - w[0])
    return (A + A.T) / 2


def scalar_quadratic() -> ProblemInstance:
    """1-D ``f = x^2/2``, ``g = 0``, ``gamma = 1``: one step reaches the fixed point."""
    return ProblemInstance(SmoothPart.quadratic([[1.0]], [0.0], 1.0, 1.0), NonsmoothPart.zero(), 1, 1.0)


def lasso_quadratic(n=10, mu=1.0, lipschitz=10.0, lam=0.1, n_blocks=2, coupling=0.08, seed=0):
    A = coupled_quadratic_matrix(n, mu, lipschitz, coupling, seed)
    b = np.random.default_rng(seed + 1).normal(scale=0.3, size=n)
    f = SmoothPart.quadratic(A, b, mu, lipschitz)
    return ProblemInstance(f, NonsmoothPart.l1(lam), n_blocks)


def box_quadratic(n=50, mu=1.0, lipschitz=100.0, n_blocks=5, coupling=0.015, seed=0):
    A = coupled_quadratic_matrix(n, mu, lipschitz, coupling, seed)
    rng = np.random.default_rng(seed + 1)
    b = rng.normal(scale=20.0, size=n)
    lo = -rng.uniform(0.05, 0.5, size=n)
    hi = rng.uniform(0.05, 0.5, size=n)
    f = SmoothPart.quadratic(A, b, mu, lipschitz)
    return ProblemInstance(f, NonsmoothPart.box(lo, hi), n_blocks)


def elastic_net(n=10, m=200, ridge=0.5, lam=0.05, n_blocks=2, seed=0):
    """Ridge least squares with an l1 penalty on a synthetic sparse regression."""
    rng = np.random.default_rng(seed)
    Y = rng.standard_normal((m, n))
    Y += 0.05 * rng.standard_normal((m, 1))
    x_true = np.where(rng.random(n) < 0.5, rng.normal(scale=2.0, size=n), 0.0)
    z = Y @ x_true + 0.1 * rng.standard_normal(m)
    f = SmoothPart.ridge_least_squares(DatasetInstance(Y, z), ridge)
    return ProblemInstance(f, NonsmoothPart.l1(lam), n_blocks)


BUILTINS = {
    "scalar": scalar_quadratic,
    "lasso10": lasso_quadratic,
    "box50": box_quadratic,
    "elastic_net": elastic_net,
}


def builtin(name: str, **kwargs) -> ProblemInstance:
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise InputError(f"problem.builtin: unknown instance {name!r}; "
                         f"choose from {sorted(BUILTINS)}") from None
    return factory(**kwargs)
