"""Composite problems ``min f(x) + g(x)`` with smooth strongly convex ``f``.

The smooth part is either a quadratic ``1/2 x'Ax - b'x`` or a ridge
regularised least-squares loss over a dataset; the nonsmooth part is zero,
an l1 penalty, or the indicator of a box.  Every problem carries a block
partition of its coordinates and a fixed step size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DivergenceError, InputError

EIG_TOL = 1e-8


def _as_vector(x, n: int | None = None, name: str = "x") -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise InputError(f"{name} must be a vector, got shape {v.shape}")
    if n is not None and v.shape[0] != n:
        raise InputError(f"{name} has dimension {v.shape[0]}, expected {n}")
    return v


@dataclass(frozen=True)
class DatasetInstance:
    """Training samples ``(y_h, z_h)``; rows of ``features`` are the ``y_h``."""

    features: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        Y = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        z = _as_vector(self.targets, name="targets")
        if Y.shape[0] < 1:
            raise InputError("dataset needs at least one sample")
        if Y.shape[0] != z.shape[0]:
            raise InputError("features and targets disagree on sample count")
        object.__setattr__(self, "features", Y)
        object.__setattr__(self, "targets", z)

    @property
    def m(self) -> int:
        return self.features.shape[0]

    @property
    def n(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class SmoothPart:
    """L-smooth, mu-strongly convex part of the objective.

    Use :meth:`quadratic` or :meth:`ridge_least_squares` rather than the raw
    constructor; they compute or check the curvature constants.
    """

    kind: str
    mu: float
    lipschitz: float
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    dataset: DatasetInstance | None = None
    ridge: float = 0.0

    def __post_init__(self):
        if self.kind not in ("quadratic", "ridge_least_squares"):
            raise InputError(f"unknown smooth kind {self.kind!r}")
        if not (self.mu > 0 and self.mu <= self.lipschitz):
            raise InputError(f"need 0 < mu <= lipschitz, got mu={self.mu}, L={self.lipschitz}")

    @classmethod
    def quadratic(cls, A, b=None, mu=None, lipschitz=None) -> "SmoothPart":
        A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        n = A.shape[0]
        if A.shape != (n, n):
            raise InputError(f"A must be square, got shape {A.shape}")
        if not np.allclose(A, A.T, rtol=0.0, atol=EIG_TOL):
            raise InputError("A must be symmetric")
        b = np.zeros(n) if b is None else _as_vector(b, n, "b")
        eig = np.linalg.eigvalsh(A)
        mu = float(eig[0]) if mu is None else float(mu)
        lipschitz = float(eig[-1]) if lipschitz is None else float(lipschitz)
        if eig[0] < mu - EIG_TOL or eig[-1] > lipschitz + EIG_TOL:
            raise InputError(
                f"eigenvalues of A span [{eig[0]:.6g}, {eig[-1]:.6g}], "
                f"outside declared [{mu:.6g}, {lipschitz:.6g}]"
            )
        return cls("quadratic", mu, lipschitz, A=A, b=b)

    @classmethod
    def ridge_least_squares(cls, dataset: DatasetInstance, ridge: float) -> "SmoothPart":
        if ridge < 0:
            raise InputError("ridge must be nonnegative")
        Y = dataset.features
        eig = np.linalg.eigvalsh(Y.T @ Y / dataset.m)
        mu = float(ridge + max(eig[0], 0.0))
        lipschitz = float(ridge + eig[-1])
        return cls("ridge_least_squares", mu, lipschitz, dataset=dataset, ridge=float(ridge))

    @property
    def dim(self) -> int:
        return self.A.shape[0] if self.kind == "quadratic" else self.dataset.n

    def value(self, x: np.ndarray) -> float:
        if self.kind == "quadratic":
            return float(0.5 * x @ (self.A @ x) - self.b @ x)
        r = self.dataset.features @ x - self.dataset.targets
        return float(r @ r / (2 * self.dataset.m) + 0.5 * self.ridge * (x @ x))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "quadratic":
            return self.A @ x - self.b
        Y = self.dataset.features
        return Y.T @ (Y @ x - self.dataset.targets) / self.dataset.m + self.ridge * x

    def hessian(self) -> np.ndarray:
        if self.kind == "quadratic":
            return self.A
        Y = self.dataset.features
        return Y.T @ Y / self.dataset.m + self.ridge * np.eye(self.dim)


@dataclass(frozen=True)
class NonsmoothPart:
    """Separable convex ``g``: ``zero``, ``l1`` (``lam * |x|_1``) or ``box`` indicator."""

    kind: str = "zero"
    lam: float = 0.0
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == "zero":
            return
        if self.kind == "l1":
            if not self.lam >= 0:
                raise InputError("l1 weight must be nonnegative")
            return
        if self.kind == "box":
            lo = _as_vector(self.lo, name="lo")
            hi = _as_vector(self.hi, lo.shape[0], "hi")
            if np.any(lo > hi):
                raise InputError("box requires lo <= hi componentwise")
            object.__setattr__(self, "lo", lo)
            object.__setattr__(self, "hi", hi)
            return
        raise InputError(f"unknown nonsmooth kind {self.kind!r}")

    @classmethod
    def zero(cls) -> "NonsmoothPart":
        return cls("zero")

    @classmethod
    def l1(cls, lam: float) -> "NonsmoothPart":
        return cls("l1", lam=float(lam))

    @classmethod
    def box(cls, lo, hi) -> "NonsmoothPart":
        return cls("box", lo=lo, hi=hi)

    def value(self, x: np.ndarray) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "l1":
            return float(self.lam * np.abs(x).sum())
        if np.any(x < self.lo) or np.any(x > self.hi):
            return math.inf
        return 0.0

    def prox(self, x: np.ndarray, gamma: float) -> np.ndarray:
        if self.kind == "zero":
            return x.copy()
        if self.kind == "l1":
            t = gamma * self.lam
            return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)
        return np.clip(x, self.lo, self.hi)


def _split_blocks(n: int, n_blocks: int) -> tuple[np.ndarray, ...]:
    if not 1 <= n_blocks <= n:
        raise InputError(f"n_blocks must lie in [1, {n}], got {n_blocks}")
    return tuple(np.array_split(np.arange(n), n_blocks))


@dataclass(frozen=True)
class ProblemInstance:
    """``min f(x) + g(x)`` with a block partition and a fixed step size.

    ``blocks`` may be an int (even split into that many contiguous blocks)
    or a sequence of index lists.  ``gamma`` defaults to ``2/(mu+L)``.
    """

    f: SmoothPart
    g: NonsmoothPart = field(default_factory=NonsmoothPart.zero)
    blocks: Sequence | int | None = None
    gamma: float | None = None

    def __post_init__(self):
        n = self.f.dim
        if self.g.kind == "box" and self.g.lo.shape[0] != n:
            raise InputError("box bounds do not match problem dimension")
        blocks = self.blocks
        if blocks is None:
            blocks = 1
        if isinstance(blocks, (int, np.integer)):
            blocks = _split_blocks(n, int(blocks))
        else:
            blocks = tuple(np.asarray(b, dtype=np.intp) for b in blocks)
            covered = np.sort(np.concatenate(blocks)) if blocks else np.array([], dtype=np.intp)
            if any(len(b) == 0 for b in blocks) or not np.array_equal(covered, np.arange(n)):
                raise InputError("blocks must cover every coordinate exactly once")
        object.__setattr__(self, "blocks", blocks)

        gamma = 2.0 / (self.f.mu + self.f.lipschitz) if self.gamma is None else float(self.gamma)
        if not (gamma > 0 and gamma <= 2.0 / (self.f.mu + self.f.lipschitz) * (1 + 1e-12)):
            raise InputError(f"gamma={gamma} outside (0, 2/(mu+L)]")
        object.__setattr__(self, "gamma", gamma)

    @property
    def dim(self) -> int:
        return self.f.dim

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def mu(self) -> float:
        return self.f.mu

    @property
    def lipschitz(self) -> float:
        return self.f.lipschitz

    def with_gamma(self, gamma: float) -> "ProblemInstance":
        return ProblemInstance(self.f, self.g, self.blocks, gamma)


def gradient(p: ProblemInstance, x) -> np.ndarray:
    return p.f.gradient(_as_vector(x, p.dim))


def prox(p: ProblemInstance, x, gamma: float | None = None) -> np.ndarray:
    """``argmin_v g(v) + |v - x|^2 / (2 gamma)``, in closed form."""
    gamma = p.gamma if gamma is None else gamma
    if not gamma > 0:
        raise InputError(f"prox step must be positive, got {gamma}")
    return p.g.prox(_as_vector(x, p.dim), gamma)


def objective(p: ProblemInstance, x) -> float:
    """``f(x) + g(x)``; +inf outside the box for the box indicator."""
    x = _as_vector(x, p.dim)
    gx = p.g.value(x)
    if math.isinf(gx):
        return gx
    return p.f.value(x) + gx


def optimality_violation(p: ProblemInstance, y) -> float:
    """Largest violation of the first-order conditions of ``min f + g`` at ``y``.

    Zero means ``-grad f(y)`` lies in the subdifferential of ``g`` at ``y``.
    """
    y = _as_vector(y, p.dim, "y")
    d = p.f.gradient(y)
    g = p.g
    if g.kind == "zero":
        return float(np.max(np.abs(d)))
    if g.kind == "l1":
        at_zero = y == 0
        v = np.where(at_zero, np.maximum(np.abs(d) - g.lam, 0.0), np.abs(d + g.lam * np.sign(y)))
        return float(np.max(v))
    # box KKT: at lo the gradient may push outward (>= 0), at hi inward (<= 0)
    at_lo = y <= g.lo
    at_hi = y >= g.hi
    v = np.abs(d)
    v = np.where(at_lo & ~at_hi, np.maximum(-d, 0.0), v)
    v = np.where(at_hi & ~at_lo, np.maximum(d, 0.0), v)
    v = np.where(at_lo & at_hi, 0.0, v)
    return float(np.max(v))


def reference_fixed_point(p: ProblemInstance, tol: float = 1e-12, margin: int = 1000, z0=None):
    """High-accuracy fixed point of the prox-then-gradient map.

    Iterates ``z <- y - gamma * grad f(y)`` with ``y = prox(z)`` until the
    residual ``|G(z) - z|_2`` is at most ``tol * min(1, gamma)``; the extra
    ``gamma`` factor keeps the first-order test on ``prox(z)`` within ``tol``.

    Returns
    -------
    z_star, y_star : ndarray
        The operator fixed point and the minimiser ``prox(z_star)``.
    """
    if not tol > 0:
        raise InputError("tol must be positive")
    gamma = p.gamma
    target = tol * min(1.0, gamma)

    def step(z):
        y = p.g.prox(z, gamma)
        return y - gamma * p.f.gradient(y)

    z = np.zeros(p.dim) if z0 is None else _as_vector(z0, p.dim, "z0").copy()
    z_next = step(z)
    r0 = float(np.linalg.norm(z_next - z))
    factor = 1.0 - gamma * p.mu
    if r0 <= target:
        cap = margin
    elif factor <= 0.0:
        cap = 1 + margin
    else:
        cap = math.ceil(math.log(target / r0) / math.log(factor)) + margin
    for _ in range(cap):
        if not np.all(np.isfinite(z_next)):
            raise DivergenceError("reference solve produced non-finite values")
        if np.linalg.norm(z_next - z) <= target:
            return z, p.g.prox(z, gamma)
        z, z_next = z_next, step(z_next)
    raise DivergenceError(
        f"reference solve did not reach {target:.3g} within {cap} iterations; "
        "check mu, L and gamma"
    )


# -- JSON -----------------------------------------------------------------

def problem_to_dict(p: ProblemInstance) -> dict:
    f = p.f
    if f.kind == "quadratic":
        smooth = {"kind": "quadratic", "A": f.A.tolist(), "b": f.b.tolist(),
                  "mu": f.mu, "lipschitz": f.lipschitz}
    else:
        smooth = {"kind": "ridge_least_squares", "features": f.dataset.features.tolist(),
                  "targets": f.dataset.targets.tolist(), "ridge": f.ridge}
    g = p.g
    if g.kind == "zero":
        nonsmooth = {"kind": "zero"}
    elif g.kind == "l1":
        nonsmooth = {"kind": "l1", "lambda": g.lam}
    else:
        nonsmooth = {"kind": "box", "lo": g.lo.tolist(), "hi": g.hi.tolist()}
    return {"smooth": smooth, "nonsmooth": nonsmooth,
            "blocks": [b.tolist() for b in p.blocks], "gamma": p.gamma}


def problem_from_dict(d: dict) -> ProblemInstance:
    """Inverse of :func:`problem_to_dict`; ``gamma`` and ``blocks`` are optional."""
    try:
        s = d["smooth"]
        if s["kind"] == "quadratic":
            f = SmoothPart.quadratic(s["A"], s.get("b"), s.get("mu"), s.get("lipschitz"))
        elif s["kind"] == "ridge_least_squares":
            f = SmoothPart.ridge_least_squares(
                DatasetInstance(s["features"], s["targets"]), s.get("ridge", 0.0))
        else:
            raise InputError(f"smooth.kind: unknown kind {s['kind']!r}")
        ns = d.get("nonsmooth", {"kind": "zero"})
        if ns["kind"] == "zero":
            g = NonsmoothPart.zero()
        elif ns["kind"] == "l1":
            g = NonsmoothPart.l1(ns["lambda"])
        elif ns["kind"] == "box":
            g = NonsmoothPart.box(ns["lo"], ns["hi"])
        else:
            raise InputError(f"nonsmooth.kind: unknown kind {ns['kind']!r}")
    except KeyError as exc:
        raise InputError(f"problem: missing field {exc.args[0]!r}") from None
    return ProblemInstance(f, g, d.get("blocks"), d.get("gamma"))
