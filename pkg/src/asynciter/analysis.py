"""Structural indices and verifiers over executed traces.

All functions here are pure: they read a :class:`~asynciter.engine.Trace`
(or just its schedule) and return fresh report objects.
"""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .engine import Trace
from .errors import InputError, InsufficientDataError
from .schedule import Schedule

NORM_SLACK = 1e-12
RATE_SLACK = 1e-9


def _schedule(t) -> Schedule:
    return t.schedule if isinstance(t, Trace) else t


@dataclass(frozen=True)
class NormSpec:
    """Weighted block maximum norm ``max_i |x_i|_2 / u_i``."""

    weights: tuple | None = None

    def __post_init__(self):
        if self.weights is not None:
            w = tuple(float(u) for u in self.weights)
            if any(not u > 0 for u in w):
                raise InputError("norm weights must be positive")
            object.__setattr__(self, "weights", w)

    def block_norms(self, x: np.ndarray, blocks) -> np.ndarray:
        norms = np.array([np.linalg.norm(x[idx]) for idx in blocks])
        if self.weights is not None:
            if len(self.weights) != len(blocks):
                raise InputError(f"{len(self.weights)} weights for {len(blocks)} blocks")
            norms = norms / np.asarray(self.weights)
        return norms

    def norm(self, x: np.ndarray, blocks) -> float:
        return float(self.block_norms(x, blocks).max())


@dataclass(frozen=True)
class MacroIterationSequence:
    indices: tuple
    complete: bool

    @property
    def count(self) -> int:
        """Number of closed macro-iterations (boundaries after ``j_0``)."""
        return len(self.indices) - 1

    def index_at(self, j: int) -> int:
        """Largest ``k`` with ``j_k <= j``."""
        return bisect.bisect_right(self.indices, j) - 1


@dataclass(frozen=True)
class EpochSequence:
    indices: tuple
    owner_map: tuple

    @property
    def count(self) -> int:
        return len(self.indices) - 1


@dataclass
class Violation:
    j: int
    lhs: float
    rhs: float
    block: int | None = None


@dataclass
class VerificationReport:
    name: str
    checked: int = 0
    violations: list = field(default_factory=list)
    worst_slack: float = -math.inf
    diagnostics: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self, max_violations: int = 20) -> dict:
        return {
            "name": self.name,
            "pass": self.passed,
            "checked": self.checked,
            "violation_count": len(self.violations),
            "violations": [vars(v) for v in self.violations[:max_violations]],
            "worst_slack": None if math.isinf(self.worst_slack) else self.worst_slack,
        }


def macro_iterations(t) -> MacroIterationSequence:
    """Macro-iteration boundaries ``j_0 = 0 < j_1 < ...`` in a single pass.

    ``j_{k+1}`` is the first ``j`` at which the updates ``r <= j`` whose
    smallest label is at least ``j_k`` have touched every block.
    """
    s = _schedule(t)
    covered = np.zeros(s.n_blocks, dtype=bool)
    indices = [0]
    jk = 0
    for r, (S, labels) in enumerate(s.events, start=1):
        if min(labels) >= jk:
            covered[list(S)] = True
            if covered.all():
                indices.append(r)
                jk = r
                covered[:] = False
    return MacroIterationSequence(tuple(indices), indices[-1] == s.horizon)


def epochs(t, owner_map=None) -> EpochSequence:
    """Epoch boundaries: each machine updates at least twice in ``(k_m, k_{m+1}]``.

    ``owner_map[i]`` names the machine owning block ``i`` (default: one
    machine per block).
    """
    s = _schedule(t)
    owner_map = tuple(range(s.n_blocks)) if owner_map is None else tuple(owner_map)
    if len(owner_map) != s.n_blocks:
        raise InputError(f"owner_map covers {len(owner_map)} blocks, schedule has {s.n_blocks}")
    machines = sorted(set(owner_map))
    slot = {w: k for k, w in enumerate(machines)}
    counts = np.zeros(len(machines), dtype=np.int64)
    indices = [0]
    for r, (S, _) in enumerate(s.events, start=1):
        for w in {slot[owner_map[i]] for i in S}:
            counts[w] += 1
        if (counts >= 2).all():
            indices.append(r)
            counts[:] = 0
    return EpochSequence(tuple(indices), owner_map)


def check_freshness(t, ms: MacroIterationSequence) -> VerificationReport:
    """Every update at ``j >= j_{k+1}`` reads labels ``>= j_k``."""
    s = _schedule(t)
    rep = VerificationReport("freshness")
    bounds = ms.indices
    for j in range(1, s.horizon + 1):
        K = ms.index_at(j)
        if K < 1:
            continue
        jk = bounds[K - 1]
        for i, lab in enumerate(s.label_tuple(j)):
            rep.checked += 1
            rep.worst_slack = max(rep.worst_slack, jk - lab)
            if lab < jk:
                rep.violations.append(Violation(j, jk, lab, i))
    return rep


def check_epoch_labels(t, es: EpochSequence) -> VerificationReport:
    """Updates inside ``(k_{m-1}, k_m]`` read labels ``>= k_{m-1}``.

    This is the epoch analogue of :func:`check_freshness`; it fails on
    traces with stale out-of-order labels.
    """
    s = _schedule(t)
    rep = VerificationReport("epoch_labels")
    k = es.indices
    for m in range(2, len(k)):
        lo = k[m - 1]
        for j in range(lo + 1, k[m] + 1):
            lj = s.min_label(j)
            rep.checked += 1
            rep.worst_slack = max(rep.worst_slack, lo - lj)
            if lj < lo:
                rep.violations.append(Violation(j, lo, lj))
    return rep


def verify_norm_constraint(t: Trace, z_star, ns: NormSpec | None = None,
                           slack: float = NORM_SLACK) -> VerificationReport:
    """Each exchanged block stays within ``|x(l(j)) - x*|_u`` of ``x*``."""
    ns = ns or NormSpec()
    if t.exchanged is None or t.exchanged.shape != (t.horizon, t.problem.dim):
        raise InputError("trace carries no exchanged values")
    z = np.asarray(z_star, dtype=np.float64)
    blocks = t.problem.blocks
    rep = VerificationReport("norm_constraint")
    for j in range(1, t.horizon + 1):
        rhs = ns.norm(t.labelled_vector(j) - z, blocks)
        lhs = ns.block_norms(t.exchanged[j - 1] - z, blocks)
        rep.checked += len(blocks)
        rep.worst_slack = max(rep.worst_slack, float((lhs - rhs).max()))
        for i in np.flatnonzero(lhs - rhs > slack):
            rep.violations.append(Violation(j, float(lhs[i]), rhs, int(i)))
    return rep


def residual_series(t: Trace, z_star, ns: NormSpec | None = None) -> list:
    """``(j, |x(j) - z*|_u, |x(j) - z*|_2)`` for ``j = 0..J``."""
    ns = ns or NormSpec()
    z = np.asarray(z_star, dtype=np.float64)
    blocks = t.problem.blocks
    out = []
    for j, x in enumerate(t.history):
        d = x - z
        out.append((j, ns.norm(d, blocks), float(np.linalg.norm(d))))
    return out


def verify_rate_bound(t: Trace, z_star, ms: MacroIterationSequence, rho: float,
                      ns: NormSpec | None = None, slack: float = RATE_SLACK) -> VerificationReport:
    """Check ``max_i |x_i(j) - x*_i|^2 <= (1 - rho)^k max_i |x_i(0) - x*_i|^2``
    for every ``j`` with ``j_k <= j``, using the largest such ``k``.

    ``diagnostics["contraction"]`` lists, per macro-iteration, the ratio of
    the worst squared residual over ``[j_k, j_{k+1})`` to that of the
    previous macro-iteration.
    """
    if not 0 < rho <= 1:
        raise InputError(f"rho must lie in (0, 1], got {rho}")
    if not ms.complete and ms.count < 2:
        raise InsufficientDataError(f"only {ms.count} macro-iterations in the trace")
    ns = ns or NormSpec()
    res = residual_series(t, z_star, ns)
    r0 = res[0][1] ** 2
    factor = 1.0 - rho
    rep = VerificationReport("rate_bound")
    worst = np.zeros(ms.count + 1)
    for j, umax, _ in res:
        k = ms.index_at(j)
        lhs = umax ** 2
        rhs = factor ** k * r0
        rep.checked += 1
        rep.worst_slack = max(rep.worst_slack, lhs - rhs)
        worst[k] = max(worst[k], lhs)
        if lhs > rhs + slack:
            rep.violations.append(Violation(j, lhs, rhs))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = worst[1:] / worst[:-1]
    rep.diagnostics = {
        "macro_iterations": ms.count,
        "bound_factor": factor,
        "contraction": [None if not np.isfinite(r) else float(r) for r in ratios],
    }
    return rep


def stopping_index(bound_r0: float, rho: float, tol: float) -> int:
    """Smallest ``k`` with ``(1 - rho)^k * bound_r0 <= tol**2``."""
    if not 0 < rho <= 1:
        raise InputError(f"rho must lie in (0, 1], got {rho}")
    if not (bound_r0 > 0 and tol > 0):
        raise InputError("bound_r0 and tol must be positive")
    target = tol * tol
    if bound_r0 <= target:
        return 0
    factor = 1.0 - rho
    if factor == 0.0:
        return 1
    k = max(1, math.ceil(math.log(target / bound_r0) / math.log(factor)))
    # repair rounding in the logarithms
    while k > 1 and factor ** (k - 1) * bound_r0 <= target:
        k -= 1
    while factor ** k * bound_r0 > target:
        k += 1
    return k


def write_residual_csv(path, t: Trace, z_star, ms: MacroIterationSequence, rho: float,
                       ns: NormSpec | None = None) -> None:
    """Columns ``j, k, residual_umax, residual_l2, bound_rhs, macro_boundary_flag``.

    ``bound_rhs`` is ``sqrt((1 - rho)^k) * residual_umax(0)``, the rate bound
    in the same (unsquared) units as ``residual_umax``.
    """
    res = residual_series(t, z_star, ns)
    r0 = res[0][1]
    boundaries = set(ms.indices)
    factor = 1.0 - rho
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["j", "k", "residual_umax", "residual_l2", "bound_rhs", "macro_boundary_flag"])
        for j, umax, l2 in res:
            k = ms.index_at(j)
            bound = math.sqrt(factor ** k) * r0
            w.writerow([j, k, repr(umax), repr(l2), repr(bound), int(j in boundaries)])
