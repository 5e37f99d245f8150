"""Sequential, deterministic execution of asynchronous iterations.

Each iteration ``j`` assembles an exchanged vector ``v`` from the labelled
past iterates (possibly mixed with partial updates, depending on the
policy), evaluates the operator on ``v`` and overwrites only the blocks in
``S_j``.  Everything is float64 with a fixed evaluation order, so identical
inputs give bit-identical traces.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, NumericError
from .operators import GradientTypeOperator
from .schedule import Schedule, validate


@dataclass(frozen=True)
class FlexiblePolicy:
    """How the exchanged values are formed.

    ``exact``
        the labelled values themselves.
    ``interpolate``
        ``theta * x(l(j)) + (1 - theta) * G(x(l(j)))``, a partial update
        part way between the labelled value and a completed one.
    ``inner_snapshot``
        the state after ``steps`` base steps of the operator's inner loop.
    """

    kind: str = "exact"
    theta: float = 1.0
    steps: int = 1

    def __post_init__(self):
        if self.kind not in ("exact", "interpolate", "inner_snapshot"):
            raise InputError(f"unknown policy kind {self.kind!r}")
        if not 0.0 <= self.theta <= 1.0:
            raise InputError(f"theta must lie in [0, 1], got {self.theta}")
        if self.steps < 1:
            raise InputError(f"steps must be positive, got {self.steps}")

    @classmethod
    def exact(cls):
        return cls("exact")

    @classmethod
    def interpolate(cls, theta):
        return cls("interpolate", theta=float(theta))

    @classmethod
    def inner_snapshot(cls, steps):
        return cls("inner_snapshot", steps=int(steps))

    @property
    def flexible(self) -> bool:
        return self.kind != "exact"

    def to_dict(self) -> dict:
        if self.kind == "interpolate":
            return {"kind": self.kind, "theta": self.theta}
        if self.kind == "inner_snapshot":
            return {"kind": self.kind, "steps": self.steps}
        return {"kind": self.kind}


@dataclass
class Trace:
    """Record of one run.

    ``history[j]`` is ``x(j)`` and ``exchanged[j-1]`` the vector ``v`` fed to
    the operator at iteration ``j``.  ``updates[j-1]`` holds the new values
    of the blocks in ``S_j`` concatenated in block order.
    """

    operator: GradientTypeOperator
    schedule: Schedule
    policy: FlexiblePolicy
    x0: np.ndarray
    exchanged: np.ndarray
    updates: list
    history: np.ndarray = field(repr=False)

    @property
    def problem(self):
        return self.operator.problem

    @property
    def horizon(self) -> int:
        return self.schedule.horizon

    @property
    def final_iterate(self) -> np.ndarray:
        return self.history[-1]

    def labelled_vector(self, j: int) -> np.ndarray:
        """``x(l(j))``: block ``i`` taken from iterate ``l_i(j)``."""
        return _assemble(self.history, self.problem.blocks, self.schedule.label_tuple(j))


def _assemble(history, blocks, labels):
    w = np.empty(history.shape[1])
    for idx, lab in zip(blocks, labels):
        w[idx] = history[lab, idx]
    return w


def run(op: GradientTypeOperator, x0, s: Schedule, policy: FlexiblePolicy | None = None,
        check_schedule: bool = True) -> Trace:
    policy = policy or FlexiblePolicy.exact()
    p = op.problem
    x0 = np.array(x0, dtype=np.float64)
    if x0.shape != (p.dim,):
        raise InputError(f"x0 has shape {x0.shape}, expected ({p.dim},)")
    if s.n_blocks != p.n_blocks:
        raise InputError(f"schedule has {s.n_blocks} blocks, problem has {p.n_blocks}")
    if policy.kind == "inner_snapshot" and policy.steps > op.inner_steps:
        raise InputError(f"inner_snapshot steps {policy.steps} exceed operator inner_steps {op.inner_steps}")
    if check_schedule:
        report = validate(s)
        if not report.overall:
            raise InputError(f"schedule fails validation: {report.failures()}")

    J = s.horizon
    blocks = p.blocks
    history = np.empty((J + 1, p.dim))
    history[0] = x0
    exchanged = np.empty((J, p.dim))
    updates = []
    theta = policy.theta
    x = x0.copy()
    for j in range(1, J + 1):
        S, labels = s.events[j - 1]
        w = _assemble(history, blocks, labels)
        try:
            if policy.kind == "exact" or (policy.kind == "interpolate" and theta == 1.0):
                v = w
            elif policy.kind == "interpolate":
                gw = op.compose(w, op.inner_steps)
                v = gw if theta == 0.0 else theta * w + (1.0 - theta) * gw
            else:
                v = op.compose(w, policy.steps)
            gv = op.compose(v, op.inner_steps)
        except NumericError:
            raise NumericError(f"non-finite iterate at j={j}", iteration=j) from None
        exchanged[j - 1] = v
        new = []
        for i in S:
            x[blocks[i]] = gv[blocks[i]]
            new.append(gv[blocks[i]])
        updates.append(np.concatenate(new))
        history[j] = x
    return Trace(op, s, policy, x0, exchanged, updates, history)


def iterate_at(t: Trace, j: int) -> np.ndarray:
    """Rebuild ``x(j)`` from ``x0`` and the recorded block updates."""
    if not 0 <= j <= t.horizon:
        raise InputError(f"j={j} outside [0, {t.horizon}]")
    blocks = t.problem.blocks
    x = t.x0.copy()
    for r in range(1, j + 1):
        S = t.schedule.steering(r)
        vals = t.updates[r - 1]
        pos = 0
        for i in S:
            k = len(blocks[i])
            x[blocks[i]] = vals[pos:pos + k]
            pos += k
    return x


def trace_to_csv(t: Trace, path, residuals=None) -> None:
    """One row per iteration: ``j``, per-block update flags, labels, residual.

    ``residuals`` (optional, length ``J``) fills the last column; it is left
    empty otherwise.  When the policy is flexible, the exchanged vectors go to
    a sidecar ``<path>.exchanged.json``.
    """
    n = t.schedule.n_blocks
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["j"] + [f"u_{i}" for i in range(n)] + [f"l_{i}" for i in range(n)] + ["residual"])
        for j in range(1, t.horizon + 1):
            S, labels = t.schedule.events[j - 1]
            flags = [1 if i in S else 0 for i in range(n)]
            res = "" if residuals is None else repr(float(residuals[j - 1]))
            w.writerow([j, *flags, *labels, res])
    if t.policy.flexible:
        with open(f"{path}.exchanged.json", "w", encoding="utf-8") as fh:
            json.dump({"policy": t.policy.to_dict(), "exchanged": t.exchanged.tolist()}, fh)
