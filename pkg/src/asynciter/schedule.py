"""Steering sets and label sequences for asynchronous iterations.

A schedule lists, for each iteration ``j = 1..J``, the set ``S_j`` of blocks
updated at ``j`` and the label tuple ``(l_0(j), ..., l_{n-1}(j))`` naming the
iteration whose value of each block the update reads.  Blocks are numbered
from 0; iterations from 1, with label 0 referring to the initial iterate.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import InputError

DELAY_CLASSES = ("synchronous", "bounded", "unbounded_admissible", "out_of_order")
KINDS = ("synchronous", "bounded", "unbounded", "baudet", "out_of_order")


@dataclass(frozen=True)
class Schedule:
    n_blocks: int
    events: tuple
    delay_class: str = "unbounded_admissible"
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        events = tuple(
            (tuple(sorted(int(i) for i in S)), tuple(int(l) for l in labels))
            for S, labels in self.events
        )
        object.__setattr__(self, "events", events)
        if self.n_blocks < 1:
            raise InputError("n_blocks must be positive")
        if self.delay_class not in DELAY_CLASSES:
            raise InputError(f"unknown delay class {self.delay_class!r}")
        for j, (S, labels) in enumerate(events, start=1):
            if len(labels) != self.n_blocks:
                raise InputError(f"event {j}: expected {self.n_blocks} labels, got {len(labels)}")
            if any(not 0 <= i < self.n_blocks for i in S):
                raise InputError(f"event {j}: steering set {S} names an unknown block")

    @property
    def horizon(self) -> int:
        return len(self.events)

    @cached_property
    def labels(self) -> np.ndarray:
        """``(J, n_blocks)`` integer array; row ``j-1`` holds the labels of iteration ``j``."""
        return np.array([ev[1] for ev in self.events], dtype=np.int64).reshape(self.horizon, self.n_blocks)

    @cached_property
    def membership(self) -> np.ndarray:
        """``(J, n_blocks)`` boolean array, true where the block is in ``S_j``."""
        m = np.zeros((self.horizon, self.n_blocks), dtype=bool)
        for j, (S, _) in enumerate(self.events):
            m[j, list(S)] = True
        return m

    def steering(self, j: int) -> tuple:
        return self.events[j - 1][0]

    def label_tuple(self, j: int) -> tuple:
        return self.events[j - 1][1]

    def min_label(self, j: int) -> int:
        return min(self.events[j - 1][1])

    def replace_event(self, j: int, steering=None, labels=None) -> "Schedule":
        """Copy with event ``j`` altered; used to build seeded violations."""
        events = list(self.events)
        S, L = events[j - 1]
        events[j - 1] = (S if steering is None else steering, L if labels is None else labels)
        return Schedule(self.n_blocks, tuple(events), self.delay_class, self.seed, dict(self.params))

    def to_dict(self) -> dict:
        return {
            "n_blocks": self.n_blocks,
            "horizon": self.horizon,
            "delay_class": self.delay_class,
            "seed": self.seed,
            "params": self.params,
            "events": [[list(S), list(L)] for S, L in self.events],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Schedule":
        try:
            events = [(ev[0], ev[1]) for ev in d["events"]]
            s = cls(int(d["n_blocks"]), tuple(events), d.get("delay_class", "unbounded_admissible"),
                    int(d.get("seed", 0)), dict(d.get("params", {})))
        except (KeyError, IndexError, TypeError) as exc:
            raise InputError(f"schedule: malformed field ({exc})") from None
        if "horizon" in d and int(d["horizon"]) != s.horizon:
            raise InputError(f"schedule: horizon {d['horizon']} but {s.horizon} events")
        return s


def save_schedule(s: Schedule, path) -> None:
    Path(path).write_text(json.dumps(s.to_dict()), encoding="utf-8")


def load_schedule(path) -> Schedule:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read schedule file {path}: {exc}") from None
    return Schedule.from_dict(d)


def schedule_to_csv(s: Schedule, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["j", "steering_mask"] + [f"l_{i}" for i in range(s.n_blocks)])
        for j, (S, L) in enumerate(s.events, start=1):
            w.writerow([j, sum(1 << i for i in S), *L])


# -- generation -------------------------------------------------------------

def _random_steering(rng, n_blocks, horizon, p, max_idle):
    """Random nonempty ``S_j``; a block idle for ``max_idle`` iterations is forced in."""
    last = np.zeros(n_blocks, dtype=np.int64)
    out = []
    for j in range(1, horizon + 1):
        pick = rng.random(n_blocks) < p
        pick |= (j - last) >= max_idle
        if not pick.any():
            pick[rng.integers(n_blocks)] = True
        last[pick] = j
        out.append(tuple(np.flatnonzero(pick).tolist()))
    return out


def _synchronous(n_blocks, horizon):
    full = tuple(range(n_blocks))
    return [(full, (j - 1,) * n_blocks) for j in range(1, horizon + 1)]


def _bounded(rng, n_blocks, horizon, b, p, max_idle):
    steering = _random_steering(rng, n_blocks, horizon, p, max_idle)
    prev = np.zeros(n_blocks, dtype=np.int64)
    events = []
    for j in range(1, horizon + 1):
        d = rng.integers(1, min(b, j) + 1, size=n_blocks)
        prev = np.maximum(prev, j - d)
        events.append((steering[j - 1], tuple(prev.tolist())))
    return events


def _unbounded(rng, n_blocks, horizon, scale, p, max_idle):
    # delays grow like scale * sqrt(j); labels stay monotone and tend to infinity
    steering = _random_steering(rng, n_blocks, horizon, p, max_idle)
    slopes = scale * rng.uniform(0.5, 1.5, size=n_blocks)
    phases = rng.random(n_blocks)
    prev = np.zeros(n_blocks, dtype=np.int64)
    events = []
    for j in range(1, horizon + 1):
        jitter = rng.integers(0, 3, size=n_blocks)
        raw = j - 1 - np.floor(slopes * math.sqrt(j) + phases).astype(np.int64) - jitter
        prev = np.maximum(prev, raw)
        events.append((steering[j - 1], tuple(prev.tolist())))
    return events


def _baudet(horizon):
    """Two processors: P0 finishes at times 1, 2, 3, ...; P1 finishes its k-th
    update at ``k(k+1)/2``.  Ties go to P0, so P1's k-th completion is
    iteration ``k(k+1)/2 + k``.  Each update reads the latest completed value
    of every block."""
    slow = set()
    k = 1
    while k * (k + 1) // 2 + k <= horizon:
        slow.add(k * (k + 1) // 2 + k)
        k += 1
    last = [0, 0]
    events = []
    for j in range(1, horizon + 1):
        owner = 1 if j in slow else 0
        events.append(((owner,), (last[0], last[1])))
        last[owner] = j
    return events


def _out_of_order(rng, n_blocks, horizon, reorder_rate, max_delay, p, max_idle):
    steering = _random_steering(rng, n_blocks, horizon, p, max_idle)
    events = []
    for j in range(1, horizon + 1):
        d = np.ones(n_blocks, dtype=np.int64)
        stale = rng.random(n_blocks) < reorder_rate
        d[stale] = rng.integers(1, min(max_delay, j) + 1, size=int(stale.sum()))
        events.append((steering[j - 1], tuple((j - d).tolist())))
    return events


def generate(kind: str, n_blocks: int, horizon: int, params: dict | None = None, seed: int = 0) -> Schedule:
    """Build a schedule of the given kind; deterministic in ``(kind, params, seed)``.

    Kinds and their ``params`` (defaults in brackets):

    - ``synchronous``: every block, every iteration, label ``j-1``.
    - ``bounded``: ``b`` [5] delay bound, ``p`` [0.5] inclusion probability,
      ``max_idle`` [n_blocks]; labels monotone with ``j - l_i(j) <= min(b, j)``.
    - ``unbounded``: ``scale`` [1.0], ``p``, ``max_idle``; delays grow like
      ``scale*sqrt(j)``, labels monotone.
    - ``baudet``: two blocks, one fast and one ever slower processor.
    - ``out_of_order``: ``reorder_rate`` [0.3], ``max_delay`` [8], ``p``,
      ``max_idle``; labels mostly fresh but with random stale draws, so a
      later iteration may read an older value than an earlier one.
    """
    params = dict(params or {})
    if n_blocks < 1 or horizon < 1:
        raise InputError("n_blocks and horizon must be at least 1")
    rng = np.random.default_rng(seed)
    p = float(params.get("p", 0.5))
    max_idle = int(params.get("max_idle", n_blocks))
    if not 0 < p <= 1 or max_idle < 1:
        raise InputError("need 0 < p <= 1 and max_idle >= 1")

    if kind == "synchronous":
        events, cls = _synchronous(n_blocks, horizon), "synchronous"
    elif kind == "bounded":
        b = int(params.setdefault("b", 5))
        if b < 1:
            raise InputError(f"bounded schedule needs b >= 1, got {b}")
        events, cls = _bounded(rng, n_blocks, horizon, b, p, max_idle), "bounded"
    elif kind in ("unbounded", "unbounded_admissible"):
        scale = float(params.setdefault("scale", 1.0))
        if not scale > 0:
            raise InputError(f"unbounded schedule needs scale > 0, got {scale}")
        events, cls = _unbounded(rng, n_blocks, horizon, scale, p, max_idle), "unbounded_admissible"
    elif kind == "baudet":
        if n_blocks != 2:
            raise InputError("baudet schedule requires exactly 2 blocks")
        events, cls = _baudet(horizon), "unbounded_admissible"
    elif kind == "out_of_order":
        rate = float(params.setdefault("reorder_rate", 0.3))
        max_delay = int(params.setdefault("max_delay", 8))
        if not 0 <= rate <= 1 or max_delay < 1:
            raise InputError("out_of_order needs reorder_rate in [0, 1] and max_delay >= 1")
        events, cls = _out_of_order(rng, n_blocks, horizon, rate, max_delay, p, max_idle), "out_of_order"
    else:
        raise InputError(f"unknown schedule kind {kind!r}; choose from {KINDS}")
    params["kind"] = kind
    return Schedule(n_blocks, tuple(events), cls, int(seed), params)


# -- validation -------------------------------------------------------------

@dataclass
class Check:
    passed: bool
    detail: dict = field(default_factory=dict)


@dataclass
class ValidationReport:
    nonempty: Check
    condition_a: Check
    condition_b_finite: Check
    condition_c: Check
    condition_d: Check | None = None

    @property
    def overall(self) -> bool:
        return all(c.passed for c in self._checks().values())

    def _checks(self) -> dict:
        checks = {
            "nonempty": self.nonempty,
            "condition_a": self.condition_a,
            "condition_b_finite": self.condition_b_finite,
            "condition_c": self.condition_c,
        }
        if self.condition_d is not None:
            checks["condition_d"] = self.condition_d
        return checks

    def failures(self) -> list[str]:
        return [name for name, c in self._checks().items() if not c.passed]

    def to_dict(self) -> dict:
        d = {name: asdict(c) for name, c in self._checks().items()}
        d["overall"] = self.overall
        return d


def coverage_window(n_blocks: int, horizon: int) -> int:
    return max(2 * n_blocks, math.ceil(horizon / 8))


def validate(s: Schedule) -> ValidationReport:
    J, n = s.horizon, s.n_blocks
    L = s.labels
    member = s.membership
    js = np.arange(1, J + 1)

    empty = [j for j, (S, _) in enumerate(s.events, start=1) if not S]
    nonempty = Check(not empty, {"first_empty": empty[0]} if empty else {})

    bad = (L > (js - 1)[:, None]) | (L < 0)
    if bad.any():
        j0, i0 = np.argwhere(bad)[0]
        cond_a = Check(False, {"block": int(i0), "j": int(j0 + 1), "label": int(L[j0, i0])})
    else:
        cond_a = Check(True)

    window = coverage_window(n, J)
    w = min(window, J)
    cond_c = Check(True, {"window": window})
    if J:
        # every run of w consecutive iterations must contain each block
        counts = np.vstack([np.zeros((1, n), dtype=np.int64), np.cumsum(member, axis=0)])
        per_window = counts[w:] - counts[:-w]
        starved = np.argwhere(per_window == 0)
        if starved.size:
            start, i0 = starved[np.lexsort((starved[:, 0], starved[:, 1]))][0]
            before = np.flatnonzero(member[:start, i0])
            last = int(before[-1] + 1) if before.size else 0
            cond_c = Check(False, {"block": int(i0), "last_update": last, "window": window,
                                   "window_start": int(start + 1)})

    if J < 2:
        cond_b = Check(True, {"note": "horizon too short for a tail comparison"})
    else:
        q = max(1, J // 4)
        head_max = L[:q].max(axis=0)
        tail_min = L[J - q:].min(axis=0)
        stats = {"quarter": q, "head_max": head_max.tolist(), "tail_min": tail_min.tolist()}
        failing = np.flatnonzero(tail_min <= head_max)
        if failing.size:
            stats["block"] = int(failing[0])
        cond_b = Check(not failing.size, stats)

    cond_d = None
    if s.delay_class == "bounded":
        b = int(s.params.get("b", 0))
        if b < 1:
            cond_d = Check(False, {"reason": "bounded schedule without a positive b"})
        else:
            # witness b(j) = min(b, j): j - b(j) is weakly increasing and is the
            # largest admissible choice at every j
            delays = js[:, None] - L
            allowed = np.minimum(b, js)[:, None]
            over = np.argwhere(delays > allowed)
            detail = {"b": b, "max_delay": int(delays.max()) if J else 0}
            if over.size:
                j0, i0 = over[0]
                detail.update(block=int(i0), j=int(j0 + 1), delay=int(delays[j0, i0]))
            cond_d = Check(not over.size, detail)

    return ValidationReport(nonempty, cond_a, cond_b, cond_c, cond_d)
