"""Brute-force reference computations.

These are deliberately naive and share no code with the main path; tests
and the ``oracle`` CLI subcommand diff them against the real implementations.
"""

from __future__ import annotations

import heapq

import numpy as np

from .schedule import Schedule


def brute_macro_iterations(s: Schedule) -> list:
    """Evaluate the macro-iteration recursion literally, scanning every candidate ``j``."""
    J, n = s.horizon, s.n_blocks
    everything = set(range(n))
    out = [0]
    while True:
        jk = out[-1]
        nxt = None
        for j in range(jk + 1, J + 1):
            union = set()
            for r in range(1, j + 1):
                lr = min(s.events[r - 1][1])
                if jk <= lr <= r:
                    union.update(s.events[r - 1][0])
            if union == everything:
                nxt = j
                break
        if nxt is None:
            return out
        out.append(nxt)


def brute_epochs(s: Schedule, owner_map=None) -> list:
    owner_map = list(range(s.n_blocks)) if owner_map is None else list(owner_map)
    machines = set(owner_map)
    out = [0]
    while True:
        km = out[-1]
        nxt = None
        for k in range(km + 1, s.horizon + 1):
            made = {w: 0 for w in machines}
            for j in range(km + 1, k + 1):
                for w in {owner_map[i] for i in s.events[j - 1][0]}:
                    made[w] += 1
            if min(made.values()) >= 2:
                nxt = k
                break
        if nxt is None:
            return out
        out.append(nxt)


def random_trace_schedule(rng, n_blocks: int, horizon: int) -> Schedule:
    """Arbitrary labels in ``[0, j-1]`` and random nonempty steering sets."""
    events = []
    for j in range(1, horizon + 1):
        S = [i for i in range(n_blocks) if rng.random() < 0.5] or [int(rng.integers(n_blocks))]
        labels = [int(rng.integers(max(0, j - 1 - int(rng.integers(0, 6))), j)) for _ in range(n_blocks)]
        events.append((S, labels))
    return Schedule(n_blocks, tuple(events), "out_of_order", 0, {})


def grid_prox_1d(kind: str, x: float, gamma: float, lam: float = 0.0, lo: float = 0.0,
                 hi: float = 0.0, resolution: float = 1e-4) -> float:
    """Minimise ``g(v) + (v - x)^2 / (2 gamma)`` over a uniform grid."""
    if kind == "box":
        grid = np.arange(lo, hi + resolution / 2, resolution)
        grid = np.append(grid[grid <= hi], hi)
        cost = (grid - x) ** 2 / (2 * gamma)
    else:
        a, b = min(x, 0.0) - 1.0, max(x, 0.0) + 1.0
        grid = a + resolution * np.arange(int(np.ceil((b - a) / resolution)) + 1)
        g = lam * np.abs(grid) if kind == "l1" else 0.0
        cost = g + (grid - x) ** 2 / (2 * gamma)
    return float(grid[np.argmin(cost)])


def baudet_event_labels(horizon: int) -> list:
    """Simulate the two completion streams with an event queue.

    Processor 0 finishes an update every time unit; processor 1 needs ``k``
    units for its ``k``-th update.  Simultaneous completions are ordered by
    processor number.  Returns ``(owner, labels)`` per iteration.
    """
    queue = [(1, 0, 1), (1, 1, 1)]  # (completion time, processor, update count)
    latest = [0, 0]
    out = []
    j = 0
    while j < horizon:
        time, proc, count = heapq.heappop(queue)
        j += 1
        out.append((proc, tuple(latest)))
        latest[proc] = j
        if proc == 0:
            heapq.heappush(queue, (time + 1, 0, count + 1))
        else:
            heapq.heappush(queue, (time + count + 1, 1, count + 1))
    return out
