import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from asynciter.errors import InputError
from asynciter.oracles import baudet_event_labels
from asynciter.schedule import (
    Schedule,
    generate,
    load_schedule,
    save_schedule,
    schedule_to_csv,
    validate,
)

DEFAULT_KINDS = [("synchronous", 3), ("bounded", 3), ("unbounded", 3), ("baudet", 2), ("out_of_order", 3)]


def test_synchronous_events():
    s = generate("synchronous", 3, 5)
    assert s.events == tuple(((0, 1, 2), (j - 1,) * 3) for j in range(1, 6))
    assert s.delay_class == "synchronous"


def test_bounded_delays_respect_bound():
    s = generate("bounded", 2, 50, {"b": 3}, seed=4)
    js = np.arange(1, 51)
    d = js[:, None] - s.labels
    assert d.max() <= 3 and d.min() >= 1
    b_of_j = np.minimum(3, js)
    assert (d <= b_of_j[:, None]).all()
    assert np.all(np.diff(js - b_of_j) >= 0)


def test_baudet_matches_event_oracle():
    s = generate("baudet", 2, 2000)
    sim = baudet_event_labels(2000)
    assert [S for S, _ in s.events] == [(owner,) for owner, _ in sim]
    assert [L for _, L in s.events] == [labels for _, labels in sim]


def test_baudet_slow_block_delay_grows():
    s = generate("baudet", 2, 10000)
    d2 = np.arange(1, 10001) - s.labels[:, 1]
    # the running maximum of the slow block's delay tracks sqrt(2 j)
    for j in (100, 1000, 10000):
        peak = d2[:j].max()
        assert 0.5 <= peak / math.sqrt(2 * j) <= 1.5


@pytest.mark.parametrize("kind,n", DEFAULT_KINDS)
def test_generate_then_validate(kind, n):
    for seed in range(50):
        report = validate(generate(kind, n, 400, seed=seed))
        assert report.overall, (seed, report.failures())


@pytest.mark.parametrize("kind,n", DEFAULT_KINDS)
def test_generation_is_deterministic(kind, n):
    assert generate(kind, n, 300, seed=9).events == generate(kind, n, 300, seed=9).events


def test_seeds_differ():
    assert generate("bounded", 3, 100, seed=1).events != generate("bounded", 3, 100, seed=2).events


@pytest.mark.parametrize("kind,n", [("bounded", 3), ("unbounded", 4), ("baudet", 2)])
def test_admissible_kinds_have_monotone_labels(kind, n):
    for seed in range(10):
        L = generate(kind, n, 300, seed=seed).labels
        assert (np.diff(L, axis=0) >= 0).all()


def test_unbounded_delays_exceed_any_small_bound():
    s = generate("unbounded", 2, 2000, seed=0)
    d = np.arange(1, 2001)[:, None] - s.labels
    assert d[-200:].max() > 30


@pytest.mark.parametrize("rate", [0.2, 0.5, 0.9])
def test_out_of_order_witness(rate):
    for seed in range(20):
        L = generate("out_of_order", 3, 200, {"reorder_rate": rate}, seed=seed).labels
        running_max = np.maximum.accumulate(L, axis=0)
        assert (L[1:] < running_max[:-1]).any()


def test_validate_synchronous_passes():
    r = validate(generate("synchronous", 3, 40))
    assert r.overall and r.condition_d is None


def test_validate_detects_starved_block():
    events = [((0,), (j - 1, j - 1)) for j in range(1, 41)]
    r = validate(Schedule(2, tuple(events), "unbounded_admissible"))
    assert not r.overall
    assert r.failures() == ["condition_c"]
    assert r.condition_c.detail["block"] == 1
    assert r.condition_c.detail["last_update"] == 0


def test_validate_detects_future_label():
    s = generate("synchronous", 2, 20).replace_event(10, labels=(10, 9))
    r = validate(s)
    assert "condition_a" in r.failures()
    assert (r.condition_a.detail["block"], r.condition_a.detail["j"]) == (0, 10)


def test_validate_detects_delay_beyond_bound():
    s = generate("bounded", 2, 60, {"b": 4}, seed=1)
    s = s.replace_event(30, labels=(30 - 5, s.label_tuple(30)[1]))
    r = validate(s)
    assert r.failures() == ["condition_d"]
    assert r.condition_d.detail["delay"] == 5 and r.condition_d.detail["j"] == 30


def test_validate_detects_stalled_labels():
    events = [((0, 1), (0, j - 1)) for j in range(1, 41)]
    r = validate(Schedule(2, tuple(events), "unbounded_admissible"))
    assert r.failures() == ["condition_b_finite"]
    assert r.condition_b_finite.detail["block"] == 0


def test_validate_flags_empty_steering():
    events = [((0,), (j - 1,)) for j in range(1, 20)] + [((), (19,))]
    r = validate(Schedule(1, tuple(events), "unbounded_admissible"))
    assert "nonempty" in r.failures()


@pytest.mark.parametrize("kind,params,n", [
    ("bounded", {"b": 0}, 2),
    ("baudet", {}, 3),
    ("nonsense", {}, 2),
    ("out_of_order", {"reorder_rate": 1.5}, 2),
    ("unbounded", {"scale": -1.0}, 2),
])
def test_generate_rejects_bad_params(kind, params, n):
    with pytest.raises(InputError):
        generate(kind, n, 10, params)


def test_schedule_rejects_malformed_events():
    with pytest.raises(InputError):
        Schedule(2, (((0,), (0,)),))
    with pytest.raises(InputError):
        Schedule(2, (((2,), (0, 0)),))


def test_json_round_trip(tmp_path):
    s = generate("out_of_order", 3, 80, seed=5)
    path = tmp_path / "s.json"
    save_schedule(s, path)
    t = load_schedule(path)
    assert t == s
    raw = json.loads(path.read_text())
    assert raw["events"][0] == [list(s.events[0][0]), list(s.events[0][1])]


def test_csv_export(tmp_path):
    s = generate("bounded", 3, 10, seed=2)
    path = tmp_path / "s.csv"
    schedule_to_csv(s, path)
    rows = path.read_text().splitlines()
    assert rows[0] == "j,steering_mask,l_0,l_1,l_2"
    j, mask, *labels = map(int, rows[3].split(","))
    assert j == 3 and mask == sum(1 << i for i in s.steering(3))
    assert tuple(labels) == s.label_tuple(3)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 5), horizon=st.integers(1, 120), b=st.integers(1, 8), seed=st.integers(0, 2**32))
def test_bounded_generation_always_meets_conditions_a_and_d(n, horizon, b, seed):
    r = validate(generate("bounded", n, horizon, {"b": b}, seed))
    assert r.condition_a.passed and r.condition_d.passed and r.nonempty.passed
