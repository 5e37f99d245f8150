import math

import numpy as np
import pytest

from asynciter import instances
from asynciter.errors import DivergenceError, InputError
from asynciter.oracles import grid_prox_1d
from asynciter.problem import (
    DatasetInstance,
    NonsmoothPart,
    ProblemInstance,
    SmoothPart,
    gradient,
    objective,
    optimality_violation,
    problem_from_dict,
    problem_to_dict,
    prox,
    reference_fixed_point,
)


def quad(A, b=None, g=None, blocks=None, gamma=None):
    return ProblemInstance(SmoothPart.quadratic(A, b), g or NonsmoothPart.zero(), blocks, gamma)


def central_difference(fun, x, h=1e-6):
    out = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return out


def all_kinds():
    ridge = instances.elastic_net(n=6, m=15, seed=3)
    return [instances.scalar_quadratic(), instances.lasso_quadratic(), instances.box_quadratic(n=12, n_blocks=3),
            ridge]


def test_gradient_quadratic():
    p = quad(np.diag([1.0, 3.0]))
    np.testing.assert_array_equal(gradient(p, [4.0, 2.0]), [4.0, 6.0])


def test_gradient_vanishes_at_unconstrained_minimizer():
    p = instances.lasso_quadratic()
    p0 = ProblemInstance(p.f, NonsmoothPart.zero(), p.blocks)
    _, y = reference_fixed_point(p0)
    assert np.max(np.abs(gradient(p0, y))) <= 1e-9


def test_gradient_ridge_two_samples_matches_finite_differences():
    data = DatasetInstance([[1.0, 2.0, -1.0], [0.5, -3.0, 2.0]], [1.0, -2.0])
    p = ProblemInstance(SmoothPart.ridge_least_squares(data, 0.3))
    x = np.array([0.2, -0.7, 1.1])
    fd = central_difference(lambda v: p.f.value(v), x)
    assert np.max(np.abs(fd - gradient(p, x))) <= 1e-5


@pytest.mark.parametrize("p", all_kinds(), ids=["scalar", "lasso10", "box12", "ridge"])
def test_gradient_matches_finite_differences_all_kinds(p, rng):
    for _ in range(5):
        x = rng.normal(size=p.dim)
        fd = central_difference(lambda v: p.f.value(v), x)
        assert np.max(np.abs(fd - gradient(p, x))) <= 1e-5


def test_gradient_dimension_mismatch():
    with pytest.raises(InputError):
        gradient(quad(np.eye(2)), [1.0, 2.0, 3.0])


def test_prox_zero_is_identity():
    p = quad(np.eye(2))
    np.testing.assert_array_equal(prox(p, [3.0, -0.5], 0.7), [3.0, -0.5])


def test_prox_l1_against_grid():
    p = quad(np.eye(2), g=NonsmoothPart.l1(2.0))
    gamma = 0.5  # gamma * lambda = 1
    expected = [grid_prox_1d("l1", x, gamma, lam=2.0) for x in (3.0, -0.5)]
    assert expected == pytest.approx([2.0, 0.0], abs=1e-4)
    np.testing.assert_allclose(prox(p, [3.0, -0.5], gamma), expected, atol=1e-4)


def test_prox_box_projection():
    p = quad(np.eye(2), g=NonsmoothPart.box([0, 0], [1, 1]))
    np.testing.assert_array_equal(prox(p, [1.7, -0.2], 1.0), [1.0, 0.0])


def test_prox_rejects_nonpositive_step():
    with pytest.raises(InputError):
        prox(quad(np.eye(1)), [1.0], 0.0)


def test_objective_values():
    p = quad([[1.0]])
    assert objective(p, [2.0]) == 2.0
    box = quad(np.eye(2), g=NonsmoothPart.box([0, 0], [1, 1]))
    assert objective(box, [0.5, 2.0]) == math.inf
    assert objective(box, [0.5, 0.5]) == pytest.approx(0.25)


def test_objective_at_minimizer_below_start(enet):
    p, _, y = enet
    assert objective(p, y) <= objective(p, np.zeros(p.dim))


def test_objective_monotone_along_reference_iterates(enet):
    p = enet[0]
    z = np.full(p.dim, 3.0)
    vals = []
    for _ in range(200):
        y = p.g.prox(z, p.gamma)
        vals.append(objective(p, y))
        z = y - p.gamma * p.f.gradient(y)
    assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


def test_reference_fixed_point_scalar():
    z, y = reference_fixed_point(instances.scalar_quadratic())
    assert z == pytest.approx([0.0]) and y == pytest.approx([0.0])


def test_reference_fixed_point_box_projects_origin():
    p = quad(np.eye(2), g=NonsmoothPart.box([1, 1], [2, 2]), gamma=0.8)
    _, y = reference_fixed_point(p)
    np.testing.assert_allclose(y, [1.0, 1.0], atol=1e-12)


def test_reference_fixed_point_matches_long_plain_solve(enet):
    p, z, _ = enet
    # plain iteration written against the Hessian, independent of the solver loop
    H = p.f.hessian()
    c = p.f.dataset.features.T @ p.f.dataset.targets / p.f.dataset.m
    t = p.gamma * p.g.lam
    g = p.gamma
    v = np.zeros(p.dim)
    for _ in range(1_000_000):
        y = np.sign(v) * np.maximum(np.abs(v) - t, 0.0)
        v = y - g * (H @ y - c)
    assert np.max(np.abs(v - z)) <= 1e-8


@pytest.mark.parametrize("name", ["scalar", "lasso10", "box50"])
def test_reference_fixed_point_optimality(suite_instances, name):
    p, z, y = suite_instances[name]
    G = lambda v: (lambda u: u - p.gamma * p.f.gradient(u))(p.g.prox(v, p.gamma))
    assert np.linalg.norm(G(z) - z) <= 1e-12
    assert optimality_violation(p, y) <= 1e-11


def test_reference_fixed_point_divergence_on_misdeclared_mu():
    # declared mu=50 sizes the iteration cap for a much faster contraction
    f = SmoothPart("quadratic", 50.0, 100.0, A=np.diag([1.0, 100.0]), b=np.array([1.0, 1.0]))
    p = ProblemInstance(f, NonsmoothPart.zero())
    with pytest.raises(DivergenceError):
        reference_fixed_point(p, 1e-12)


def test_invalid_constants_rejected():
    with pytest.raises(InputError):
        SmoothPart.quadratic(np.diag([1.0, 5.0]), mu=2.0, lipschitz=5.0)
    with pytest.raises(InputError):
        SmoothPart.quadratic(np.diag([1.0, 5.0]), mu=1.0, lipschitz=4.0)
    with pytest.raises(InputError):
        quad(np.diag([1.0, 3.0]), gamma=0.6)
    with pytest.raises(InputError):
        quad(np.eye(3), blocks=[[0, 1], [1, 2]])
    with pytest.raises(InputError):
        NonsmoothPart.box([0, 1], [1, 0])
    with pytest.raises(InputError):
        NonsmoothPart.l1(-1.0)


def test_default_step_is_right_endpoint():
    p = quad(np.diag([1.0, 3.0]))
    assert p.gamma == pytest.approx(0.5)


def test_ridge_constants_bound_spectrum():
    p = instances.elastic_net()
    eig = np.linalg.eigvalsh(p.f.hessian())
    assert p.mu <= eig[0] + 1e-10 and eig[-1] <= p.lipschitz + 1e-10


@pytest.mark.parametrize("p", all_kinds(), ids=["scalar", "lasso10", "box12", "ridge"])
def test_strong_convexity_and_smoothness(p, rng):
    for _ in range(100):
        x, y = rng.normal(size=(2, p.dim)) * 3
        dg = p.f.gradient(x) - p.f.gradient(y)
        d = x - y
        assert dg @ d >= p.mu * (d @ d) - 1e-9
        assert np.linalg.norm(dg) <= p.lipschitz * np.linalg.norm(d) + 1e-9


@pytest.mark.parametrize("g", [NonsmoothPart.zero(), NonsmoothPart.l1(0.7),
                               NonsmoothPart.box(-np.ones(4), np.arange(4.0))])
def test_prox_nonexpansive(g, rng):
    p = ProblemInstance(SmoothPart.quadratic(np.eye(4)), g)
    for _ in range(100):
        x, y = rng.normal(size=(2, 4)) * 3
        gamma = rng.uniform(0.05, 1.0)
        assert np.linalg.norm(prox(p, x, gamma) - prox(p, y, gamma)) <= np.linalg.norm(x - y) + 1e-12


@pytest.mark.parametrize("p", all_kinds(), ids=["scalar", "lasso10", "box12", "ridge"])
def test_json_round_trip(p):
    q = problem_from_dict(problem_to_dict(p))
    x = np.linspace(-1, 1, p.dim)
    assert q.gamma == p.gamma
    assert [b.tolist() for b in q.blocks] == [b.tolist() for b in p.blocks]
    np.testing.assert_array_equal(gradient(q, x), gradient(p, x))
    np.testing.assert_array_equal(prox(q, x), prox(p, x))


def test_json_missing_field():
    with pytest.raises(InputError, match="smooth"):
        problem_from_dict({"nonsmooth": {"kind": "zero"}})
