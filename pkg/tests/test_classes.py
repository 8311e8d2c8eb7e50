import numpy as np
import pytest

from mnl_bandits.classes import (
    ContextUniverse, FiniteClass, LinearClass, dump_instance, eval_finite, eval_linear, gen_random_instance,
    linear_values, load_instance, theta_grid, truth_values,
)
from mnl_bandits.errors import ValidationError


def test_finite_truth_and_bounds(fixture_instance):
    cls, universe, env, _ = fixture_instance
    for x in range(universe.n_contexts):
        assert np.array_equal(eval_finite(cls, cls.truth_index, x), env.truth[x])
    assert cls.tables.min() >= cls.beta
    with pytest.raises(KeyError):
        eval_finite(cls, 0, universe.n_contexts)
    with pytest.raises(KeyError):
        eval_finite(cls, cls.n_members, 0)


def test_members_are_separated(fixture_instance):
    cls = fixture_instance[0]
    for f in range(1, cls.n_members):
        assert np.abs(cls.tables[f] - cls.tables[0]).max() > 0


def test_linear_examples():
    cls = LinearClass(dim=2, bound=1.0)
    x = np.array([[1.0, 0.0, 0.6], [0.0, 1.0, 0.8]])
    assert np.allclose(eval_linear(cls, [0, 0], x), np.exp(-1))
    assert eval_linear(cls, [1, 0], x)[0] == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        eval_linear(cls, [1, 1], x)
    with pytest.raises(ValidationError):
        eval_linear(cls, [0, 0], 2 * x)


def test_generators_are_deterministic_and_bounded():
    for kind in ("finite", "linear"):
        a = gen_random_instance(kind, 5, 2, {"contexts": 20}, np.random.default_rng(3))
        b = gen_random_instance(kind, 5, 2, {"contexts": 20}, np.random.default_rng(3))
        assert np.array_equal(truth_values(a[0], a[1]), truth_values(b[0], b[1]))
    rng = np.random.default_rng(0)
    for _ in range(10):
        cls, _ = gen_random_instance("finite", 6, 2, {"members": 10, "contexts": 100, "beta": 0.1}, rng)
        assert cls.tables.min() >= 0.1 and cls.tables.max() <= 1
        lcls, u = gen_random_instance("linear", 6, 2, {"contexts": 100}, rng)
        assert np.linalg.norm(u.matrices, axis=1).max() <= 1 + 1e-12
        vals = linear_values(theta_grid(lcls, 5), u.matrices, lcls.bound)
        assert vals.min() > 0 and vals.max() <= 1


def test_theta_grid():
    grid = theta_grid(LinearClass(dim=3, bound=1.0), 9)
    assert len(grid) == 257
    assert np.linalg.norm(grid, axis=1).max() <= 1 + 1e-12
    with pytest.raises(ValidationError):
        theta_grid(LinearClass(dim=4), 3)


def test_validation():
    with pytest.raises(ValidationError):
        FiniteClass(np.full((2, 1, 3), 0.01), beta=0.05)
    with pytest.raises(ValidationError):
        LinearClass(dim=2, bound=1.0, theta_star=np.array([2.0, 0.0]))
    with pytest.raises(ValidationError):
        ContextUniverse("linear", 1, np.full((1, 2, 2), 1.0))


def test_json_roundtrip(tmp_path, fixture_instance):
    cls, universe = fixture_instance[:2]
    dump_instance(cls, universe, tmp_path / "f.json")
    c2, u2 = load_instance(tmp_path / "f.json")
    assert np.array_equal(c2.tables, cls.tables) and c2.beta == cls.beta
    lcls, lu = gen_random_instance("linear", 4, 2, {"dim": 2}, np.random.default_rng(1))
    dump_instance(lcls, lu, tmp_path / "l.json")
    c3, u3 = load_instance(tmp_path / "l.json")
    assert np.array_equal(c3.theta_star, lcls.theta_star) and np.array_equal(u3.matrices, lu.matrices)
