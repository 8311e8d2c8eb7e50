import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mnl_bandits.classes import ContextUniverse, FiniteClass, LinearClass, gen_random_instance, truth_values
from mnl_bandits.core import choice_distribution, choice_probs, log_loss
from mnl_bandits.errors import ValidationError
from mnl_bandits.experiment import oracle_stream
from mnl_bandits.oracles import (
    ErrModel, HedgeState, RegressionSample, SampleBatch, erm_fit, finite_losses, hedge_step, hedge_update,
    linear_erm, linear_logloss, linear_logloss_gradient, ogd_step,
)


def test_sample_validation():
    with pytest.raises(ValidationError):
        RegressionSample(0, (1, 2), 3)
    RegressionSample(0, (1, 2), 0)


def test_gradient_examples():
    x = np.array([[1.0], [0.0]])
    g0 = linear_logloss_gradient(np.zeros(2), x, (1,), 0, 1.0)
    g1 = linear_logloss_gradient(np.zeros(2), x, (1,), 1, 1.0)
    assert g0 == pytest.approx([0.268941421, 0.0], abs=1e-9)
    assert g1 == pytest.approx([-0.731058579, 0.0], abs=1e-9)


def test_linear_logloss_matches_choice_model(rng):
    cls, u = gen_random_instance("linear", 5, 3, {"dim": 3}, rng)
    theta = cls.theta_star
    S = (1, 3, 4)
    v = np.exp(theta @ u.matrices[0] - cls.bound)
    mu = choice_distribution(S, v)
    for i in (0, *S):
        assert linear_logloss(theta, u.matrices[0], S, i, cls.bound) == pytest.approx(log_loss(mu, i), abs=1e-12)


def _finite_pair():
    t = np.array([[[0.9, 0.1]], [[0.1, 0.9]]])
    return FiniteClass(t, beta=0.05), ContextUniverse("finite", 1)


def test_erm_finite_recovers_truth():
    cls, u = _finite_pair()
    hits = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        ctx, masks, purchase = oracle_stream(cls.tables[0], 1, 1000, rng)
        hits += erm_fit(cls, u, SampleBatch(ctx, masks, purchase)) == 0
    assert hits >= 99


def test_erm_single_sample_and_empty():
    cls, u = _finite_pair()
    s = RegressionSample(0, (2,), 2)
    f = erm_fit(cls, u, [s])
    losses = [log_loss(choice_distribution((2,), cls.tables[m, 0]), 2) for m in range(2)]
    assert f == int(np.argmin(losses)) == 1
    assert erm_fit(cls, u, []) == 0
    lcls = LinearClass(dim=2)
    lu = ContextUniverse("linear", 1, np.eye(2)[None])
    assert np.array_equal(erm_fit(lcls, lu, []), np.zeros(2))


def test_finite_losses_match_scalar(fixture_instance, rng):
    cls = fixture_instance[0]
    ctx, masks, purchase = oracle_stream(cls.tables[0], 2, 30, rng)
    tot = finite_losses(cls, SampleBatch(ctx, masks, purchase))
    for f in (0, 7):
        ref = sum(log_loss(choice_distribution(tuple(np.flatnonzero(m) + 1), cls.tables[f, x]), int(i))
                  for x, m, i in zip(ctx, masks, purchase))
        assert tot[f] == pytest.approx(ref, rel=1e-12)


def test_linear_erm_excess_decreases():
    cls, u = gen_random_instance("linear", 6, 2, {"dim": 3, "contexts": 8}, np.random.default_rng(5))
    truth = truth_values(cls, u)
    rng = np.random.default_rng(0)
    ctx, masks, purchase = oracle_stream(truth, 2, 8000, rng)
    tctx, tmasks, _ = oracle_stream(truth, 2, 100_000, np.random.default_rng(99))

    def excess(theta):
        p_star = choice_probs(truth[tctx], tmasks)
        v = np.exp(np.minimum(np.einsum("d,ndk->nk", theta, u.matrices[tctx]) - cls.bound, 0))
        p = choice_probs(v, tmasks)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(p_star > 0, p_star * np.log(p_star / p), 0)
        return float(terms.sum(axis=1).mean())

    ex = []
    for n in (250, 1000, 4000):
        theta = linear_erm(cls, u, SampleBatch(ctx[:n], masks[:n], purchase[:n]))
        assert np.linalg.norm(theta) <= cls.bound + 1e-12
        ex.append(excess(theta))
    assert ex[0] > ex[1] > ex[2]


def test_hedge_hand_updates():
    s = HedgeState.uniform(3)
    assert np.allclose(hedge_update(s, [0.7, 0.7, 0.7], 0.3).weights, 1 / 3)
    lr = 0.25
    w = hedge_update(HedgeState.uniform(2), [0.0, math.log(2) / lr], lr).weights
    assert w == pytest.approx([2 / 3, 1 / 3], abs=1e-12)


def test_hedge_step_uses_sample_losses():
    cls, _ = _finite_pair()
    pred, new = hedge_step(HedgeState.uniform(2), RegressionSample(0, (1,), 1), 1.0, cls, np.random.default_rng(0))
    assert pred in (0, 1)
    ratio = new.weights[0] / new.weights[1]
    assert ratio == pytest.approx((0.9 / 1.9) / (0.1 / 1.1), rel=1e-12)


def test_ogd_examples():
    cls = LinearClass(dim=2, bound=1.0)
    u = ContextUniverse("linear", 1, np.array([[[1.0, 0.0], [0.0, 1.0]]]))
    theta = np.array([0.3, -0.2])
    pred, new = ogd_step(theta, RegressionSample(0, (1,), 0), 0.0, cls, u)
    assert np.array_equal(pred, theta) and np.array_equal(new, theta)
    _, new = ogd_step(np.array([0.9, 0.0]), RegressionSample(0, (1,), 1), 100.0, cls, u)
    assert np.linalg.norm(new) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gradient_norm_and_finite_differences(seed):
    rng = np.random.default_rng(seed)
    cls, u = gen_random_instance("linear", 5, 3, {"dim": 3, "contexts": 1}, rng)
    x = u.matrices[0]
    S = tuple(sorted(rng.choice(np.arange(1, 6), size=3, replace=False)))
    i = int(rng.choice((0, *S)))
    theta = cls.theta_star * 0.9
    g = linear_logloss_gradient(theta, x, S, i, cls.bound)
    assert np.linalg.norm(g) <= 2 + 1e-9
    h = 1e-5
    fd = [(linear_logloss(theta + h * e, x, S, i, 1.0) - linear_logloss(theta - h * e, x, S, i, 1.0)) / (2 * h)
          for e in np.eye(3)]
    assert np.allclose(g, fd, atol=1e-6)


def test_err_model_curves():
    m = ErrModel("finite", 6, 2, beta=0.05, n_members=20)
    assert m.err(200, 0.01) == pytest.approx(m.err(100, 0.01) / 2)
    assert m.err(10, 0.01) == pytest.approx(math.log(2 / 0.05) * math.log(20 / 0.01) / 10)
    assert m.reg_log(400) == pytest.approx(2 * m.reg_log(100))
    lin = ErrModel("linear", 6, 1, dim=3, bound=1.0)
    assert lin.err(1, math.exp(-1)) == pytest.approx(3.0)  # log floors keep K = 1, B = 1 nonzero
