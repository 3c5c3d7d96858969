import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit

from skillfeat.metaprior import (LabeledSkill, MetaPrior, MetaPriorError, MetaTrainingSet,
                                 build_training_set, compute_prior, train_irls,
                                 uniform_prior)


def _skill(name, n_pos, n_neg, seed=0, group=None):
    rng = np.random.default_rng(seed)
    M = n_pos + n_neg
    labels = np.zeros((1, M), dtype=bool)
    labels[0, :n_pos] = True
    return LabeledSkill(name, rng.normal(size=(2, 1, M, 8)), labels, group)


def test_balanced_subsample():
    ts = build_training_set([_skill("a", 20, 200)], seed=3)
    assert len(ts) == 20 and ts.y.sum() == 10
    again = build_training_set([_skill("a", 20, 200)], seed=3)
    assert np.array_equal(ts.X, again.X)


def test_exclusion_by_id_and_group():
    skills = [_skill("cut", 4, 10, group="cut"), _skill("cut_prep", 4, 10, 1, group="cut"),
              _skill("pour", 6, 10, 2)]
    ts = build_training_set(skills, exclude=("cut",))
    assert set(ts.source) == {"pour"}
    with pytest.raises(MetaPriorError, match="no skills"):
        build_training_set(skills, exclude=("cut", "pour"))
    with pytest.raises(MetaPriorError, match="positive"):
        build_training_set([_skill("x", 0, 5)])


def test_rows_average_over_demos():
    s = _skill("a", 2, 3)
    X, y = s.rows()
    assert np.allclose(X, s.meta.mean(axis=0)[0])
    assert list(y) == [True, True, False, False, False]


def test_symmetric_data_keeps_theta_at_zero():
    # every meta vector occurs once with each label, bias column zeroed
    rng = np.random.default_rng(0)
    X = rng.normal(size=(50, 8))
    X[:, -1] = 0.0
    X = np.vstack([X, X])
    y = np.r_[np.ones(50), np.zeros(50)]
    mp = train_irls(MetaTrainingSet(X, y, ("s",) * 100))
    assert np.allclose(mp.theta, 0.0, atol=1e-12) and mp.converged


def test_separable_1d_data_stays_finite():
    x = np.r_[np.linspace(-2, -0.1, 20), np.linspace(0.1, 2, 20)]
    X = np.column_stack([x, np.ones(40)])
    y = (x > 0).astype(float)
    mp = train_irls(MetaTrainingSet(X, y, ("s",) * 40), l2=1e-3)
    assert np.all(np.isfinite(mp.theta))
    assert np.all((mp.probabilities(X) > 0.5) == (y == 1))


def test_planted_theta_recovery_and_monotone_objective():
    rng = np.random.default_rng(1)
    theta_true = rng.normal(size=8)
    theta_true[-1] = 0.0
    X = np.column_stack([rng.normal(size=(10_000, 7)), np.ones(10_000)])
    y = rng.random(10_000) < expit(X @ theta_true)
    mp = train_irls(MetaTrainingSet(X, y, ("s",) * 10_000), standardize=False)
    cos = mp.theta @ theta_true / np.linalg.norm(mp.theta) / np.linalg.norm(theta_true)
    assert cos > 0.95 and mp.converged
    assert np.all(np.diff(mp.history) >= -1e-12)


def test_step_halving_keeps_objective_monotone_on_hard_data():
    rng = np.random.default_rng(2)
    X = np.column_stack([rng.normal(size=(30, 3)) * 50, np.ones(30)])
    y = X[:, 0] > 0
    mp = train_irls(MetaTrainingSet(X, y, ("s",) * 30), standardize=False, max_iter=30)
    assert np.all(np.diff(mp.history) >= -1e-12)


def test_compute_prior_examples():
    zero = MetaPrior(np.zeros(8), np.zeros(8), np.ones(8))
    p = compute_prior(zero, np.random.default_rng(0).normal(size=(3, 5, 8)))
    assert np.allclose(p.p1, 0.5)
    theta = np.zeros(8)
    theta[0] = 1.0
    mp = MetaPrior(theta, np.zeros(8), np.ones(8))
    demos = np.zeros((2, 1, 8))
    demos[0, 0, 0], demos[1, 0, 0] = np.log(0.2 / 0.8), np.log(0.8 / 0.2)
    assert np.isclose(compute_prior(mp, demos).p1[0], 0.5)
    assert np.isclose(compute_prior(mp, np.zeros((1, 8))).p1[0], 0.5)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 5.0))
def test_compute_prior_is_monotone(seed, bump):
    rng = np.random.default_rng(seed)
    theta = rng.normal(size=8)
    mp = MetaPrior(theta, np.zeros(8), np.ones(8))
    demos = rng.normal(size=(4, 3, 8))
    more = demos.copy()
    k = int(np.argmax(np.abs(theta)))
    more[1, :, k] += bump * np.sign(theta[k])     # raises that demo's logits
    assert np.all(compute_prior(mp, more).p1 >= compute_prior(mp, demos).p1 - 1e-15)


def test_uniform_prior():
    s = _skill("a", 1, 9)
    assert np.allclose(uniform_prior([s], 4).p1, 0.1)
    assert np.allclose(uniform_prior([_skill("b", 5, 0)], 2).p1, 1 - 1e-6)


def test_meta_prior_round_trip():
    X = np.random.default_rng(3).normal(size=(40, 8))
    X[:, -1] = 1.0
    y = X[:, 0] > 0
    mp = train_irls(MetaTrainingSet(X, y, ("s",) * 40))
    back = MetaPrior.from_dict(mp.to_dict())
    assert np.array_equal(back.probabilities(X), mp.probabilities(X))
