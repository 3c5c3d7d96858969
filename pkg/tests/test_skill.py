import numpy as np
import pytest

from skillfeat.dmp import DmpConfig
from skillfeat.skill import dataset_features, demo_goals, demo_targets, learn_skill
from skillfeat.ssvs import RelevancePrior, SsvsHyper
from skillfeat.synthgen import GeneratorConfig, generate_task


@pytest.fixture(scope="module")
def task():
    return generate_task(GeneratorConfig(n_parts=3, n_demos=10, noise_std=0.0, dt=0.01, seed=4))


def test_oracle_skill_predicts_goals(task):
    ds = task.dataset
    Phi, parts = dataset_features(ds)
    cfg = DmpConfig()
    targets = demo_targets(ds, cfg)
    model = learn_skill(Phi[:, :8], targets[:8], parts, cfg, selections=task.relevance)
    goals = demo_goals(ds)
    for i in (8, 9):
        scene = ds.demonstrations[i].scene
        assert np.max(np.abs(model.predict_goal(scene) - goals[i])) < 1e-3
        _, y = model.rollout(scene, dt=0.01)
        assert np.max(np.abs(y - ds.demonstrations[i].trajectory.values)) < 1e-3
    assert model.feature_names[0] == "pos_o1p1_x"


def test_sampled_skill_is_deterministic(task):
    Phi, parts = dataset_features(task.dataset)
    targets = demo_targets(task.dataset, DmpConfig())
    priors = [RelevancePrior.constant(0.2, Phi.shape[0])] * 3
    hyper = SsvsHyper(burn_in=20, samples=100)
    a = learn_skill(Phi, targets, parts, DmpConfig(), priors=priors, hyper=hyper, seeds=[1, 2, 3])
    b = learn_skill(Phi, targets, parts, DmpConfig(), priors=priors, hyper=hyper, seeds=[1, 2, 3])
    for ca, cb in zip(a.components, b.components):
        assert np.array_equal(ca.W, cb.W) and np.array_equal(ca.marginals, cb.marginals)
    with pytest.raises(ValueError):
        learn_skill(Phi, targets, parts, DmpConfig())
