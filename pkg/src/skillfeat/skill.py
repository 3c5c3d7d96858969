"""Learning a feature-linear skill from demonstrations and predicting with it."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dmp import DmpConfig, extract_targets, integrate, rescale_trajectory
from .featgen import Scaler, feature_matrix, feature_specs, generate_features, normalize_dataset
from .scene import Dataset, Scene
from .ssvs import SsvsHyper, fit_final_weights, map_relevance, run_gibbs


def demo_targets(dataset: Dataset, cfg: DmpConfig):
    """Target shape parameters of every demonstration, shape (N, C, K+1).

    Demonstrations are first stretched to the median duration.
    """
    durations = [d.trajectory.duration for d in dataset.demonstrations]
    nominal = float(np.median(durations))
    out = []
    for demo in dataset.demonstrations:
        traj = demo.trajectory
        t, v = traj.times, traj.values
        if abs(traj.duration - nominal) > 1e-9 * nominal:
            t, v = rescale_trajectory(t, v, nominal)
        out.append([extract_targets(t, v[:, c], cfg) for c in range(v.shape[1])])
    return np.array(out)


def demo_goals(dataset: Dataset):
    """Final hand position of every demonstration, shape (N, C)."""
    return np.array([d.trajectory.values[-1] for d in dataset.demonstrations])


@dataclass(frozen=True)
class SkillComponent:
    selected: np.ndarray          # (M,) bool
    W: np.ndarray                 # (M, K+1), normalized units
    targets: Scaler               # per-column scaler of the targets
    marginals: np.ndarray = None  # (M,) posterior relevance, if sampled


@dataclass(frozen=True)
class SkillModel:
    """Per-component feature selection and weights of a feature-linear DMP.

    Weights live in normalized units: features are z-scored with ``features``
    and targets de-normalized per component before use.
    """
    cfg: DmpConfig
    part_names: tuple
    features: Scaler
    components: tuple
    meta: dict = field(default_factory=dict)

    @property
    def feature_names(self):
        return [s.name for s in feature_specs(self.part_names)]

    def predict_targets(self, phi):
        """Target shape parameters (C, K+1) for a raw feature vector."""
        z = self.features.transform(np.asarray(phi, dtype=float)[:, None], 1)[:, 0]
        return np.array([c.targets.inverse((c.W.T @ z)[None, :], 0)[0]
                         for c in self.components])

    def predict_goal(self, scene: Scene):
        phi = generate_features(scene, self.part_names).values
        return scene.hand_start[:len(self.components)] + self.predict_targets(phi)[:, 0]

    def rollout(self, scene: Scene, duration=None, dt=0.01):
        phi = generate_features(scene, self.part_names).values
        wt = self.predict_targets(phi)
        t, y = integrate(scene.hand_start[:len(wt)], None, wt, self.cfg, duration, dt)
        return t, y


def learn_skill(Phi, targets, part_names, cfg: DmpConfig, priors=None, selections=None,
                hyper: SsvsHyper = SsvsHyper(), seeds=None) -> SkillModel:
    """Fit a SkillModel from features (M, N) and targets (N, C, K+1).

    Either ``priors`` (one RelevancePrior per component, selection by the
    sampler) or ``selections`` (fixed masks) must be given. ``seeds`` holds
    one chain seed per component.
    """
    Phi = np.asarray(Phi, dtype=float)
    targets = np.asarray(targets, dtype=float)
    C = targets.shape[1]
    if (priors is None) == (selections is None):
        raise ValueError("give exactly one of priors or selections")
    comps, fscaler = [], None
    for c in range(C):
        norm = normalize_dataset(Phi, targets[:, c, :])
        fscaler = norm.features
        marg = None
        if priors is not None:
            seed = 0 if seeds is None else seeds[c]
            chain = run_gibbs(norm.Phi, norm.Wt, priors[c], hyper, seed)
            sel, marg = map_relevance(chain), chain.marginals
        else:
            sel = np.asarray(selections[c], dtype=bool)
        W = fit_final_weights(norm.Phi, norm.Wt, sel)
        comps.append(SkillComponent(sel, W, norm.targets, marg))
    return SkillModel(cfg, tuple(part_names), fscaler, tuple(comps))


def dataset_features(dataset: Dataset):
    scenes = [d.scene for d in dataset.demonstrations]
    return feature_matrix(scenes), scenes[0].part_names

