"""Object features, meta features and per-skill normalization.

Each part contributes six features in a frozen order::

    pos_x, pos_y, pos_z, len_x, len_y, len_z

Positions are box centers relative to the initial hand position; lengths are
box extents. Every feature also gets eight meta features per skill
component, describing how it relates to the hand and to the component's
direction at the start and the end of a demonstration.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .scene import Scene, SceneError

AXES = "xyz"
N_META = 8
KINDS = ("position", "length")


@dataclass(frozen=True)
class FeatureSpec:
    index: int
    part_index: int
    part_name: str
    kind: str
    axis: int

    @property
    def direction(self):
        d = np.zeros(3)
        d[self.axis] = 1.0
        return d

    @property
    def is_position(self):
        return self.kind == "position"

    @property
    def name(self):
        return f"{'pos' if self.is_position else 'len'}_{self.part_name}_{AXES[self.axis]}"


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    specs: tuple

    def __len__(self):
        return len(self.values)

    @property
    def names(self):
        return [s.name for s in self.specs]


@dataclass(frozen=True)
class MetaFeatureVector:
    values: np.ndarray
    feature_index: int
    component: int


def feature_specs(part_names):
    specs = []
    for p, name in enumerate(part_names):
        for kind in KINDS:
            for axis in range(3):
                specs.append(FeatureSpec(len(specs), p, name, kind, axis))
    return tuple(specs)


def generate_features(scene: Scene, expected_parts=None) -> FeatureVector:
    """Six box features per part: hand-relative center and extents."""
    if expected_parts is not None:
        expected = tuple(expected_parts)
        if len(scene.parts) != len(expected):
            raise SceneError(
                f"scene has {len(scene.parts)} parts, task prototype has {len(expected)}")
        if scene.part_names != expected:
            raise SceneError(f"scene parts {scene.part_names} do not match {expected}")
    blocks = [np.concatenate([p.center - scene.hand_start, p.dims]) for p in scene.parts]
    return FeatureVector(np.concatenate(blocks), feature_specs(scene.part_names))


def skill_direction(component):
    d = np.zeros(3)
    d[component] = 1.0
    return d


def _meta(p, d, hand, d_a):
    rel = p - hand
    return (float(rel @ rel), float(d_a @ rel) ** 2, abs(float(d_a @ d)))


def compute_meta_features(scene: Scene, spec: FeatureSpec, skill_dir) -> MetaFeatureVector:
    part = scene.parts[spec.part_index]
    if not part.has_end_pose:
        raise SceneError(f"part {part.name!r} has no end pose")
    d_a = np.asarray(skill_dir, dtype=float)
    d = spec.direction
    start = _meta(part.center, d, scene.hand_start, d_a)
    end = _meta(part.end_center, part.end_rotation @ d, scene.hand_end, d_a)
    vals = np.array(start + end + (1.0 if spec.is_position else -1.0, 1.0))
    component = int(np.argmax(np.abs(d_a)))
    return MetaFeatureVector(vals, spec.index, component)


def meta_feature_matrix(scene: Scene, component: int) -> np.ndarray:
    """Meta features of every feature of ``scene`` for one component, shape (M, 8)."""
    d_a = skill_direction(component)
    specs = feature_specs(scene.part_names)
    return np.stack([compute_meta_features(scene, s, d_a).values for s in specs])


def meta_feature_tensor(scenes, n_components=3) -> np.ndarray:
    """Shape (n_scenes, n_components, M, 8)."""
    return np.stack([[meta_feature_matrix(s, c) for c in range(n_components)]
                     for s in scenes])


def feature_matrix(scenes, expected_parts=None) -> np.ndarray:
    """Features of several scenes as an (M, N) matrix, one column per scene."""
    if expected_parts is None:
        expected_parts = scenes[0].part_names
    return np.column_stack([generate_features(s, expected_parts).values for s in scenes])


@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X, axis):
        X = np.asarray(X, dtype=float)
        if X.shape[axis] < 2:
            raise ValueError("need at least two samples to normalize")
        mean = X.mean(axis=axis)
        std = X.std(axis=axis, ddof=1)
        flat = std <= 1e-12 * (1.0 + np.abs(mean))
        return cls(mean, np.where(flat, 1.0, std))

    def transform(self, X, axis):
        return (np.asarray(X, dtype=float) - np.expand_dims(self.mean, axis)) / \
            np.expand_dims(self.scale, axis)

    def inverse(self, X, axis):
        return np.asarray(X, dtype=float) * np.expand_dims(self.scale, axis) + \
            np.expand_dims(self.mean, axis)

    def to_dict(self):
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["scale"], dtype=float))


class Normalized(NamedTuple):
    Phi: np.ndarray
    Wt: np.ndarray
    features: Scaler
    targets: Scaler


def normalize_dataset(Phi, Wt) -> Normalized:
    """Z-score each feature row of ``Phi`` (M, N) and each target column of ``Wt`` (N, K+1).

    Constant rows and columns keep scale 1, so they map to zeros.
    """
    Phi = np.asarray(Phi, dtype=float)
    Wt = np.asarray(Wt, dtype=float)
    if Phi.shape[1] < 2:
        raise ValueError("need N >= 2 demonstrations")
    fs = Scaler.fit(Phi, axis=1)
    ts = Scaler.fit(Wt, axis=0)
    return Normalized(fs.transform(Phi, 1), ts.transform(Wt, 0), fs, ts)
