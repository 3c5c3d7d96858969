import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skillfeat.featgen import (FeatureSpec, Scaler, compute_meta_features, feature_matrix,
                               feature_specs, generate_features, meta_feature_matrix,
                               meta_feature_tensor, normalize_dataset)
from skillfeat.scene import (RigidTransform, Scene, SceneError, ScenePart, rotation_z,
                             transform_scene_to_task_frame)


def _part(name="o1p1", center=(1.0, 2.0, 3.0), dims=(2.0, 4.0, 6.0), end=None, R=None):
    return ScenePart(name, center, dims, center if end is None else end,
                     np.eye(3) if R is None else R)


def _random_scene(rng, n_parts=2):
    parts = [ScenePart(f"o1p{i}", rng.normal(size=3), rng.uniform(0.1, 1, 3),
                       rng.normal(size=3), rotation_z(rng.uniform(-3, 3)))
             for i in range(n_parts)]
    return Scene(rng.normal(size=3), rng.normal(size=3), parts)


def test_feature_ordering_and_names():
    specs = feature_specs(["a", "b"])
    assert len(specs) == 12
    assert [s.name for s in specs[:6]] == ["pos_a_x", "pos_a_y", "pos_a_z",
                                          "len_a_x", "len_a_y", "len_a_z"]
    assert specs[7].part_index == 1 and specs[7].axis == 1 and specs[7].is_position


def test_generate_features_examples():
    # box with corners (0,0,0)-(2,4,6)
    fv = generate_features(Scene((0, 0, 0), (0, 0, 0), [_part()]))
    assert list(fv.values) == [1, 2, 3, 2, 4, 6]
    fv = generate_features(Scene((1, 2, 3), (1, 2, 3), [_part()]))
    assert list(fv.values) == [0, 0, 0, 2, 4, 6]
    fv = generate_features(Scene((0, 0, 0), (0, 0, 0), [_part("a"), _part("b")]))
    assert np.array_equal(fv.values[:6], fv.values[6:])


def test_generate_features_rejects_misaligned_scene():
    scene = Scene((0, 0, 0), (0, 0, 0), [_part()])
    with pytest.raises(SceneError, match="1 parts"):
        generate_features(scene, expected_parts=("o1p1", "o1p2"))


def test_meta_feature_examples():
    scene = Scene((0, 0, 0), (0, 0, 0), [_part(center=(1, 0, 0))])
    pos_z = FeatureSpec(2, 0, "o1p1", "position", 2)
    m = compute_meta_features(scene, pos_z, [0, 0, 1]).values
    assert list(m[:3]) == [1, 0, 1] and m[6] == 1 and m[7] == 1

    scene = Scene((0, 0, 0), (0, 0, 0), [_part(center=(1, 2, 3))])
    assert compute_meta_features(scene, pos_z, [0, 0, 1]).values[1] == 9

    len_x = FeatureSpec(3, 0, "o1p1", "length", 0)
    m = compute_meta_features(scene, len_x, [1, 0, 0]).values
    assert np.array_equal(m[3:6], m[:3]) and m[6] == -1


def test_end_direction_rotates_with_part():
    R = rotation_z(np.pi / 2)
    scene = Scene((0, 0, 0), (0, 0, 0), [_part(R=R)])
    len_x = FeatureSpec(3, 0, "o1p1", "length", 0)
    m = compute_meta_features(scene, len_x, [1, 0, 0]).values
    assert m[2] == 1 and abs(m[5]) < 1e-12


def test_missing_end_pose_is_an_error():
    scene = Scene((0, 0, 0), (0, 0, 0), [ScenePart("p", (0, 0, 0), (1, 1, 1))])
    with pytest.raises(SceneError, match="end pose"):
        meta_feature_matrix(scene, 0)


def test_meta_feature_ranges():
    rng = np.random.default_rng(0)
    T = meta_feature_tensor([_random_scene(rng, 3) for _ in range(4)])
    assert T.shape == (4, 3, 18, 8)
    assert np.all((T[..., [2, 5]] >= 0) & (T[..., [2, 5]] <= 1 + 1e-12))
    assert set(np.unique(T[..., 6])) == {-1.0, 1.0}
    assert np.all(T[..., 7] == 1) and np.all(T[..., [0, 1, 3, 4]] >= 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_translation_invariance(seed):
    rng = np.random.default_rng(seed)
    scene = _random_scene(rng)
    moved = transform_scene_to_task_frame(scene, RigidTransform.from_translation(
        rng.uniform(-5, 5, 3)))
    assert np.allclose(generate_features(moved).values, generate_features(scene).values,
                       atol=1e-9)
    for c in range(3):
        assert np.allclose(meta_feature_matrix(moved, c), meta_feature_matrix(scene, c),
                           atol=1e-8)


def test_alignment_ignores_direction_sign():
    scene = Scene((0, 0, 0), (0, 0, 0), [_part(R=np.diag([-1.0, -1.0, 1.0]))])
    spec = FeatureSpec(0, 0, "o1p1", "position", 0)
    m = compute_meta_features(scene, spec, [1, 0, 0]).values
    assert m[2] == m[5] == 1


def test_feature_matrix_columns():
    rng = np.random.default_rng(1)
    scenes = [_random_scene(rng) for _ in range(3)]
    Phi = feature_matrix(scenes)
    assert Phi.shape == (12, 3)
    assert np.array_equal(Phi[:, 1], generate_features(scenes[1]).values)


def test_normalization_examples():
    n = normalize_dataset(np.array([[1.0, 2.0, 3.0], [5.0, 5.0, 5.0]]), np.ones((3, 2)))
    assert np.allclose(n.Phi[0], [-1, 0, 1])
    assert n.Phi[0].mean() == 0 and np.isclose(n.Phi[0].std(ddof=1), 1)
    assert np.all(n.Phi[1] == 0) and n.features.scale[1] == 1
    assert np.all(n.Wt == 0)
    with pytest.raises(ValueError):
        normalize_dataset(np.ones((2, 1)), np.ones((1, 2)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_normalization_round_trip(seed):
    rng = np.random.default_rng(seed)
    Phi, Wt = rng.normal(size=(5, 7)) * 10, rng.normal(size=(7, 6))
    n = normalize_dataset(Phi, Wt)
    assert np.allclose(n.features.inverse(n.Phi, 1), Phi, atol=1e-12)
    assert np.allclose(n.targets.inverse(n.Wt, 0), Wt, atol=1e-12)
    s = Scaler.from_dict(n.features.to_dict())
    assert np.array_equal(s.transform(Phi, 1), n.Phi)
