import json

import numpy as np
import pytest

from skillfeat import serialize as ser
from skillfeat.featgen import Scaler
from skillfeat.metaprior import MetaPrior
from skillfeat.scene import PointSet, RigidTransform, rotation_z
from skillfeat.skill import SkillComponent, SkillModel
from skillfeat.dmp import DmpConfig
from skillfeat.synthgen import GeneratorConfig, generate_task


def test_every_kind_has_a_schema():
    for kind in ser.KINDS:
        assert ser.schema_for(kind)["properties"]["schema"]["const"] == kind
    with pytest.raises(ser.SchemaError):
        ser.schema_for("nope")


def test_dataset_round_trip_is_exact():
    task = generate_task(GeneratorConfig(n_parts=2, n_demos=3, dt=0.05, seed=0))
    text = ser.dumps(ser.document("dataset", ser.dataset_body(task.dataset), seed=0))
    ds = ser.dataset_from(ser.loads(text, "dataset"))
    assert ds.task_name == task.dataset.task_name
    assert np.array_equal(ds.ground_truth_relevance, task.dataset.ground_truth_relevance)
    for a, b in zip(ds.demonstrations, task.dataset.demonstrations):
        assert np.array_equal(a.trajectory.values, b.trajectory.values)
        assert np.array_equal(a.scene.parts[1].center, b.scene.parts[1].center)
    again = ser.dumps(ser.document("dataset", ser.dataset_body(ds), seed=0))
    assert again == text


def test_pointset_round_trip():
    pts = np.random.default_rng(0).normal(size=(20, 3))
    poses = (RigidTransform.identity(), RigidTransform(rotation_z(0.3), [0.1, 0, 0]))
    ps = PointSet.from_points(pts, "obj", poses, k=5)
    doc = ser.loads(ser.dumps(ser.document("pointset", ser.pointset_body(ps, [0.0, 1.0]))))
    back, times = ser.pointset_from(doc)
    assert times == [0.0, 1.0]
    assert np.array_equal(back.world_positions(1), ps.world_positions(1))
    assert np.array_equal(back.valid, ps.valid)


def test_skill_and_meta_prior_round_trip():
    sel = np.r_[True, np.zeros(5, bool)]
    comp = SkillComponent(sel, np.eye(6), Scaler(np.zeros(6), np.ones(6)), np.linspace(0, 1, 6))
    model = SkillModel(DmpConfig(), ("o1p1",), Scaler(np.arange(6.0), np.ones(6)),
                       (comp, comp, comp))
    doc = ser.loads(ser.dumps(ser.document("skill_model", ser.skill_body(model))))
    back = ser.skill_from(doc)
    assert back.part_names == model.part_names
    assert np.array_equal(back.features.mean, model.features.mean)
    assert np.array_equal(back.components[2].marginals, comp.marginals)

    mp = MetaPrior(np.arange(8.0), np.zeros(8), np.ones(8), summary={"n_positive": 3})
    back = ser.meta_prior_from(ser.loads(ser.dumps(
        ser.document("meta_prior", ser.meta_prior_body(mp)))))
    assert np.array_equal(back.theta, mp.theta)


def test_validation_failures():
    doc = ser.document("meta_prior", ser.meta_prior_body(
        MetaPrior(np.zeros(8), np.zeros(8), np.ones(8))), seed=1, config={"a": 1})
    assert doc["provenance"]["config_hash"] == ser.config_hash({"a": 1})
    bad = dict(doc, extra=1)
    with pytest.raises(ser.SchemaError):
        ser.validate(bad)
    with pytest.raises(ser.SchemaError, match="expected"):
        ser.validate(doc, "dataset")
    with pytest.raises(ser.SchemaError):
        ser.loads("[1, 2")
    with pytest.raises(ser.SchemaError):
        ser.loads(json.dumps({"no": "schema"}))
    with pytest.raises(ser.SchemaError, match="non-finite"):
        ser.dumps({"x": float("nan")})


def test_canonical_text():
    a = ser.dumps({"b": np.float64(1.5), "a": np.arange(3), "c": -0.0})
    assert a == ser.dumps({"a": [0, 1, 2], "c": 0.0, "b": 1.5})
    assert a.endswith("\n") and a.index('"a"') < a.index('"b"')
