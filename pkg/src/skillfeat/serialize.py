"""Versioned JSON documents for every record the command line reads or writes.

Each document is an object with ``schema`` (its kind), ``schema_version`` and
``provenance`` (seed and config hash of the run that produced it), plus the
record's own fields. Output is canonical (sorted keys, fixed separators) so
equal records give equal bytes.
"""
from __future__ import annotations

import hashlib
import json

import jsonschema
import numpy as np

from .dmp import DmpConfig
from .featgen import Scaler
from .metaprior import MetaPrior
from .scene import (Dataset, Demonstration, PointSet, RigidTransform, Scene, ScenePart,
                    Trajectory)
from .skill import SkillComponent, SkillModel

SCHEMA_VERSION = 1


class SchemaError(ValueError):
    pass


# --- schemas ----------------------------------------------------------------

_num = {"type": "number"}
_vec3 = {"type": "array", "items": _num, "minItems": 3, "maxItems": 3}
_mat3 = {"type": "array", "items": _vec3, "minItems": 3, "maxItems": 3}
_vec = {"type": "array", "items": _num}
_mat = {"type": "array", "items": _vec}
_bools = {"type": "array", "items": {"type": "boolean"}}
_bmat = {"type": "array", "items": _bools}
_ints = {"type": "array", "items": {"type": "integer", "minimum": 0}}
_str = {"type": "string"}
_strs = {"type": "array", "items": _str}


def _obj(props, required=None, extra=False):
    return {"type": "object", "properties": props,
            "required": list(props) if required is None else required,
            "additionalProperties": extra}


_pose = _obj({"rotation": _mat3, "translation": _vec3})
_scaler = _obj({"mean": _vec, "scale": _vec})
_dmp = _obj({k: _num for k in ("alpha_z", "beta_z", "tau", "x_cutoff")} |
            {"K": {"type": "integer", "minimum": 1}})
_scene_part = _obj({"name": _str, "center": _vec3, "dims": _vec3,
                    "end_center": {"anyOf": [_vec3, {"type": "null"}]},
                    "end_rotation": {"anyOf": [_mat3, {"type": "null"}]}})
_scene = _obj({"hand_start": _vec3, "hand_end": _vec3,
               "parts": {"type": "array", "items": _scene_part, "minItems": 1}})
_trajectory = _obj({"times": _vec, "values": _mat})
_pointset = _obj({"object_id": _str, "positions": _mat, "normals": _mat, "curvature": _vec,
                  "spectral": _mat, "valid": _bools,
                  "poses": {"type": "array", "items": _pose, "minItems": 1}})
_stat = {"anyOf": [{"type": "null"}, _obj({"n": {"type": "integer"}, "mean": _num,
                                           "std": _num, "rms": _num}, ["n", "mean", "std"])]}
_nullable_num = {"anyOf": [_num, {"type": "null"}]}
_row = _obj({"trial_id": _str, "task": _str, "component": _str, "condition": _str,
             "repetition": {"type": "integer"}, "accuracy": _num, "precision": _num,
             "recall": _num, "rmse": _nullable_num, "n_selected": {"type": "integer"},
             "leak": {"type": "boolean"}},
            ["trial_id", "task", "component", "condition", "accuracy", "precision",
             "recall", "rmse"])
_part = _obj({"object_id": _str, "member_indices": _ints, "bbox_center": _vec3,
              "bbox_dims": _vec3, "flagged": {"type": "boolean"}})

_BODIES = {
    "pointset": _obj({"pointset": _pointset, "frame_times": {"anyOf": [_vec, {"type": "null"}]}}),
    "scene": _obj({"scene": _scene}),
    "dataset": _obj({"task_name": _str, "group": _str,
                     "demonstrations": {"type": "array", "minItems": 1, "items": _obj(
                         {"scene": _scene, "trajectory": _trajectory})},
                     "ground_truth_relevance": {"anyOf": [_bmat, {"type": "null"}]},
                     "meta": {"type": "object"}}),
    "ground_truth": _obj({"task_name": _str, "relevance": _bmat, "W_star": {
        "type": "array", "items": _mat}, "targets": {"type": "array", "items": _mat},
        "theta_star": _vec, "goal_part": {"type": "integer"}}),
    "contact_truth": _obj({"object_id": _str, "member_indices": _ints, "separation": _num}),
    "skill_model": _obj({"dmp": _dmp, "part_names": _strs, "feature_names": _strs,
                         "features": _scaler, "meta": {"type": "object"},
                         "components": {"type": "array", "minItems": 1, "items": _obj(
                             {"selected": _bools, "W": _mat, "targets": _scaler,
                              "marginals": {"anyOf": [_vec, {"type": "null"}]}})}}),
    "meta_prior": _obj({"theta": _vec, "mean": _vec, "scale": _vec, "l2": _num,
                        "converged": {"type": "boolean"}, "iterations": {"type": "integer"},
                        "training_summary": {"type": "object"}}),
    "metrics_report": _obj({"kind": {"enum": ["prior", "goal"]}, "seed": {"type": "integer"},
                            "config": {"type": "object"}, "flags": {"type": "object"},
                            "aggregates": {"type": "object", "additionalProperties": {
                                "type": "object", "additionalProperties": {
                                    "type": "object", "additionalProperties": _stat}}},
                            "rows": {"type": "array", "items": _row}}),
    "features": _obj({"task_name": _str, "feature_names": _strs, "Phi": _mat,
                      "meta": {"type": "array", "items": {"type": "array", "items": _mat}}}),
    "selection": _obj({"task_name": _str, "prior": _str, "feature_names": _strs,
                       "train_indices": _ints, "components": {"type": "array", "items": _obj(
                           {"component": _str, "prior": _vec, "selected": _bools,
                            "marginals": {"anyOf": [_vec, {"type": "null"}]}})}}),
    "segmentation": _obj({"objects": {"type": "array", "items": _obj(
        {"object_id": _str, "n_estimates": {"type": "integer"},
         "n_degenerate": {"type": "integer"},
         "parts": {"type": "array", "items": _part}})}}),
    "prediction": _obj({"predictions": {"type": "array", "items": _obj(
        {"index": {"type": "integer"}, "goal": _vec, "targets": _mat})}}),
}

_provenance = _obj({"seed": {"anyOf": [{"type": "integer"}, {"type": "null"}]},
                    "config_hash": _str, "command": _str})


def schema_for(kind):
    if kind not in _BODIES:
        raise SchemaError(f"unknown document kind {kind!r}")
    body = _BODIES[kind]
    props = {"schema": {"const": kind}, "schema_version": {"const": SCHEMA_VERSION},
             "provenance": _provenance} | body["properties"]
    return {"$schema": "https://json-schema.org/draft/2020-12/schema", "type": "object",
            "properties": props, "additionalProperties": False,
            "required": ["schema", "schema_version", "provenance"] + body["required"]}


KINDS = tuple(_BODIES)


def validate(doc, kind=None):
    """Raise SchemaError unless ``doc`` is a valid document (of ``kind``, if given)."""
    if not isinstance(doc, dict) or "schema" not in doc:
        raise SchemaError("not a document: missing 'schema'")
    kind = kind or doc["schema"]
    if doc["schema"] != kind:
        raise SchemaError(f"expected a {kind} document, got {doc['schema']!r}")
    try:
        jsonschema.validate(doc, schema_for(kind))
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaError(f"{kind} at {path}: {exc.message}") from None
    return doc


# --- canonical JSON -----------------------------------------------------------

def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        v = float(x)
        if not np.isfinite(v):
            raise SchemaError("non-finite number in output")
        return 0.0 if v == 0 else v
    return x


def dumps(obj):
    return json.dumps(_plain(obj), sort_keys=True, indent=1, allow_nan=False) + "\n"


def config_hash(config):
    return hashlib.sha256(json.dumps(_plain(config), sort_keys=True).encode()).hexdigest()


def document(kind, body, seed=None, config=None, command=""):
    doc = {"schema": kind, "schema_version": SCHEMA_VERSION,
           "provenance": {"seed": seed, "config_hash": config_hash(config or {}),
                          "command": command}}
    doc.update(_plain(body))
    return validate(doc, kind)


def loads(text, kind=None):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc.msg} at line {exc.lineno}") from None
    return validate(doc, kind)


# --- record <-> body ----------------------------------------------------------

def pose_body(T: RigidTransform):
    return {"rotation": T.rotation, "translation": T.translation}


def pointset_body(ps: PointSet, frame_times=None):
    return {"pointset": {"object_id": ps.object_id, "positions": ps.positions,
                         "normals": ps.normals, "curvature": ps.curvature,
                         "spectral": ps.spectral, "valid": ps.valid,
                         "poses": [pose_body(p) for p in ps.poses]},
            "frame_times": None if frame_times is None else list(frame_times)}


def pointset_from(doc):
    d = doc["pointset"]
    try:
        ps = PointSet(np.asarray(d["positions"], float), np.asarray(d["normals"], float),
                      np.asarray(d["curvature"], float), np.asarray(d["spectral"], float),
                      d["object_id"], tuple(d["poses"]), np.asarray(d["valid"], bool))
    except (ValueError, TypeError) as exc:
        raise SchemaError(f"pointset: {exc}") from None
    return ps, doc.get("frame_times")


def scene_body(scene: Scene):
    return {"hand_start": scene.hand_start, "hand_end": scene.hand_end,
            "parts": [{"name": p.name, "center": p.center, "dims": p.dims,
                       "end_center": p.end_center, "end_rotation": p.end_rotation}
                      for p in scene.parts]}


def scene_from(d) -> Scene:
    parts = [ScenePart(p["name"], p["center"], p["dims"], p.get("end_center"),
                       None if p.get("end_rotation") is None else np.asarray(p["end_rotation"]))
             for p in d["parts"]]
    return Scene(d["hand_start"], d["hand_end"], parts)


def dataset_body(ds: Dataset):
    return {"task_name": ds.task_name, "group": ds.group, "meta": dict(ds.meta),
            "ground_truth_relevance": ds.ground_truth_relevance,
            "demonstrations": [{"scene": scene_body(d.scene),
                                "trajectory": {"times": d.trajectory.times,
                                               "values": d.trajectory.values}}
                               for d in ds.demonstrations]}


def dataset_from(doc) -> Dataset:
    try:
        demos = [Demonstration(scene_from(d["scene"]),
                               Trajectory(np.asarray(d["trajectory"]["times"], float),
                                          np.asarray(d["trajectory"]["values"], float)))
                 for d in doc["demonstrations"]]
        return Dataset(doc["task_name"], demos, doc.get("ground_truth_relevance"),
                       doc["group"], dict(doc.get("meta", {})))
    except (ValueError, TypeError) as exc:
        raise SchemaError(f"dataset: {exc}") from None


def ground_truth_body(task):
    return {"task_name": task.dataset.task_name, "relevance": task.relevance,
            "W_star": task.W_star, "targets": task.targets, "theta_star": task.theta_star,
            "goal_part": task.goal_part}


def skill_body(model: SkillModel):
    return {"dmp": model.cfg.to_dict(), "part_names": list(model.part_names),
            "feature_names": model.feature_names, "features": model.features.to_dict(),
            "meta": dict(model.meta),
            "components": [{"selected": c.selected, "W": c.W, "targets": c.targets.to_dict(),
                            "marginals": c.marginals} for c in model.components]}


def skill_from(doc) -> SkillModel:
    comps = tuple(SkillComponent(np.asarray(c["selected"], bool), np.asarray(c["W"], float),
                                 Scaler.from_dict(c["targets"]),
                                 None if c["marginals"] is None
                                 else np.asarray(c["marginals"], float))
                  for c in doc["components"])
    model = SkillModel(DmpConfig(**doc["dmp"]), tuple(doc["part_names"]),
                       Scaler.from_dict(doc["features"]), comps, dict(doc["meta"]))
    M = len(model.feature_names)
    if len(model.features.mean) != M or any(c.W.shape[0] != M for c in comps):
        raise SchemaError("skill_model: weight rows do not match the feature count")
    return model


def meta_prior_body(mp: MetaPrior):
    return mp.to_dict()


def meta_prior_from(doc) -> MetaPrior:
    mp = MetaPrior.from_dict(doc)
    if not (len(mp.theta) == len(mp.mean) == len(mp.scale)):
        raise SchemaError("meta_prior: theta and scalers differ in length")
    return mp
