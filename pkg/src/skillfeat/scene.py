"""Core records: rigid transforms, point sets, parts, scenes and demonstrations.

Everything is expressed in meters and seconds. Records are frozen dataclasses
holding numpy arrays; the arrays are made read-only on construction so a
record can be shared freely once built.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.spatial import cKDTree

DEFAULT_VIEWPOINT = (0.0, 0.0, 2.0)
COMPONENT_NAMES = ("x", "y", "z")


class SceneError(ValueError):
    """Raised when a record violates its invariants."""


def _frozen(a, dtype=float, shape=None, name="array"):
    arr = np.array(a, dtype=dtype)
    if shape is not None and arr.shape != shape:
        raise SceneError(f"{name} must have shape {shape}, got {arr.shape}")
    if dtype is float and not np.all(np.isfinite(arr)):
        raise SceneError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


def as_point3(p, name="point"):
    return _frozen(p, shape=(3,), name=name)


def is_rotation(R, tol=1e-6):
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        return False
    return (np.allclose(R.T @ R, np.eye(3), atol=tol)
            and abs(np.linalg.det(R) - 1.0) < tol)


def rotation_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float)
        if not is_rotation(R):
            raise SceneError("rotation is not orthonormal with det +1")
        object.__setattr__(self, "rotation", _frozen(R, shape=(3, 3), name="rotation"))
        object.__setattr__(self, "translation",
                           as_point3(self.translation, name="translation"))

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_translation(cls, t):
        return cls(np.eye(3), t)

    def apply(self, points):
        """Map positions, shape (..., 3)."""
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    def apply_direction(self, dirs):
        return np.asarray(dirs, dtype=float) @ self.rotation.T

    def compose(self, other: RigidTransform) -> RigidTransform:
        """Return ``self o other`` (apply ``other`` first)."""
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    def inverse(self) -> RigidTransform:
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def to_dict(self):
        return {"rotation": self.rotation.tolist(), "translation": self.translation.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["rotation"], d["translation"])


class LocalDescriptors(NamedTuple):
    normals: np.ndarray
    curvature: np.ndarray
    spectral: np.ndarray
    valid: np.ndarray


def estimate_local_descriptors(points, k=10, viewpoint=DEFAULT_VIEWPOINT) -> LocalDescriptors:
    """Per-point normal, curvature and eigenvalue-ratio descriptors.

    The neighbourhood of a point is the point itself plus its ``k`` nearest
    neighbours (fewer when the cloud is smaller). With covariance eigenvalues
    ``l1 >= l2 >= l3`` the descriptors are::

        normal    = eigenvector of l3, flipped to face ``viewpoint``
        curvature = l3 / (l1 + l2 + l3)
        spectral  = ((l1 - l2) / l1, (l2 - l3) / l1, l3 / l1)   # linear, planar, scatter

    A neighbourhood whose covariance has rank < 2 (coincident or collinear
    points) has no well-defined normal; such points get ``valid = False`` and
    zeroed descriptors.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise SceneError("points must have shape (n, 3)")
    n = len(pts)
    if k < 3:
        raise SceneError("k must be at least 3")
    if n < 3:
        raise SceneError("need at least 3 points")
    k_eff = min(k, n - 1)
    _, idx = cKDTree(pts).query(pts, k=k_eff + 1)
    nbrs = pts[idx]
    centered = nbrs - nbrs.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / (k_eff + 1)
    evals, evecs = np.linalg.eigh(cov)          # ascending
    evals = np.clip(evals, 0.0, None)
    l3, l2, l1 = evals[:, 0], evals[:, 1], evals[:, 2]
    scale = np.maximum(l1, np.finfo(float).tiny)
    valid = (l1 > 1e-18) & (l2 > 1e-10 * scale)

    normals = evecs[:, :, 0].copy()
    to_view = np.asarray(viewpoint, dtype=float) - pts
    flip = np.einsum("ij,ij->i", normals, to_view) < 0
    normals[flip] *= -1.0
    total = np.maximum(l1 + l2 + l3, np.finfo(float).tiny)
    curvature = l3 / total
    spectral = np.stack([(l1 - l2) / scale, (l2 - l3) / scale, l3 / scale], axis=1)

    normals[~valid] = 0.0
    curvature[~valid] = 0.0
    spectral[~valid] = 0.0
    return LocalDescriptors(normals, curvature, np.clip(spectral, 0.0, 1.0), valid)


@dataclass(frozen=True)
class PointSet:
    """Object model in its own frame plus its world pose at every frame.

    ``poses[f]`` maps object-frame coordinates to world coordinates at frame f.
    """
    positions: np.ndarray
    normals: np.ndarray
    curvature: np.ndarray
    spectral: np.ndarray
    object_id: str
    poses: tuple
    valid: np.ndarray = None

    def __post_init__(self):
        pos = _frozen(self.positions, name="positions")
        n = len(pos)
        if n == 0 or pos.shape != (n, 3):
            raise SceneError("PointSet needs a nonempty (n, 3) position array")
        nrm = _frozen(self.normals, shape=(n, 3), name="normals")
        valid = (np.ones(n, dtype=bool) if self.valid is None
                 else np.array(self.valid, dtype=bool))
        norms = np.linalg.norm(nrm[valid], axis=1)
        if not np.allclose(norms, 1.0, atol=1e-6):
            raise SceneError("normals must be unit length")
        spec = _frozen(self.spectral, shape=(n, 3), name="spectral")
        if np.any(spec < -1e-12) or np.any(spec > 1 + 1e-12):
            raise SceneError("spectral descriptors must lie in [0, 1]")
        curv = _frozen(self.curvature, shape=(n,), name="curvature")
        if np.any(curv < 0):
            raise SceneError("curvature must be non-negative")
        poses = tuple(p if isinstance(p, RigidTransform) else RigidTransform.from_dict(p)
                      for p in self.poses)
        if not poses:
            raise SceneError("PointSet needs at least one pose")
        valid.setflags(write=False)
        for name, v in [("positions", pos), ("normals", nrm), ("spectral", spec),
                        ("curvature", curv), ("poses", poses), ("valid", valid)]:
            object.__setattr__(self, name, v)

    @classmethod
    def from_points(cls, positions, object_id, poses=None, normals=None, k=10,
                    viewpoint=DEFAULT_VIEWPOINT):
        """Build a point set, estimating descriptors from the positions.

        Supplied ``normals`` (e.g. analytic ones) replace the estimated normals.
        """
        desc = estimate_local_descriptors(positions, k=k, viewpoint=viewpoint)
        nrm = desc.normals if normals is None else np.asarray(normals, dtype=float)
        valid = desc.valid if normals is None else np.ones(len(nrm), dtype=bool)
        return cls(positions, nrm, desc.curvature, desc.spectral, object_id,
                   tuple(poses) if poses else (RigidTransform.identity(),), valid)

    def __len__(self):
        return len(self.positions)

    @property
    def n_frames(self):
        return len(self.poses)

    def world_positions(self, frame):
        return self.poses[frame].apply(self.positions)

    def world_normals(self, frame):
        return self.poses[frame].apply_direction(self.normals)

    def descriptor_matrix(self):
        """Stack of (position, normal, curvature, spectral) per point, object frame."""
        return np.column_stack([self.positions, self.normals, self.curvature, self.spectral])


def bounding_box(points):
    """Return (center, dims) of the axis-aligned box around ``points``."""
    pts = np.asarray(points, dtype=float)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    return (lo + hi) / 2.0, hi - lo


@dataclass(frozen=True)
class GaussianSummary:
    """Mean and covariance of a part's 6-D (position, normal) samples."""
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen(self.mean, shape=(6,), name="mean"))
        cov = np.asarray(self.cov, dtype=float)
        object.__setattr__(self, "cov", _frozen((cov + cov.T) / 2, shape=(6, 6), name="cov"))

    @classmethod
    def from_samples(cls, samples):
        s = np.asarray(samples, dtype=float)
        mean = s.mean(axis=0)
        d = s - mean
        return cls(mean, d.T @ d / len(s))


@dataclass(frozen=True)
class Part:
    """An affordance-bearing region of one object, in the object frame."""
    object_id: str
    member_indices: np.ndarray
    bbox_center: np.ndarray
    bbox_dims: np.ndarray
    summary: GaussianSummary = None
    flagged: bool = False

    def __post_init__(self):
        idx = np.array(self.member_indices, dtype=np.int64)
        if idx.size == 0:
            raise SceneError("part has no members")
        if len(np.unique(idx)) != len(idx):
            raise SceneError("part member indices must be unique")
        idx.setflags(write=False)
        object.__setattr__(self, "member_indices", idx)
        object.__setattr__(self, "bbox_center", as_point3(self.bbox_center, "bbox_center"))
        dims = as_point3(self.bbox_dims, "bbox_dims")
        if np.any(dims < 0):
            raise SceneError("bbox dims must be non-negative")
        object.__setattr__(self, "bbox_dims", dims)

    @classmethod
    def from_members(cls, pointset: PointSet, members, flagged=False):
        members = np.sort(np.asarray(members, dtype=np.int64))
        center, dims = bounding_box(pointset.positions[members])
        six = np.column_stack([pointset.positions[members], pointset.normals[members]])
        return cls(pointset.object_id, members, center, dims,
                   GaussianSummary.from_samples(six), flagged)


@dataclass(frozen=True)
class ScenePart:
    """A part's task-frame box at the start of a demonstration and its end pose.

    ``end_rotation`` is the part's net rotation between start and end; the
    feature directions rotate with it.
    """
    name: str
    center: np.ndarray
    dims: np.ndarray
    end_center: np.ndarray = None
    end_rotation: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "center", as_point3(self.center, "center"))
        dims = as_point3(self.dims, "dims")
        if np.any(dims < 0):
            raise SceneError(f"part {self.name!r} has negative box dims")
        object.__setattr__(self, "dims", dims)
        if self.end_center is not None:
            object.__setattr__(self, "end_center", as_point3(self.end_center, "end_center"))
        if self.end_rotation is not None:
            if not is_rotation(self.end_rotation):
                raise SceneError("end_rotation is not a rotation")
            object.__setattr__(self, "end_rotation",
                               _frozen(self.end_rotation, shape=(3, 3), name="end_rotation"))

    @property
    def has_end_pose(self):
        return self.end_center is not None and self.end_rotation is not None

    @classmethod
    def from_part(cls, part: Part, start: RigidTransform, end: RigidTransform, name=None):
        """Resolve an object-frame part into the task frame at start and end poses."""
        R = start.rotation
        return cls(name or part.object_id,
                   start.apply(part.bbox_center),
                   np.abs(R) @ part.bbox_dims,
                   end.apply(part.bbox_center),
                   end.rotation @ R.T)

    def transformed(self, T: RigidTransform) -> ScenePart:
        R = T.rotation
        return ScenePart(
            self.name, T.apply(self.center), np.abs(R) @ self.dims,
            None if self.end_center is None else T.apply(self.end_center),
            None if self.end_rotation is None else R @ self.end_rotation @ R.T)


@dataclass(frozen=True)
class Scene:
    hand_start: np.ndarray
    hand_end: np.ndarray
    parts: tuple

    def __post_init__(self):
        object.__setattr__(self, "hand_start", as_point3(self.hand_start, "hand_start"))
        object.__setattr__(self, "hand_end", as_point3(self.hand_end, "hand_end"))
        object.__setattr__(self, "parts", tuple(self.parts))
        if not self.parts:
            raise SceneError("scene has no parts")

    @property
    def part_names(self):
        return tuple(p.name for p in self.parts)


def transform_scene_to_task_frame(scene: Scene, frame: RigidTransform) -> Scene:
    """Express every position and direction of ``scene`` in another frame.

    Axis-aligned boxes are re-fit around the rotated boxes, so a 90 degree
    turn about z swaps the x and y extents.
    """
    if not isinstance(frame, RigidTransform):
        frame = RigidTransform(*frame)
    return Scene(frame.apply(scene.hand_start), frame.apply(scene.hand_end),
                 tuple(p.transformed(frame) for p in scene.parts))


@dataclass(frozen=True)
class Trajectory:
    """Sampled hand trajectory, one column per skill component."""
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = _frozen(self.times, name="times")
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        v = _frozen(v, name="values")
        if t.ndim != 1 or len(t) < 2:
            raise SceneError("trajectory needs at least two samples")
        if len(v) != len(t):
            raise SceneError("times and values differ in length")
        if np.any(np.diff(t) <= 0):
            raise SceneError("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def duration(self):
        return float(self.times[-1] - self.times[0])

    @property
    def n_components(self):
        return self.values.shape[1]

    def component(self, c):
        return self.values[:, c]


@dataclass(frozen=True)
class Demonstration:
    scene: Scene
    trajectory: Trajectory

    def __post_init__(self):
        start = self.trajectory.values[0]
        n = min(len(start), 3)
        if not np.allclose(start[:n], self.scene.hand_start[:n], atol=1e-9, rtol=0):
            raise SceneError(
                f"trajectory starts at {start[:n].tolist()} but hand_start is "
                f"{self.scene.hand_start.tolist()}")


@dataclass(frozen=True)
class Dataset:
    """All demonstrations of one skill.

    ``ground_truth_relevance`` has shape (n_components, M) when known.
    ``group`` names skills that must be excluded together when training a
    meta prior (a skill and its prep skill share a group).
    """
    task_name: str
    demonstrations: tuple
    ground_truth_relevance: np.ndarray = None
    group: str = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        demos = tuple(self.demonstrations)
        if not demos:
            raise SceneError("dataset has no demonstrations")
        counts = {len(d.scene.parts) for d in demos}
        if len(counts) != 1:
            raise SceneError(f"demonstrations disagree on part count: {sorted(counts)}")
        object.__setattr__(self, "demonstrations", demos)
        if self.ground_truth_relevance is not None:
            gt = np.array(self.ground_truth_relevance, dtype=bool)
            if gt.ndim == 1:
                gt = gt[None, :]
            gt.setflags(write=False)
            object.__setattr__(self, "ground_truth_relevance", gt)
        if self.group is None:
            object.__setattr__(self, "group", self.task_name)

    def __len__(self):
        return len(self.demonstrations)

    @property
    def n_parts(self):
        return len(self.demonstrations[0].scene.parts)


def pairwise_distances(points):
    pts = np.asarray(points, dtype=float)
    return np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)


def check_aligned(scenes: Sequence[Scene]):
    """Raise unless all scenes carry the same part names in the same order."""
    ref = scenes[0].part_names
    for i, s in enumerate(scenes[1:], start=1):
        if s.part_names != ref:
            raise SceneError(f"scene {i} has parts {s.part_names}, expected {ref}")
