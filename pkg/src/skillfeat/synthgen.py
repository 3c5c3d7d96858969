"""Synthetic skills and point-set scenes with planted ground truth.

Skills: random part constellations, relevance labels drawn from a planted
meta prior acting on the realized meta features, sparse true weights, and
trajectories rolled out by the feature-linear DMP.

Point sets: a box with a second box or cylinder resting (almost) on its top
face, so the top face is the known contact part.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .dmp import DmpConfig, integrate
from .featgen import feature_matrix, meta_feature_tensor
from .scene import (Dataset, Demonstration, PointSet, RigidTransform, Scene, ScenePart,
                    Trajectory)
from .seeding import rng_for

# Meta-feature weights: position features of the part the hand ends up at
# are relevant, everything else rarely is.
DEFAULT_THETA = (0.0, 0.0, 0.0, -250.0, 0.0, 0.0, 10.0, -4.0)
SLAB_VAR = 50 * 0.15**2


class GeneratorError(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorConfig:
    task_name: str = "task"
    n_parts: int = 4
    n_demos: int = 15
    center_range: tuple = (-0.5, 0.5)
    extent_range: tuple = (0.02, 0.3)
    goal_radius: float = 0.05
    true_sparsity: float = 0.10
    theta_star: tuple = DEFAULT_THETA
    weight_var: float = SLAB_VAR
    noise_std: float = 0.05
    dt: float = 0.002
    duration: float = None
    dmp: DmpConfig = field(default_factory=DmpConfig)
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.center_range
        elo, ehi = self.extent_range
        if not (lo < hi and 0 < elo < ehi):
            raise GeneratorError("geometry ranges must be nonempty")
        if not 0 < self.true_sparsity < 1:
            raise GeneratorError("true_sparsity must lie in (0, 1)")
        if self.noise_std < 0:
            raise GeneratorError("noise_std must be non-negative")
        if self.n_parts < 1 or self.n_demos < 2:
            raise GeneratorError("need at least one part and two demonstrations")
        if len(self.theta_star) != 8:
            raise GeneratorError("theta_star needs 8 entries")


@dataclass(frozen=True)
class SyntheticTask:
    dataset: Dataset
    W_star: np.ndarray        # (3, M, K+1)
    targets: np.ndarray       # (N, 3, K+1) planted target shape parameters
    theta_star: np.ndarray
    goal_part: int

    @property
    def relevance(self):
        return self.dataset.ground_truth_relevance


def _sample_scene(rng, cfg: GeneratorConfig, goal_part):
    lo, hi = cfg.center_range
    elo, ehi = cfg.extent_range
    centers = rng.uniform(lo, hi, size=(cfg.n_parts, 3))
    dims = rng.uniform(elo, ehi, size=(cfg.n_parts, 3))
    offset = rng.normal(size=3)
    offset *= cfg.goal_radius * rng.uniform() ** (1 / 3) / np.linalg.norm(offset)
    hand_end = centers[goal_part] + offset
    parts = [ScenePart(f"o{p + 1}p1", centers[p], dims[p], centers[p], np.eye(3))
             for p in range(cfg.n_parts)]
    return Scene(np.zeros(3), hand_end, parts)


def plant_relevance(mean_meta, theta, true_sparsity, rng, max_attempts=100):
    """Draw (n_components, M) relevance labels from ``sigmoid(meta . theta)``.

    The bias entry is shifted until the realized relevant fraction lies in
    ``[0.5, 2] * true_sparsity``. Returns ``(labels, calibrated_theta)``.
    """
    theta = np.array(theta, dtype=float)
    lo, hi = 0.5 * true_sparsity, 2.0 * true_sparsity
    for _ in range(max_attempts):
        gamma = rng.random(mean_meta.shape[:-1]) < expit(mean_meta @ theta)
        frac = gamma.mean()
        if lo <= frac <= hi:
            return gamma, theta
        theta[-1] += 0.5 if frac < lo else -0.5
    raise GeneratorError(f"relevance calibration failed after {max_attempts} attempts")


def generate_task(cfg: GeneratorConfig) -> SyntheticTask:
    rng = rng_for(cfg.seed, "task", cfg.task_name)
    goal_part = int(rng.integers(cfg.n_parts))
    scenes = [_sample_scene(rng, cfg, goal_part) for _ in range(cfg.n_demos)]
    Phi = feature_matrix(scenes)                              # (M, N)
    meta = meta_feature_tensor(scenes)                        # (N, 3, M, 8)
    gamma, theta = plant_relevance(meta.mean(axis=0), cfg.theta_star, cfg.true_sparsity, rng)
    n_w = cfg.dmp.n_weights
    W = rng.normal(0.0, np.sqrt(cfg.weight_var), size=gamma.shape + (n_w,))
    W *= gamma[..., None]
    targets = np.einsum("jn,cjk->nck", Phi, W)
    targets = targets + cfg.noise_std * rng.standard_normal(targets.shape)
    duration = cfg.duration or cfg.dmp.settle_time
    demos = []
    for n, scene in enumerate(scenes):
        t, y = integrate(scene.hand_start, None, targets[n], cfg.dmp, duration, cfg.dt)
        demos.append(Demonstration(scene, Trajectory(t, y)))
    ds = Dataset(cfg.task_name, demos, gamma, meta={"n_parts": cfg.n_parts,
                                                    "goal_part": goal_part})
    return SyntheticTask(ds, W, targets, theta, goal_part)


def generate_suite(n_tasks=6, seed=0, noise_std=0.05, part_counts=(3, 4, 5, 3, 4, 5),
                   **overrides):
    """A family of tasks sharing one planted meta prior (M from 18 to 30 by default)."""
    tasks = []
    for i in range(n_tasks):
        cfg = GeneratorConfig(task_name=f"task{i}", n_parts=part_counts[i % len(part_counts)],
                              noise_std=noise_std, seed=seed, **overrides)
        tasks.append(generate_task(cfg))
    return tasks


# --- point sets -----------------------------------------------------------

_FACE_AXES = [(0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0), (2, 1.0), (2, -1.0)]
TOP_FACE = 4


def box_surface(dims, spacing, rng=None, jitter=0.0):
    """Grid samples on the six faces of a box centered at the origin.

    Returns ``(positions, normals, face_index)``; face order is +x, -x, +y, -y,
    +z, -z. Samples are inset half a spacing from the edges.
    """
    dims = np.asarray(dims, dtype=float)
    pos, nrm, face = [], [], []
    for f, (axis, sign) in enumerate(_FACE_AXES):
        u, v = [a for a in range(3) if a != axis]
        nu = max(1, int(round(dims[u] / spacing)))
        nv = max(1, int(round(dims[v] / spacing)))
        gu = (np.arange(nu) + 0.5) / nu * dims[u] - dims[u] / 2
        gv = (np.arange(nv) + 0.5) / nv * dims[v] - dims[v] / 2
        U, V = np.meshgrid(gu, gv, indexing="ij")
        p = np.zeros((U.size, 3))
        p[:, u], p[:, v] = U.ravel(), V.ravel()
        p[:, axis] = sign * dims[axis] / 2
        if jitter and rng is not None:
            p[:, [u, v]] += rng.uniform(-jitter, jitter, size=(len(p), 2)) * spacing
        n = np.zeros_like(p)
        n[:, axis] = sign
        pos.append(p)
        nrm.append(n)
        face.append(np.full(len(p), f))
    return np.vstack(pos), np.vstack(nrm), np.concatenate(face)


def cylinder_surface(radius, height, spacing):
    """Samples on a z-axis cylinder's side and caps. Face index: 0 side, 1 top, 2 bottom."""
    pos, nrm, face = [], [], []
    n_ang = max(8, int(round(2 * np.pi * radius / spacing)))
    n_h = max(1, int(round(height / spacing)))
    ang = (np.arange(n_ang) + 0.5) / n_ang * 2 * np.pi
    zs = (np.arange(n_h) + 0.5) / n_h * height - height / 2
    A, Z = np.meshgrid(ang, zs, indexing="ij")
    pos.append(np.column_stack([radius * np.cos(A.ravel()), radius * np.sin(A.ravel()),
                                Z.ravel()]))
    nrm.append(np.column_stack([np.cos(A.ravel()), np.sin(A.ravel()), np.zeros(A.size)]))
    face.append(np.zeros(A.size, dtype=int))
    g = (np.arange(-radius, radius + 1e-12, spacing))
    X, Y = np.meshgrid(g, g, indexing="ij")
    inside = X**2 + Y**2 <= (radius - spacing / 2) ** 2
    disk = np.column_stack([X[inside], Y[inside]])
    for sign, f in [(1.0, 1), (-1.0, 2)]:
        pos.append(np.column_stack([disk, np.full(len(disk), sign * height / 2)]))
        nrm.append(np.tile([0.0, 0.0, sign], (len(disk), 1)))
        face.append(np.full(len(disk), f))
    return np.vstack(pos), np.vstack(nrm), np.concatenate(face)


@dataclass(frozen=True)
class PointCloudConfig:
    n_scenes: int = 20
    spacing: float = 0.02
    base_range: tuple = (0.12, 0.24)
    footprint_scale: tuple = (0.8, 1.2)
    contact_gap: float = 0.01
    approach_gaps: tuple = (0.12, 0.05)
    n_contact_frames: int = 2
    cylinder_fraction: float = 0.3
    jitter: float = 0.05
    k: int = 10
    seed: int = 0


@dataclass(frozen=True)
class ContactScene:
    """Two objects; ``truth`` indexes the contact face of ``objects[0]``."""
    objects: tuple
    truth: np.ndarray
    frame_times: tuple
    separation: float


def _contact_scene(rng, cfg: PointCloudConfig, contact_gap):
    dims_a = rng.uniform(*cfg.base_range, size=3)
    pa, na, fa = box_surface(dims_a, cfg.spacing, rng, cfg.jitter)
    scale = rng.uniform(*cfg.footprint_scale)
    if rng.random() < cfg.cylinder_fraction:
        radius = scale * np.linalg.norm(dims_a[:2]) / 2
        height = rng.uniform(*cfg.base_range)
        pb, nb, _ = cylinder_surface(radius, height, cfg.spacing)
        half_b = height / 2
    else:
        dims_b = np.array([dims_a[0] * scale, dims_a[1] * rng.uniform(*cfg.footprint_scale),
                           rng.uniform(*cfg.base_range)])
        pb, nb, _ = box_surface(dims_b, cfg.spacing, rng, cfg.jitter)
        half_b = dims_b[2] / 2
    top = dims_a[2] / 2
    gaps = list(cfg.approach_gaps) + [contact_gap] * cfg.n_contact_frames
    shift = cfg.spacing * 0.25
    poses_b = []
    for i, g in enumerate(gaps):
        dx = shift * (i - len(cfg.approach_gaps)) if g == contact_gap else 0.0
        poses_b.append(RigidTransform.from_translation([dx, 0.0, top + g + half_b]))
    poses_a = [RigidTransform.identity()] * len(gaps)
    a = PointSet.from_points(pa, "A", poses_a, normals=na, k=cfg.k)
    b = PointSet.from_points(pb, "B", poses_b, normals=nb, k=cfg.k)
    truth = np.flatnonzero(fa == TOP_FACE)
    return ContactScene((a, b), truth, tuple(float(t) for t in range(len(gaps))), contact_gap)


def generate_synthetic_pointclouds(cfg: PointCloudConfig = PointCloudConfig(),
                                   contact_gap=None):
    """``cfg.n_scenes`` two-object scenes; the first object's top face is the contact part."""
    rng = rng_for(cfg.seed, "pointclouds")
    gap = cfg.contact_gap if contact_gap is None else contact_gap
    return [_contact_scene(rng, cfg, gap) for _ in range(cfg.n_scenes)]

