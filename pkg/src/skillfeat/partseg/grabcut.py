"""Interaction seeds and GrabCut-style binary segmentation of point sets."""
from __future__ import annotations

from dataclasses import dataclass, field

import maxflow
import numpy as np
from scipy.spatial import cKDTree

from ..scene import GaussianSummary, PointSet
from .gmm import DiagGMM, fit_gmm, init_gmm


@dataclass(frozen=True)
class InteractionConfig:
    distance_threshold: float = 0.02
    normal_dot_threshold: float = -0.5
    frame_subsample_hz: float = 1.0

    def __post_init__(self):
        if self.distance_threshold <= 0:
            raise ValueError("distance_threshold must be positive")
        if not -1.0 <= self.normal_dot_threshold <= 1.0:
            raise ValueError("normal_dot_threshold must lie in [-1, 1]")
        if self.frame_subsample_hz <= 0:
            raise ValueError("frame_subsample_hz must be positive")


@dataclass(frozen=True)
class SegmentationConfig:
    pairwise_coefficient: float = 1.0
    gmm_components: int = 3
    knn: int = 8
    max_iterations: int = 10

    def __post_init__(self):
        if min(self.pairwise_coefficient, self.gmm_components, self.knn,
               self.max_iterations) <= 0:
            raise ValueError("segmentation parameters must be positive")


@dataclass(frozen=True)
class PartEstimate:
    object_id: str
    frame_index: int
    member_indices: np.ndarray
    summary: GaussianSummary
    degenerate: bool = False
    energies: tuple = field(default=(), compare=False)

    def __len__(self):
        return len(self.member_indices)


def detect_interacting_points(a: PointSet, b: PointSet, frame: int,
                              cfg: InteractionConfig = InteractionConfig()):
    """Indices of points of ``a`` near a point of ``b`` with an opposing normal.

    A point i qualifies when some j has ``|p_i - q_j| <= distance_threshold``
    and ``n_i . m_j < normal_dot_threshold``, all in world coordinates at
    ``frame``.
    """
    pa, na = a.world_positions(frame), a.world_normals(frame)
    pb, nb = b.world_positions(frame), b.world_normals(frame)
    va, vb = np.flatnonzero(a.valid), np.flatnonzero(b.valid)
    tree = cKDTree(pb[vb])
    hits = []
    for i, nbrs in zip(va, tree.query_ball_point(pa[va], cfg.distance_threshold)):
        if nbrs and np.any(nb[vb[nbrs]] @ na[i] < cfg.normal_dot_threshold):
            hits.append(i)
    return np.array(hits, dtype=np.int64)


def knn_edges(positions, k):
    """Undirected edges of the k-nearest-neighbour graph, each listed once."""
    pos = np.asarray(positions, dtype=float)
    k = min(k, len(pos) - 1)
    _, idx = cKDTree(pos).query(pos, k=k + 1)
    i = np.repeat(np.arange(len(pos)), k)
    j = idx[:, 1:].ravel()
    pairs = np.unique(np.sort(np.stack([i, j], axis=1), axis=1), axis=0)
    return pairs[pairs[:, 0] != pairs[:, 1]]


def segmentation_energy(labels, unary_fg, unary_bg, edges, coefficient):
    """Unary cost of each point's label plus the Potts penalty on cut edges."""
    labels = np.asarray(labels, dtype=bool)
    unary = np.where(labels, unary_fg, unary_bg).sum()
    cut = np.count_nonzero(labels[edges[:, 0]] != labels[edges[:, 1]])
    return float(unary + coefficient * cut)


def min_cut_labels(unary_fg, unary_bg, edges, coefficient, hard_fg):
    """Exact minimizer of the binary Potts energy with hard foreground points."""
    n = len(unary_fg)
    base = np.minimum(unary_fg, unary_bg)
    cost_fg, cost_bg = unary_fg - base, unary_bg - base
    big = float(cost_fg.sum() + cost_bg.sum() + coefficient * len(edges) + 1.0)
    cost_bg = cost_bg.copy()
    cost_bg[hard_fg] = big
    g = maxflow.Graph[float](n, len(edges))
    nodes = g.add_nodes(n)
    for u, v in edges:
        g.add_edge(int(u), int(v), coefficient, coefficient)
    # Source side = foreground: cutting the source link (label bg) costs cost_bg.
    g.add_grid_tedges(nodes, cost_bg, cost_fg)
    g.maxflow()
    return ~g.get_grid_segments(nodes)


def _energy_tol(e):
    return 1e-9 * max(1.0, abs(e))


def grabcut_segment(obj: PointSet, frame: int, seed, cfg: SegmentationConfig =
                    SegmentationConfig(), rng=None) -> PartEstimate:
    """Grow a seed region into a part by alternating GMM refits and min cuts.

    Seeds are hard foreground. Each round refits both mixtures by EM, warm
    started from the previous round, then takes the optimal cut; the total
    energy therefore never increases, which is checked every round. If the
    cut leaves every non-seed point on one side, the seed itself is returned
    with ``degenerate=True``.
    """
    seed = np.unique(np.asarray(seed, dtype=np.int64))
    n = len(obj)
    if seed.size == 0 or seed.size >= n:
        raise ValueError("seed must be a nonempty strict subset of the points")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    feats = obj.descriptor_matrix()
    edges = knn_edges(obj.positions, cfg.knn)
    hard = np.zeros(n, dtype=bool)
    hard[seed] = True

    labels = hard.copy()
    fg: DiagGMM = init_gmm(feats[labels], cfg.gmm_components, rng)
    bg: DiagGMM = init_gmm(feats[~labels], cfg.gmm_components, rng)
    energies = []
    for _ in range(cfg.max_iterations):
        fg, _ = fit_gmm(feats[labels], init=fg)
        bg, _ = fit_gmm(feats[~labels], init=bg)
        u_fg, u_bg = -fg.log_pdf(feats), -bg.log_pdf(feats)
        e_fit = segmentation_energy(labels, u_fg, u_bg, edges, cfg.pairwise_coefficient)
        if energies and e_fit > energies[-1] + _energy_tol(energies[-1]):
            raise AssertionError(f"energy rose after refit: {energies[-1]} -> {e_fit}")
        new = min_cut_labels(u_fg, u_bg, edges, cfg.pairwise_coefficient, hard)
        e_cut = segmentation_energy(new, u_fg, u_bg, edges, cfg.pairwise_coefficient)
        if e_cut > e_fit + _energy_tol(e_fit):
            raise AssertionError(f"min cut raised the energy: {e_fit} -> {e_cut}")
        energies += [e_fit, e_cut]
        if new.all() or not new.any():
            break
        done = np.array_equal(new, labels)
        labels = new
        if done:
            break

    free = ~hard
    degenerate = bool(new[free].all() or not new[free].any())
    members = seed if degenerate else np.flatnonzero(new)
    six = np.column_stack([obj.positions[members], obj.normals[members]])
    return PartEstimate(obj.object_id, frame, members, GaussianSummary.from_samples(six),
                        degenerate, tuple(energies))
