"""Demonstration-guided part segmentation of object point sets."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cluster import (KernelConfig, MatchResult, bhattacharyya_kernel, cluster_part_estimates,
                      kernel_matrix, match_parts_across_demos)
from .grabcut import (InteractionConfig, PartEstimate, SegmentationConfig,
                      detect_interacting_points, grabcut_segment, min_cut_labels,
                      segmentation_energy)

__all__ = [
    "InteractionConfig", "SegmentationConfig", "KernelConfig", "PartEstimate", "MatchResult",
    "detect_interacting_points", "grabcut_segment", "bhattacharyya_kernel", "kernel_matrix",
    "cluster_part_estimates", "match_parts_across_demos", "min_cut_labels",
    "segmentation_energy", "subsample_frames", "segment_demonstration", "SegmentationResult",
]


def subsample_frames(frame_times, hz):
    """Indices of frames at least ``1/hz`` seconds apart, starting at the first."""
    if frame_times is None:
        return None
    keep, last = [], -np.inf
    for i, t in enumerate(frame_times):
        if t - last >= 1.0 / hz - 1e-9:
            keep.append(i)
            last = t
    return keep


@dataclass
class SegmentationResult:
    parts: dict                      # object_id -> list[Part]
    estimates: dict = field(default_factory=dict)


def segment_demonstration(pointsets, frame_times=None,
                          interaction: InteractionConfig = InteractionConfig(),
                          segmentation: SegmentationConfig = SegmentationConfig(),
                          kernel: KernelConfig = KernelConfig(), seed=0) -> SegmentationResult:
    """Interaction seeds, GrabCut per object pair and frame, then clustering per object."""
    rng = np.random.default_rng(seed)
    n_frames = min(p.n_frames for p in pointsets)
    frames = subsample_frames(frame_times, interaction.frame_subsample_hz) or range(n_frames)
    estimates = {p.object_id: [] for p in pointsets}
    for f in frames:
        for a in pointsets:
            for b in pointsets:
                if a is b:
                    continue
                seeds = detect_interacting_points(a, b, f, interaction)
                if 0 < len(seeds) < len(a):
                    estimates[a.object_id].append(grabcut_segment(a, f, seeds, segmentation, rng))
    parts = {}
    for p in pointsets:
        est = estimates[p.object_id]
        parts[p.object_id] = cluster_part_estimates(est, p, kernel, rng) if est else []
    return SegmentationResult(parts, estimates)
