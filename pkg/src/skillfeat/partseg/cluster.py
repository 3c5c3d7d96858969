"""Merging redundant part estimates and matching parts across demonstrations."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy.cluster.vq import kmeans2

from ..scene import GaussianSummary, Part, PointSet

MAX_CLUSTERS = 8
KMEANS_RESTARTS = 10


@dataclass(frozen=True)
class KernelConfig:
    position_cov: float = 0.025
    normal_cov: float = 0.25

    def __post_init__(self):
        if self.position_cov <= 0 or self.normal_cov <= 0:
            raise ValueError("kernel covariances must be positive")

    @property
    def regularizer(self):
        return np.diag([self.position_cov] * 3 + [self.normal_cov] * 3)


def _summary(x) -> GaussianSummary:
    return x if isinstance(x, GaussianSummary) else x.summary


def bhattacharyya_kernel(p, q, cfg: KernelConfig = KernelConfig()) -> float:
    """Bhattacharyya coefficient of two regularized 6-D Gaussians.

    ``p`` and ``q`` are part estimates, parts, or Gaussian summaries. With
    ``S = (S_p + S_q) / 2`` the coefficient is
    ``exp(-(1/8) d' S^-1 d - (1/2) ln(det S / sqrt(det S_p det S_q)))``.
    """
    ida, idb = getattr(p, "object_id", None), getattr(q, "object_id", None)
    if ida is not None and idb is not None and ida != idb:
        raise ValueError(f"cannot compare parts of {ida!r} and {idb!r}")
    sp, sq = _summary(p), _summary(q)
    reg = cfg.regularizer
    cp, cq = sp.cov + reg, sq.cov + reg
    c = (cp + cq) / 2.0
    d = sp.mean - sq.mean
    _, ld = np.linalg.slogdet(c)
    _, ldp = np.linalg.slogdet(cp)
    _, ldq = np.linalg.slogdet(cq)
    dist = d @ np.linalg.solve(c, d) / 8.0 + 0.5 * (ld - 0.5 * (ldp + ldq))
    return float(np.exp(-max(dist, 0.0)))


def kernel_matrix(items, cfg: KernelConfig = KernelConfig()):
    n = len(items)
    K = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            K[i, j] = K[j, i] = bhattacharyya_kernel(items[i], items[j], cfg)
    return K


def spectral_labels(K, n_clusters, rng):
    """Normalized spectral clustering of an affinity matrix into ``n_clusters``."""
    n = len(K)
    if n_clusters <= 1:
        return np.zeros(n, dtype=int)
    deg = K.sum(axis=1)
    dinv = 1.0 / np.sqrt(deg)
    A = dinv[:, None] * K * dinv[None, :]
    _, vecs = np.linalg.eigh(A)                   # ascending; top eigvecs of A
    U = vecs[:, -n_clusters:]
    U = U / np.maximum(np.linalg.norm(U, axis=1, keepdims=True), 1e-12)
    best, best_inertia = None, np.inf
    for _ in range(KMEANS_RESTARTS):
        centers, labels = kmeans2(U, n_clusters, minit="++", seed=rng)
        inertia = float(np.sum((U - centers[labels]) ** 2))
        if inertia < best_inertia - 1e-12:
            best, best_inertia = labels, inertia
    # Relabel clusters by first appearance so the output is canonical.
    _, first = np.unique(best, return_index=True)
    order = {lab: r for r, lab in enumerate(best[np.sort(first)])}
    return np.array([order[lab] for lab in best])


def clustering_score(K, labels):
    """Mean intra-cluster kernel minus mean inter-cluster kernel (off-diagonal pairs)."""
    same = labels[:, None] == labels[None, :]
    off = ~np.eye(len(K), dtype=bool)
    intra = K[same & off]
    inter = K[~same]
    return (intra.mean() if intra.size else 0.0) - (inter.mean() if inter.size else 0.0)


def cluster_part_estimates(estimates, pointset: PointSet = None, cfg: KernelConfig =
                           KernelConfig(), rng=None):
    """Merge part estimates of one object into parts.

    Cluster counts 1..min(8, n) are tried and the one with the best
    intra-minus-inter kernel score is kept. A part holds the points found in
    a strict majority of its cluster's estimates; a point claimed by several
    clusters goes to the one where it is most frequent. Returns a list of
    Parts (when ``pointset`` is given) or of sorted member-index arrays.
    """
    if not estimates:
        raise ValueError("need at least one part estimate")
    ids = {e.object_id for e in estimates}
    if len(ids) != 1:
        raise ValueError(f"estimates come from several objects: {sorted(ids)}")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    K = kernel_matrix(estimates, cfg)
    n = len(estimates)
    best_labels, best_score = np.zeros(n, dtype=int), clustering_score(K, np.zeros(n, int))
    for c in range(2, min(MAX_CLUSTERS, n) + 1):
        labels = spectral_labels(K, c, rng)
        if len(np.unique(labels)) < c:
            continue
        score = clustering_score(K, labels)
        if score > best_score + 1e-12:
            best_labels, best_score = labels, score

    freq = {}
    for c in np.unique(best_labels):
        members = [estimates[i].member_indices for i in np.flatnonzero(best_labels == c)]
        counts = Counter(np.concatenate(members).tolist())
        freq[c] = {p: k / len(members) for p, k in counts.items() if 2 * k > len(members)}
    owner = {}
    for c in sorted(freq):
        for p, f in freq[c].items():
            if p not in owner or f > freq[owner[p]][p]:
                owner[p] = c
    parts = []
    for c in sorted(freq):
        pts = np.array(sorted(p for p, o in owner.items() if o == c), dtype=np.int64)
        if pts.size:
            parts.append(pts)
    if pointset is None:
        return parts
    return [Part.from_members(pointset, pts) for pts in parts]


@dataclass(frozen=True)
class MatchResult:
    aligned: list            # per demo: list of parts in prototype order
    prototype: int
    flags: list              # per demo: list of bools, True where a part was substituted


def match_parts_across_demos(per_demo_parts, cfg: KernelConfig = KernelConfig()) -> MatchResult:
    """Align every demonstration's parts of one object to a prototype demonstration.

    The prototype is the first demonstration with the modal part count. Other
    demonstrations are assigned greedily by largest kernel; surplus parts are
    dropped and missing ones replaced by the most similar available part
    (flagged).
    """
    if not per_demo_parts:
        raise ValueError("need at least one demonstration")
    counts = [len(p) for p in per_demo_parts]
    mode = Counter(counts).most_common()
    top = max(c for _, c in mode)
    mode_count = max(k for k, c in mode if c == top)
    proto = counts.index(mode_count)
    assert counts[proto] == mode_count
    ref = per_demo_parts[proto]
    aligned, flags = [], []
    for d, parts in enumerate(per_demo_parts):
        if d == proto:
            aligned.append(list(ref))
            flags.append([False] * len(ref))
            continue
        if not parts:
            aligned.append(list(ref))
            flags.append([True] * len(ref))
            continue
        S = np.array([[bhattacharyya_kernel(r, p, cfg) for p in parts] for r in ref])
        assign = [None] * len(ref)
        free_r, free_p = set(range(len(ref))), set(range(len(parts)))
        order = np.dstack(np.unravel_index(np.argsort(-S, axis=None, kind="stable"),
                                           S.shape))[0]
        for r, p in order:
            if r in free_r and p in free_p:
                assign[r] = p
                free_r.discard(r)
                free_p.discard(p)
            if not free_r or not free_p:
                break
        row, flag = [], []
        for r in range(len(ref)):
            if assign[r] is None:
                row.append(parts[int(np.argmax(S[r]))])
                flag.append(True)
            else:
                row.append(parts[assign[r]])
                flag.append(False)
        aligned.append(row)
        flags.append(flag)
    return MatchResult(aligned, proto, flags)
