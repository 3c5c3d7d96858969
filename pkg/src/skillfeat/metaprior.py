"""Meta prior: logistic regression from meta features to feature relevance.

Trained on previously learned skills, it turns the meta features of a new
skill's features into prior relevance probabilities for the sampler.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .ssvs import RelevancePrior


class MetaPriorError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledSkill:
    """A previously learned skill: meta features and relevance labels.

    ``meta`` has shape (n_demos, n_components, M, H); ``labels`` (n_components, M).
    """
    skill_id: str
    meta: np.ndarray
    labels: np.ndarray
    group: str = None

    def __post_init__(self):
        meta = np.asarray(self.meta, dtype=float)
        labels = np.asarray(self.labels, dtype=bool)
        if meta.ndim != 4 or meta.shape[1:3] != labels.shape:
            raise MetaPriorError(
                f"meta {meta.shape} does not match labels {labels.shape}")
        object.__setattr__(self, "meta", meta)
        object.__setattr__(self, "labels", labels)
        if self.group is None:
            object.__setattr__(self, "group", self.skill_id)

    def rows(self):
        """One row per (component, feature): demo-averaged meta features and label."""
        X = self.meta.mean(axis=0).reshape(-1, self.meta.shape[-1])
        return X, self.labels.ravel()


@dataclass(frozen=True)
class MetaTrainingSet:
    X: np.ndarray
    y: np.ndarray
    source: tuple

    def __len__(self):
        return len(self.y)


@dataclass(frozen=True)
class MetaPrior:
    theta: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    l2: float = 1e-3
    converged: bool = True
    iterations: int = 0
    summary: dict = field(default_factory=dict)
    history: tuple = ()

    def logits(self, meta):
        Z = (np.asarray(meta, dtype=float) - self.mean) / self.scale
        return Z @ self.theta

    def probabilities(self, meta):
        return expit(self.logits(meta))

    def to_dict(self):
        return {"theta": self.theta.tolist(), "mean": self.mean.tolist(),
                "scale": self.scale.tolist(), "l2": self.l2, "converged": self.converged,
                "iterations": self.iterations, "training_summary": dict(self.summary)}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["theta"], float), np.asarray(d["mean"], float),
                   np.asarray(d["scale"], float), float(d["l2"]), bool(d["converged"]),
                   int(d["iterations"]), dict(d.get("training_summary", {})))


def _eligible(skills, exclude):
    exclude = set(exclude or ())
    return [s for s in skills if s.skill_id not in exclude and s.group not in exclude]


def build_training_set(prior_skills, exclude=(), seed=0) -> MetaTrainingSet:
    """Balanced subsample: half the positives and as many negatives.

    Skills whose id or group appears in ``exclude`` are left out.
    """
    skills = _eligible(prior_skills, exclude)
    if not skills:
        raise MetaPriorError("no skills left after exclusion")
    Xs, ys, src = [], [], []
    for s in skills:
        X, y = s.rows()
        Xs.append(X)
        ys.append(y)
        src.extend([s.skill_id] * len(y))
    X, y, src = np.vstack(Xs), np.concatenate(ys), np.array(src)
    pos, neg = np.flatnonzero(y), np.flatnonzero(~y)
    if len(pos) == 0:
        raise MetaPriorError("no positive examples in the meta training pool")
    if len(neg) == 0:
        raise MetaPriorError("no negative examples in the meta training pool")
    rng = np.random.default_rng(seed)
    n = max(1, len(pos) // 2)
    take_pos = rng.choice(pos, size=n, replace=False)
    take_neg = rng.choice(neg, size=min(n, len(neg)), replace=False)
    idx = np.sort(np.concatenate([take_pos, take_neg]))
    return MetaTrainingSet(X[idx], y[idx], tuple(src[idx]))


def _log_posterior(theta, X, y, penalty):
    z = X @ theta
    return float(np.sum(y * z - np.logaddexp(0.0, z)) - 0.5 * np.sum(penalty * theta**2))


def train_irls(ts: MetaTrainingSet, l2=1e-3, max_iter=100, tol=1e-8, standardize=True,
               bias_index=-1) -> MetaPrior:
    """Penalized logistic regression by Newton / IRLS with step halving.

    The bias column (``bias_index``) is unpenalized. With ``standardize``,
    non-constant columns are z-scored first and the scalers stored in the
    returned prior. ``history`` records the penalized log-likelihood after
    every iteration; it never decreases.
    """
    X = np.asarray(ts.X, dtype=float)
    y = np.asarray(ts.y, dtype=float)
    if len(y) == 0:
        raise MetaPriorError("empty training set")
    H = X.shape[1]
    mean, scale = np.zeros(H), np.ones(H)
    if standardize:
        sd = X.std(axis=0)
        varying = sd > 1e-12 * (1.0 + np.abs(X.mean(axis=0)))
        mean[varying] = X.mean(axis=0)[varying]
        scale[varying] = sd[varying]
    Z = (X - mean) / scale
    penalty = np.full(H, float(l2))
    if bias_index is not None:
        penalty[bias_index] = 0.0

    theta = np.zeros(H)
    obj = _log_posterior(theta, Z, y, penalty)
    history = [obj]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        p = expit(Z @ theta)
        grad = Z.T @ (y - p) - penalty * theta
        if np.linalg.norm(grad) < tol:
            converged = True
            it -= 1
            break
        hess = (Z * (p * (1 - p))[:, None]).T @ Z + np.diag(penalty)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError as exc:
            raise MetaPriorError("IRLS system is singular") from exc
        t = 1.0
        for _ in range(60):
            cand = theta + t * step
            cand_obj = _log_posterior(cand, Z, y, penalty)
            if cand_obj >= obj:
                break
            t *= 0.5
        else:
            cand, cand_obj = theta, obj
        theta, obj = cand, cand_obj
        history.append(obj)
    else:
        p = expit(Z @ theta)
        converged = np.linalg.norm(Z.T @ (y - p) - penalty * theta) < tol

    n_pos = int(y.sum())
    summary = {"n_positive": n_pos, "n_negative": int(len(y) - n_pos),
               "sources": sorted(set(ts.source))}
    return MetaPrior(theta, mean, scale, float(l2), bool(converged), it, summary,
                     tuple(history))


def compute_prior(meta: MetaPrior, demo_meta) -> RelevancePrior:
    """Average the per-demonstration sigmoid priors; ``demo_meta`` is (n_demos, M, H)."""
    demo_meta = np.asarray(demo_meta, dtype=float)
    if demo_meta.ndim == 2:
        demo_meta = demo_meta[None]
    return RelevancePrior(meta.probabilities(demo_meta).mean(axis=0))


def relevant_fraction(prior_skills):
    total = sum(s.labels.size for s in prior_skills)
    if total == 0:
        raise MetaPriorError("no labels available")
    return sum(int(s.labels.sum()) for s in prior_skills) / total


def uniform_prior(prior_skills, M) -> RelevancePrior:
    """Same probability for every feature: the relevant fraction of prior labels."""
    return RelevancePrior.constant(relevant_fraction(prior_skills), M)
