"""Diagonal-covariance Gaussian mixtures fit by EM.

Warm starts matter here: GrabCut's energy is guaranteed not to increase only
if each refit starts from the previous parameters, since EM never lowers the
likelihood from its starting point. The variance floor is applied inside the
M-step, which keeps it a constrained maximizer.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.special import logsumexp

VAR_FLOOR = 1e-6
_LOG2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class DiagGMM:
    weights: np.ndarray     # (C,)
    means: np.ndarray       # (C, D)
    variances: np.ndarray   # (C, D)

    @property
    def n_components(self):
        return len(self.weights)

    def component_log_pdf(self, X):
        X = np.asarray(X, dtype=float)
        diff = X[:, None, :] - self.means[None]
        return -0.5 * (np.sum(diff**2 / self.variances, axis=2)
                       + np.sum(np.log(self.variances), axis=1) + X.shape[1] * _LOG2PI)

    def log_pdf(self, X):
        return logsumexp(self.component_log_pdf(X) + np.log(self.weights), axis=1)


def _m_step(X, resp, floor):
    nk = resp.sum(axis=0)
    keep = nk > 1e-10 * len(X)
    resp, nk = resp[:, keep], nk[keep]
    means = resp.T @ X / nk[:, None]
    var = resp.T @ X**2 / nk[:, None] - means**2
    return DiagGMM(nk / nk.sum(), means, np.maximum(var, floor))


def init_gmm(X, n_components, rng, floor=VAR_FLOOR):
    X = np.asarray(X, dtype=float)
    c = max(1, min(n_components, len(np.unique(X, axis=0))))
    if c == 1:
        labels = np.zeros(len(X), dtype=int)
    else:
        _, labels = kmeans2(X, c, minit="++", seed=rng)
    resp = np.zeros((len(X), c))
    resp[np.arange(len(X)), labels] = 1.0
    return _m_step(X, resp, floor)


def fit_gmm(X, n_components=3, init: DiagGMM = None, rng=None, max_iter=25, tol=1e-6,
            floor=VAR_FLOOR):
    """EM from ``init`` (or a k-means start). Returns ``(gmm, total_log_likelihood)``."""
    X = np.asarray(X, dtype=float)
    gmm = init if init is not None else init_gmm(X, n_components, rng, floor)
    ll = float(gmm.log_pdf(X).sum())
    for _ in range(max_iter):
        log_r = gmm.component_log_pdf(X) + np.log(gmm.weights)
        log_r -= logsumexp(log_r, axis=1, keepdims=True)
        gmm = _m_step(X, np.exp(log_r), floor)
        new_ll = float(gmm.log_pdf(X).sum())
        done = abs(new_ll - ll) <= tol * abs(ll)
        ll = new_ll
        if done:
            break
    return gmm, ll
