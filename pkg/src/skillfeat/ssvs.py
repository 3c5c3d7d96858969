"""Stochastic search variable selection with a per-feature relevance prior.

Model for one skill component, with features ``Phi`` (M x N) and target
shape parameters ``Wt`` (N x K+1)::

    gamma_j  ~ Bern(p1_j)
    w_jk     ~ N(0, slab_var)  if gamma_j else N(0, spike_var)
    sigma_k2 ~ Inv-Gamma(a, b)
    Wt[i, k] ~ N(sum_j w_jk Phi[j, i], sigma_k2)

The Gibbs sweep updates W, then sigma2, then gamma. Features are selected by
the majority of post-burn-in relevance samples and their weights refit by
least squares.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

PROB_CLAMP = 1e-6


class SsvsError(ValueError):
    pass


@dataclass(frozen=True)
class SsvsHyper:
    spike_var: float = 0.15**2
    slab_var: float = 50 * 0.15**2
    a: float = 5.0
    b: float = 5.0
    burn_in: int = 200
    samples: int = 1000
    fixed_sigma: tuple = None
    # "conjugate": Inv-Gamma(a + N/2, b + r'r/2); "printed": Inv-Gamma(a, b + 1/(2 r'r))
    sigma_update: str = "conjugate"

    def __post_init__(self):
        if not 0 < self.spike_var < self.slab_var:
            raise SsvsError("need 0 < spike_var < slab_var")
        if self.a <= 0 or self.b <= 0:
            raise SsvsError("inverse-gamma shape and scale must be positive")
        if self.burn_in < 0 or self.samples < 1:
            raise SsvsError("need burn_in >= 0 and samples >= 1")
        if self.sigma_update not in ("conjugate", "printed"):
            raise SsvsError(f"unknown sigma_update {self.sigma_update!r}")
        if self.fixed_sigma is not None:
            fs = tuple(float(s) for s in np.atleast_1d(self.fixed_sigma))
            if any(s <= 0 for s in fs):
                raise SsvsError("fixed_sigma entries must be positive")
            object.__setattr__(self, "fixed_sigma", fs)

    @property
    def initial_sigma2(self):
        return self.b / (self.a - 1.0) if self.a > 1 else self.b

    def to_dict(self):
        return {"spike_var": self.spike_var, "slab_var": self.slab_var, "a": self.a,
                "b": self.b, "burn_in": self.burn_in, "samples": self.samples,
                "fixed_sigma": None if self.fixed_sigma is None else list(self.fixed_sigma),
                "sigma_update": self.sigma_update}


@dataclass(frozen=True)
class RelevancePrior:
    p1: np.ndarray

    def __post_init__(self):
        p = np.clip(np.asarray(self.p1, dtype=float).ravel(), PROB_CLAMP, 1.0 - PROB_CLAMP)
        if not np.all(np.isfinite(p)):
            raise SsvsError("prior probabilities must be finite")
        p.setflags(write=False)
        object.__setattr__(self, "p1", p)

    @classmethod
    def constant(cls, c, M):
        return cls(np.full(M, float(c)))

    def __len__(self):
        return len(self.p1)


@dataclass
class SsvsState:
    gamma: np.ndarray
    W: np.ndarray
    sigma2: np.ndarray


@dataclass
class Chain:
    """Post-burn-in samples, in sweep order."""
    gamma: np.ndarray          # (S, M) bool
    W: np.ndarray              # (S, M, K+1)
    sigma2: np.ndarray         # (S, K+1)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.gamma)

    @property
    def marginals(self):
        return self.gamma.mean(axis=0)


def _check(Phi, Wt):
    Phi = np.asarray(Phi, dtype=float)
    Wt = np.asarray(Wt, dtype=float)
    if Wt.ndim == 1:
        Wt = Wt[:, None]
    if Phi.ndim != 2 or Wt.ndim != 2 or Phi.shape[1] != Wt.shape[0]:
        raise SsvsError(f"Phi {Phi.shape} and targets {Wt.shape} disagree on N")
    return Phi, Wt


def prior_variances(gamma, hyper: SsvsHyper):
    return np.where(np.asarray(gamma, dtype=bool), hyper.slab_var, hyper.spike_var)


def weight_posterior(Phi, wt_k, gamma, sigma2_k, hyper: SsvsHyper):
    """Closed-form conditional of one weight column: returns ``(mean, cov)``.

    mean = (Phi Phi' + sigma2 R^-1)^-1 Phi wt,  cov = (R^-1 + Phi Phi' / sigma2)^-1
    """
    Phi = np.asarray(Phi, dtype=float)
    Rinv = np.diag(1.0 / prior_variances(gamma, hyper))
    G = Phi @ Phi.T
    mean = np.linalg.solve(G + sigma2_k * Rinv, Phi @ np.asarray(wt_k, dtype=float))
    cov = np.linalg.inv(Rinv + G / sigma2_k)
    return mean, (cov + cov.T) / 2.0


def _draw_weights(G, Pw, r, sigma2, rng):
    """Batched draw of all K+1 columns. G = Phi Phi', Pw = Phi Wt (M, K+1)."""
    M = len(r)
    prec = G[None, :, :] / sigma2[:, None, None] + np.einsum("ij,j->ij", np.eye(M), 1.0 / r)[None]
    L = np.linalg.cholesky(prec)                          # (K+1, M, M)
    rhs = (Pw / sigma2).T[..., None]                      # (K+1, M, 1)
    u = np.linalg.solve(L, rhs)
    z = rng.standard_normal((len(sigma2), M, 1))
    Lt = np.swapaxes(L, -1, -2)
    return np.linalg.solve(Lt, u + z)[..., 0].T           # (M, K+1)


def sample_weights(state: SsvsState, Phi, Wt, hyper: SsvsHyper, rng):
    Phi, Wt = _check(Phi, Wt)
    r = prior_variances(state.gamma, hyper)
    try:
        return _draw_weights(Phi @ Phi.T, Phi @ Wt, r, np.asarray(state.sigma2, float), rng)
    except np.linalg.LinAlgError as exc:
        raise SsvsError("weight posterior precision is not positive definite") from exc


def sigma_posterior(residual_ss, N, hyper: SsvsHyper):
    """Inverse-gamma (shape, scale) of the noise variances given residual sums of squares."""
    rss = np.asarray(residual_ss, dtype=float)
    if hyper.sigma_update == "printed":
        with np.errstate(divide="ignore"):
            return np.full_like(rss, hyper.a), hyper.b + 1.0 / (2.0 * rss)
    return np.full_like(rss, hyper.a + N / 2.0), hyper.b + 0.5 * rss


def sample_sigma(state: SsvsState, Phi, Wt, hyper: SsvsHyper, rng):
    Phi, Wt = _check(Phi, Wt)
    if hyper.fixed_sigma is not None:
        return np.broadcast_to(np.asarray(hyper.fixed_sigma), (Wt.shape[1],)).copy()
    resid = Wt - Phi.T @ state.W
    shape, scale = sigma_posterior(np.sum(resid**2, axis=0), Phi.shape[1], hyper)
    return scale / rng.gamma(shape)


def relevance_log_odds(W, prior: RelevancePrior, hyper: SsvsHyper):
    """Posterior log-odds of gamma_j = 1 given the weight rows."""
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    p = prior.p1
    d = W.shape[1]
    sq = np.sum(W**2, axis=1)
    log_lr = (0.5 * d * math.log(hyper.spike_var / hyper.slab_var)
              - 0.5 * sq * (1.0 / hyper.slab_var - 1.0 / hyper.spike_var))
    return np.log(p) - np.log1p(-p) + log_lr


def relevance_probability(W, prior: RelevancePrior, hyper: SsvsHyper):
    return expit(relevance_log_odds(W, prior, hyper))


def sample_relevance(state: SsvsState, prior: RelevancePrior, hyper: SsvsHyper, rng):
    prob = relevance_probability(state.W, prior, hyper)
    return rng.random(len(prob)) < prob


def initial_state(M, n_weights, hyper: SsvsHyper):
    sigma2 = (np.asarray(hyper.fixed_sigma, dtype=float) * np.ones(n_weights)
              if hyper.fixed_sigma is not None else np.full(n_weights, hyper.initial_sigma2))
    return SsvsState(np.ones(M, dtype=bool), np.zeros((M, n_weights)), sigma2)


def run_gibbs(Phi, Wt, prior: RelevancePrior, hyper: SsvsHyper = SsvsHyper(), seed=0):
    """Run one chain from gamma = 1 and return the post-burn-in samples.

    ``seed`` is an int, a SeedSequence or a Generator; the chain is a pure
    function of the inputs and the seed.
    """
    Phi, Wt = _check(Phi, Wt)
    M, N = Phi.shape
    if N < 2:
        raise SsvsError("need at least two demonstrations")
    if len(prior) != M:
        raise SsvsError(f"prior has {len(prior)} entries for {M} features")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n_w = Wt.shape[1]
    state = initial_state(M, n_w, hyper)
    G, Pw = Phi @ Phi.T, Phi @ Wt
    S = hyper.samples
    out_g = np.empty((S, M), dtype=bool)
    out_w = np.empty((S, M, n_w))
    out_s = np.empty((S, n_w))
    fixed = hyper.fixed_sigma is not None
    log_prior_odds = np.log(prior.p1) - np.log1p(-prior.p1)
    log_lr0 = 0.5 * n_w * math.log(hyper.spike_var / hyper.slab_var)
    lr_coef = 0.5 * (1.0 / hyper.spike_var - 1.0 / hyper.slab_var)
    gamma, sigma2 = state.gamma, state.sigma2
    for it in range(hyper.burn_in + S):
        r = np.where(gamma, hyper.slab_var, hyper.spike_var)
        W = _draw_weights(G, Pw, r, sigma2, rng)
        if not fixed:
            resid = Wt - Phi.T @ W
            shape, scale = sigma_posterior(np.sum(resid**2, axis=0), N, hyper)
            sigma2 = scale / rng.gamma(shape)
        logit = log_prior_odds + log_lr0 + lr_coef * np.sum(W**2, axis=1)
        gamma = rng.random(M) < expit(logit)
        if it >= hyper.burn_in:
            s = it - hyper.burn_in
            out_g[s], out_w[s], out_s[s] = gamma, W, sigma2
    return Chain(out_g, out_w, out_s)


def map_relevance(chain):
    """A feature is relevant iff strictly more than half of the samples say so."""
    g = np.asarray(chain.gamma if isinstance(chain, Chain) else chain, dtype=bool)
    if g.ndim != 2 or len(g) == 0:
        raise SsvsError("chain must hold at least one sample")
    return 2 * g.sum(axis=0) > len(g)


def fit_final_weights(Phi, Wt, selected, ridge=1e-8):
    """Least-squares weights on the selected features; other rows stay exactly 0."""
    Phi, Wt = _check(Phi, Wt)
    sel = np.asarray(selected, dtype=bool)
    if sel.shape != (Phi.shape[0],):
        raise SsvsError("selection mask does not match the feature count")
    W = np.zeros((Phi.shape[0], Wt.shape[1]))
    if not sel.any():
        return W
    X = Phi[sel].T                                        # (N, m)
    if np.linalg.matrix_rank(X) == X.shape[1]:
        W[sel] = np.linalg.lstsq(X, Wt, rcond=None)[0]
    else:
        W[sel] = np.linalg.solve(X.T @ X + ridge * np.eye(X.shape[1]), X.T @ Wt)
    return W
