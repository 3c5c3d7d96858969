"""Feature-linear dynamic motor primitives.

One skill component evolves as::

    y'' = az * (bz * tau**-2 * (y0 - y) - tau**-1 * y') + tau**-2 * sum_j phi_j f(x; w_j)
    f(x; w_j) = az * bz * (sum_k psi_k(x) w_jk x / sum_k psi_k(x) + w_j0 psi_0(x))

with canonical state ``x = exp(-tau t)``. The goal is not a parameter: it is
absorbed into the features, and the system settles at
``y0 + sum_j phi_j w_j0``. Weight matrices are stored as ``W[j, k]`` with
column 0 holding the goal weights and columns 1..K the Gaussian weights.

Because the forcing is linear in both features and weights, a whole skill
component integrates with the effective weight vector ``W.T @ phi``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

BASIS_OVERLAP = 0.55


class DmpError(ValueError):
    pass


@dataclass(frozen=True)
class DmpConfig:
    alpha_z: float = 25.0
    beta_z: float = 6.25
    tau: float = math.log(100.0)
    K: int = 5
    x_cutoff: float = 0.01

    def __post_init__(self):
        if self.alpha_z <= 0 or self.beta_z <= 0 or self.tau <= 0:
            raise DmpError("alpha_z, beta_z and tau must be positive")
        if self.K < 1:
            raise DmpError("need at least one Gaussian basis")
        if not 0 < self.x_cutoff < 1:
            raise DmpError("x_cutoff must lie in (0, 1)")

    @classmethod
    def for_movement(cls, duration, **kw):
        """Config whose canonical state reaches ``x_cutoff`` after ``duration`` seconds."""
        x_cutoff = kw.get("x_cutoff", cls.x_cutoff)
        return cls(tau=math.log(1.0 / x_cutoff) / duration, **kw)

    @property
    def n_weights(self):
        return self.K + 1

    @property
    def movement_time(self):
        return math.log(1.0 / self.x_cutoff) / self.tau

    @property
    def settle_time(self):
        """Time after which both the canonical state and the spring have died out.

        ``exp(-tau t) < 1e-7`` and ``(1 + w t) exp(-w t) < 1e-9`` for the natural
        frequency ``w = sqrt(az bz) / tau`` of the critically damped spring.
        """
        omega = math.sqrt(self.alpha_z * self.beta_z) / self.tau
        return max(16.2 / self.tau, 24.0 / omega)

    def to_dict(self):
        return {"alpha_z": self.alpha_z, "beta_z": self.beta_z, "tau": self.tau,
                "K": self.K, "x_cutoff": self.x_cutoff}


def canonical_state(t, cfg: DmpConfig):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DmpError("canonical state is defined for t >= 0")
    return np.exp(-cfg.tau * t)


def phase(x, cfg: DmpConfig):
    """Normalized movement phase ``s = clip(ln x / ln x_cutoff, 0, 1)``."""
    x = np.asarray(x, dtype=float)
    return np.clip(np.log(x) / math.log(cfg.x_cutoff), 0.0, 1.0)


def min_jerk(s):
    s = np.asarray(s, dtype=float)
    return s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


def basis_centers(cfg: DmpConfig):
    return np.linspace(0.0, 1.0, cfg.K) if cfg.K > 1 else np.array([0.5])


def basis_width(cfg: DmpConfig):
    # Neighbouring Gaussians cross at BASIS_OVERLAP, halfway between centers.
    spacing = 1.0 / (cfg.K - 1) if cfg.K > 1 else 1.0
    return -math.log(BASIS_OVERLAP) / (spacing / 2.0) ** 2


def basis_activations(x, cfg: DmpConfig):
    """Return ``(psi, psi0)``: Gaussian activations (..., K) and the min-jerk basis."""
    s = phase(x, cfg)
    psi = np.exp(-basis_width(cfg) * (s[..., None] - basis_centers(cfg)) ** 2)
    return psi, min_jerk(s)


def forcing_design(x, cfg: DmpConfig, psi0=None):
    """Regressors of the forcing function: ``f(x; w) = forcing_design(x) @ w``.

    Column 0 is ``az bz psi_0(x)``; columns 1..K are ``az bz psi_k(x) x / sum psi``.
    ``psi0`` overrides the min-jerk basis (a constant 1 gives the classic DMP).
    """
    x = np.asarray(x, dtype=float)
    psi, mj = basis_activations(x, cfg)
    if psi0 is not None:
        mj = np.broadcast_to(np.asarray(psi0, dtype=float), mj.shape)
    gauss = psi * (x / psi.sum(axis=-1))[..., None]
    return cfg.alpha_z * cfg.beta_z * np.concatenate([mj[..., None], gauss], axis=-1)


def forcing(x, w_j, cfg: DmpConfig):
    w_j = np.asarray(w_j, dtype=float)
    if w_j.shape[-1] != cfg.n_weights:
        raise DmpError(f"weight row must have {cfg.n_weights} entries")
    return forcing_design(x, cfg) @ w_j


def effective_weights(features, W):
    """Collapse features and a weight matrix (M, K+1) into one forcing weight vector."""
    phi = np.atleast_1d(np.asarray(features, dtype=float))
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W[None, :]
    if W.shape[0] != phi.shape[-1]:
        raise DmpError(f"{phi.shape[-1]} features but {W.shape[0]} weight rows")
    return phi @ W


def _rk4(y0, force, cfg, dt, n_steps, attractor=None):
    """Integrate from rest. ``force`` holds tau**-2 * F sampled every dt/2."""
    az, bz, tau = cfg.alpha_z, cfg.beta_z, cfg.tau
    stiff = az * bz / tau**2
    damp = az / tau
    anchor = y0 if attractor is None else attractor
    y = np.array(y0, dtype=float)
    v = np.zeros_like(y)
    ys = np.empty((n_steps + 1,) + y.shape)
    ys[0] = y

    def acc(yy, vv, f):
        return stiff * (anchor - yy) - damp * vv + f

    for n in range(n_steps):
        f0, fh, f1 = force[2 * n], force[2 * n + 1], force[2 * n + 2]
        k1y, k1v = v, acc(y, v, f0)
        k2y, k2v = v + 0.5 * dt * k1v, acc(y + 0.5 * dt * k1y, v + 0.5 * dt * k1v, fh)
        k3y, k3v = v + 0.5 * dt * k2v, acc(y + 0.5 * dt * k2y, v + 0.5 * dt * k2v, fh)
        k4y, k4v = v + dt * k3v, acc(y + dt * k3y, v + dt * k3v, f1)
        y = y + dt / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y)
        v = v + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        ys[n + 1] = y
    if not np.all(np.isfinite(ys)):
        bad = int(np.argmax(~np.all(np.isfinite(ys.reshape(len(ys), -1)), axis=1)))
        raise DmpError(f"integration diverged at step {bad} (t = {bad * dt:.4g} s)")
    return ys


def _time_grid(duration, dt):
    if dt <= 0 or duration <= 0:
        raise DmpError("duration and dt must be positive")
    n_steps = int(round(duration / dt))
    return n_steps, dt * np.arange(n_steps + 1)


def integrate(y0, features, W, cfg: DmpConfig, duration=None, dt=0.01, psi0=None):
    """Roll out one skill component (or several, with array ``y0``) with RK4.

    ``W`` is (M, K+1) paired with ``features`` of length M, or an already
    collapsed weight vector (..., K+1) when ``features`` is None. Starts at
    rest. Returns ``(times, y)``.
    """
    if duration is None:
        duration = cfg.settle_time
    w_eff = np.asarray(W, dtype=float) if features is None else effective_weights(features, W)
    n_steps, times = _time_grid(duration, dt)
    half = 0.5 * dt * np.arange(2 * n_steps + 1)
    design = forcing_design(canonical_state(half, cfg), cfg, psi0=psi0)   # (2n+1, K+1)
    force = np.einsum("tk,...k->t...", design, w_eff) / cfg.tau**2
    y0 = np.asarray(y0, dtype=float)
    return times, _rk4(np.broadcast_to(y0, force.shape[1:]).copy(), force, cfg, dt, n_steps)


def integrate_goal_dmp(y0, goal, cfg: DmpConfig, duration=None, dt=0.01):
    """Classic goal-attractor DMP without forcing: ``y'' = az (bz tau^-2 (g - y) - tau^-1 y')``."""
    if duration is None:
        duration = cfg.settle_time
    n_steps, times = _time_grid(duration, dt)
    y0 = np.asarray(y0, dtype=float)
    force = np.zeros((2 * n_steps + 1,) + y0.shape)
    return times, _rk4(y0, force, cfg, dt, n_steps, attractor=np.asarray(goal, dtype=float))


def predict_goal(y0, features, W):
    """Settling point ``y0 + sum_j phi_j w_j0`` of the feature-linear DMP."""
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W[None, :]
    return float(y0 + effective_weights(features, W[:, :1])[0])


def rescale_trajectory(times, values, duration, n_samples=None):
    """Stretch a trajectory in time so it lasts ``duration`` seconds.

    Samples are placed on a uniform grid (same count unless ``n_samples`` is
    given) through a cubic spline of the original samples.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    n = len(t) if n_samples is None else int(n_samples)
    u = (t - t[0]) / (t[-1] - t[0])
    grid = np.linspace(0.0, 1.0, n)
    return grid * duration, CubicSpline(u, v, axis=0)(grid)


def _is_uniform(t):
    d = np.diff(t)
    return np.allclose(d, d.mean(), rtol=1e-9, atol=1e-12)


def finite_differences(y, h):
    """First and second derivatives on a uniform grid, second-order accurate.

    Interior points use 3-point central stencils; the two endpoints use
    one-sided stencils.
    """
    y = np.asarray(y, dtype=float)
    if len(y) < 4:
        raise DmpError("need at least 4 samples for finite differences")
    yd = np.gradient(y, h, edge_order=2)
    ydd = np.empty_like(y)
    ydd[1:-1] = (y[2:] - 2.0 * y[1:-1] + y[:-2]) / h**2
    ydd[0] = (2.0 * y[0] - 5.0 * y[1] + 4.0 * y[2] - y[3]) / h**2
    ydd[-1] = (2.0 * y[-1] - 5.0 * y[-2] + 4.0 * y[-3] - y[-4]) / h**2
    return yd, ydd


def extract_targets(times, y, cfg: DmpConfig, ridge=1e-8):
    """Target shape parameters of one demonstrated component.

    These are the weights a DMP with the single constant feature ``phi = 1``
    needs to reproduce the demonstration: the forcing implied by the demo,
    ``tau^2 y'' - az (bz (y0 - y) - tau y')``, is regressed onto the basis.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(t) != len(y):
        raise DmpError("times and values differ in length")
    if len(t) < 5 * cfg.n_weights:
        raise DmpError(f"need at least {5 * cfg.n_weights} samples, got {len(t)}")
    if not _is_uniform(t):
        t, y = rescale_trajectory(t, y, t[-1] - t[0])
    t = t - t[0]
    h = t[1] - t[0]
    yd, ydd = finite_differences(y, h)
    az, bz, tau = cfg.alpha_z, cfg.beta_z, cfg.tau
    f_target = tau**2 * ydd - az * (bz * (y[0] - y) - tau * yd)
    X = forcing_design(canonical_state(t, cfg), cfg)
    A = X.T @ X + ridge * np.eye(cfg.n_weights)
    return np.linalg.solve(A, X.T @ f_target)
