"""Deterministic kernels of the driven linear SDE.

For ``dX = A X dt + h dW`` the response of the system at time ``t`` to a unit
input at time ``u <= t`` is ``f_t(u) = expm(A (t - u)) h``.  Everything the
conditionally Gaussian transition needs is built from this kernel:

* ``jump_mean`` / ``jump_cov``: sums of the kernel (and its outer product)
  over the latent jumps of an interval,
* the interval integral of the kernel, which yields the drift compensator,
* the Gram integral of the kernel, which yields the covariance of a
  Brownian-driven copy of the system and hence the truncation-residual
  covariance.

The two-dimensional Langevin system (position integrating a mean-reverting
velocity) admits closed forms for all of these; generic systems use the
matrix exponential, with interval integrals evaluated exactly through
augmented (block) matrix exponentials.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .stable import JumpSet, StableParams

# Langevin closed forms divide by theta and theta**2.
MIN_THETA = 1e-6


def mat_exp(A: np.ndarray, t: float) -> np.ndarray:
    """Matrix exponential ``expm(A t)`` by scaling and squaring."""
    return scipy.linalg.expm(np.asarray(A, dtype=float) * t)


class LinearSDE:
    """Generic linear system ``dX = A X dt + h dW``."""

    def __init__(self, A: np.ndarray, h: np.ndarray):
        A = np.asarray(A, dtype=float)
        h = np.asarray(h, dtype=float).reshape(-1)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be a square matrix")
        if h.shape[0] != A.shape[0]:
            raise ValueError("h must match the dimension of A")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(h))):
            raise ValueError("system matrices must be finite")
        self.A = A
        self.h = h
        self.dim = h.shape[0]

    def expm(self, t: float) -> np.ndarray:
        return mat_exp(self.A, t)

    def ft(self, t: float, u: float) -> np.ndarray:
        """Kernel ``f_t(u)``: response at ``t`` to a unit jump at ``u``."""
        if u > t:
            return np.zeros(self.dim)
        return self.expm(t - u) @ self.h

    def ft_many(self, t: float, us: np.ndarray) -> np.ndarray:
        """Kernel columns ``f_t(u_i)`` for several input times, shape (P, n)."""
        us = np.asarray(us, dtype=float)
        out = np.empty((self.dim, us.size))
        for i, u in enumerate(us):
            out[:, i] = self.ft(t, float(u))
        return out

    def int_ft(self, s: float, t: float) -> np.ndarray:
        """Interval integral of the kernel over ``(s, t]``.

        Evaluated exactly via the augmented block exponential
        ``expm([[A, h], [0, 0]] * dt)`` whose top-right block is the integral.
        """
        delta = t - s
        if delta == 0.0:
            return np.zeros(self.dim)
        aug = np.zeros((self.dim + 1, self.dim + 1))
        aug[: self.dim, : self.dim] = self.A
        aug[: self.dim, self.dim] = self.h
        return scipy.linalg.expm(aug * delta)[: self.dim, self.dim]

    def gram_cov(self, s: float, t: float) -> np.ndarray:
        """Gram integral of the kernel over ``(s, t]``.

        This is the state covariance the same system would accumulate under
        a unit Brownian drive.  Evaluated by the Van Loan block-exponential
        identity.
        """
        delta = t - s
        if delta == 0.0:
            return np.zeros((self.dim, self.dim))
        P = self.dim
        aug = np.zeros((2 * P, 2 * P))
        aug[:P, :P] = -self.A
        aug[:P, P:] = np.outer(self.h, self.h)
        aug[P:, P:] = self.A.T
        big = scipy.linalg.expm(aug * delta)
        cov = big[P:, P:].T @ big[:P, P:]
        return 0.5 * (cov + cov.T)


class LangevinSDE(LinearSDE):
    """P = 2 system: position integrates a mean-reverting velocity.

    ``theta`` is the strictly negative reversion rate of the velocity.
    All kernel quantities have closed forms in ``exp(theta dt)``.
    """

    def __init__(self, theta: float):
        if not theta < 0.0:
            raise ValueError(f"theta must be strictly negative, got {theta}")
        if abs(theta) < MIN_THETA:
            raise ValueError(f"|theta| must be at least {MIN_THETA}, got {theta}")
        super().__init__(np.array([[0.0, 1.0], [0.0, theta]]), np.array([0.0, 1.0]))
        self.theta = float(theta)

    def expm(self, t: float) -> np.ndarray:
        th = self.theta
        return np.array([[1.0, math.expm1(th * t) / th], [0.0, math.exp(th * t)]])

    def ft(self, t: float, u: float) -> np.ndarray:
        if u > t:
            return np.zeros(2)
        th = self.theta
        e = math.exp(th * (t - u))
        return np.array([(e - 1.0) / th, e])

    def ft_many(self, t: float, us: np.ndarray) -> np.ndarray:
        th = self.theta
        e = np.exp(th * (t - np.asarray(us, dtype=float)))
        return np.vstack([(e - 1.0) / th, e])

    def int_ft(self, s: float, t: float) -> np.ndarray:
        th = self.theta
        delta = t - s
        em1 = math.expm1(th * delta)
        return np.array([em1 / th**2 - delta / th, em1 / th])

    def gram_cov(self, s: float, t: float) -> np.ndarray:
        th = self.theta
        delta = t - s
        c1 = math.expm1(2.0 * th * delta) / (2.0 * th)
        c2 = math.expm1(th * delta) / th
        m1 = np.array([[1.0 / th**2, 1.0 / th], [1.0 / th, 1.0]])
        m2 = np.array([[-2.0 / th**2, -1.0 / th], [-1.0 / th, 0.0]])
        m3 = np.array([[1.0 / th**2, 0.0], [0.0, 0.0]])
        return c1 * m1 + c2 * m2 + delta * m3


def ft_kernel(sde: LinearSDE, t: float, u: float) -> np.ndarray:
    """Kernel ``f_t(u)``; zero vector for ``u > t``."""
    return sde.ft(t, u)


def mean_ft(sde: LinearSDE, s: float, t: float) -> np.ndarray:
    """Average of the kernel over an interval: ``int_ft(s, t) / (t - s)``.

    This is the expectation of ``f_t(V)`` under a uniform jump time ``V``,
    the normalisation under which the compensator identity is exact.
    """
    if not s < t:
        raise ValueError(f"interval must satisfy s < t, got ({s}, {t})")
    return sde.int_ft(s, t) / (t - s)


def gaussian_sde_cov(sde: LinearSDE, s: float, t: float) -> np.ndarray:
    """Covariance of the Brownian-driven system over ``(s, t]``."""
    if s > t:
        raise ValueError(f"interval must satisfy s <= t, got ({s}, {t})")
    return sde.gram_cov(s, t)


def compute_m_S(
    jumps: JumpSet, sde: LinearSDE, params: StableParams
) -> tuple[np.ndarray, np.ndarray]:
    """Jump-conditional mean and covariance kernels of one interval.

    With jump magnitudes ``w_i = gamma_i**(-1/alpha)`` and kernel columns
    ``f_i = f_t(v_i)``:

        mean = dt**(1/alpha)  * sum_i w_i    f_i
        cov  = dt**(2/alpha)  * sum_i w_i**2 f_i f_i^T

    The driving-mark mean and variance are *not* applied here; the caller
    scales by ``mu_w`` and ``sigma_w**2`` (or marginalises them).
    """
    s, t = jumps.interval
    delta = t - s
    P = sde.dim
    if len(jumps) == 0:
        return np.zeros(P), np.zeros((P, P))
    w = jumps.gammas ** (-1.0 / params.alpha)
    F = sde.ft_many(t, jumps.times)
    m = delta ** (1.0 / params.alpha) * (F @ w)
    Fw = F * w
    S = delta ** (2.0 / params.alpha) * (Fw @ Fw.T)
    return m, 0.5 * (S + S.T)


def unit_compensator(
    sde: LinearSDE, params: StableParams, s: float, t: float
) -> np.ndarray:
    """Drift correction per unit mark mean.

    Zero for tail indices below one; otherwise
    ``alpha/(alpha-1) * c**(1-1/alpha) * int_ft(s, t)``.  Multiplying by
    ``mu_w`` gives the full compensator, and the expectation of the
    jump-mean kernel times ``mu_w`` equals it exactly.
    """
    if not s < t:
        raise ValueError(f"interval must satisfy s < t, got ({s}, {t})")
    if params.alpha <= 1.0:
        return np.zeros(sde.dim)
    a = params.alpha
    rate = (a / (a - 1.0)) * params.c ** (1.0 - 1.0 / a)
    return rate * sde.int_ft(s, t)


def drift_compensator(
    sde: LinearSDE, params: StableParams, s: float, t: float
) -> np.ndarray:
    """Full drift compensator; zero when ``alpha < 1`` or ``mu_w = 0``."""
    return params.mu_w * unit_compensator(sde, params, s, t)


def residual_cov_bare(
    sde: LinearSDE, params: StableParams, s: float, t: float
) -> np.ndarray:
    """Covariance of the neglected small-jump tail, without the mark factor.

    ``alpha/(2-alpha) * c**(1-2/alpha) * gram_cov(s, t)``; the caller
    multiplies by the mark second moment appropriate to the approximation
    in use.  Note the residual mean is treated as zero even for tail
    indices below one with skewed marks, where it is strictly nonzero; the
    neglected bias vanishes as ``c`` grows.
    """
    if not s <= t:
        raise ValueError(f"interval must satisfy s <= t, got ({s}, {t})")
    a = params.alpha
    return (a / (2.0 - a)) * params.c ** (1.0 - 2.0 / a) * sde.gram_cov(s, t)


@dataclass(frozen=True)
class TransitionStats:
    """Per-interval sufficient statistics of the conditionally Gaussian step.

    ``jump_mean`` and ``jump_cov`` depend on the latent jumps;
    ``unit_compensator`` and ``residual_cov_bare`` are deterministic given
    the interval.
    """

    interval: tuple[float, float]
    jump_mean: np.ndarray
    jump_cov: np.ndarray
    unit_compensator: np.ndarray
    residual_cov_bare: np.ndarray


def transition_stats(
    jumps: JumpSet, sde: LinearSDE, params: StableParams
) -> TransitionStats:
    """Assemble all per-interval statistics for one jump set."""
    s, t = jumps.interval
    m, S = compute_m_S(jumps, sde, params)
    return TransitionStats(
        interval=(s, t),
        jump_mean=m,
        jump_cov=S,
        unit_compensator=unit_compensator(sde, params, s, t),
        residual_cov_bare=residual_cov_bare(sde, params, s, t),
    )
