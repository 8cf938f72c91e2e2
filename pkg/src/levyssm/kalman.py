"""Scaled Kalman recursions and closed-form marginalisation of the scale.

The whole recursion runs on covariances divided by the unknown mark
variance, which therefore never appears as an input: beliefs store
``(a, cov_scaled)`` with true covariance ``sigma_w**2 * cov_scaled``.  The
innovations and their scaled covariances feed a running accumulator from
which the marginal likelihood (mark variance integrated out against an
inverted-gamma prior) and the conjugate posterior follow in closed form.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import gammaln

from .ssm import ExtendedTransition, ObservationModel

logger = logging.getLogger(__name__)

# Finite stand-in for an infinite (flat) prior scale on the mark mean.
FLAT_KAPPA = 1e8

LOG_2PI = math.log(2.0 * math.pi)


class DegenerateObservationError(RuntimeError):
    """Innovation covariance is singular and could not be regularised."""


@dataclass(frozen=True)
class GaussianBelief:
    """Posterior state: mean and covariance in units of the mark variance."""

    a: np.ndarray
    cov_scaled: np.ndarray


@dataclass(frozen=True)
class MarginalAccumulator:
    """Running terms of the marginal likelihood.

    ``e_n`` is the accumulated innovation quadratic form, ``log_det_sum``
    the accumulated log-determinants, ``n_obs`` the number of observation
    vectors (each of dimension ``m_dim``).
    """

    m_dim: int
    n_obs: int = 0
    e_n: float = 0.0
    log_det_sum: float = 0.0

    @property
    def half_dof(self) -> float:
        """Half the total count of observed scalars."""
        return 0.5 * self.m_dim * self.n_obs


@dataclass(frozen=True)
class IGPrior:
    """Inverted-gamma prior on the mark variance, plus the mark-mean scale.

    ``kappa_w`` is the prior variance of the mark mean in units of the mark
    variance; ``math.inf`` requests a flat prior (realised as a large finite
    value inside ``init_belief``).
    """

    alpha_w: float
    beta_w: float
    kappa_w: float = math.inf

    def __post_init__(self) -> None:
        if not self.alpha_w > 0.0:
            raise ValueError(f"alpha_w must be positive, got {self.alpha_w}")
        if not self.beta_w > 0.0:
            raise ValueError(f"beta_w must be positive, got {self.beta_w}")
        if self.kappa_w < 0.0:
            raise ValueError(f"kappa_w must be nonnegative, got {self.kappa_w}")


def init_belief(prior: IGPrior, mu_prior_mean: float, state_dim: int) -> GaussianBelief:
    """Initial belief: state pinned at zero, mark mean at its prior.

    ``state_dim`` is the plant dimension P; the belief lives on the
    extended (P+1)-dimensional state.
    """
    kappa = prior.kappa_w if math.isfinite(prior.kappa_w) else FLAT_KAPPA
    a = np.zeros(state_dim + 1)
    a[state_dim] = mu_prior_mean
    cov = np.zeros((state_dim + 1, state_dim + 1))
    cov[state_dim, state_dim] = kappa
    return GaussianBelief(a, cov)


def predict(belief: GaussianBelief, trans: ExtendedTransition) -> GaussianBelief:
    """Propagate a scaled belief through one transition."""
    if trans.noise_cov_scaled is None:
        raise ValueError(
            "transition carries an absolute covariance; use predict_fixed"
        )
    return _propagate(belief, trans, trans.noise_cov_scaled)


def predict_fixed(belief: GaussianBelief, trans: ExtendedTransition) -> GaussianBelief:
    """Propagate with the full-residual (absolute-covariance) transition.

    In this fixed-mark-parameter mode the belief's ``cov_scaled`` field holds
    an absolute covariance and the observation noise must be supplied in
    absolute units too; the marginal accumulator has no meaning here.
    """
    if trans.noise_cov_full is None:
        raise ValueError("transition carries a scaled covariance; use predict")
    return _propagate(belief, trans, trans.noise_cov_full)


def _propagate(
    belief: GaussianBelief, trans: ExtendedTransition, noise_cov: np.ndarray
) -> GaussianBelief:
    A = trans.a_ext
    a = A @ belief.a
    cov = A @ belief.cov_scaled @ A.T
    P = noise_cov.shape[0]
    cov[:P, :P] += noise_cov
    return GaussianBelief(a, 0.5 * (cov + cov.T))


def update(
    belief: GaussianBelief, y: np.ndarray, obs: ObservationModel
) -> tuple[GaussianBelief, np.ndarray, np.ndarray]:
    """Condition a predicted belief on one observation.

    Returns the posterior belief, the innovation and the (scaled) innovation
    covariance actually used.  A singular innovation covariance is
    regularised with a trace-proportional jitter and logged; if that cannot
    render it positive definite a ``DegenerateObservationError`` is raised.
    The covariance update uses the symmetrising (Joseph) form.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    H = obs.H
    a, C = belief.a, belief.cov_scaled
    w = y - H @ a
    HC = H @ C
    F = HC @ H.T + obs.kappa_v
    if F.shape == (1, 1):
        # scalar innovation: avoid the LAPACK dispatch overhead
        f = F[0, 0]
        if f <= 0.0:
            F = _ensure_positive_definite(F)
            f = F[0, 0]
        K = HC.T / f
    else:
        F = 0.5 * (F + F.T)
        F = _ensure_positive_definite(F)
        K = np.linalg.solve(F, HC).T
    a_post = a + K @ w
    I_KH = np.eye(a.shape[0]) - K @ H
    cov_post = I_KH @ C @ I_KH.T + K @ obs.kappa_v @ K.T
    return GaussianBelief(a_post, 0.5 * (cov_post + cov_post.T)), w, F


def _ensure_positive_definite(F: np.ndarray) -> np.ndarray:
    try:
        np.linalg.cholesky(F)
        return F
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-12 * np.trace(F) / F.shape[0]
    if jitter > 0.0:
        F_j = F + jitter * np.eye(F.shape[0])
        try:
            np.linalg.cholesky(F_j)
            logger.warning("singular innovation covariance regularised with jitter %g", jitter)
            return F_j
        except np.linalg.LinAlgError:
            pass
    raise DegenerateObservationError(
        "innovation covariance is singular; observation is degenerate"
    )


def accumulate(
    acc: MarginalAccumulator, w: np.ndarray, f_mat: np.ndarray
) -> MarginalAccumulator:
    """Fold one innovation into the marginal-likelihood accumulator."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if w.shape[0] != acc.m_dim:
        raise ValueError(f"innovation dimension {w.shape[0]} != {acc.m_dim}")
    if f_mat.shape == (1, 1):
        f = f_mat[0, 0]
        if f <= 0.0:
            raise DegenerateObservationError("innovation covariance not positive definite")
        logdet = math.log(f)
        quad = float(w[0] * w[0]) / f
    else:
        sign, logdet = np.linalg.slogdet(f_mat)
        if sign <= 0:
            raise DegenerateObservationError("innovation covariance not positive definite")
        quad = float(w @ np.linalg.solve(f_mat, w))
    return replace(
        acc,
        n_obs=acc.n_obs + 1,
        e_n=acc.e_n + quad,
        log_det_sum=acc.log_det_sum + logdet,
    )


def log_marginal(acc: MarginalAccumulator, prior: IGPrior) -> float:
    """Log marginal likelihood with the mark variance integrated out.

    Closed form of the inverted-gamma conjugate analysis; for scalar
    observations the exponents reduce to ``n_obs / 2``.  Zero observations
    give exactly zero.
    """
    if acc.n_obs == 0:
        return 0.0
    hd = acc.half_dof
    return (
        -hd * LOG_2PI
        - 0.5 * acc.log_det_sum
        + prior.alpha_w * math.log(prior.beta_w)
        - (prior.alpha_w + hd) * math.log(prior.beta_w + 0.5 * acc.e_n)
        + float(gammaln(prior.alpha_w + hd))
        - float(gammaln(prior.alpha_w))
    )


def posterior_sigma2(acc: MarginalAccumulator, prior: IGPrior) -> tuple[float, float]:
    """Inverted-gamma posterior parameters of the mark variance."""
    return prior.alpha_w + acc.half_dof, prior.beta_w + 0.5 * acc.e_n


def sigma2_point_estimate(alpha: float, beta: float) -> float:
    """Posterior mean of an inverted gamma, falling back to the mode.

    The mean ``beta / (alpha - 1)`` only exists for ``alpha > 1``; early in
    a run (weak prior, few observations) the mode ``beta / (alpha + 1)`` is
    used instead.
    """
    if alpha > 1.0:
        return beta / (alpha - 1.0)
    return beta / (alpha + 1.0)
