"""Conditionally Gaussian state transitions and forward simulation.

Given one interval's latent jumps, the state update is exactly Gaussian.
With the mark mean appended to the state vector the step takes the linear
form

    alpha_t = A_ext alpha_s + B e,    e ~ N(0, C_e)

where the last column of ``A_ext`` carries the jump-mean kernel minus the
drift correction, so the mark mean multiplies it implicitly and the bottom
row keeps that component constant.  Three treatments of the neglected
small-jump residual are supported; two of them keep the noise covariance
proportional to the mark variance (which is what the marginalised filter
requires), the third absorbs the full mark second moment and is only
usable with fixed mark parameters.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .sde import LinearSDE, TransitionStats, residual_cov_bare, transition_stats, unit_compensator
from .stable import StableParams, sample_jump_set


class ApproximationCase(enum.Enum):
    """How the truncation residual enters the transition covariance."""

    TRUNCATED = "truncated"
    FULL_GAUSSIAN = "full_gaussian"
    PARTIAL_GAUSSIAN = "partial_gaussian"


DEFAULT_CASE = ApproximationCase.PARTIAL_GAUSSIAN


def nu_factor(case: ApproximationCase, params: StableParams) -> float:
    """Mark-moment factor multiplying the residual covariance.

    Zero when the residual is dropped, the full second moment
    ``mu_w**2 + sigma_w**2`` for the complete Gaussian residual, and
    ``sigma_w**2`` for the partial version that preserves scale conjugacy.
    """
    if case is ApproximationCase.TRUNCATED:
        return 0.0
    if case is ApproximationCase.FULL_GAUSSIAN:
        return params.mu_w**2 + params.sigma_w**2
    return params.sigma_w**2


@dataclass(frozen=True)
class ObservationModel:
    """Linear observation of the extended state.

    ``y = H alpha + V`` with ``V ~ N(0, sigma_w**2 kappa_v)``: the noise
    covariance is expressed in units of the mark variance so the filter can
    marginalise it.  ``kappa_v = 0`` is a noiseless observation.
    """

    H: np.ndarray
    kappa_v: np.ndarray

    def __post_init__(self) -> None:
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        kv = np.atleast_2d(np.asarray(self.kappa_v, dtype=float))
        if kv.shape != (H.shape[0], H.shape[0]):
            raise ValueError("kappa_v must be M x M for an M-row H")
        if not np.allclose(kv, kv.T):
            raise ValueError("kappa_v must be symmetric")
        if np.any(np.linalg.eigvalsh(kv) < -1e-12 * max(np.trace(kv), 1.0)):
            raise ValueError("kappa_v must be positive semidefinite")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "kappa_v", kv)

    @property
    def m_dim(self) -> int:
        return self.H.shape[0]


@dataclass(frozen=True)
class ExtendedTransition:
    """One interval's linear-Gaussian step on the extended state.

    Exactly one of ``noise_cov_scaled`` (units of the mark variance; residual
    dropped or partially restored) and ``noise_cov_full`` (absolute units;
    full Gaussian residual) is set, matching ``case``.
    """

    a_ext: np.ndarray
    b: np.ndarray
    interval: tuple[float, float]
    case: ApproximationCase
    noise_cov_scaled: np.ndarray | None = None
    noise_cov_full: np.ndarray | None = None

    @property
    def mean_shift(self) -> np.ndarray:
        """Last column of ``a_ext``: jump mean minus drift correction."""
        return self.a_ext[:-1, -1]


class TransitionContext:
    """Jump-independent pieces of an interval's transition, precomputed.

    The state propagator, drift correction and residual covariance depend on
    the interval only; reusing them across the particles of one filter step
    removes the dominant redundant work.
    """

    def __init__(
        self,
        sde: LinearSDE,
        params: StableParams,
        case: ApproximationCase,
        s: float,
        t: float,
    ):
        self.sde = sde
        self.params = params
        self.case = case
        self.interval = (s, t)
        self.expm_dt = sde.expm(t - s)
        self.unit_comp = unit_compensator(sde, params, s, t)
        self.resid_bare = residual_cov_bare(sde, params, s, t)
        P = sde.dim
        template = np.zeros((P + 1, P + 1))
        template[:P, :P] = self.expm_dt
        template[P, P] = 1.0
        self._a_template = template
        self._b = np.vstack([np.eye(P), np.zeros((1, P))])

    def assemble(self, stats: TransitionStats) -> ExtendedTransition:
        P = self.sde.dim
        a_ext = self._a_template.copy()
        a_ext[:P, P] = stats.jump_mean - self.unit_comp
        b = self._b
        if self.case is ApproximationCase.TRUNCATED:
            return ExtendedTransition(
                a_ext, b, self.interval, self.case, noise_cov_scaled=stats.jump_cov
            )
        if self.case is ApproximationCase.PARTIAL_GAUSSIAN:
            return ExtendedTransition(
                a_ext,
                b,
                self.interval,
                self.case,
                noise_cov_scaled=stats.jump_cov + self.resid_bare,
            )
        # Grouped so that mu_w = 0 coincides bit-exactly with the partial case.
        sig2 = self.params.sigma_w**2
        full = sig2 * (stats.jump_cov + self.resid_bare) + self.params.mu_w**2 * self.resid_bare
        return ExtendedTransition(
            a_ext, b, self.interval, self.case, noise_cov_full=full
        )

    def from_jumps(self, jumps) -> ExtendedTransition:
        m, S = compute_m_S(jumps, self.sde, self.params)
        stats = TransitionStats(self.interval, m, S, self.unit_comp, self.resid_bare)
        return self.assemble(stats)


def build_transition(
    stats: TransitionStats,
    case: ApproximationCase,
    sde: LinearSDE,
    params: StableParams,
) -> ExtendedTransition:
    """Assemble the extended-state transition for one interval.

    For the scaled cases the noise covariance is the jump covariance plus,
    in the partial-residual case, the bare residual covariance.  For the
    full-residual case the covariance is absolute
    (``sigma_w**2 jump_cov + (sigma_w**2 + mu_w**2) residual``), and the
    mark-mean times ``mean_shift`` reproduces its mean offset through the
    constant last state component.
    """
    s, t = stats.interval
    ctx = TransitionContext(sde, params, case, s, t)
    return ctx.assemble(stats)


def gaussian_sqrt(cov: np.ndarray) -> np.ndarray:
    """Square root of a PSD matrix by spectral decomposition.

    Eigenvalues are clamped at zero: jump covariances are rank-deficient
    whenever an interval holds fewer jumps than the state dimension.
    """
    vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def forward_simulate(
    sde: LinearSDE,
    params: StableParams,
    case: ApproximationCase,
    times: np.ndarray,
    x0: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Simulate a discrete skeleton of the state path.

    ``x0`` is the state at time zero; the returned array holds the state at
    each requested time (``times[0] == 0`` echoes ``x0``).  Each interval
    draws a fresh, independent jump set, so the skeleton is a genuine Markov
    sample regardless of the grid.
    """
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        return np.empty((0, sde.dim))
    if times[0] < 0.0 or np.any(np.diff(times) <= 0.0):
        raise ValueError("times must be strictly ascending and nonnegative")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != sde.dim:
        raise ValueError("x0 must match the state dimension")
    P = sde.dim
    state = np.concatenate([x0, [params.mu_w]])
    out = np.empty((times.size, P))
    prev = 0.0
    for i, tt in enumerate(times):
        if tt > prev:
            ctx = TransitionContext(sde, params, case, prev, tt)
            jumps = sample_jump_set(params, (prev, tt), rng)
            trans = ctx.from_jumps(jumps)
            if trans.noise_cov_scaled is not None:
                cov = params.sigma_w**2 * trans.noise_cov_scaled
            else:
                cov = trans.noise_cov_full
            noise = gaussian_sqrt(cov) @ rng.standard_normal(P)
            state = trans.a_ext @ state + trans.b @ noise
            prev = tt
        out[i] = state[:P]
    return out
