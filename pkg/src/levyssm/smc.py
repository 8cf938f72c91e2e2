"""Marginal (Rao-Blackwellised) bootstrap particle filter.

Each particle carries only one hypothesis about the latent jumps: its
scaled Kalman belief and marginal-likelihood accumulator summarise the
conditionally Gaussian part analytically.  Proposal is from the prior (the
jump process itself), weights are the per-particle increments of the
marginal likelihood, and resampling is systematic below an effective
sample size threshold.  Gaussian marks, the mark mean and the mark
variance are never sampled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.special import logsumexp

from . import rng as rngmod
from .kalman import (
    DegenerateObservationError,
    GaussianBelief,
    IGPrior,
    MarginalAccumulator,
    accumulate,
    init_belief,
    log_marginal,
    posterior_sigma2,
    predict,
    sigma2_point_estimate,
    update,
)
from .sde import LinearSDE
from .ssm import ApproximationCase, ObservationModel, TransitionContext
from .stable import StableParams, sample_jump_set

# Two-sided 90% band half-width in posterior standard deviations.
Z90 = 1.6448536269514722


class FilterFailureError(RuntimeError):
    """Every particle died; the filter cannot continue."""


@dataclass(frozen=True)
class Particle:
    """One filter hypothesis: belief, accumulator, weight and RNG stream."""

    belief: GaussianBelief
    acc: MarginalAccumulator
    log_weight: float
    stream: np.random.Generator


@dataclass(frozen=True)
class FilterConfig:
    n_particles: int
    params: StableParams
    sde: LinearSDE
    obs: ObservationModel
    prior: IGPrior
    seed: int
    case: ApproximationCase = ApproximationCase.PARTIAL_GAUSSIAN
    resample_threshold: float = 0.5
    mu_prior_mean: float = 0.0

    def __post_init__(self) -> None:
        if self.n_particles < 2:
            raise ValueError("n_particles must be at least 2")
        if not 0.0 < self.resample_threshold <= 1.0:
            raise ValueError("resample_threshold must lie in (0, 1]")
        if self.case is ApproximationCase.FULL_GAUSSIAN:
            raise ValueError(
                "the marginal filter cannot use the full Gaussian residual: "
                "its covariance couples the mark mean and variance"
            )


@dataclass
class FilterOutput:
    """Per-time posterior summaries and run-level results.

    ``means``, ``q05`` and ``q95`` have one column per extended-state
    component (plant states first, mark mean last).  The mark-variance
    posterior is the weighted inverted-gamma mixture with common shape
    ``sigma2_alpha`` and per-particle scales ``sigma2_betas``.
    """

    times: np.ndarray
    means: np.ndarray
    q05: np.ndarray
    q95: np.ndarray
    ess_trace: np.ndarray
    log_evidence: float
    sigma2_alpha: float
    sigma2_betas: np.ndarray
    weights: np.ndarray
    n_resamples: int
    n_dead: int = 0

    def sigma2_mean(self) -> float:
        """Posterior point estimate of the mark variance (mixture)."""
        return float(
            np.sum(
                self.weights
                * np.array([sigma2_point_estimate(self.sigma2_alpha, b) for b in self.sigma2_betas])
            )
        )


def init_particles(config: FilterConfig) -> tuple[list[Particle], np.random.Generator]:
    """Fresh particle population plus the filter-level stream.

    Splitting rule: the master sequence of ``config.seed`` spawns
    ``n_particles + 1`` children; child 0 drives filter-level randomness
    (resampling), children 1..n become the particle streams in order.
    """
    children = rngmod.split(rngmod.master_sequence(config.seed), config.n_particles + 1)
    filter_rng = rngmod.generator(children[0])
    belief = init_belief(config.prior, config.mu_prior_mean, config.sde.dim)
    acc = MarginalAccumulator(m_dim=config.obs.m_dim)
    lw = -math.log(config.n_particles)
    particles = [
        Particle(belief, acc, lw, rngmod.generator(child)) for child in children[1:]
    ]
    return particles, filter_rng


def propose_and_weight(
    particle: Particle,
    interval: tuple[float, float],
    y: np.ndarray,
    config: FilterConfig,
    ctx: TransitionContext | None = None,
) -> Particle:
    """Advance one particle through one observation.

    Draws a fresh jump set from the particle's own stream, propagates the
    scaled belief, conditions on the observation and adds the increment of
    the marginal log likelihood to the particle's log weight.  A non-finite
    increment kills the particle (weight to -inf) instead of aborting.
    """
    if ctx is None:
        ctx = TransitionContext(config.sde, config.params, config.case, *interval)
    jumps = sample_jump_set(config.params, interval, particle.stream)
    trans = ctx.from_jumps(jumps)
    pred = predict(particle.belief, trans)
    post, w, F = update(pred, y, config.obs)
    acc = accumulate(particle.acc, w, F)
    delta = log_marginal(acc, config.prior) - log_marginal(particle.acc, config.prior)
    if math.isfinite(delta):
        lw = particle.log_weight + delta
    else:
        lw = -math.inf
    return Particle(post, acc, lw, particle.stream)


def ess(log_weights: np.ndarray) -> float:
    """Effective sample size of a set of (unnormalised) log weights."""
    lw = np.asarray(log_weights, dtype=float)
    finite = np.isfinite(lw)
    if not np.any(finite):
        raise FilterFailureError("all particles have zero weight")
    w = np.exp(lw - logsumexp(lw))
    return float(1.0 / np.sum(w * w))


def normalized_weights(log_weights: np.ndarray) -> np.ndarray:
    lw = np.asarray(log_weights, dtype=float)
    if not np.any(np.isfinite(lw)):
        raise FilterFailureError("all particles have zero weight")
    return np.exp(lw - logsumexp(lw))


def resample_systematic(
    particles: list[Particle], rng: np.random.Generator
) -> list[Particle]:
    """Systematic resampling: one uniform, evenly spaced selection points.

    Offspring counts differ from ``n * w_i`` by less than one.  Weights are
    reset to uniform and each parent spawns fresh streams for its offspring,
    so duplicated particles diverge immediately.
    """
    n = len(particles)
    weights = normalized_weights(np.array([p.log_weight for p in particles]))
    positions = (rng.uniform() + np.arange(n)) / n
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    indices = np.searchsorted(cum, positions, side="right")
    indices = np.minimum(indices, n - 1)
    counts = np.bincount(indices, minlength=n)
    lw = -math.log(n)
    offspring: list[Particle] = []
    for j in range(n):
        k = int(counts[j])
        if k == 0:
            continue
        parent = particles[j]
        for stream in parent.stream.spawn(k):
            offspring.append(replace(parent, log_weight=lw, stream=stream))
    return offspring


def _state_summaries(
    particles: list[Particle], weights: np.ndarray, prior: IGPrior
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Weighted mean and Rao-Blackwellised 5/95% bands per component.

    Bands are weighted quantiles of the per-particle posterior means shifted
    by ``+-z90`` posterior standard deviations, each particle's deviation
    scaled by its own mark-variance point estimate.
    """
    dim = particles[0].belief.a.shape[0]
    means = np.array([p.belief.a for p in particles])
    variances = np.array([np.diag(p.belief.cov_scaled) for p in particles])
    sig2 = np.array(
        [sigma2_point_estimate(*posterior_sigma2(p.acc, prior)) for p in particles]
    )
    sds = np.sqrt(np.clip(variances * sig2[:, None], 0.0, None))
    mean = weights @ means
    q05 = np.empty(dim)
    q95 = np.empty(dim)
    for k in range(dim):
        q05[k] = weighted_quantile(means[:, k] - Z90 * sds[:, k], weights, 0.05)
        q95[k] = weighted_quantile(means[:, k] + Z90 * sds[:, k], weights, 0.95)
    return mean, q05, q95


def weighted_quantile(values: np.ndarray, weights: np.ndarray, q: float) -> float:
    """Weighted empirical quantile (inverse of the weighted step CDF)."""
    order = np.argsort(values, kind="stable")
    cum = np.cumsum(weights[order])
    idx = int(np.searchsorted(cum, q * cum[-1], side="left"))
    return float(values[order][min(idx, values.size - 1)])


def run_filter(
    times: np.ndarray,
    values: np.ndarray,
    config: FilterConfig,
    threads: int = 1,
) -> FilterOutput:
    """Full filtering sweep over timestamped observations.

    Observation times must be strictly ascending and positive (the state is
    pinned at zero at time zero).  Each step propagates every particle,
    updates the evidence from the weighted mean incremental weight, emits
    posterior summaries and resamples when the effective sample size drops
    below the configured fraction.
    """
    times = np.asarray(times, dtype=float)
    values = np.atleast_1d(np.asarray(values, dtype=float))
    if values.ndim == 1:
        values = values[:, None]
    if times.size != values.shape[0]:
        raise ValueError("times and values must have equal length")
    if values.shape[1] != config.obs.m_dim:
        raise ValueError("observation dimension does not match the model")
    if times.size and (times[0] <= 0.0 or np.any(np.diff(times) <= 0.0)):
        raise ValueError("observation times must be strictly ascending and positive")

    n = config.n_particles
    particles, filter_rng = init_particles(config)
    dim = config.sde.dim + 1
    T = times.size
    out_means = np.empty((T, dim))
    out_q05 = np.empty((T, dim))
    out_q95 = np.empty((T, dim))
    ess_trace = np.empty(T)
    log_evidence = 0.0
    prev_lse = 0.0
    n_resamples = 0
    n_dead = 0
    prev_t = 0.0
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for i in range(T):
            tt = times[i]
            y = values[i]
            ctx = TransitionContext(config.sde, config.params, config.case, prev_t, tt)

            def step(p: Particle) -> Particle:
                try:
                    return propose_and_weight(p, (prev_t, tt), y, config, ctx)
                except DegenerateObservationError:
                    return replace(p, log_weight=-math.inf)

            if pool is not None:
                particles = list(pool.map(step, particles))
            else:
                particles = [step(p) for p in particles]
            lws = np.array([p.log_weight for p in particles])
            dead = ~np.isfinite(lws)
            n_dead += int(np.count_nonzero(dead))
            if np.all(dead):
                raise FilterFailureError(
                    f"all {n} particles died at t={tt:g} (observation {i + 1}/{T})"
                )
            lse = float(logsumexp(lws))
            log_evidence += lse - prev_lse
            weights = np.exp(lws - lse)
            total = float(weights.sum())
            assert abs(total - 1.0) < 1e-12, "weight normalisation drifted"
            ess_trace[i] = 1.0 / float(weights @ weights)
            out_means[i], out_q05[i], out_q95[i] = _state_summaries(
                particles, weights, config.prior
            )
            if ess_trace[i] < config.resample_threshold * n and i < T - 1:
                particles = resample_systematic(particles, filter_rng)
                n_resamples += 1
                prev_lse = 0.0
            else:
                prev_lse = lse
            prev_t = tt
    finally:
        if pool is not None:
            pool.shutdown()

    final_weights = normalized_weights(np.array([p.log_weight for p in particles])) if T else np.full(n, 1.0 / n)
    alphas_betas = [posterior_sigma2(p.acc, config.prior) for p in particles]
    sigma2_alpha = alphas_betas[0][0]
    sigma2_betas = np.array([b for _, b in alphas_betas])
    return FilterOutput(
        times=times,
        means=out_means,
        q05=out_q05,
        q95=out_q95,
        ess_trace=ess_trace,
        log_evidence=log_evidence,
        sigma2_alpha=sigma2_alpha,
        sigma2_betas=sigma2_betas,
        weights=final_weights,
        n_resamples=n_resamples,
        n_dead=n_dead,
    )
