"""Latent point process and truncated shot-noise paths of the driving process.

The scalar driving process is built from the epochs of a unit-rate Poisson
process: an epoch at ``gamma`` contributes a jump of magnitude
``gamma**(-1/alpha)`` times a Gaussian mark, placed uniformly in time.
Keeping only epochs up to a truncation level ``c`` (interpretable as the
expected number of jumps per unit time) yields a finite-activity process
whose law approaches the heavy-tailed target as ``c`` grows.  For tail
indices above one the kept-jump sum has a linear-in-time expected growth
that must be subtracted; ``centering_drift`` returns that rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

# Tail indices within this distance of 1 are rejected: the centering drift
# carries a 1/(alpha-1) factor and degenerates there.
ALPHA_ONE_GUARD = 0.02

# Memory-safety cap on epochs generated for a single interval.
MAX_EPOCHS_PER_INTERVAL = 10**7


class JumpCountError(RuntimeError):
    """An interval would generate more epochs than the safety cap allows."""


@dataclass(frozen=True)
class StableParams:
    """Driving-process parameters.

    alpha:   tail index in (0, 2), bounded away from 1.
    mu_w:    mark mean; nonzero values skew the process.
    sigma_w: mark standard deviation, positive.
    c:       truncation level, expected jumps per unit time, positive.
    """

    alpha: float
    mu_w: float
    sigma_w: float
    c: float

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 2.0:
            raise ValueError(f"alpha must lie in (0, 2), got {self.alpha}")
        if abs(self.alpha - 1.0) < ALPHA_ONE_GUARD:
            raise ValueError(
                f"alpha within {ALPHA_ONE_GUARD} of 1 is not supported, got {self.alpha}"
            )
        if not self.sigma_w > 0.0:
            raise ValueError(f"sigma_w must be positive, got {self.sigma_w}")
        if not self.c > 0.0:
            raise ValueError(f"c must be positive, got {self.c}")


class JumpRecord(NamedTuple):
    """One latent jump: Poisson epoch, jump time, optional Gaussian mark."""

    gamma: float
    v: float
    u: float | None


@dataclass(frozen=True)
class JumpSet:
    """The latent point process of one time interval.

    ``gammas`` are strictly ascending Poisson epochs bounded by
    ``c * (t - s)``; ``times`` are the matching jump times in ``(s, t]``.
    ``marks`` is ``None`` when the Gaussian marks are marginalised (the
    filter never samples them).
    """

    interval: tuple[float, float]
    gammas: np.ndarray
    times: np.ndarray
    marks: np.ndarray | None
    c: float

    def __post_init__(self) -> None:
        s, t = self.interval
        if not s < t:
            raise ValueError(f"interval must satisfy s < t, got ({s}, {t})")
        if self.gammas.shape != self.times.shape:
            raise ValueError("gammas and times must have equal length")
        if self.marks is not None and self.marks.shape != self.gammas.shape:
            raise ValueError("marks must match gammas in length")
        if self.gammas.size:
            if np.any(np.diff(self.gammas) <= 0.0):
                raise ValueError("epochs must be strictly ascending")
            if self.gammas[0] <= 0.0:
                raise ValueError("epochs must be positive")
            if self.gammas[-1] > self.c * (t - s):
                raise ValueError("epochs must not exceed c * (t - s)")
            if np.any(self.times <= s) or np.any(self.times > t):
                raise ValueError("jump times must lie in (s, t]")

    def __len__(self) -> int:
        return int(self.gammas.size)

    @property
    def records(self) -> Iterator[JumpRecord]:
        marks = self.marks if self.marks is not None else [None] * len(self)
        for g, v, u in zip(self.gammas, self.times, marks):
            yield JumpRecord(float(g), float(v), None if u is None else float(u))


def sample_poisson_epochs(
    rate_horizon: float,
    rng: np.random.Generator,
    max_epochs: int = MAX_EPOCHS_PER_INTERVAL,
) -> np.ndarray:
    """Epochs of a unit-rate Poisson process up to ``rate_horizon``.

    Returns the strictly ascending cumulative sums of unit-mean exponentials
    that do not exceed the horizon; empty when the first epoch already does.
    """
    if rate_horizon < 0.0:
        raise ValueError(f"rate_horizon must be nonnegative, got {rate_horizon}")
    if rate_horizon == 0.0:
        return np.empty(0)
    if rate_horizon - 6.0 * math.sqrt(rate_horizon) > max_epochs:
        raise JumpCountError(
            f"horizon {rate_horizon:g} implies far more than {max_epochs} epochs"
        )
    block = max(16, int(rate_horizon + 4.0 * math.sqrt(rate_horizon) + 16.0))
    chunks: list[np.ndarray] = []
    total = 0.0
    count = 0
    while True:
        cum = total + np.cumsum(rng.standard_exponential(block))
        inside = cum[cum <= rate_horizon]
        count += inside.size
        if count > max_epochs:
            raise JumpCountError(
                f"more than {max_epochs} epochs in one interval (horizon {rate_horizon:g})"
            )
        chunks.append(inside)
        if inside.size < block:
            break
        total = cum[-1]
    return np.concatenate(chunks) if len(chunks) > 1 else chunks[0]


def sample_jump_set(
    params: StableParams,
    interval: tuple[float, float],
    rng: np.random.Generator,
    with_marks: bool = False,
) -> JumpSet:
    """Draw the latent point process of one interval.

    Epochs run up to ``c * (t - s)``; each jump time is uniform on
    ``(s, t]``.  Marks are only sampled on request; inference paths keep
    them marginalised.
    """
    s, t = interval
    if not s < t:
        raise ValueError(f"interval must satisfy s < t, got ({s}, {t})")
    delta = t - s
    gammas = sample_poisson_epochs(params.c * delta, rng)
    times = t - rng.uniform(0.0, delta, size=gammas.size)
    marks = (
        rng.normal(params.mu_w, params.sigma_w, size=gammas.size) if with_marks else None
    )
    return JumpSet((s, t), gammas, times, marks, params.c)


def centering_drift(c: float, params: StableParams) -> float:
    """Linear drift rate compensating the kept-jump sum.

    Zero for tail indices below one (the series needs no centering there);
    otherwise ``mu_w * alpha/(alpha-1) * c**((alpha-1)/alpha)``, which equals
    the expected kept-jump sum per unit time.
    """
    if not c > 0.0:
        raise ValueError(f"c must be positive, got {c}")
    if params.alpha < 1.0 or params.mu_w == 0.0:
        return 0.0
    a = params.alpha
    return params.mu_w * (a / (a - 1.0)) * c ** ((a - 1.0) / a)


def driving_path_from_jumps(
    jumps: JumpSet, params: StableParams, grid: np.ndarray
) -> np.ndarray:
    """Evaluate the truncated driving path on a grid given its jumps.

    The path is the running sum of ``gamma**(-1/alpha) * mark`` over jumps
    that have occurred, minus the centering drift ``t * centering_drift``.
    Marks must be present.
    """
    if jumps.marks is None:
        raise ValueError("path evaluation requires sampled marks")
    grid = np.asarray(grid, dtype=float)
    if grid.size and np.any(np.diff(grid) < 0.0):
        raise ValueError("grid must be ascending")
    drift = centering_drift(jumps.c, params)
    if len(jumps) == 0:
        return -drift * grid
    sizes = jumps.marks * jumps.gammas ** (-1.0 / params.alpha)
    order = np.argsort(jumps.times, kind="stable")
    cum = np.cumsum(sizes[order])
    idx = np.searchsorted(jumps.times[order], grid, side="right")
    path = np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)
    return path - drift * grid


def simulate_driving_path(
    params: StableParams, grid: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """One truncated driving path on an ascending grid within [0, 1]."""
    grid = np.asarray(grid, dtype=float)
    if grid.size and (grid[0] < 0.0 or grid[-1] > 1.0):
        raise ValueError("grid must lie within [0, 1]")
    jumps = sample_jump_set(params, (0.0, 1.0), rng, with_marks=True)
    return driving_path_from_jumps(jumps, params, grid)


def sample_unit_increments(
    params: StableParams, n: int, rng: np.random.Generator
) -> np.ndarray:
    """``n`` i.i.d. samples of the truncated driving process at unit time.

    Exploits that only the value at t=1 is needed: the number of kept epochs
    is Poisson(c) and, given the count, epochs are i.i.d. uniform on (0, c],
    so the jump-time locations never have to be drawn.  Batched to bound
    memory for large ``c``.
    """
    drift = centering_drift(params.c, params)
    out = np.empty(n)
    max_chunk = max(1, int(2e7 / max(params.c, 1.0)))
    done = 0
    while done < n:
        k = min(n - done, max_chunk)
        counts = rng.poisson(params.c, size=k)
        total = int(counts.sum())
        if total:
            gammas = rng.uniform(0.0, params.c, size=total)
            marks = rng.normal(params.mu_w, params.sigma_w, size=total)
            contrib = marks * gammas ** (-1.0 / params.alpha)
            out[done : done + k] = segment_sums(contrib, counts) - drift
        else:
            out[done : done + k] = -drift
        done += k
    return out


def segment_sums(values: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Sum consecutive segments of ``values`` whose lengths are ``counts``.

    Zero-length segments yield exact zeros (``np.add.reduceat`` alone would
    misattribute them).
    """
    sums = np.zeros(counts.size, dtype=values.dtype)
    nonzero = counts > 0
    if np.any(nonzero):
        starts = (np.cumsum(counts) - counts)[nonzero]
        sums[nonzero] = np.add.reduceat(values, starts)
    return sums


def ks_statistic(samples_a: np.ndarray, samples_b: np.ndarray) -> float:
    """Two-sample Kolmogorov-Smirnov statistic ``sup |F_a - F_b|``."""
    a = np.sort(np.asarray(samples_a, dtype=float))
    b = np.sort(np.asarray(samples_b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    xs = np.concatenate([a, b])
    fa = np.searchsorted(a, xs, side="right") / a.size
    fb = np.searchsorted(b, xs, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_critical_value(n_a: int, n_b: int, level: float = 0.01) -> float:
    """Asymptotic two-sample KS critical value at the given level."""
    coeff = math.sqrt(-math.log(level / 2.0) / 2.0)
    return coeff * math.sqrt((n_a + n_b) / (n_a * n_b))
