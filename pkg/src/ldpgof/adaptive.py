"""Smoothness-adaptive aggregated test.

One statistic per released resolution 2^J, J in the family set; the test
rejects when any of them clears its per-resolution threshold.  Thresholds
are the (1-u) null quantiles at a common u calibrated so the family-wise
first-kind error stays at gamma; u is found by bisection over one shared
set of simulated null vectors, which preserves the joint coupling between
the per-resolution quantiles.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .channel import ChannelSpec, PrivatizedSample, cell_indices, noise_matrix
from .dyadic import PiecewiseConstantDensity, project
from .gof import ConfigError, sample_from_density, statistic


def statistics_all_levels(z_family: PrivatizedSample, f0: PiecewiseConstantDensity) -> np.ndarray:
    """Per-resolution statistics of a released family."""
    if not z_family.spec.family:
        raise ValueError("expected a family release")
    return np.array(
        [
            statistic(Z, project(f0, L).coeffs)
            for L, Z in zip(z_family.spec.levels, z_family.matrices)
        ]
    )


def simulate_statistics(
    xs: np.ndarray, spec: ChannelSpec, alpha0s: list[np.ndarray], seed
) -> np.ndarray:
    """Statistics of a fresh release of xs, one resolution at a time.

    Noise is keyed exactly as in privatize, so this matches
    statistics_all_levels(privatize(xs, spec, seed), f0) without ever
    holding the whole family in memory.
    """
    key = rng.as_key(seed)
    n = len(xs)
    out = np.empty(len(spec.levels))
    for li, (L, alpha0) in enumerate(zip(spec.levels, alpha0s)):
        Z = noise_matrix(spec, li, n, key)
        Z[np.arange(n), cell_indices(xs, L)] += math.sqrt(L)
        out[li] = statistic(Z, alpha0)
    return out


def null_statistic_matrix(
    f0: PiecewiseConstantDensity, spec: ChannelSpec, n: int, replicates: int, seed
) -> np.ndarray:
    """replicates-by-|family| matrix of null statistic vectors."""
    key = rng.as_key(seed)
    alpha0s = [project(f0, L).coeffs for L in spec.levels]
    out = np.empty((replicates, len(spec.levels)))
    for b in range(replicates):
        xs = sample_from_density(f0, n, rng.stream(key, b, 0))
        out[b] = simulate_statistics(xs, spec, alpha0s, key + (b, 1))
    return out


def _order_index(replicates: int, u: float) -> int:
    v = (replicates + 1) * (1.0 - u)
    return min(replicates, math.ceil(v - 1e-9 * max(1.0, v)))


def u_gamma_search(
    null_stats: np.ndarray, gamma: float, tol: float = 1e-3
) -> tuple[float, np.ndarray]:
    """Largest u (on a bisection grid) whose per-resolution (1-u) empirical
    quantiles keep the family-wise exceedance rate at or below gamma.
    Never returns less than gamma/|family|.

    The in-sample exceedance fraction is unbiased for thresholds built from
    B-1 replicates, while the deployed thresholds use all B; that inflates
    the family-wise rate of fresh data by at most m*(1-u)/B, so the search
    criterion budgets for it.  The gamma/m floor needs no correction: the
    conservative per-level order statistic is exact for fresh draws.
    """
    B, m = null_stats.shape
    if not 0 < gamma < 1:
        raise ConfigError("gamma must lie in (0,1)")
    if B < math.ceil(m / gamma):
        raise ConfigError(f"need at least ceil(m/gamma)={math.ceil(m / gamma)} replicates")
    sorted_stats = np.sort(null_stats, axis=0)

    def thresholds(u: float) -> np.ndarray:
        return sorted_stats[_order_index(B, u) - 1, :]

    if m == 1:
        return gamma, thresholds(gamma)

    def feasible(u: float) -> bool:
        rate = float(np.mean((null_stats > thresholds(u)).any(axis=1)))
        return rate + m * (1.0 - u) / B <= gamma

    lo, hi = gamma / m, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo, thresholds(lo)


def calibrate_u_gamma(
    f0: PiecewiseConstantDensity,
    spec: ChannelSpec,
    n: int,
    gamma: float,
    replicates: int,
    seed,
    u_tol: float = 1e-3,
) -> tuple[float, np.ndarray]:
    """Simulate null vectors and run the common-level search on them."""
    stats = null_statistic_matrix(f0, spec, n, replicates, seed)
    return u_gamma_search(stats, gamma, u_tol)


@dataclass(frozen=True)
class AdaptiveConfig:
    """Inputs of one aggregated test run."""

    alpha: float
    gamma: float = 0.05
    replicates: int = 999
    seed: int = 0
    u_tol: float = 1e-3

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ConfigError("gamma must lie in (0,1)")
        if self.u_tol <= 0:
            raise ConfigError("u_tol must be positive")


@dataclass(frozen=True)
class AdaptiveReport:
    """Per-resolution statistics and thresholds plus the aggregated decision."""

    js: tuple[int, ...]
    statistics: tuple[float, ...]
    thresholds: tuple[float, ...]
    u_gamma: float
    reject: bool
    gamma: float
    replicates: int
    seed: tuple[int, ...]
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "levels": {str(j): {"statistic": s, "threshold": t}
                           for j, s, t in zip(self.js, self.statistics, self.thresholds)},
                "u_gamma": self.u_gamma,
                "reject": self.reject,
                "gamma": self.gamma,
                "B": self.replicates,
                "seed": list(self.seed),
                "metadata": self.metadata,
            },
            sort_keys=True,
        )


def run_adaptive_test(data, f0: PiecewiseConstantDensity, config: AdaptiveConfig) -> AdaptiveReport:
    """Calibrate the common level and decide."""
    key = rng.as_key(config.seed)
    if isinstance(data, PrivatizedSample):
        sample = data
        spec = sample.spec
        if not spec.family:
            raise ValueError("adaptive test needs a family release")
        stats = statistics_all_levels(sample, f0)
        n = sample.n
    else:
        xs = np.asarray(data, dtype=float)
        n = len(xs)
        spec = ChannelSpec.adaptive_family(config.alpha, n)
        alpha0s = [project(f0, L).coeffs for L in spec.levels]
        stats = simulate_statistics(xs, spec, alpha0s, key + (1,))
    if n >= 2 and n * config.alpha**2 < math.log(n) ** 2.5:
        warnings.warn(
            "sample size too small for the adaptive rate guarantee "
            f"(n*alpha^2={n * config.alpha**2:.3g} < log(n)^(5/2)={math.log(n) ** 2.5:.3g})",
            stacklevel=2,
        )
    u, thresholds = calibrate_u_gamma(
        f0, spec, n, config.gamma, config.replicates, key + (0,), config.u_tol
    )
    js = tuple(int(L).bit_length() - 1 for L in spec.levels)
    return AdaptiveReport(
        js=js,
        statistics=tuple(float(v) for v in stats),
        thresholds=tuple(float(v) for v in thresholds),
        u_gamma=float(u),
        reject=bool(np.any(stats > thresholds)),
        gamma=config.gamma,
        replicates=config.replicates,
        seed=key,
    )
