"""Projection U-statistic test from private views.

The statistic averages, over ordered pairs of samples, the inner product of
their centered released vectors; it unbiasedly estimates the squared L2 norm
of the resolution-L projection of f - f0.  The rejection threshold is the
upper quantile of the statistic under the null, estimated by simulating the
whole release pipeline with f0, and rejection is strict.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .channel import ChannelSpec, PrivatizedSample, privatize
from .dyadic import PiecewiseConstantDensity, ProbabilityVector, project


class ConfigError(ValueError):
    """Invalid test or experiment configuration."""


def statistic(Z: np.ndarray, alpha0: np.ndarray) -> float:
    """Pairwise statistic in O(nL):
    sum_{i != l} <Z_i - a0, Z_l - a0> / (n(n-1)) = (|sum_i D_i|^2 - sum_i |D_i|^2) / (n(n-1))."""
    Z = np.asarray(Z, dtype=float)
    alpha0 = np.asarray(alpha0, dtype=float)
    if Z.ndim != 2 or Z.shape[0] < 2:
        raise ValueError("need an (n, L) matrix with n >= 2")
    if alpha0.shape != (Z.shape[1],):
        raise ValueError(f"coefficient length {alpha0.shape} != L={Z.shape[1]}")
    n = Z.shape[0]
    D = Z - alpha0
    col = D.sum(axis=0)
    return (float(col @ col) - float(np.einsum("ij,ij->", D, D))) / (n * (n - 1))


def statistic_discrete(labels: np.ndarray, p0: ProbabilityVector) -> float:
    """Direct-observation version for class labels in [0,d):
    (d/(n(n-1))) * sum_k sum_{i != l} (1[x_i=k]-p0_k)(1[x_l=k]-p0_k)."""
    labels = np.asarray(labels)
    n = len(labels)
    if n < 2:
        raise ValueError("need n >= 2 labels")
    if labels.min() < 0 or labels.max() >= p0.d:
        raise ValueError("labels outside [0, d)")
    counts = np.bincount(labels.astype(np.int64), minlength=p0.d).astype(float)
    p = p0.probs
    pair_sum = (counts - n * p) ** 2 - (counts * (1 - p) ** 2 + (n - counts) * p**2)
    return p0.d * float(pair_sum.sum()) / (n * (n - 1))


def quantile_order_index(replicates: int, gamma: float) -> int:
    """1-based order statistic index ceil((B+1)(1-gamma)) of the calibrated threshold."""
    if not 0 < gamma < 1:
        raise ConfigError("gamma must lie in (0,1)")
    v = (replicates + 1) * (1.0 - gamma)
    idx = math.ceil(v - 1e-9 * max(1.0, v))  # shave float fuzz off exact integers
    if idx > replicates:
        raise ConfigError(f"order statistic {idx} does not exist with B={replicates}")
    return idx


def sample_from_density(f0: PiecewiseConstantDensity, n: int, gen: np.random.Generator) -> np.ndarray:
    """n iid draws from f0 by inverse CDF (one uniform per sample)."""
    u = gen.random(n)
    mass = f0.values / f0.level_count
    cum = np.cumsum(mass)
    cells = np.searchsorted(cum, u, side="right")
    lower = np.where(cells > 0, cum[np.maximum(cells - 1, 0)], 0.0)
    frac = (u - lower) / mass[cells]
    return (cells + frac) / f0.level_count


def null_statistics(
    f0: PiecewiseConstantDensity,
    spec: ChannelSpec,
    n: int,
    replicates: int,
    seed,
) -> np.ndarray:
    """Simulate the statistic under the null: draw from f0, privatize, evaluate."""
    key = rng.as_key(seed)
    alpha0 = project(f0, spec.level).coeffs
    out = np.empty(replicates)
    for b in range(replicates):
        xs = sample_from_density(f0, n, rng.stream(key, b, 0))
        Z = privatize(xs, spec, key + (b, 1))
        out[b] = statistic(Z.matrix, alpha0)
    return out


def calibrate_null_quantile(
    f0: PiecewiseConstantDensity,
    spec: ChannelSpec,
    n: int,
    gamma: float,
    replicates: int,
    seed,
) -> float:
    """Conservative upper quantile of the null statistic from fresh simulations."""
    if replicates < math.ceil(1.0 / gamma):
        raise ConfigError(f"need at least ceil(1/gamma)={math.ceil(1 / gamma)} replicates")
    idx = quantile_order_index(replicates, gamma)
    stats = null_statistics(f0, spec, n, replicates, seed)
    return float(np.sort(stats)[idx - 1])


def select_resolution(n: int, alpha: float, s: float, radius: float | None = None) -> tuple[int, int]:
    """Smallest exponent J with 2^J >= min((n alpha^2)^(2/(4s+3)), n^(2/(4s+1))).

    Returns (J, 2^J).  The radius of the smoothness ball does not enter the
    optimization; the argument is accepted for signature symmetry.  Budgets
    below 1/sqrt(n) fall back to J = 0.
    """
    del radius
    if n < 1:
        raise ValueError("n must be positive")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if s <= 0:
        raise ValueError("s must be positive")
    if alpha < 1.0 / math.sqrt(n):
        return 0, 1
    target = min((n * alpha**2) ** (2.0 / (4 * s + 3)), n ** (2.0 / (4 * s + 1)))
    J = 0
    while (1 << J) < target * (1 - 1e-12):
        J += 1
    return J, 1 << J


@dataclass(frozen=True)
class TestConfig:
    """Inputs of one calibrated test run."""

    __test__ = False  # not a pytest collection target

    alpha: float
    gamma: float = 0.05
    replicates: int = 999
    seed: int = 0
    level: int | None = None      # fixed resolution; None selects from (n, alpha, s)
    smoothness: float | None = None

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ConfigError("gamma must lie in (0,1)")
        if self.replicates < math.ceil(1.0 / self.gamma):
            raise ConfigError("replicates must be at least ceil(1/gamma)")
        if self.level is None and self.smoothness is None:
            raise ConfigError("either a fixed level or a smoothness for selection is required")


@dataclass(frozen=True)
class TestReport:
    """Outcome plus everything needed to reproduce it."""

    __test__ = False  # not a pytest collection target

    statistic: float
    threshold: float
    reject: bool
    level: int
    gamma: float
    replicates: int
    seed: tuple[int, ...]
    order_index: int
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "statistic": self.statistic,
                "threshold": self.threshold,
                "reject": self.reject,
                "L": self.level,
                "gamma": self.gamma,
                "B": self.replicates,
                "seed": list(self.seed),
                "order_index": self.order_index,
                "metadata": self.metadata,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "TestReport":
        o = json.loads(text)
        return cls(
            o["statistic"], o["threshold"], o["reject"], o["L"], o["gamma"],
            o["B"], tuple(o["seed"]), o["order_index"], o.get("metadata", {}),
        )


def run_test(data, f0: PiecewiseConstantDensity, config: TestConfig) -> TestReport:
    """Calibrate and decide.  ``data`` is raw samples in [0,1) (privatized
    internally with a sub-seed) or an already released PrivatizedSample."""
    key = rng.as_key(config.seed)
    if isinstance(data, PrivatizedSample):
        sample = data
        spec = sample.spec
    else:
        xs = np.asarray(data, dtype=float)
        if config.level is not None:
            L = config.level
        else:
            _, L = select_resolution(len(xs), config.alpha, config.smoothness)
        spec = ChannelSpec.single_level(config.alpha, L)
        sample = privatize(xs, spec, key + (1,))
    L = spec.level
    alpha0 = project(f0, L).coeffs
    value = statistic(sample.matrix, alpha0)
    threshold = calibrate_null_quantile(
        f0, spec, sample.n, config.gamma, config.replicates, key + (0,)
    )
    return TestReport(
        statistic=value,
        threshold=threshold,
        reject=bool(value > threshold),
        level=L,
        gamma=config.gamma,
        replicates=config.replicates,
        seed=key,
        order_index=quantile_order_index(config.replicates, config.gamma),
    )


def sample_labels(p: ProbabilityVector, n: int, gen: np.random.Generator) -> np.ndarray:
    """n iid class labels from p."""
    return np.searchsorted(np.cumsum(p.probs), gen.random(n), side="right")


def labels_to_unit_interval(labels: np.ndarray, d: int, gen: np.random.Generator) -> np.ndarray:
    """Spread labels uniformly over their cells: x = (label + U)/d."""
    return (np.asarray(labels) + gen.random(len(labels))) / d
