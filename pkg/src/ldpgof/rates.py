"""Separation-rate kernels and boundary alternatives.

Closed forms for the constant-free rate expressions on both sides of the
testing problem, the largest perturbation amplitude certified to be
undetectable by any private test at given error levels, and generators for
the alternatives the harness probes power with: signed Haar-detail
perturbations of the uniform density, and single-cell bumps for separations
the detail family cannot reach (its amplitude is capped by nonnegativity).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dyadic import PiecewiseConstantDensity, ProbabilityVector


def z_alpha(alpha: float) -> float:
    """2*sinh(2*alpha), the channel strength entering the lower bounds."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    return 2.0 * math.sinh(2.0 * alpha)


@dataclass(frozen=True)
class RateQuery:
    """Arguments of the rate formulas."""

    n: int
    alpha: float
    gamma: float = 0.05
    beta: float = 0.05
    s: float | None = None
    radius: float | None = None
    d: int | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if not (0 < self.gamma < 1 and 0 < self.beta < 1):
            raise ValueError("gamma and beta must lie in (0,1)")
        if self.s is not None and self.s <= 0:
            raise ValueError("s must be positive")
        if self.radius is not None and self.radius <= 0:
            raise ValueError("radius must be positive")


def continuous_rate_bounds(q: RateQuery) -> tuple[float, float]:
    """Constant-free kernels of the separation rate over smoothness balls:
    lower (n z_alpha^2)^(-2s/(4s+3)) v n^(-2s/(4s+1)),
    upper (n alpha^2)^(-2s/(4s+3)) v n^(-2s/(4s+1))."""
    if q.s is None:
        raise ValueError("smoothness s required")
    e_priv = 2.0 * q.s / (4.0 * q.s + 3.0)
    e_classic = 2.0 * q.s / (4.0 * q.s + 1.0)
    classic = q.n ** (-e_classic)
    lower = max((q.n * z_alpha(q.alpha) ** 2) ** (-e_priv), classic)
    upper = max((q.n * q.alpha**2) ** (-e_priv), classic)
    return lower, upper


def discrete_rate_bounds(q: RateQuery) -> tuple[float, float]:
    """Kernels of the normalized discrete separation rate:
    lower (n z_alpha^2)^(-1/2) d^(1/4) v n^(-1/2) d^(-1/4), upper with alpha."""
    if q.d is None or q.d < 2:
        raise ValueError("d >= 2 required")
    classic = q.n ** (-0.5) * q.d ** (-0.25)
    lower = max((q.n * z_alpha(q.alpha) ** 2) ** (-0.5) * q.d**0.25, classic)
    upper = max((q.n * q.alpha**2) ** (-0.5) * q.d**0.25, classic)
    return lower, upper


def indistinguishable_epsilon(
    n: int,
    alpha: float,
    L: int,
    gamma: float,
    beta: float,
    s: float | None = None,
    radius: float | None = None,
) -> float:
    """Largest certified-undetectable amplitude of the signed-detail prior.

    Minimum of the information bound
    (n z_alpha^2)^(-1/2) (log(1+4(1-2 gamma-beta)^2)/L)^(1/4),
    the density-feasibility bound L^(-1)/sqrt(2 log(2L/gamma)), and, when a
    smoothness ball (s, radius) is given, its membership bound
    L^(-1) (1 ^ radius L^(-s)) / sqrt(2 log(2L/gamma)).
    Requires 2*gamma + beta < 1.
    """
    if 2 * gamma + beta >= 1:
        raise ValueError("requires 2*gamma + beta < 1")
    if L < 1 or n < 1:
        raise ValueError("n and L must be positive")
    slack = 1.0 - 2.0 * gamma - beta
    info = (n * z_alpha(alpha) ** 2) ** (-0.5) * (math.log(1.0 + 4.0 * slack**2) / L) ** 0.25
    feas = (1.0 / L) / math.sqrt(2.0 * math.log(2.0 * L / gamma))
    bounds = [info, feas]
    if s is not None:
        if radius is None:
            raise ValueError("radius required with s")
        bounds.append((1.0 / L) * min(1.0, radius * L ** (-s)) / math.sqrt(2.0 * math.log(2.0 * L / gamma)))
    return min(bounds)


@dataclass(frozen=True)
class AlternativeSpec:
    """Signed Haar-detail perturbation of a uniform base density.

    The perturbed density is base + epsilon*sqrt(L)*sum_k eta_k psi_{L,k};
    the half-cell values are 1 +/- epsilon*L, so epsilon*L <= 1 is exactly
    the nonnegativity constraint, and the L2 distance to the base is
    epsilon*L.
    """

    level: int
    epsilon: float
    signs: tuple[int, ...]
    base: PiecewiseConstantDensity | None = None

    def __post_init__(self):
        if self.level < 1:
            raise ValueError("level must be positive")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if len(self.signs) != self.level or any(e not in (-1, 1) for e in self.signs):
            raise ValueError(f"signs must be {self.level} values in {{-1,+1}}")
        if self.epsilon * self.level > 1.0 + 1e-12:
            raise ValueError(
                f"epsilon*L = {self.epsilon * self.level} > 1: density would go negative"
            )
        if self.base is not None:
            if np.ptp(self.base.values) != 0.0:
                raise ValueError("base density must be uniform")
            if self.base.level_count % (2 * self.level) != 0:
                raise ValueError("base resolution must be a multiple of 2*level")


def generate_alternative(spec: AlternativeSpec) -> PiecewiseConstantDensity:
    """Materialize the perturbed density on the half-cell grid (or finer)."""
    base = spec.base or PiecewiseConstantDensity.uniform(2 * spec.level)
    if spec.base is None:
        resolution = 2 * spec.level
    else:
        resolution = base.level_count
    bump = spec.epsilon * spec.level
    per_cell = resolution // spec.level
    half = per_cell // 2
    values = np.ones(resolution)
    for k, eta in enumerate(spec.signs):
        values[k * per_cell : k * per_cell + half] += eta * bump
        values[k * per_cell + half : (k + 1) * per_cell] -= eta * bump
    return PiecewiseConstantDensity(resolution, values)


def cell_bump_alternative(L: int, delta: float) -> PiecewiseConstantDensity:
    """Uniform density plus delta on the first of L cells, rebalanced on the rest.

    Lives in the resolution-L projection space, so its full squared L2
    distance to uniform, delta^2/(L-1), is also the projected squared
    separation at resolution L.  delta can reach L-1 before nonnegativity
    binds, far beyond the detail family's amplitude cap.
    """
    if L < 2:
        raise ValueError("need at least two cells")
    if not 0 <= delta <= L - 1:
        raise ValueError(f"delta must lie in [0, {L - 1}]")
    values = np.full(L, 1.0 - delta / (L - 1))
    values[0] = 1.0 + delta
    return PiecewiseConstantDensity(L, values)


def bump_for_separation(L: int, separation_sq: float) -> PiecewiseConstantDensity:
    """Cell bump whose squared L2 distance to uniform equals separation_sq."""
    return cell_bump_alternative(L, math.sqrt(separation_sq * (L - 1)))


def probability_bump(d: int, l2_separation: float) -> ProbabilityVector:
    """Uniform probability vector bumped on class 0 so that
    sum_k (p_k - 1/d)^2 equals l2_separation^2."""
    if d < 2:
        raise ValueError("need at least two classes")
    delta = l2_separation * math.sqrt((d - 1) / d)
    probs = np.full(d, 1.0 / d - delta / (d - 1))
    probs[0] = 1.0 / d + delta
    if probs.min() < 0 or probs.max() > 1:
        raise ValueError(f"separation {l2_separation} infeasible for d={d}")
    return ProbabilityVector(d, probs)
