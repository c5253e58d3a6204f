"""Piecewise-constant densities on dyadic grids.

A density is stored as its values on ``level_count`` equal cells of [0,1).
All projections, norms and Haar-detail energies are then exact cell sums:
no quadrature error enters anywhere.  Multinomial distributions embed as
piecewise-constant densities on a d-cell grid, which puts the discrete and
continuous problems in one representation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

MASS_TOL = 1e-12


class ResolutionError(ValueError):
    """Two grid resolutions are not nested (neither divides the other)."""


def _is_pow2(m: int) -> bool:
    return m >= 1 and (m & (m - 1)) == 0


def cell_index(x: float, cells: int) -> int:
    """Index k with k/cells <= x < (k+1)/cells, for x in [0,1)."""
    if not 0.0 <= x < 1.0:
        raise ValueError(f"x={x} outside [0,1)")
    k = min(int(math.floor(x * cells)), cells - 1)
    # guard float rounding at cell boundaries
    if x < k / cells:
        k -= 1
    elif x >= (k + 1) / cells:
        k += 1
    return k


def phi_eval(cells: int, k: int, x: float) -> float:
    """Scaled indicator sqrt(L)*1[k/L,(k+1)/L) evaluated at x."""
    if not 0 <= k < cells:
        raise ValueError(f"k={k} outside [0,{cells})")
    return math.sqrt(cells) if cell_index(x, cells) == k else 0.0


def psi_eval(cells: int, k: int, x: float) -> float:
    """Scaled Haar detail: +sqrt(L) on the left half of cell k, -sqrt(L) on the right."""
    if not 0 <= k < cells:
        raise ValueError(f"k={k} outside [0,{cells})")
    half = cell_index(x, 2 * cells)
    if half == 2 * k:
        return math.sqrt(cells)
    if half == 2 * k + 1:
        return -math.sqrt(cells)
    return 0.0


@dataclass(frozen=True, eq=False)
class PiecewiseConstantDensity:
    """Density on [0,1) constant on ``level_count`` equal cells."""

    level_count: int
    values: np.ndarray

    def __post_init__(self):
        if self.level_count < 1:
            raise ValueError("level_count must be positive")
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.level_count,):
            raise ValueError(f"expected {self.level_count} cell values, got shape {vals.shape}")
        if np.any(vals < 0):
            raise ValueError("density values must be nonnegative")
        mass = vals.sum() / self.level_count
        if abs(mass - 1.0) > MASS_TOL:
            raise ValueError(f"density mass {mass} != 1 (tol {MASS_TOL})")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def uniform(cls, level_count: int = 1) -> "PiecewiseConstantDensity":
        return cls(level_count, np.ones(level_count))

    def value_at(self, x: float) -> float:
        return float(self.values[cell_index(x, self.level_count)])

    def l2_norm_sq(self) -> float:
        """Integral of the squared density (exact)."""
        return float(np.sum(self.values**2)) / self.level_count

    def refine(self, level_count: int) -> "PiecewiseConstantDensity":
        """Same density on a finer grid; level_count must be a multiple."""
        if level_count % self.level_count != 0:
            raise ResolutionError(f"{level_count} not a multiple of {self.level_count}")
        return PiecewiseConstantDensity(
            level_count, np.repeat(self.values, level_count // self.level_count)
        )

    def to_json(self) -> str:
        return json.dumps({"level_count": self.level_count, "values": self.values.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "PiecewiseConstantDensity":
        obj = json.loads(text)
        return cls(int(obj["level_count"]), np.asarray(obj["values"], dtype=float))


@dataclass(frozen=True, eq=False)
class ProbabilityVector:
    """Distribution over d classes."""

    d: int
    probs: np.ndarray

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be positive")
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (self.d,):
            raise ValueError(f"expected {self.d} probabilities, got shape {p.shape}")
        if np.any(p < 0) or np.any(p > 1):
            raise ValueError("probabilities must lie in [0,1]")
        if abs(p.sum() - 1.0) > MASS_TOL:
            raise ValueError(f"probabilities sum to {p.sum()} != 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, d: int) -> "ProbabilityVector":
        return cls(d, np.full(d, 1.0 / d))

    def to_json(self) -> str:
        return json.dumps({"d": self.d, "probs": self.probs.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "ProbabilityVector":
        obj = json.loads(text)
        return cls(int(obj["d"]), np.asarray(obj["probs"], dtype=float))


@dataclass(frozen=True, eq=False)
class CoefficientVector:
    """Projection coefficients onto the scaled-indicator family at resolution L."""

    L: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.L,):
            raise ValueError(f"expected {self.L} coefficients, got shape {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)


def embed_multinomial(p: ProbabilityVector) -> PiecewiseConstantDensity:
    """Density with value d*p_k on cell [k/d,(k+1)/d)."""
    return PiecewiseConstantDensity(p.d, p.d * p.probs)


def extract_multinomial(f: PiecewiseConstantDensity) -> ProbabilityVector:
    """Inverse of embed_multinomial: cell masses as a probability vector."""
    return ProbabilityVector(f.level_count, f.values / f.level_count)


def project(f: PiecewiseConstantDensity, L: int) -> CoefficientVector:
    """Coefficients integral(phi_{L,k} * f), exact by cell averaging.

    Requires the grids to be nested: L divides level_count or vice versa.
    """
    if L < 1:
        raise ValueError("L must be positive")
    L0, v = f.level_count, f.values
    root = math.sqrt(L)
    if L0 % L == 0:
        block = L0 // L
        coeffs = root * v.reshape(L, block).sum(axis=1) / L0
    elif L % L0 == 0:
        # f constant inside each fine cell: integral over a width-1/L cell
        coeffs = np.repeat(v, L // L0) / root
    else:
        raise ResolutionError(f"resolutions {L} and {L0} are not nested")
    return CoefficientVector(L, coeffs)


def projection_sq_distance(
    f: PiecewiseConstantDensity, f0: PiecewiseConstantDensity, L: int
) -> float:
    """Squared L2 norm of the resolution-L projection of f - f0."""
    a = project(f, L).coeffs
    a0 = project(f0, L).coeffs
    return float(np.sum((a - a0) ** 2))


def difference(f: PiecewiseConstantDensity, f0: PiecewiseConstantDensity) -> np.ndarray:
    """Cell values of f - f0 on the common refinement of the two grids."""
    common = math.lcm(f.level_count, f0.level_count)
    if common % f.level_count or common % f0.level_count:
        raise ResolutionError("grids have no nested common refinement")
    return (
        np.repeat(f.values, common // f.level_count)
        - np.repeat(f0.values, common // f0.level_count)
    )


def l2_sq_distance(f: PiecewiseConstantDensity, f0: PiecewiseConstantDensity) -> float:
    """Exact squared L2 distance between two piecewise-constant densities."""
    g = difference(f, f0)
    return float(np.sum(g**2)) / len(g)


def besov_seminorm_level(g: np.ndarray, j: int) -> float:
    """Sum of squared Haar detail coefficients of g at level j.

    ``g`` holds cell values of a piecewise-constant function on a
    power-of-two grid (typically a difference of densities).  Exact: the
    detail coefficients are signed half-cell integrals.
    """
    g = np.asarray(g, dtype=float)
    m = len(g)
    if not _is_pow2(m):
        raise ResolutionError(f"grid size {m} is not a power of two")
    if j < 0 or (1 << j) > m:
        raise ResolutionError(f"level {j} exceeds resolution {m}")
    L = 1 << j
    if 2 * L > m:
        # halves of a detail cell fall inside one constant cell: all details vanish
        return 0.0
    halves = g.reshape(2 * L, m // (2 * L)).sum(axis=1) / m
    beta = math.sqrt(L) * (halves[0::2] - halves[1::2])
    return float(np.sum(beta**2))


def besov_membership(g: np.ndarray, s: float, radius: float) -> bool:
    """True iff every representable level j satisfies the detail-energy bound
    besov_seminorm_level(g, j) <= radius^2 * 2^(-2js)."""
    if s <= 0 or radius <= 0:
        raise ValueError("smoothness and radius must be positive")
    g = np.asarray(g, dtype=float)
    m = len(g)
    if not _is_pow2(m):
        raise ResolutionError(f"grid size {m} is not a power of two")
    for j in range(int(math.log2(m)) + 1):
        bound = radius**2 * 2.0 ** (-2 * j * s)
        if besov_seminorm_level(g, j) > bound * (1 + 1e-12):
            return False
    return True
