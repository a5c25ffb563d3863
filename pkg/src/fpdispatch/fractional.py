"""Sum-of-ratios machinery.

The dispatch objective is a sum of fuel-rate ratios, one per generator and
timestep: numerator A (MW output) over efficiency eta, tracked here through
its reciprocal C = 1/eta. Each ratio gets an auxiliary pair (zeta, beta)
with zeta*beta >= 1; the surrogate

    (1/2) * sum_i [zeta_i * A_i^2 + beta_i * C_i^2] * dt

upper-bounds the ratio sum (AM-GM) and touches it exactly when the pairs
are set by the closed-form update zeta = C/A, beta = A/C. All functions
here are pure value-level computations, safe to map over terms in parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "RatioTerm",
    "AuxiliaryState",
    "DEFAULT_CLAMP",
    "ratio_sum",
    "surrogate",
    "auxiliary_update",
    "cutting_violation",
    "equivalence_gap",
]

#: Numerator clamp: a zero-output term is treated as this many MW when the
#: auxiliary pair is refreshed, keeping beta bounded away from zero.
DEFAULT_CLAMP = 1e-9

#: Tolerance on the zeta*beta >= 1 feasibility check.
_PAIR_SLACK = 1e-9


@dataclass(frozen=True)
class RatioTerm:
    """One fuel-rate ratio: generator `gen` at timestep `t`.

    `a` is the MW output (nonnegative); `c` is 1/eta at the current
    dispatch (positive). The ratio value is a*c.
    """

    gen: int
    t: int
    a: float
    c: float

    def __post_init__(self):
        if self.a < 0.0:
            raise ValueError(f"ratio numerator must be >= 0, got {self.a}")
        if self.c <= 0.0:
            raise ValueError(f"denominator reciprocal must be > 0, got {self.c}")

    @property
    def value(self) -> float:
        return self.a * self.c


@dataclass(frozen=True)
class AuxiliaryState:
    """The (zeta, beta) pairs for all m ratio terms, zeta*beta >= 1."""

    zeta: tuple[float, ...]
    beta: tuple[float, ...]

    def __post_init__(self):
        if len(self.zeta) != len(self.beta):
            raise ValueError("zeta and beta must have equal length")
        for i, (z, b) in enumerate(zip(self.zeta, self.beta)):
            if z <= 0.0 or b <= 0.0:
                raise ValueError(f"pair {i}: (zeta, beta) must be positive")
            if z * b < 1.0 - _PAIR_SLACK:
                raise ValueError(f"pair {i}: zeta*beta = {z * b:.12g} < 1")

    def __len__(self) -> int:
        return len(self.zeta)

    @classmethod
    def ones(cls, m: int) -> "AuxiliaryState":
        """The feasible initial state zeta = beta = 1 for every term."""
        return cls(zeta=(1.0,) * m, beta=(1.0,) * m)


def ratio_sum(terms: list[RatioTerm], dt_hours: float) -> float:
    """True ratio objective sum_i A_i*C_i * dt (fuel-density division applied
    downstream by the engine's fuel accounting)."""
    return dt_hours * sum(t.a * t.c for t in terms)


def surrogate(terms: list[RatioTerm], aux: AuxiliaryState, dt_hours: float) -> float:
    """Weighted sum-of-squares surrogate (1/2) sum [zeta A^2 + beta C^2] dt."""
    if len(terms) != len(aux):
        raise ValueError(f"got {len(terms)} terms but {len(aux)} auxiliary pairs")
    acc = 0.0
    for term, z, b in zip(terms, aux.zeta, aux.beta):
        acc += z * term.a * term.a + b * term.c * term.c
    return 0.5 * acc * dt_hours


def auxiliary_update(a: float, c: float, clamp: float = DEFAULT_CLAMP) -> tuple[float, float]:
    """Closed-form minimizer of zeta*A^2 + beta*C^2 over zeta*beta >= 1.

    The constraint is active at the optimum, which gives zeta = C/A and
    beta = A/C with A floored at `clamp` so beta stays positive for idle
    terms. The returned pair satisfies zeta*beta = 1 exactly and its
    surrogate contribution equals max(A, clamp)*C.
    """
    if c <= 0.0:
        raise ValueError(f"denominator reciprocal must be > 0, got {c}")
    if clamp <= 0.0:
        raise ValueError(f"clamp must be > 0, got {clamp}")
    a_eff = max(a, clamp)
    return c / a_eff, a_eff / c


def cutting_violation(zeta: float, beta: float) -> float:
    """Cutting-function value l = 2 - beta*sqrt(zeta/beta) - zeta*sqrt(beta/zeta).

    Algebraically 2 - 2*sqrt(zeta*beta): nonpositive exactly when the
    auxiliary constraint zeta*beta >= 1 holds, so a positive value measures
    the violation of the linearized pair constraint.
    """
    if zeta <= 0.0 or beta <= 0.0:
        raise ValueError("cutting function requires positive (zeta, beta)")
    return 2.0 - beta * math.sqrt(zeta / beta) - zeta * math.sqrt(beta / zeta)


def equivalence_gap(terms: list[RatioTerm], aux: AuxiliaryState, dt_hours: float) -> float:
    """Surrogate minus ratio sum; >= 0 (up to rounding) whenever each
    zeta*beta >= 1, and ~0 right after `auxiliary_update` on every term."""
    return surrogate(terms, aux, dt_hours) - ratio_sum(terms, dt_hours)
