"""
================================================================================
                    CORE DOMAIN TYPES
================================================================================

MODULE: Domain types, validation and shared numeric policy

DESCRIPTION:
    Every other module works on the immutable types defined here:

    • Distribution  - a point of the probability simplex (p̂, p or x)
    • QExponent     - the norm exponent q and its dual q*, with q = ∞ tagged
    • Instance      - one smoothing problem (p̂, ε, q)
    • Solution      - solver output (x, β, λ, objective, t, status)
    • Tolerances    - feasibility / optimality / certification thresholds

    The module also owns the exception hierarchy used across the package and
    the cross-entropy loss L(x, p) = Σ p_j (-log x_j).

USAGE EXAMPLES:

    >>> from src.core import validate_distribution, Instance, QExponent
    >>> p_hat = validate_distribution([0.0, 0.15, 0.15, 0.30, 0.40])
    >>> inst = Instance(p_hat, 0.2, QExponent(2.0))

================================================================================
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from src import constants


# ----------------------------------------------------------------------------
# Errors
# ----------------------------------------------------------------------------

class QdroError(Exception):
    """Base class for every error raised by the package."""


class InvalidDistributionError(QdroError, ValueError):
    """Input vector is not a point of the probability simplex."""


class NegativeMassError(InvalidDistributionError):
    pass


class BadSumError(InvalidDistributionError):
    pass


class TooFewCategoriesError(InvalidDistributionError):
    pass


class InvalidExponentError(QdroError, ValueError):
    """Norm exponent outside [1, ∞] or unusable for the requested branch."""


class InvalidInstanceError(QdroError, ValueError):
    pass


class EpsilonZeroWithZerosError(InvalidInstanceError):
    """ε = 0 requested for an empirical distribution with zero components."""


class DegenerateNormError(QdroError):
    """The dual-norm value t vanished (the solution is degenerate)."""


class UnboundedLossError(QdroError):
    """The adversary can drive the cross-entropy loss to +∞."""


class TooLargeError(QdroError, ValueError):
    pass


class MaxIterationsError(QdroError):
    """Iteration cap reached; `best` holds the last usable iterate."""

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class ReportWriteError(QdroError, OSError):
    pass


# ----------------------------------------------------------------------------
# Tolerances
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class Tolerances:
    feas_tol: float = constants.FEAS_TOL
    opt_tol: float = constants.OPT_TOL
    cert_tol: float = constants.CERT_TOL
    degen_tol: float = constants.DEGEN_TOL
    axiom_tol: float = constants.AXIOM_TOL

    def __post_init__(self):
        for name in ("feas_tol", "opt_tol", "cert_tol", "degen_tol", "axiom_tol"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be a positive finite number, got {value}")
        if not self.degen_tol > self.opt_tol:
            raise ValueError(
                f"degen_tol ({self.degen_tol}) must exceed opt_tol ({self.opt_tol})"
            )


DEFAULT_TOLERANCES = Tolerances()


# ----------------------------------------------------------------------------
# Distribution
# ----------------------------------------------------------------------------

def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Distribution:
    """A finalized simplex point. Use `validate_distribution` for raw input."""

    probs: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.probs)
        if arr.size < 2:
            raise TooFewCategoriesError(f"need at least 2 categories, got {arr.size}")
        if not np.all(np.isfinite(arr)):
            raise InvalidDistributionError("distribution has non-finite components")
        if arr.min() < 0.0:
            raise NegativeMassError(f"negative component {arr.min():.3e}")
        total = float(arr.sum())
        if abs(total - 1.0) > constants.FEAS_TOL:
            raise BadSumError(f"components sum to {total!r}, expected 1")
        object.__setattr__(self, "probs", arr)

    @property
    def n(self) -> int:
        return int(self.probs.size)

    def __len__(self) -> int:
        return self.n

    def __iter__(self):
        return iter(self.probs.tolist())

    def __eq__(self, other) -> bool:
        if not isinstance(other, Distribution):
            return NotImplemented
        return bool(np.array_equal(self.probs, other.probs))

    def __hash__(self) -> int:
        return hash(self.probs.tobytes())

    def __repr__(self) -> str:
        inner = ", ".join(f"{v:.6f}" for v in self.probs)
        return f"Distribution([{inner}])"

    def tolist(self) -> list[float]:
        return self.probs.tolist()

    def permuted(self, perm: Sequence[int]) -> "Distribution":
        return Distribution(self.probs[np.asarray(perm)])


def validate_distribution(v: Iterable[float], feas_tol: float = constants.FEAS_TOL) -> Distribution:
    """
    Check that `v` is a simplex point and return it as a Distribution.

    Components in [-feas_tol, 0) are clamped to 0 and the vector is
    renormalized, so the result satisfies the invariants exactly.

    Raises:
        TooFewCategoriesError: fewer than 2 components
        NegativeMassError: a component below -feas_tol
        BadSumError: |sum - 1| > feas_tol
    """
    arr = np.asarray(list(v) if not isinstance(v, np.ndarray) else v, dtype=np.float64).reshape(-1)
    if arr.size < 2:
        raise TooFewCategoriesError(f"need at least 2 categories, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise InvalidDistributionError("distribution has non-finite components")
    if arr.min() < -feas_tol:
        j = int(np.argmin(arr))
        raise NegativeMassError(f"component {j + 1} is {arr[j]:.3e} < -{feas_tol:g}")
    total = float(arr.sum())
    if abs(total - 1.0) > feas_tol:
        raise BadSumError(f"components sum to {total:.12g}, expected 1 within {feas_tol:g}")
    clamped = np.maximum(arr, 0.0)
    return Distribution(clamped / clamped.sum())


def empirical_distribution(counts: Iterable[float]) -> Distribution:
    """Relative frequencies of nonnegative category counts."""
    arr = np.asarray(list(counts), dtype=np.float64)
    if arr.size < 2:
        raise TooFewCategoriesError(f"need at least 2 categories, got {arr.size}")
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise NegativeMassError("counts must be finite and nonnegative")
    total = arr.sum()
    if total <= 0:
        raise BadSumError("counts must have a positive total")
    return validate_distribution(arr / total)


def uniform_distribution(n: int) -> Distribution:
    return Distribution(np.full(n, 1.0 / n))


def safe_log(x: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(np.asarray(x, dtype=np.float64), constants.LOG_FLOOR))


def cross_entropy(p: Distribution, x: Distribution) -> float:
    """
    L(x, p) = Σ_j p_j (-log x_j) with 0·(-log 0) = 0.

    Returns +inf when some category has p_j > 0 and x_j = 0.
    """
    pv, xv = p.probs, x.probs
    if pv.size != xv.size:
        raise InvalidDistributionError(f"dimension mismatch: {pv.size} vs {xv.size}")
    support = pv > 0
    if np.any(xv[support] <= 0):
        return math.inf
    return float(np.dot(pv[support], -np.log(xv[support])))


# ----------------------------------------------------------------------------
# Norm exponent
# ----------------------------------------------------------------------------

class ExponentKind(Enum):
    ONE = "one"
    INTERIOR = "interior"
    INFINITY = "infinity"


@dataclass(frozen=True)
class QExponent:
    """
    Exponent q ∈ [1, ∞] of the ambiguity-set norm.

    The kind tag (ONE / INTERIOR / INFINITY) drives every branch; q = ∞ is
    never treated as a large float.
    """

    q: float
    kind: ExponentKind = field(init=False, compare=False)

    def __post_init__(self):
        q = float(self.q)
        if math.isnan(q) or q < 1.0:
            raise InvalidExponentError(f"q must lie in [1, inf], got {self.q!r}")
        object.__setattr__(self, "q", q)
        if q == 1.0:
            kind = ExponentKind.ONE
        elif math.isinf(q):
            kind = ExponentKind.INFINITY
        else:
            kind = ExponentKind.INTERIOR
        object.__setattr__(self, "kind", kind)

    @classmethod
    def parse(cls, text) -> "QExponent":
        if isinstance(text, (int, float)):
            return cls(float(text))
        token = str(text).strip().lower()
        if token in ("inf", "infinity", "+inf", "∞"):
            return cls(math.inf)
        try:
            value = float(token)
        except ValueError as exc:
            raise InvalidExponentError(f"cannot parse q from {text!r}") from exc
        if math.isinf(value):
            return cls(math.inf)
        return cls(value)

    @property
    def q_star(self) -> float:
        if self.kind is ExponentKind.ONE:
            return math.inf
        if self.kind is ExponentKind.INFINITY:
            return 1.0
        return self.q / (self.q - 1.0)

    @property
    def is_smooth(self) -> bool:
        return self.kind is ExponentKind.INTERIOR

    def dual(self) -> "QExponent":
        return QExponent(self.q_star)

    def to_json(self):
        return "inf" if self.kind is ExponentKind.INFINITY else self.q

    def __str__(self) -> str:
        return "inf" if self.kind is ExponentKind.INFINITY else f"{self.q:g}"


# ----------------------------------------------------------------------------
# Instance and Solution
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class Instance:
    """One q-DRO smoothing problem. ε = 0 is the empirical passthrough mode."""

    p_hat: Distribution
    epsilon: float
    q: QExponent

    def __post_init__(self):
        eps = float(self.epsilon)
        if not math.isfinite(eps) or eps < 0.0:
            raise InvalidInstanceError(
                f"robustness radius epsilon must be > 0 (got {self.epsilon!r})"
            )
        object.__setattr__(self, "epsilon", eps)
        if not isinstance(self.q, QExponent):
            object.__setattr__(self, "q", QExponent.parse(self.q))

    @property
    def n(self) -> int:
        return self.p_hat.n

    @property
    def is_passthrough(self) -> bool:
        return self.epsilon == 0.0

    def with_epsilon(self, epsilon: float) -> "Instance":
        return Instance(self.p_hat, epsilon, self.q)

    def permuted(self, perm: Sequence[int]) -> "Instance":
        return Instance(self.p_hat.permuted(perm), self.epsilon, self.q)


class SolverStatus(Enum):
    CONVERGED = "Converged"
    MAX_ITERATIONS = "MaxIterations"
    DEGENERATE = "Degenerate"


@dataclass(frozen=True, eq=False)
class Solution:
    x: Distribution
    beta: float
    lam: np.ndarray
    objective: float
    t: float
    degenerate: bool
    iterations: int
    status: SolverStatus

    def __post_init__(self):
        lam = _frozen_array(self.lam)
        if lam.size != self.x.n:
            raise ValueError(f"lambda has {lam.size} entries, expected {self.x.n}")
        if lam.size and lam.min() < 0.0:
            raise ValueError("lambda must be nonnegative")
        object.__setattr__(self, "lam", lam)

    @property
    def converged(self) -> bool:
        return self.status is not SolverStatus.MAX_ITERATIONS
