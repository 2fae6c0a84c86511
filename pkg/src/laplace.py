"""
Laplace (add-c) smoothing: f_j(p̂) = (p̂_j + c) / (1 + n·c).

Reference estimator for the axiom suite and the CLI `laplace` comparator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from src.core import Distribution


@dataclass(frozen=True)
class Pseudocount:
    c: float

    def __post_init__(self):
        c = float(self.c)
        if not (c > 0 and math.isfinite(c)):
            raise ValueError(f"pseudocount must be positive and finite, got {self.c!r}")
        object.__setattr__(self, "c", c)


def laplace_smooth(p_hat: Distribution, c: Pseudocount | float) -> Distribution:
    """Add-c smoothing of an empirical distribution."""
    if not isinstance(c, Pseudocount):
        c = Pseudocount(c)
    denom = 1.0 + p_hat.n * c.c
    # split form keeps x_i - x_j = (p̂_i - p̂_j) / denom up to one rounding
    x = p_hat.probs / denom + c.c / denom
    return Distribution(x)


def laplace_quotient(n: int, c: Pseudocount | float) -> float:
    """Common Ratio-Preservation difference quotient 1 / (1 + n·c)."""
    c_val = c.c if isinstance(c, Pseudocount) else float(c)
    return 1.0 / (1.0 + n * c_val)
