"""
q-norms, dual norms and the signed-power machinery of the KKT system.

The dual norm of ‖·‖_q is ‖·‖_∞ for q = 1, ‖·‖_{q*} for q ∈ (1, ∞) and ‖·‖_1
for q = ∞. Every dual-norm value comes with a Hölder certificate u
(‖u‖_q ≤ 1, uᵀy = value); for q ∈ (1, ∞) the certificate is also the
gradient of y ↦ ‖y‖_{q*}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from src.core import (
    DegenerateNormError,
    Distribution,
    ExponentKind,
    InvalidExponentError,
    QExponent,
    safe_log,
)

_TINY = 1e-300


@dataclass(frozen=True, eq=False)
class DualNormValue:
    value: float
    argmax_certificate: np.ndarray


def _as_vector(y) -> np.ndarray:
    arr = np.asarray(y, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise ValueError("norm of an empty vector is undefined")
    return arr


def _p_norm(y: np.ndarray, p: float) -> float:
    # scaled to avoid overflow of |y|^p for large p
    scale = float(np.max(np.abs(y)))
    if scale == 0.0:
        return 0.0
    return scale * float(np.sum(np.abs(y / scale) ** p) ** (1.0 / p))


def q_norm(y, q: QExponent) -> float:
    """‖y‖_q; max |y_j| for q = ∞."""
    y = _as_vector(y)
    if q.kind is ExponentKind.INFINITY:
        return float(np.max(np.abs(y)))
    if q.kind is ExponentKind.ONE:
        return float(np.sum(np.abs(y)))
    return _p_norm(y, q.q)


def signed_power(z, q_star: float):
    """
    |z|^{q*-1} sgn(z), elementwise for arrays.

    |z| < 1e-300 maps to 0 before exponentiation.
    """
    if not (1.0 < q_star < math.inf):
        raise InvalidExponentError(f"signed_power needs q* in (1, inf), got {q_star}")
    z_arr = np.asarray(z, dtype=np.float64)
    mag = np.abs(z_arr)
    safe = np.where(mag < _TINY, 0.0, mag)
    out = np.where(mag < _TINY, 0.0, np.sign(z_arr) * safe ** (q_star - 1.0))
    if np.ndim(z) == 0:
        return float(out)
    return out


def dual_norm(y, q: QExponent) -> DualNormValue:
    """
    Dual norm max{yᵀu : ‖u‖_q ≤ 1} with an attaining certificate u.

    For q = 1 the certificate sits on the first coordinate of maximal |y_j|.
    """
    y = _as_vector(y)
    if q.kind is ExponentKind.ONE:
        k = int(np.argmax(np.abs(y)))
        cert = np.zeros_like(y)
        cert[k] = 1.0 if y[k] >= 0 else -1.0
        return DualNormValue(float(abs(y[k])), cert)
    if q.kind is ExponentKind.INFINITY:
        return DualNormValue(float(np.sum(np.abs(y))), np.sign(y))

    q_star = q.q_star
    scale = float(np.max(np.abs(y)))
    if scale == 0.0:
        return DualNormValue(0.0, np.zeros_like(y))
    y_scaled = y / scale
    t_scaled = _p_norm(y_scaled, q_star)
    cert = signed_power(y_scaled, q_star) / t_scaled ** (q_star - 1.0)
    return DualNormValue(scale * t_scaled, np.asarray(cert))


def dual_norm_gradient(y, q: QExponent) -> np.ndarray:
    """Gradient of y ↦ ‖y‖_{q*} for q ∈ (1, ∞); zero at y = 0."""
    if not q.is_smooth:
        raise InvalidExponentError(f"dual norm is not differentiable for q={q}")
    return dual_norm(y, q).argmax_certificate


def v_vector(
    x: Distribution,
    beta: float,
    lam,
    q: QExponent,
    degen_tol: float | None = None,
) -> tuple[np.ndarray, float]:
    """
    KKT ingredients v_j = |z_j|^{q*-1} sgn(z_j) and t = ‖z‖_{q*} for
    z = -log x - β1 + λ.

    Passing `degen_tol` makes the call strict: t ≤ degen_tol raises
    DegenerateNormError.
    """
    if not q.is_smooth:
        raise InvalidExponentError(f"v_vector needs q in (1, inf), got q={q}")
    lam = np.zeros(x.n) if lam is None else np.asarray(lam, dtype=np.float64)
    z = -safe_log(x.probs) - beta + lam
    v = np.asarray(signed_power(z, q.q_star))
    t = _p_norm(z, q.q_star)
    if degen_tol is not None and t <= degen_tol:
        raise DegenerateNormError(
            f"t = {t:.3e} <= degen_tol = {degen_tol:g}; the solution is degenerate"
        )
    return v, t
