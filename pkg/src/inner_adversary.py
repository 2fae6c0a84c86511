"""
================================================================================
                    INNER ADVERSARY (WORST-CASE ORACLE)
================================================================================

MODULE: Worst-case distribution for a fixed estimator x

DESCRIPTION:
    For a fixed estimator x the adversary solves

        max  Σ_j (p̂_j + e_j)(-log x_j)
        s.t. p̂_j + e_j ≥ 0,  Σ_j e_j = 0,  ‖e‖_q ≤ ε

    The oracle is used by the solver's duality-gap certification and by the
    CLI `certify` command. Every WorstCase carries the dual function value at
    the recovered multipliers (β, λ), so `dual_bound - loss` certifies it.

METHODS:
    • exact (default)
        q ∈ (1, ∞): inner KKT system, e_j = max(-p̂_j, s·|c_j-β|^{q*-1} sgn(c_j-β)),
                    solved by nested scalar root finding on (β, s).
        q ∈ {1, ∞}: the feasible set is polyhedral; primal and dual LPs are
                    solved with HiGHS (vertex solution).
    • projected_ascent
        projected gradient ascent on p with Dykstra alternating projections
        onto Δⁿ ∩ {‖p - p̂‖_q ≤ ε}; for q ∈ {1, ∞} the LP vertex refines it.
    • brute_force_worst_case
        lattice enumeration for n ≤ 4, used as an independent test oracle.

================================================================================
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy.optimize import brentq, linprog

from src import constants
from src.core import (
    DEFAULT_TOLERANCES,
    Distribution,
    ExponentKind,
    Instance,
    MaxIterationsError,
    QdroError,
    QExponent,
    Tolerances,
    TooLargeError,
    UnboundedLossError,
    safe_log,
    validate_distribution,
)
from src.norms import dual_norm, q_norm, signed_power

logger = logging.getLogger(__name__)

_HIGHS_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}
_BRACKET_STEPS = 400
_LOG_S_CAP = 700.0


@dataclass(frozen=True, eq=False)
class WorstCase:
    e: np.ndarray
    p: Distribution
    loss: float
    norm_active: bool
    nu_estimate: float
    beta: float
    dual_bound: float
    method: str

    @property
    def gap(self) -> float:
        """Dual bound minus attained loss (nan when no dual information)."""
        return self.dual_bound - self.loss


# ----------------------------------------------------------------------------
# Projections
# ----------------------------------------------------------------------------

def project_scaled_simplex(v: np.ndarray, z: float = 1.0) -> np.ndarray:
    """Sort-and-threshold projection onto {y ≥ 0, Σy = z}."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    u = np.sort(v)[::-1]
    cssv = np.cumsum(u) - z
    ind = np.arange(1, v.size + 1)
    cond = u - cssv / ind > 0
    rho = int(np.count_nonzero(cond))
    theta = cssv[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


def project_simplex(v) -> Distribution:
    """Euclidean projection of v onto the probability simplex."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise ValueError("cannot project an empty vector")
    y = project_scaled_simplex(v, 1.0)
    return Distribution(y / y.sum())


def _shrink_magnitudes(d: np.ndarray, radius: float, q: float) -> np.ndarray:
    """Magnitudes a solving min ½‖a-|d|‖² s.t. Σ a^q ≤ radius^q, for q ∈ (1,∞)."""
    mag = np.abs(d)
    target = radius ** q

    def magnitudes(log_kappa: float) -> np.ndarray:
        kappa = math.exp(log_kappa)
        out = np.zeros_like(mag)
        for j, m in enumerate(mag):
            if m == 0.0:
                continue
            # a + κ a^{q-1} = |d_j| has a unique root in [0, |d_j|]
            out[j] = brentq(lambda a: a + kappa * a ** (q - 1.0) - m, 0.0, m, xtol=1e-15)
        return out

    def excess(log_kappa: float) -> float:
        return float(np.sum(magnitudes(log_kappa) ** q)) - target

    lo, hi = -10.0, 0.0
    steps = 0
    while excess(hi) > 0 and steps < _BRACKET_STEPS:
        lo, hi = hi, hi + 2.0
        steps += 1
    while excess(lo) < 0 and steps < _BRACKET_STEPS:
        lo -= 2.0
        steps += 1
    log_kappa = brentq(excess, lo, hi, xtol=1e-14)
    return magnitudes(log_kappa)


def project_qball(v, center, radius: float, q: QExponent) -> np.ndarray:
    """
    Euclidean projection of v onto {z : ‖z - center‖_q ≤ radius}.

    Exact for q ∈ {1, 2, ∞}; other q use root finding on the multiplier of
    the norm constraint.
    """
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    center = np.asarray(center, dtype=np.float64).reshape(-1)
    d = v - center
    if radius < 0:
        raise ValueError(f"radius must be nonnegative, got {radius}")
    if q_norm(d, q) <= radius:
        return v.copy()
    if radius == 0.0:
        return center.copy()
    if q.kind is ExponentKind.INFINITY:
        return center + np.clip(d, -radius, radius)
    if q.kind is ExponentKind.ONE:
        return center + np.sign(d) * project_scaled_simplex(np.abs(d), radius)
    if q.q == 2.0:
        return center + d * (radius / float(np.linalg.norm(d)))
    return center + np.sign(d) * _shrink_magnitudes(d, radius, q.q)


def dykstra_feasible_point(
    inst: Instance,
    target,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    max_iterations: int = constants.DYKSTRA_MAX_ITERATIONS,
) -> Distribution:
    """
    Projection of `target` onto Δⁿ ∩ {‖p - p̂‖_q ≤ ε} by Dykstra's algorithm.

    Raises:
        MaxIterationsError: cap reached; `best` holds the last simplex iterate
    """
    p_hat = inst.p_hat.probs
    x = np.asarray(target, dtype=np.float64).reshape(-1).copy()
    if x.size != inst.n:
        raise ValueError(f"target has {x.size} entries, expected {inst.n}")
    p_inc = np.zeros_like(x)
    q_inc = np.zeros_like(x)
    y = x
    for k in range(1, max_iterations + 1):
        y = project_scaled_simplex(x + p_inc, 1.0)
        p_inc = x + p_inc - y
        x_next = project_qball(y + q_inc, p_hat, inst.epsilon, inst.q)
        q_inc = y + q_inc - x_next
        change = float(np.linalg.norm(x_next - x))
        x = x_next
        ball_violation = q_norm(y - p_hat, inst.q) - inst.epsilon
        if change <= tolerances.opt_tol and ball_violation <= tolerances.feas_tol:
            logger.debug("Dykstra converged after %d iterations", k)
            return Distribution(y / y.sum())
    best = Distribution(y / y.sum())
    raise MaxIterationsError(
        f"Dykstra projection did not converge in {max_iterations} iterations", best=best
    )


# ----------------------------------------------------------------------------
# Helpers
# ----------------------------------------------------------------------------

def _cost(x: Distribution) -> np.ndarray:
    return -safe_log(x.probs)


def _ensure_bounded(x: Distribution, inst: Instance) -> None:
    if x.n != inst.n:
        raise ValueError(f"estimator has {x.n} categories, instance has {inst.n}")
    reachable = inst.p_hat.probs > 0 if inst.is_passthrough else np.ones(inst.n, dtype=bool)
    zero = (x.probs <= 0) & reachable
    if np.any(zero):
        j = int(np.flatnonzero(zero)[0])
        raise UnboundedLossError(
            f"x_{j + 1} = 0 while the adversary can put mass on category {j + 1}"
        )


def _dual_value(p_hat: np.ndarray, c: np.ndarray, beta: float, lam: np.ndarray, inst: Instance) -> float:
    return float(p_hat @ (c + lam)) + inst.epsilon * dual_norm(c - beta + lam, inst.q).value


def _finalize(
    p_raw: np.ndarray,
    c: np.ndarray,
    inst: Instance,
    tolerances: Tolerances,
    nu: float,
    beta: float,
    dual_bound: float,
    method: str,
) -> WorstCase:
    p = validate_distribution(np.maximum(p_raw, 0.0), feas_tol=tolerances.feas_tol)
    e = p.probs - inst.p_hat.probs
    norm = q_norm(e, inst.q)
    return WorstCase(
        e=e,
        p=p,
        loss=float(c @ p.probs),
        norm_active=bool(norm >= inst.epsilon - tolerances.cert_tol),
        nu_estimate=max(0.0, float(nu)),
        beta=float(beta),
        dual_bound=float(dual_bound),
        method=method,
    )


def _no_perturbation(c: np.ndarray, inst: Instance, tolerances: Tolerances, method: str) -> WorstCase:
    p_hat = inst.p_hat.probs
    beta = float(c[0])
    bound = _dual_value(p_hat, c, beta, np.zeros_like(c), inst)
    return _finalize(p_hat.copy(), c, inst, tolerances, 0.0, beta, bound, method)


def _is_constant(c: np.ndarray) -> bool:
    return float(c.max() - c.min()) <= 1e-14 * max(1.0, float(np.max(np.abs(c))))


def _argmax_face_if_feasible(c: np.ndarray, inst: Instance, tolerances: Tolerances):
    """
    Adversary point on the face of the costliest categories, when the ball reaches it.

    Any such point attains max c. Spreading the off-face mass equally over the
    face gives the face point closest to p̂ in q-norm.
    """
    p_hat = inst.p_hat.probs
    c_max = float(c.max())
    top = c >= c_max - 1e-14 * max(1.0, abs(c_max))
    share = (1.0 - float(p_hat[top].sum())) / np.count_nonzero(top)
    face = np.where(top, p_hat + share, 0.0)
    if q_norm(face - p_hat, inst.q) > inst.epsilon:
        return None
    # β = max c and λ_j = max c - c_j zero the norm argument
    lam = c_max - c
    bound = _dual_value(p_hat, c, c_max, lam, inst)
    method = "vertex" if np.count_nonzero(top) == 1 else "face"
    return _finalize(face, c, inst, tolerances, 0.0, c_max, bound, method)


# ----------------------------------------------------------------------------
# Exact oracles
# ----------------------------------------------------------------------------

def _kkt_worst_case(c: np.ndarray, inst: Instance, tolerances: Tolerances) -> WorstCase:
    """Solve the inner KKT system for q ∈ (1, ∞)."""
    p_hat = inst.p_hat.probs
    q, q_star = inst.q.q, inst.q.q_star
    c_lo, c_hi = float(c.min()), float(c.max())

    def perturbation(s: float, beta: float) -> np.ndarray:
        return np.maximum(-p_hat, s * signed_power(c - beta, q_star))

    def balance(s: float) -> float:
        return brentq(lambda b: float(perturbation(s, b).sum()), c_lo, c_hi, xtol=1e-15)

    def radius_excess(log_s: float) -> float:
        s = math.exp(log_s)
        return q_norm(perturbation(s, balance(s)), inst.q) - inst.epsilon

    lo, hi = 0.0, 0.0
    steps = 0
    while radius_excess(lo) >= 0 and steps < _BRACKET_STEPS:
        lo -= 2.0
        steps += 1
    reached = True
    while radius_excess(hi) < 0:
        if steps >= _BRACKET_STEPS or hi + 2.0 > _LOG_S_CAP:
            # ball never binds along the KKT path; the largest s is the best iterate
            reached = False
            break
        lo, hi = hi, hi + 2.0
        steps += 1
    log_s = brentq(radius_excess, lo, hi, xtol=1e-13) if reached else hi
    s = math.exp(log_s)
    beta = balance(s)
    e = perturbation(s, beta)

    kappa = s ** (-(q - 1.0))  # ν·q
    clipped = e <= -p_hat
    lam = np.where(clipped, np.maximum(0.0, beta - c + kappa * signed_power(e, q)), 0.0)

    free = (~clipped) & (np.abs(e) > 1e-15)
    a = q * signed_power(e[free], q) if np.any(free) else np.zeros(0)
    if a.size and float(a @ a) > 0:
        nu = float((c[free] - beta) @ a) / float(a @ a)
    else:
        nu = kappa / q
    bound = _dual_value(p_hat, c, beta, lam, inst)
    logger.debug("KKT worst case: s=%.6e beta=%.12f nu=%.6e", s, beta, nu)
    return _finalize(p_hat + e, c, inst, tolerances, nu, beta, bound, "kkt")


def _lp_worst_case(c: np.ndarray, inst: Instance, tolerances: Tolerances) -> WorstCase:
    """Vertex solution of the polyhedral inner problem for q ∈ {1, ∞}."""
    p_hat = inst.p_hat.probs
    n, eps = inst.n, inst.epsilon

    if inst.q.kind is ExponentKind.INFINITY:
        bounds = [(max(-p_hat[j], -eps), eps) for j in range(n)]
        primal = linprog(
            -c, A_eq=np.ones((1, n)), b_eq=[0.0], bounds=bounds,
            method="highs", options=_HIGHS_OPTIONS,
        )
        e = primal.x if primal.status == 0 else None
        abs_vars = n
    else:
        # e = u - w with u, w ≥ 0
        a_eq = np.concatenate([np.ones(n), -np.ones(n)])[None, :]
        a_ub = np.vstack([
            np.ones(2 * n)[None, :],
            np.hstack([-np.eye(n), np.eye(n)]),
        ])
        b_ub = np.concatenate([[eps], p_hat])
        primal = linprog(
            np.concatenate([-c, c]), A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[0.0],
            bounds=[(0, None)] * (2 * n), method="highs", options=_HIGHS_OPTIONS,
        )
        e = primal.x[:n] - primal.x[n:] if primal.status == 0 else None
        abs_vars = 1
    if e is None:
        raise QdroError(f"inner LP failed: {primal.message}")

    # dual: min p̂ᵀλ + ε Σ s  s.t. |c_j - β + λ_j| ≤ s_k(j),  variables [λ, β, s]
    rows, rhs = [], []
    for j in range(n):
        k = j if abs_vars == n else 0
        upper = np.zeros(n + 1 + abs_vars)
        upper[j], upper[n], upper[n + 1 + k] = 1.0, -1.0, -1.0
        lower = np.zeros(n + 1 + abs_vars)
        lower[j], lower[n], lower[n + 1 + k] = -1.0, 1.0, -1.0
        rows.extend([upper, lower])
        rhs.extend([-c[j], c[j]])
    objective = np.concatenate([p_hat, [0.0], np.full(abs_vars, eps)])
    bounds = [(0, None)] * n + [(None, None)] + [(0, None)] * abs_vars
    dual = linprog(
        objective, A_ub=np.array(rows), b_ub=np.array(rhs), bounds=bounds,
        method="highs", options=_HIGHS_OPTIONS,
    )
    if dual.status != 0:
        raise QdroError(f"inner dual LP failed: {dual.message}")
    lam = np.maximum(dual.x[:n], 0.0)
    beta = float(dual.x[n])
    nu = float(np.sum(dual.x[n + 1:]))
    bound = _dual_value(p_hat, c, beta, lam, inst)
    return _finalize(p_hat + e, c, inst, tolerances, nu, beta, bound, "lp")


def _exact_worst_case(c: np.ndarray, inst: Instance, tolerances: Tolerances) -> WorstCase:
    if inst.q.is_smooth:
        face = _argmax_face_if_feasible(c, inst, tolerances)
        if face is not None:
            return face
        return _kkt_worst_case(c, inst, tolerances)
    return _lp_worst_case(c, inst, tolerances)


def projected_ascent_worst_case(
    x: Distribution,
    inst: Instance,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    max_iterations: int = constants.ASCENT_MAX_ITERATIONS,
) -> WorstCase:
    """
    Projected gradient ascent on p = p̂ + e with fixed step 1/L,
    L = max_j c_j - min_j c_j, and Dykstra feasibility restoration.
    """
    _ensure_bounded(x, inst)
    c = _cost(x)
    if inst.is_passthrough or _is_constant(c):
        return _no_perturbation(c, inst, tolerances, "projected_ascent")
    step = 1.0 / float(c.max() - c.min())
    p = inst.p_hat.probs.copy()
    loss = float(c @ p)
    for k in range(1, max_iterations + 1):
        try:
            p_next = dykstra_feasible_point(inst, p + step * c, tolerances).probs
        except MaxIterationsError as exc:
            logger.warning("⚠️ Dykstra cap hit at ascent iteration %d", k)
            p_next = exc.best.probs
        next_loss = float(c @ p_next)
        converged = abs(next_loss - loss) < tolerances.opt_tol
        if next_loss >= loss:
            p, loss = p_next, next_loss
        if converged:
            logger.debug("projected ascent converged after %d iterations", k)
            break
    else:
        logger.warning("⚠️ projected ascent reached %d iterations", max_iterations)

    result = _finalize(p, c, inst, tolerances, 0.0, math.nan, math.nan, "projected_ascent")
    if not inst.q.is_smooth:
        refined = _lp_worst_case(c, inst, tolerances)
        if refined.loss >= result.loss:
            return refined
    return result


def worst_case(
    x: Distribution,
    inst: Instance,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    method: str = "exact",
) -> WorstCase:
    """
    Adversary's best response to the estimator x.

    Raises:
        UnboundedLossError: some x_j = 0 on a category the adversary can reach
    """
    if method == "projected_ascent":
        return projected_ascent_worst_case(x, inst, tolerances)
    if method != "exact":
        raise ValueError(f"unknown worst-case method {method!r}")
    _ensure_bounded(x, inst)
    c = _cost(x)
    if inst.is_passthrough:
        return _no_perturbation(c, inst, tolerances, "passthrough")
    if _is_constant(c):
        # every feasible e is optimal; e = 0 is returned
        return _no_perturbation(c, inst, tolerances, "constant")
    result = _exact_worst_case(c, inst, tolerances)
    logger.debug("worst case via %s: loss=%.12f gap=%.3e", result.method, result.loss, result.gap)
    return result


# ----------------------------------------------------------------------------
# Brute-force lattice oracle
# ----------------------------------------------------------------------------

def _lattice_chunks(offsets: np.ndarray, dims: int) -> Iterator[np.ndarray]:
    if dims <= 2:
        mesh = np.meshgrid(*([offsets] * dims), indexing="ij")
        yield np.stack([m.ravel() for m in mesh], axis=1)
        return
    for value in offsets:
        for sub in _lattice_chunks(offsets, dims - 1):
            yield np.column_stack([np.full(len(sub), value), sub])


def _row_norms(e: np.ndarray, q: QExponent) -> np.ndarray:
    if q.kind is ExponentKind.INFINITY:
        return np.max(np.abs(e), axis=1)
    if q.kind is ExponentKind.ONE:
        return np.sum(np.abs(e), axis=1)
    return np.sum(np.abs(e) ** q.q, axis=1) ** (1.0 / q.q)


def brute_force_worst_case(
    x: Distribution,
    inst: Instance,
    grid_step: float = constants.BRUTE_FORCE_MIN_STEP,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> WorstCase:
    """
    Best point of the perturbation lattice {e : e_j ∈ grid_step·ℤ (j < n),
    e_n = -Σ e_j} inside the ambiguity set.

    Raises:
        TooLargeError: n > 4, grid_step < 1e-3 or more than 2e6 lattice points
    """
    if inst.n > constants.BRUTE_FORCE_MAX_CATEGORIES:
        raise TooLargeError(
            f"brute force supports n <= {constants.BRUTE_FORCE_MAX_CATEGORIES}, got {inst.n}"
        )
    if grid_step < constants.BRUTE_FORCE_MIN_STEP:
        raise TooLargeError(f"grid_step must be >= {constants.BRUTE_FORCE_MIN_STEP:g}")
    _ensure_bounded(x, inst)
    c = _cost(x)
    p_hat = inst.p_hat.probs
    k_max = int(math.floor(inst.epsilon / grid_step + 1e-9))
    points = (2 * k_max + 1) ** (inst.n - 1)
    if points > constants.BRUTE_FORCE_MAX_POINTS:
        raise TooLargeError(
            f"lattice has {points} points, limit is {constants.BRUTE_FORCE_MAX_POINTS}; raise grid_step"
        )
    offsets = np.arange(-k_max, k_max + 1) * grid_step

    best_loss, best_e = -math.inf, np.zeros(inst.n)
    for head in _lattice_chunks(offsets, inst.n - 1):
        e = np.column_stack([head, -head.sum(axis=1)])
        p = p_hat + e
        feasible = np.all(p >= -tolerances.feas_tol, axis=1)
        feasible &= _row_norms(e, inst.q) <= inst.epsilon + tolerances.feas_tol
        if not np.any(feasible):
            continue
        losses = np.where(feasible, p @ c, -math.inf)
        idx = int(np.argmax(losses))
        if losses[idx] > best_loss:
            best_loss, best_e = float(losses[idx]), e[idx]
    return _finalize(p_hat + best_e, c, inst, tolerances, 0.0, math.nan, math.nan, "brute_force")
