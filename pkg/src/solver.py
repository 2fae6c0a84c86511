"""
================================================================================
                    q-DRO SOLVER AND CERTIFICATION
================================================================================

MODULE: Robust smoothing estimator and its optimality certificates

DESCRIPTION:
    Solves the reformulated min-max smoothing problem

        min_{x ∈ Δⁿ, λ ≥ 0, β}  Σ_j p̂_j(-log x_j + λ_j) + ε‖-log x - β1 + λ‖_{q*}

    and certifies the answer with KKT residuals (q ∈ (1, ∞)) and, for every q,
    the duality gap: objective value minus the entropy of a feasible adversary
    point, which bounds the optimal value from below.

KEY FEATURES:
    ✓ Smooth path (q ∈ (1, ∞)): λ = 0 at the optimum, so the problem is solved
      in w = log x + β coordinates (x = softmax(w), β = logsumexp(w)):
          min_w  logsumexp(w) - p̂ᵀw + ε‖w‖_{q*}
      BFGS, then a safeguarded Newton polish.
    ✓ Boundary path (q ∈ {1, ∞}): the estimator equals the maximum-entropy
      member of the ambiguity set; clipping thresholds found by root finding.
    ✓ Degenerate closed form (uniform x, β = log n) whenever
      ‖p̂ - uniform‖_q ≤ ε, or when the iterate reaches t ≤ degen_tol.
    ✓ ε = 0 passthrough: x = p̂ for strictly positive p̂.
    ✓ Full-variable projected (sub)gradient method over (x, λ, β).

USAGE EXAMPLES:

    >>> from src.core import Instance, QExponent, validate_distribution
    >>> from src.solver import SolverSettings, solve_qdro, certify_solution
    >>> inst = Instance(validate_distribution([0, .15, .15, .3, .4]), 0.2, QExponent(2))
    >>> sol = solve_qdro(inst, SolverSettings())
    >>> certify_solution(sol, inst).passed
    True

================================================================================
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import brentq, minimize
from scipy.special import logsumexp

from src import constants
from src.axioms import check_assumption1
from src.core import (
    DEFAULT_TOLERANCES,
    DegenerateNormError,
    Distribution,
    EpsilonZeroWithZerosError,
    ExponentKind,
    Instance,
    InvalidExponentError,
    MaxIterationsError,
    QExponent,
    Solution,
    SolverStatus,
    Tolerances,
    UnboundedLossError,
    cross_entropy,
    safe_log,
    uniform_distribution,
)
from src.inner_adversary import WorstCase, dykstra_feasible_point, project_scaled_simplex, worst_case
from src.laplace import laplace_smooth
from src.norms import dual_norm, q_norm, signed_power, v_vector

logger = logging.getLogger(__name__)

_NEWTON_HALVINGS = 30
_HESSIAN_DIAG_CAP = 1e12


class StepPolicy(Enum):
    FIXED_BACKTRACKING = "FixedBacktracking"
    DIMINISHING = "Diminishing"


@dataclass(frozen=True)
class SolverSettings:
    tolerances: Tolerances = DEFAULT_TOLERANCES
    max_iterations: int = constants.MAX_ITERATIONS
    step_policy: StepPolicy = StepPolicy.FIXED_BACKTRACKING
    symmetrize: bool = True
    seed: int = 0

    def __post_init__(self):
        if int(self.max_iterations) < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        object.__setattr__(self, "max_iterations", int(self.max_iterations))
        if not isinstance(self.step_policy, StepPolicy):
            object.__setattr__(self, "step_policy", StepPolicy(self.step_policy))


@dataclass(frozen=True, eq=False)
class KKTReport:
    stationarity_x: np.ndarray
    stationarity_lambda: np.ndarray
    stationarity_beta: float
    complementarity: np.ndarray
    gamma: float
    xi: np.ndarray
    max_residual: float
    gamma_deviation: float
    xi_deviation: float


@dataclass(frozen=True, eq=False)
class Certificate:
    """`duality_gap` bounds suboptimality; `oracle_slack` is objective_full minus the oracle loss."""

    kkt: KKTReport | None
    duality_gap: float
    oracle_slack: float
    worst_case: WorstCase
    assumption1: bool
    passed: bool

    @property
    def method(self) -> str:
        return "kkt" if self.kkt is not None else "gap"


# ----------------------------------------------------------------------------
# Objectives
# ----------------------------------------------------------------------------

def _require_positive(x: Distribution) -> None:
    if np.any(x.probs <= 0):
        j = int(np.argmin(x.probs))
        raise UnboundedLossError(f"objective needs x > 0, got x_{j + 1} = {x.probs[j]:g}")


def objective_full(x: Distribution, lam, beta: float, inst: Instance) -> float:
    """Σ p̂_j(-log x_j + λ_j) + ε‖-log x - β1 + λ‖_{q*}."""
    _require_positive(x)
    lam = np.zeros(x.n) if lam is None else np.asarray(lam, dtype=np.float64)
    c = -np.log(x.probs)
    value = float(inst.p_hat.probs @ (c + lam))
    if inst.epsilon > 0:
        value += inst.epsilon * dual_norm(c - beta + lam, inst.q).value
    return value


def objective_regularized(x: Distribution, beta: float, inst: Instance) -> float:
    """Regularized empirical loss: cross-entropy plus ε‖-log x - β1‖_{q*}."""
    return objective_full(x, np.zeros(x.n), beta, inst)


def optimal_beta(x: Distribution, q: QExponent) -> float:
    """
    argmin_β ‖-log x - β1‖_{q*}: midrange for q = 1, median for q = ∞,
    root of Σ_j |c_j - β|^{q*-1} sgn(c_j - β) = 0 otherwise.
    """
    c = -safe_log(x.probs)
    lo, hi = float(c.min()), float(c.max())
    if hi - lo <= 0.0:
        return lo
    if q.kind is ExponentKind.ONE:
        return 0.5 * (lo + hi)
    if q.kind is ExponentKind.INFINITY:
        return float(np.median(c))
    q_star = q.q_star
    return brentq(lambda b: float(np.sum(signed_power(c - b, q_star))), lo, hi, xtol=1e-15)


def symmetrize(x: Distribution, p_hat: Distribution) -> Distribution:
    """Average x over groups of categories with bitwise-equal p̂."""
    _, groups = np.unique(p_hat.probs, return_inverse=True)
    sums = np.bincount(groups, weights=x.probs)
    sizes = np.bincount(groups)
    if np.all(sizes == 1):
        return x
    return Distribution((sums / sizes)[groups])


# ----------------------------------------------------------------------------
# Solution assembly
# ----------------------------------------------------------------------------

def _degenerate_solution(inst: Instance, iterations: int = 0) -> Solution:
    n = inst.n
    x = uniform_distribution(n)
    beta = math.log(n)
    return Solution(
        x=x,
        beta=beta,
        lam=np.zeros(n),
        objective=objective_full(x, None, beta, inst),
        t=0.0,
        degenerate=True,
        iterations=iterations,
        status=SolverStatus.DEGENERATE,
    )


def _assemble(
    inst: Instance,
    x_raw: np.ndarray,
    settings: SolverSettings,
    iterations: int,
    status: SolverStatus,
    lam: np.ndarray | None = None,
    beta: float | None = None,
) -> Solution:
    x = Distribution(x_raw if inst.is_passthrough else x_raw / x_raw.sum())
    if settings.symmetrize:
        x = symmetrize(x, inst.p_hat)
    lam = np.zeros(inst.n) if lam is None else np.maximum(lam, 0.0)
    if beta is None:
        beta = optimal_beta(x, inst.q)
    t = dual_norm(-np.log(x.probs) - beta + lam, inst.q).value
    if t <= settings.tolerances.degen_tol and not inst.is_passthrough:
        logger.info("t = %.3e <= degen_tol; returning the uniform closed form", t)
        return _degenerate_solution(inst, iterations)
    return Solution(
        x=x,
        beta=float(beta),
        lam=lam,
        objective=objective_full(x, lam, beta, inst),
        t=float(t),
        degenerate=bool(t <= settings.tolerances.degen_tol),
        iterations=iterations,
        status=status if t > settings.tolerances.degen_tol else SolverStatus.DEGENERATE,
    )


def is_degenerate_instance(inst: Instance) -> bool:
    """Uniform x is optimal iff ‖p̂ - uniform‖_q ≤ ε."""
    if inst.is_passthrough:
        return False
    deviation = inst.p_hat.probs - 1.0 / inst.n
    return q_norm(deviation, inst.q) <= inst.epsilon


# ----------------------------------------------------------------------------
# Smooth path, q ∈ (1, ∞)
# ----------------------------------------------------------------------------

class _LogDomainProblem:
    """F(w) = logsumexp(w) - p̂ᵀw + ε‖w‖_{q*} with gradient and Hessian."""

    def __init__(self, inst: Instance):
        self.p_hat = inst.p_hat.probs
        self.eps = inst.epsilon
        self.q = inst.q
        self.p = inst.q.q_star

    def value_and_grad(self, w: np.ndarray) -> tuple[float, np.ndarray]:
        lse = float(logsumexp(w))
        x = np.exp(w - lse)
        dn = dual_norm(w, self.q)
        value = lse - float(self.p_hat @ w) + self.eps * dn.value
        return value, x - self.p_hat + self.eps * dn.argmax_certificate

    def hessian(self, w: np.ndarray) -> np.ndarray:
        x = np.exp(w - logsumexp(w))
        h = np.diag(x) - np.outer(x, x)
        t = dual_norm(w, self.q).value
        if t > 0:
            p = self.p
            phi = np.asarray(signed_power(w, p))
            diag = np.minimum(np.maximum(np.abs(w), 1e-300) ** (p - 2.0), _HESSIAN_DIAG_CAP)
            h += self.eps * (p - 1.0) * (np.diag(diag) / t ** (p - 1.0) - np.outer(phi, phi) / t ** (2.0 * p - 1.0))
        return h

    @staticmethod
    def score(w: np.ndarray, grad: np.ndarray) -> float:
        # relative stationarity max_j |∂F/∂w_j| / x_j
        x = np.exp(w - logsumexp(w))
        return float(np.max(np.abs(grad) / x))


def _solve_smooth(inst: Instance, settings: SolverSettings) -> Solution:
    tol = settings.tolerances
    problem = _LogDomainProblem(inst)
    x0 = laplace_smooth(inst.p_hat, 1.0 / inst.n).probs
    beta0 = -float(x0 @ np.log(x0))
    w0 = np.log(x0) + beta0

    result = minimize(
        problem.value_and_grad,
        w0,
        jac=True,
        method="BFGS",
        options={"maxiter": settings.max_iterations, "gtol": min(1e-10, tol.opt_tol)},
    )
    w = result.x
    iterations = int(max(result.nit, 1))
    logger.debug("BFGS finished after %d iterations: %s", iterations, result.message)

    _, grad = problem.value_and_grad(w)
    score = problem.score(w, grad)
    stalled = False
    while score > tol.opt_tol and iterations < settings.max_iterations:
        iterations += 1
        step = np.linalg.lstsq(problem.hessian(w), -grad, rcond=None)[0]
        alpha, accepted = 1.0, False
        for _ in range(_NEWTON_HALVINGS):
            w_try = w + alpha * step
            _, g_try = problem.value_and_grad(w_try)
            s_try = problem.score(w_try, g_try)
            if s_try < score:
                w, grad, score, accepted = w_try, g_try, s_try, True
                break
            alpha *= 0.5
        if not accepted:
            logger.debug("Newton polish stalled at score %.3e", score)
            stalled = True
            break

    if dual_norm(w, inst.q).value <= tol.degen_tol:
        return _degenerate_solution(inst, iterations)

    # Newton can stall just above opt_tol at machine precision
    if score <= tol.opt_tol or (stalled and score <= 1e3 * tol.opt_tol):
        status = SolverStatus.CONVERGED
    else:
        status = SolverStatus.MAX_ITERATIONS
        logger.warning("⚠️ smooth solver stopped at score %.3e after %d iterations", score, iterations)
    x = np.exp(w - logsumexp(w))
    return _assemble(inst, x, settings, iterations, status)


# ----------------------------------------------------------------------------
# Boundary path, q ∈ {1, ∞}
# ----------------------------------------------------------------------------

def _root(func, lo: float, hi: float, max_iterations: int) -> tuple[float, int, bool]:
    if func(lo) == 0.0:
        return lo, 0, True
    if func(hi) == 0.0:
        return hi, 0, True
    root, info = brentq(func, lo, hi, xtol=1e-15, maxiter=max_iterations, full_output=True, disp=False)
    return root, int(info.iterations), bool(info.converged)


def _solve_boundary(inst: Instance, settings: SolverSettings) -> Solution:
    p_hat, eps = inst.p_hat.probs, inst.epsilon
    budget = settings.max_iterations
    if inst.q.kind is ExponentKind.INFINITY:
        lower = np.maximum(0.0, p_hat - eps)
        upper = p_hat + eps
        tau, iterations, ok = _root(
            lambda level: float(np.clip(level, lower, upper).sum()) - 1.0, 0.0, 1.0, budget
        )
        x = np.clip(tau, lower, upper)
    else:
        # water-filling: ε/2 mass taken from the top and given to the bottom
        half = 0.5 * eps
        floor, it_lo, ok_lo = _root(
            lambda a: float(np.maximum(0.0, a - p_hat).sum()) - half,
            float(p_hat.min()), 1.0 / inst.n, budget,
        )
        ceiling, it_hi, ok_hi = _root(
            lambda b: float(np.maximum(0.0, p_hat - b).sum()) - half,
            1.0 / inst.n, float(p_hat.max()), budget,
        )
        x = np.clip(p_hat, floor, ceiling)
        iterations, ok = it_lo + it_hi, ok_lo and ok_hi
    iterations = max(iterations, 1)
    if iterations > budget:
        ok = False
    status = SolverStatus.CONVERGED if ok else SolverStatus.MAX_ITERATIONS
    if not ok:
        logger.warning("⚠️ boundary solver hit the iteration cap (%d)", budget)
    return _assemble(inst, x, settings, iterations, status)


# ----------------------------------------------------------------------------
# Public entry points
# ----------------------------------------------------------------------------

def solve_qdro(inst: Instance, settings: SolverSettings | None = None) -> Solution:
    """
    Robust smoothing estimator for `inst`.

    Raises:
        EpsilonZeroWithZerosError: ε = 0 and p̂ has zero components
    """
    settings = settings or SolverSettings()
    if inst.is_passthrough:
        if np.any(inst.p_hat.probs <= 0):
            raise EpsilonZeroWithZerosError(
                "epsilon = 0 is only defined for strictly positive p_hat"
            )
        return _assemble(inst, inst.p_hat.probs.copy(), settings, 0, SolverStatus.CONVERGED)
    if is_degenerate_instance(inst):
        logger.info("‖p̂ - uniform‖_q <= ε; uniform estimator is optimal")
        return _degenerate_solution(inst)
    if inst.q.is_smooth:
        solution = _solve_smooth(inst, settings)
    else:
        solution = _solve_boundary(inst, settings)
    logger.info(
        "solved n=%d eps=%g q=%s: status=%s iterations=%d objective=%.10f",
        inst.n, inst.epsilon, inst.q, solution.status.value, solution.iterations, solution.objective,
    )
    return solution


def _project_positive_simplex(v: np.ndarray, floor: float) -> np.ndarray:
    n = v.size
    return floor + project_scaled_simplex(v - floor, 1.0 - n * floor)


def _full_gradient(x, lam, beta, inst: Instance):
    c = -np.log(x)
    dn = dual_norm(c - beta + lam, inst.q)
    u = dn.argmax_certificate
    value = float(inst.p_hat.probs @ (c + lam)) + inst.epsilon * dn.value
    g_x = -(inst.p_hat.probs + inst.epsilon * u) / x
    g_lam = inst.p_hat.probs + inst.epsilon * u
    g_beta = -inst.epsilon * float(u.sum())
    return value, g_x, g_lam, g_beta


def solve_full_problem(inst: Instance, settings: SolverSettings | None = None) -> Solution:
    """
    Projected (sub)gradient method on all variables (x, λ, β), with λ started
    away from zero. λ converges to 0 for every q.
    """
    settings = settings or SolverSettings()
    tol = settings.tolerances
    floor = constants.POSITIVITY_FLOOR
    rng = np.random.default_rng(settings.seed)
    x = laplace_smooth(inst.p_hat, 1.0 / inst.n).probs.copy()
    lam = rng.uniform(0.0, 0.1, size=inst.n)
    beta = optimal_beta(Distribution(x), inst.q)

    def value_at(x_, lam_, beta_):
        return _full_gradient(x_, lam_, beta_, inst)[0]

    value = value_at(x, lam, beta)
    best = (value, x, lam, beta)
    step = 1.0
    status = SolverStatus.MAX_ITERATIONS
    iterations = 0
    window_start = value
    for k in range(settings.max_iterations):
        iterations = k + 1
        value, g_x, g_lam, g_beta = _full_gradient(x, lam, beta, inst)
        if settings.step_policy is StepPolicy.FIXED_BACKTRACKING:
            step = min(1.0, 2.0 * step)
            while True:
                x_new = _project_positive_simplex(x - step * g_x, floor)
                lam_new = np.maximum(lam - step * g_lam, 0.0)
                beta_new = beta - step * g_beta
                moved = (
                    float(np.sum((x_new - x) ** 2) + np.sum((lam_new - lam) ** 2))
                    + (beta_new - beta) ** 2
                )
                new_value = value_at(x_new, lam_new, beta_new)
                if new_value <= value - moved / (2.0 * step) or step < 1e-16:
                    break
                step *= 0.5
            x, lam, beta = x_new, lam_new, beta_new
            if new_value < best[0]:
                best = (new_value, x.copy(), lam.copy(), beta)
            if math.sqrt(moved) / step <= tol.opt_tol:
                status = SolverStatus.CONVERGED
                break
        else:
            step = 0.05 / math.sqrt(k + 1.0)
            x = _project_positive_simplex(x - step * g_x, floor)
            lam = np.maximum(lam - step * g_lam, 0.0)
            beta = beta - step * g_beta
            new_value = value_at(x, lam, beta)
            if new_value < best[0]:
                best = (new_value, x.copy(), lam.copy(), beta)
            if (k + 1) % 200 == 0:
                if window_start - best[0] <= tol.opt_tol:
                    status = SolverStatus.CONVERGED
                    break
                window_start = best[0]

    if status is SolverStatus.MAX_ITERATIONS:
        logger.warning("⚠️ full-problem solver reached %d iterations", settings.max_iterations)
    _, x, lam, beta = best
    return _assemble(inst, x, settings, iterations, status, lam=lam, beta=beta)


# ----------------------------------------------------------------------------
# Certification
# ----------------------------------------------------------------------------

def _kkt_ingredients(sol: Solution, inst: Instance, tolerances: Tolerances):
    if not inst.q.is_smooth:
        raise InvalidExponentError(f"KKT residuals need q in (1, inf), got q={inst.q}")
    v, t = v_vector(sol.x, sol.beta, sol.lam, inst.q, degen_tol=tolerances.degen_tol)
    coef = inst.epsilon / t ** (inst.q.q_star - 1.0)
    return v, coef


def kkt_residuals(sol: Solution, inst: Instance, tolerances: Tolerances = DEFAULT_TOLERANCES) -> KKTReport:
    """
    Residuals of the optimality system in (x, λ, β).

    Raises:
        InvalidExponentError: q ∈ {1, ∞}
        DegenerateNormError: t ≤ degen_tol
    """
    v, coef = _kkt_ingredients(sol, inst, tolerances)
    x = sol.x.probs
    weighted = coef * v + inst.p_hat.probs
    gamma = float(weighted.sum())
    stat_x = gamma - weighted / x
    xi = np.maximum(0.0, weighted)
    stat_lam = np.minimum(0.0, weighted)
    stat_beta = coef * float(v.sum())
    comp = xi * sol.lam
    max_residual = max(
        float(np.max(np.abs(stat_x))),
        float(np.max(np.abs(stat_lam))),
        abs(stat_beta),
        float(np.max(np.abs(comp))),
    )
    return KKTReport(
        stationarity_x=stat_x,
        stationarity_lambda=stat_lam,
        stationarity_beta=stat_beta,
        complementarity=comp,
        gamma=gamma,
        xi=xi,
        max_residual=max_residual,
        gamma_deviation=abs(gamma - 1.0),
        xi_deviation=float(np.max(np.abs(xi - x))),
    )


def pairwise_identity_residual(sol: Solution, inst: Instance, tolerances: Tolerances = DEFAULT_TOLERANCES) -> float:
    """max over pairs of |(x_j - x_i) - coef·(v_j - v_i) - (p̂_j - p̂_i)|."""
    v, coef = _kkt_ingredients(sol, inst, tolerances)
    r = sol.x.probs - coef * v - inst.p_hat.probs
    return float(np.max(np.abs(r[:, None] - r[None, :])))


def adversary_lower_bound(
    x: Distribution, inst: Instance, tolerances: Tolerances = DEFAULT_TOLERANCES
) -> float:
    """
    Entropy of an ambiguity-set member close to `x`.

    Every estimator's worst-case loss is at least the entropy of any feasible
    p, so this bounds the optimal value from below.
    """
    p_hat = inst.p_hat.probs
    if inst.is_passthrough:
        return cross_entropy(inst.p_hat, inst.p_hat)
    try:
        p = dykstra_feasible_point(inst, x.probs, tolerances).probs
    except MaxIterationsError as exc:
        logger.warning("⚠️ %s; pulling the last iterate into the ball", exc)
        p = exc.best.probs
    # pull toward p̂ until the ball holds; the segment stays in the simplex
    distance = q_norm(p - p_hat, inst.q)
    if distance > inst.epsilon:
        p = p_hat + (inst.epsilon / distance) * (p - p_hat)
    feasible = Distribution(p)
    return cross_entropy(feasible, feasible)


def duality_gap(sol: Solution, inst: Instance, tolerances: Tolerances = DEFAULT_TOLERANCES) -> float:
    """
    objective_full at the solution minus `adversary_lower_bound`.

    Nonnegative up to round-off, and zero only when x is optimal.
    """
    return objective_full(sol.x, sol.lam, sol.beta, inst) - adversary_lower_bound(sol.x, inst, tolerances)


def certify_solution(sol: Solution, inst: Instance, tolerances: Tolerances = DEFAULT_TOLERANCES) -> Certificate:
    wc = worst_case(sol.x, inst, tolerances)
    value = objective_full(sol.x, sol.lam, sol.beta, inst)
    slack = value - wc.loss
    gap = value - adversary_lower_bound(sol.x, inst, tolerances)
    assumption1 = check_assumption1(sol, tolerances.degen_tol, wc).passed
    kkt = None
    if inst.q.is_smooth and not sol.degenerate and assumption1:
        try:
            kkt = kkt_residuals(sol, inst, tolerances)
        except DegenerateNormError:
            kkt = None
    # weak duality: value ≥ worst-case loss ≥ lower bound
    passed = slack >= -tolerances.cert_tol and abs(gap) <= tolerances.cert_tol
    if kkt is not None:
        passed = passed and kkt.max_residual <= tolerances.cert_tol
    logger.info(
        "certificate: method=%s gap=%.3e slack=%.3e passed=%s", "kkt" if kkt else "gap", gap, slack, passed
    )
    return Certificate(
        kkt=kkt,
        duality_gap=float(gap),
        oracle_slack=float(slack),
        worst_case=wc,
        assumption1=assumption1,
        passed=passed,
    )
