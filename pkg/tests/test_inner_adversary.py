from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import Q_VALUES, SMOOTH_Q_VALUES, make_instance
from src.core import (
    QExponent,
    TooLargeError,
    UnboundedLossError,
    uniform_distribution,
    validate_distribution,
)
from src.inner_adversary import (
    brute_force_worst_case,
    dykstra_feasible_point,
    project_qball,
    project_simplex,
    projected_ascent_worst_case,
    worst_case,
)
from src.norms import q_norm, signed_power
from src.solver import objective_full


def _random_estimator(rng, n: int):
    return validate_distribution(rng.dirichlet(np.ones(n)) * 0.98 + 0.02 / n)


def _random_feasible_point(rng, inst):
    """Random point of the ambiguity set, by shrinking a random direction."""
    p_hat = inst.p_hat.probs
    direction = rng.dirichlet(np.ones(inst.n)) - p_hat
    norm = q_norm(direction, inst.q)
    if norm == 0:
        return p_hat
    scale = min(1.0, inst.epsilon / norm) * rng.uniform(0, 1)
    return p_hat + scale * direction


def test_uniform_estimator_gives_zero_perturbation():
    inst = make_instance([0.1, 0.2, 0.7], 0.3, 2)
    wc = worst_case(uniform_distribution(3), inst)
    np.testing.assert_allclose(wc.e, 0.0)
    assert wc.loss == pytest.approx(math.log(3))
    assert wc.method == "constant"


def test_zero_radius_returns_empirical_distribution():
    inst = make_instance([0.0, 0.4, 0.6], 0.0, 2)
    x = validate_distribution([0.0, 0.5, 0.5])
    wc = worst_case(x, inst)
    assert wc.method == "passthrough"
    np.testing.assert_allclose(wc.p.probs, inst.p_hat.probs)


@pytest.mark.parametrize("q", Q_VALUES)
def test_exact_oracle_is_feasible_and_tight(q, rng):
    for _ in range(10):
        n = int(rng.integers(2, 7))
        inst = make_instance(rng.dirichlet(np.ones(n)), float(rng.uniform(0.05, 0.6)), q)
        x = _random_estimator(rng, n)
        wc = worst_case(x, inst)
        assert wc.p.probs.min() >= 0.0
        assert wc.e.sum() == pytest.approx(0.0, abs=1e-9)
        assert q_norm(wc.e, inst.q) <= inst.epsilon + 1e-8
        assert abs(wc.gap) <= 1e-7
        c = -np.log(x.probs)
        for _ in range(20):
            p = _random_feasible_point(rng, inst)
            assert float(c @ p) <= wc.loss + 1e-9


@pytest.mark.parametrize("q", [1, 2, math.inf])
def test_projected_ascent_agrees_with_exact_oracle(q, rng):
    for _ in range(3):
        inst = make_instance(rng.dirichlet(np.ones(4)), 0.2, q)
        x = _random_estimator(rng, 4)
        exact = worst_case(x, inst)
        ascent = projected_ascent_worst_case(x, inst)
        assert ascent.loss == pytest.approx(exact.loss, abs=1e-4)
        assert ascent.loss <= exact.loss + 1e-8


def test_zero_estimator_component_is_unbounded():
    inst = make_instance([0.0, 0.5, 0.5], 0.1, 2)
    with pytest.raises(UnboundedLossError):
        worst_case(validate_distribution([0.0, 0.5, 0.5]), inst)


def test_vertex_inside_large_ball_leaves_norm_inactive():
    inst = make_instance([0.5, 0.5], 2.0, 2)
    wc = worst_case(validate_distribution([0.2, 0.8]), inst)
    assert wc.method == "vertex"
    np.testing.assert_allclose(wc.p.probs, [1.0, 0.0])
    assert not wc.norm_active
    assert abs(wc.gap) <= 1e-9


def test_project_simplex():
    np.testing.assert_allclose(project_simplex([0.5, 0.5, 0.5]).probs, 1 / 3)
    np.testing.assert_allclose(project_simplex([2.0, 0.0]).probs, [1.0, 0.0])


@pytest.mark.parametrize("q", Q_VALUES)
def test_project_qball_lands_on_boundary(q, rng):
    exponent = QExponent(q)
    center = rng.normal(size=5)
    v = center + 3.0 * rng.normal(size=5)
    projected = project_qball(v, center, 0.5, exponent)
    assert q_norm(projected - center, exponent) == pytest.approx(0.5, abs=1e-9)
    inside = center + np.full(5, 0.01)
    np.testing.assert_array_equal(project_qball(inside, center, 0.5, exponent), inside)


@pytest.mark.parametrize("q", Q_VALUES)
def test_dykstra_returns_member_of_ambiguity_set(q, rng):
    inst = make_instance([0.05, 0.15, 0.3, 0.5], 0.15, q)
    target = rng.normal(size=4)
    p = dykstra_feasible_point(inst, target)
    assert p.probs.min() >= 0.0
    assert q_norm(p.probs - inst.p_hat.probs, inst.q) <= inst.epsilon + 1e-8


def test_brute_force_limits():
    big = make_instance(np.full(5, 0.2), 0.1, 2)
    with pytest.raises(TooLargeError):
        brute_force_worst_case(uniform_distribution(5), big)
    small = make_instance([0.3, 0.7], 0.1, 2)
    with pytest.raises(TooLargeError):
        brute_force_worst_case(uniform_distribution(2), small, grid_step=1e-4)


@pytest.mark.parametrize("q", Q_VALUES)
def test_brute_force_is_a_lower_bound_close_to_exact(q):
    inst = make_instance([0.1, 0.3, 0.6], 0.2, q)
    x = validate_distribution([0.2, 0.3, 0.5])
    exact = worst_case(x, inst)
    lattice = brute_force_worst_case(x, inst, grid_step=1e-3)
    assert lattice.loss <= exact.loss + 1e-7
    assert exact.loss - lattice.loss <= 2e-3 * float(np.abs(np.log(x.probs)).sum())


@pytest.mark.parametrize("q", SMOOTH_Q_VALUES)
def test_tied_costliest_categories_fill_their_face(q):
    inst = make_instance([0.2, 0.2, 0.6], 0.9, q)
    x = validate_distribution([0.1, 0.1, 0.8])
    wc = worst_case(x, inst)
    assert wc.method == "face"
    np.testing.assert_allclose(wc.p.probs, [0.5, 0.5, 0.0])
    assert wc.loss == pytest.approx(math.log(10))
    assert abs(wc.gap) <= 1e-9
    lattice = brute_force_worst_case(x, inst, grid_step=2e-3)
    assert lattice.loss <= wc.loss + 1e-9
    assert lattice.loss == pytest.approx(wc.loss, abs=1e-6)


@pytest.mark.parametrize("q", SMOOTH_Q_VALUES)
def test_tied_costliest_categories_with_binding_ball(q):
    inst = make_instance([0.2, 0.2, 0.6], 0.3, q)
    wc = worst_case(validate_distribution([0.1, 0.1, 0.8]), inst)
    assert wc.method == "kkt"
    assert q_norm(wc.e, inst.q) == pytest.approx(0.3, abs=1e-8)
    assert abs(wc.gap) <= 1e-7


@pytest.mark.parametrize("q", Q_VALUES)
def test_worst_case_loss_grows_with_radius(q, rng):
    p_hat = rng.dirichlet(np.ones(4))
    x = _random_estimator(rng, 4)
    losses = [worst_case(x, make_instance(p_hat, eps, q)).loss for eps in np.linspace(0.02, 0.8, 12)]
    assert np.all(np.diff(losses) >= -1e-9)


@pytest.mark.parametrize("q", Q_VALUES)
def test_every_dual_point_bounds_the_worst_case(q, rng):
    inst = make_instance([0.05, 0.15, 0.3, 0.5], 0.2, q)
    x = _random_estimator(rng, 4)
    loss = worst_case(x, inst).loss
    for _ in range(200):
        lam = rng.exponential(0.5, size=4) * rng.integers(0, 2, size=4)
        beta = float(rng.normal(1.0, 2.0))
        assert objective_full(x, lam, beta, inst) >= loss - 1e-9


@pytest.mark.parametrize("q", SMOOTH_Q_VALUES)
def test_adversary_multiplier_balances_free_categories(q, rng):
    checked = 0
    for _ in range(20):
        n = int(rng.integers(3, 7))
        inst = make_instance(rng.dirichlet(np.ones(n)), float(rng.uniform(0.02, 0.15)), q)
        x = _random_estimator(rng, n)
        wc = worst_case(x, inst)
        if wc.method != "kkt":
            continue
        checked += 1
        assert wc.norm_active
        assert wc.nu_estimate > 0.0
        c = -np.log(x.probs)
        free = (wc.p.probs > 1e-9) & (np.abs(wc.e) > 1e-9)
        residual = c[free] - wc.beta - wc.nu_estimate * q * signed_power(wc.e[free], q)
        assert np.max(np.abs(residual)) <= 1e-6
    assert checked > 0


def test_brute_force_refuses_oversized_lattice():
    inst = make_instance([0.25, 0.25, 0.25, 0.25], 0.5, 2)
    with pytest.raises(TooLargeError):
        brute_force_worst_case(uniform_distribution(4), inst, grid_step=1e-3)
