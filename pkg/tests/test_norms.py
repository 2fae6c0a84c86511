from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import Q_VALUES
from src.core import (
    DegenerateNormError,
    InvalidExponentError,
    QExponent,
    uniform_distribution,
    validate_distribution,
)
from src.norms import dual_norm, dual_norm_gradient, q_norm, signed_power, v_vector


def test_q_norm_values():
    y = [3.0, -4.0]
    assert q_norm(y, QExponent(2)) == pytest.approx(5.0)
    assert q_norm(y, QExponent(math.inf)) == pytest.approx(4.0)
    assert q_norm(y, QExponent(1)) == pytest.approx(7.0)
    assert q_norm([0.0, 0.0], QExponent(3)) == 0.0


def test_dual_norm_certificates_for_nonsmooth_q():
    y = np.array([1.0, -3.0, 3.0])
    one = dual_norm(y, QExponent(1))
    assert one.value == pytest.approx(3.0)
    # first coordinate of maximal magnitude, with its sign
    np.testing.assert_array_equal(one.argmax_certificate, [0.0, -1.0, 0.0])

    inf = dual_norm(y, QExponent(math.inf))
    assert inf.value == pytest.approx(7.0)
    np.testing.assert_array_equal(inf.argmax_certificate, [1.0, -1.0, 1.0])


@pytest.mark.parametrize("q", Q_VALUES)
def test_holder_certificate_attains_dual_norm(q, rng):
    exponent = QExponent(q)
    for _ in range(20):
        y = rng.normal(size=6)
        result = dual_norm(y, exponent)
        u = result.argmax_certificate
        assert q_norm(u, exponent) <= 1.0 + 1e-12
        assert float(u @ y) == pytest.approx(result.value, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("q", [3.0, 2.0, 1.5])
def test_dual_norm_gradient_matches_finite_differences(q, rng):
    exponent = QExponent(q)
    h = 1e-6
    for _ in range(100):
        y = rng.normal(size=5)
        grad = dual_norm_gradient(y, exponent)
        numeric = np.empty_like(y)
        for j in range(y.size):
            step = np.zeros_like(y)
            step[j] = h
            numeric[j] = (dual_norm(y + step, exponent).value - dual_norm(y - step, exponent).value) / (2 * h)
        np.testing.assert_allclose(grad, numeric, atol=1e-5)


def test_dual_norm_gradient_rejects_nonsmooth_q():
    with pytest.raises(InvalidExponentError):
        dual_norm_gradient([1.0, 2.0], QExponent(1))
    with pytest.raises(InvalidExponentError):
        dual_norm_gradient([1.0, 2.0], QExponent(math.inf))


def test_signed_power():
    assert signed_power(-2.0, 3.0) == pytest.approx(-4.0)
    assert signed_power(1e-301, 2.0) == 0.0
    np.testing.assert_allclose(signed_power(np.array([4.0, -9.0]), 1.5), [2.0, -3.0])
    with pytest.raises(InvalidExponentError):
        signed_power(1.0, 1.0)


def test_v_vector_on_nonuniform_point():
    x = validate_distribution([0.25, 0.75])
    v, t = v_vector(x, 0.0, None, QExponent(2))
    z = -np.log(x.probs)
    np.testing.assert_allclose(v, z)
    assert t == pytest.approx(float(np.linalg.norm(z)))


def test_v_vector_strict_mode_raises_on_degenerate_point():
    x = uniform_distribution(3)
    with pytest.raises(DegenerateNormError):
        v_vector(x, math.log(3), np.zeros(3), QExponent(2), degen_tol=1e-7)
    with pytest.raises(InvalidExponentError):
        v_vector(x, 0.0, None, QExponent(1))
