import numpy as np
import pytest

from app.errors import InputError
from app.services.quadrature import gauss_legendre, square_rule, triangle_rule


def test_interval_rule_is_exact_to_degree_2q_minus_1():
    x, w = gauss_legendre(4, -1.0, 3.0)
    for k in range(8):
        exact = (3.0 ** (k + 1) - (-1.0) ** (k + 1)) / (k + 1)
        assert abs(np.sum(w * x ** k) - exact) <= 1e-12 * max(1.0, abs(exact))


def test_cached_nodes_are_not_mutated():
    x, _ = gauss_legendre(5, 2.0, 4.0)
    y, _ = gauss_legendre(5)
    assert np.all((x >= 2.0) & (x <= 4.0))
    assert np.all((y >= 0.0) & (y <= 1.0))


def test_square_rule():
    u, v, w = square_rule(6)
    assert abs(np.sum(w) - 1.0) < 1e-13
    assert abs(np.sum(w * u ** 2 * v) - 1.0 / 6.0) < 1e-13


def test_triangle_rule():
    s, r, w = triangle_rule(8)
    assert np.all(r <= s)
    assert abs(np.sum(w) - 0.5) < 1e-13
    # ∫_0^1 ∫_0^s r dr ds = 1/6
    assert abs(np.sum(w * r) - 1.0 / 6.0) < 1e-13
    assert abs(np.sum(w * np.exp(s - r)) - (np.e - 2.0)) < 1e-12


def test_order_must_be_positive():
    with pytest.raises(InputError):
        gauss_legendre(0)
