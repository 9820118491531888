import numpy as np
import pytest

from app.errors import InputError, UnsupportedClass
from app.services.functions import RationalSum
from app.services.generators import (
    InstanceSpec,
    gen,
    random_hermitian,
    random_rational,
    random_trig,
    rng_for,
)
from app.services.linalg import frobenius_norm, operator_norm
from app.services.perturb import (
    central_difference,
    duhamel_residual,
    first_derivative,
    first_derivative_lipschitz_bound,
    operator_function,
    rational_apply,
    richardson_ratio,
    second_central_difference,
    second_derivative,
)
from app.services.suite import RICHARDSON_STEPS


@pytest.fixture(scope="module")
def path():
    return gen(InstanceSpec(seed=9, N=6, n=2))


@pytest.fixture(scope="module")
def rational():
    return random_rational(rng_for(10), 2, 3, min_imag=1.0)


@pytest.fixture(scope="module")
def trig():
    return random_trig(rng_for(10), 2, 4)


def test_rational_apply_single_resolvent():
    H = np.diag([0.5, -1.0])
    f = RationalSum.from_terms([(2j, (2,), 3.0)])
    expected = np.diag(3.0 / (2j - np.array([0.5, -1.0])) ** 2)
    assert np.allclose(rational_apply(f, [H]), expected)


def test_operator_function_arity(trig):
    with pytest.raises(InputError):
        operator_function(trig, [np.eye(2)])


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_duhamel_identity(seed):
    rng = rng_for(seed)
    f = random_trig(rng, 3, 4)
    context = [random_hermitian(rng, 5) for _ in range(3)]
    A, B = random_hermitian(rng, 5), random_hermitian(rng, 5)
    for j in range(3):
        lhs, rhs, resid = duhamel_residual(f, j, A, B, context)
        assert resid <= 1e-9 * (1.0 + frobenius_norm(lhs))


def test_duhamel_rational():
    rng = rng_for(12)
    f = random_rational(rng, 2, 3)
    context = [random_hermitian(rng, 4) for _ in range(2)]
    lhs, rhs, resid = duhamel_residual(f, 1, random_hermitian(rng, 4), random_hermitian(rng, 4), context)
    assert resid <= 1e-9 * (1.0 + frobenius_norm(lhs))


class TestFirstDerivative:
    def test_matches_central_difference(self, path, trig, rational):
        for f in (trig, rational):
            exact = first_derivative(path, f, 0.5)
            fd = central_difference(path, f, 0.5, 1e-5)
            assert frobenius_norm(exact - fd) <= 1e-7 * (1.0 + frobenius_norm(exact))

    def test_parameter_range(self, path, trig):
        with pytest.raises(InputError):
            first_derivative(path, trig, 1.5)

    def test_arity_checked(self, path):
        f = random_trig(rng_for(1), 3, 2)
        with pytest.raises(InputError):
            first_derivative(path, f, 0.0)

    def test_richardson_ratio_near_four(self, path, trig):
        assert 3.8 <= richardson_ratio(path, trig, 0.5, order=1, steps=RICHARDSON_STEPS) <= 4.2

    @pytest.mark.parametrize("order", [1, 2])
    def test_richardson_ratio_rational(self, path, rational, order):
        assert 3.8 <= richardson_ratio(path, rational, 0.5, order=order, steps=RICHARDSON_STEPS) <= 4.2


class TestSecondDerivative:
    def test_trig_rejected(self, path, trig):
        with pytest.raises(UnsupportedClass):
            second_derivative(path, trig, 0.5)

    def test_bundle_parts(self, path, rational):
        bundle = second_derivative(path, rational, 0.25)
        assert set(bundle.parts) == {(0, 0), (0, 1), (1, 1)}
        assert np.allclose(bundle.assembled(), bundle.second)
        assert np.allclose(bundle.first, first_derivative(path, rational, 0.25))

    def test_matches_second_difference(self, path):
        f = RationalSum.from_terms([(0.3 + 1.5j, (1, 1), 1.0), (-0.2 - 1.2j, (2, 0), 0.5)])
        exact = np.trace(second_derivative(path, f, 0.5).second)
        fd = np.trace(second_central_difference(path, f, 0.5, 1e-3))
        assert abs(exact - fd) <= 1e-4 * (1.0 + abs(exact))

    def test_lipschitz_bound(self, path, rational):
        bound = first_derivative_lipschitz_bound(path, rational)
        for t in (0.0, 0.3, 0.7, 1.0):
            assert operator_norm(second_derivative(path, rational, t).second) <= bound * (1 + 1e-9)
