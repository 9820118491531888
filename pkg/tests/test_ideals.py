import numpy as np
import pytest

from app.errors import InputError, NotMonotone
from app.services.generators import rng_for
from app.services.ideals import (
    PsiFunction,
    SingularValueSeq,
    dominance_check,
    holder_check,
    ideal_property_check,
    jordan_total_norm,
    jordan_weighted_trace,
    lorentz_norm,
    matrix_lorentz_norm,
    psi_growth_certificate,
    root_ideal_norm,
    singular_value_decay_check,
    singular_values,
    triangle_check,
)
from app.services.linalg import trace_norm


def _random(seed, N=5):
    rng = rng_for(seed)
    return rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))


def test_singular_values_descending():
    s = singular_values(np.diag([3.0, -1.0, 2.0]))
    assert np.allclose(s.values, [3.0, 2.0, 1.0])


def test_sequence_must_be_nonincreasing():
    with pytest.raises(NotMonotone):
        SingularValueSeq(np.array([1.0, 2.0]))
    with pytest.raises(NotMonotone):
        SingularValueSeq(np.array([1.0, -0.5]))


def test_psi_validation():
    with pytest.raises(InputError):
        PsiFunction("exp")
    with pytest.raises(InputError):
        PsiFunction.power(0.0)
    with pytest.raises(NotMonotone):
        PsiFunction.table([1.0, 2.0], [2.0, 1.0])


def test_lorentz_norm_log():
    assert lorentz_norm([1.0, 1.0, 1.0]) == pytest.approx(3.0 / np.log(4.0))
    assert lorentz_norm([]) == 0.0


def test_lorentz_norm_table_psi():
    psi = PsiFunction.table([1.0, 10.0], [1.0, 1.0])
    assert lorentz_norm([3.0, 1.0], psi) == pytest.approx(4.0)


class TestInequalities:
    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_holder(self, seed):
        A, B = _random(seed), _random(seed + 100)
        assert holder_check(A, B, "trace_norm").passed
        assert holder_check(A, B, "lorentz", PsiFunction.log1p()).passed

    def test_root_ideal_norm_of_trace_class(self):
        A = _random(4)
        assert root_ideal_norm(A) == pytest.approx(np.linalg.norm(A, "fro"))

    def test_ideal_property(self):
        A, B, C = _random(5), _random(6), _random(7)
        assert ideal_property_check(A, B, C, "lorentz").passed

    def test_triangle(self):
        assert triangle_check(_random(8), _random(9)).passed

    def test_dominance(self):
        A, B = _random(10), _random(11)
        P = A @ A.conj().T
        assert dominance_check(P, P + B @ B.conj().T).passed

    def test_dominance_needs_order(self):
        A = _random(12)
        with pytest.raises(InputError):
            dominance_check(A @ A.conj().T, np.zeros((5, 5)))

    def test_homogeneity(self):
        A = _random(13)
        assert matrix_lorentz_norm(-2.5j * A) == pytest.approx(2.5 * matrix_lorentz_norm(A), rel=1e-12)

    def test_unknown_norm(self):
        with pytest.raises(InputError):
            holder_check(_random(1), _random(2), "schatten_7")


def test_singular_value_decay():
    s = singular_values(_random(14, N=8))
    for alpha in (1.0, 2.0):
        assert all(r.passed for r in singular_value_decay_check(s, alpha=alpha))
    with pytest.raises(InputError):
        singular_value_decay_check(s, alpha=0.5)


class TestGrowth:
    def test_log_growth_is_uniform(self):
        cert = psi_growth_certificate(PsiFunction.log1p(), 0.4, 1e6)
        assert cert.uniform
        assert 1.0 < cert.argmax_t < 1e6
        t = np.logspace(0, 6, 50)
        assert np.all(np.log1p(t) <= cert.C * t ** 0.4 * (1 + 1e-4))

    def test_faster_power_is_not(self):
        assert not psi_growth_certificate(PsiFunction.power(0.9), 0.4, 1e6).uniform

    def test_exponent_range(self):
        with pytest.raises(InputError):
            psi_growth_certificate(PsiFunction.log1p(), 1.5, 1e6)


def test_trace_jordan_decomposition():
    A = _random(15)
    assert jordan_weighted_trace(A) == pytest.approx(np.trace(A))
    assert jordan_total_norm(A) == pytest.approx(trace_norm(A))
