import numpy as np
import pytest

from app.errors import DimensionMismatch, InputError, NotCommuting, NotHermitian, ArityMismatch
from app.services.functions import TrigSum
from app.services.generators import InstanceSpec, gen, haar_unitary, rng_for
from app.services.linalg import (
    absolute_value,
    apply_function,
    as_hermitian,
    as_matrix,
    check_commuting,
    eig_hermitian,
    frobenius_norm,
    joint_diagonalize,
    make_path,
    make_tuple,
    operator_norm,
    require_endpoints_commuting,
    shared_eigenlines,
    trace_norm,
)

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)


def _rotated(U, d):
    return (U * np.asarray(d, dtype=float)) @ U.conj().T


@pytest.fixture
def unitary():
    return haar_unitary(rng_for(3), 3)


def test_non_square_rejected():
    with pytest.raises(DimensionMismatch):
        as_matrix(np.zeros((2, 3)))


def test_non_finite_rejected():
    with pytest.raises(InputError):
        as_matrix([[np.nan, 0], [0, 1]])


def test_not_hermitian_is_a_value_error():
    A = np.array([[1, 2], [0, 1]], dtype=complex)
    with pytest.raises(NotHermitian):
        as_hermitian(A)
    with pytest.raises(ValueError):
        as_hermitian(A)


def test_norms_of_diagonal_matrix():
    A = np.diag([1.0, -2.0, 3.0])
    assert trace_norm(A) == pytest.approx(6.0)
    assert operator_norm(A) == pytest.approx(3.0)
    assert frobenius_norm(A) == pytest.approx(np.sqrt(14.0))
    assert trace_norm(np.zeros((3, 3))) == 0.0


def test_eig_hermitian_reconstructs(unitary):
    A = _rotated(unitary, [2.0, -1.0, 0.5])
    U, w = eig_hermitian(A)
    assert np.all(np.diff(w) >= 0)
    assert np.allclose((U * w) @ U.conj().T, A, atol=1e-12)
    assert np.allclose(U.conj().T @ U, np.eye(3), atol=1e-12)


def test_absolute_value(unitary):
    A = _rotated(unitary, [2.0, -1.0, 0.5])
    assert np.allclose(absolute_value(A), _rotated(unitary, [2.0, 1.0, 0.5]), atol=1e-12)


def test_make_tuple_rejects_non_commuting():
    with pytest.raises(NotCommuting) as exc:
        make_tuple([np.diag([1.0, 2.0]), SIGMA_X])
    assert exc.value.pair == (0, 1)
    assert exc.value.detail["commutator_norm"] > 0


def test_make_tuple_rejects_mixed_dimensions():
    with pytest.raises(DimensionMismatch):
        make_tuple([np.eye(2), np.eye(3)])


def test_joint_diagonalize_degenerate_cascade(unitary):
    H1 = _rotated(unitary, [1.0, 1.0, 2.0])
    H2 = _rotated(unitary, [3.0, 4.0, 4.0])
    D = joint_diagonalize([H1, H2])
    for j, H in enumerate((H1, H2)):
        assert np.allclose(D.reconstruct(j), H, atol=1e-10)
    rows = sorted(tuple(np.round(r, 8)) for r in D.table)
    assert rows == [(1.0, 3.0), (1.0, 4.0), (2.0, 4.0)]


def test_apply_function_matches_exponential(unitary):
    H1 = _rotated(unitary, [0.3, -0.7, 1.1])
    H2 = _rotated(unitary, [1.0, 0.0, -1.0])
    f = TrigSum.from_terms([((1.0, 2.0), 1.0)])
    got = apply_function(f, joint_diagonalize([H1, H2]))
    phases = np.exp(1j * (np.array([0.3, -0.7, 1.1]) + 2.0 * np.array([1.0, 0.0, -1.0])))
    assert np.allclose(got, (unitary * phases) @ unitary.conj().T, atol=1e-12)


def test_apply_function_arity_mismatch(unitary):
    f = TrigSum.from_terms([((1.0,), 1.0)])
    with pytest.raises(ArityMismatch):
        apply_function(f, joint_diagonalize([np.eye(3), np.eye(3)]))


class TestPaths:
    def test_shared_basis_is_path_commuting(self):
        path = gen(InstanceSpec(seed=7, N=8, n=2))
        assert path.path_commuting
        for t in (0.0, 0.25, 0.5, 0.75, 1.0):
            assert check_commuting(path.at(t)) is None

    def test_random_hermitian_pair_is_not(self):
        rng = rng_for(11)
        A = rng.standard_normal((4, 4))
        B = rng.standard_normal((4, 4))
        path = make_path([np.zeros((4, 4)), np.diag([1.0, 2.0, 3.0, 4.0])], [B + B.T, np.zeros((4, 4))])
        assert not path.path_commuting
        with pytest.raises(NotCommuting):
            require_endpoints_commuting(make_path([A + A.T, B + B.T], [np.zeros((4, 4))] * 2))

    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatch):
            make_path([np.eye(2)], [np.eye(2), np.eye(2)])

    def test_shared_eigenlines_sum_to_traces(self):
        path = gen(InstanceSpec(seed=5, N=6, n=3))
        starts, dirs = shared_eigenlines(path)
        for j in range(3):
            assert starts[:, j].sum() == pytest.approx(np.trace(path.base[j]).real, abs=1e-10)
            assert dirs[:, j].sum() == pytest.approx(np.trace(path.direction[j]).real, abs=1e-10)

    def test_direct_sum_has_no_shared_eigenlines(self):
        path = gen(InstanceSpec(seed=2, N=6, n=2, family="direct_sum"))
        assert path.path_commuting
        assert shared_eigenlines(path) is None
