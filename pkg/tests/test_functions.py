import numpy as np
import pytest

from app.errors import InputError, InvalidSpec, NonUniformGrid, UnsupportedClass
from app.services.functions import (
    RationalSum,
    TrigSum,
    derivative,
    evaluate,
    fourier_l1_estimate,
    mixed_partial_domination,
    partial,
    raised_cosine_bump,
    sup_norm_partial,
    synthesize_bump,
    unit,
    wiener_seminorm,
)


@pytest.fixture
def rational():
    return RationalSum.from_terms([
        (0.3 + 0.7j, (1, 2), 1.0 - 0.5j),
        (-1.0 - 0.6j, (2, 0), 0.25j),
    ])


class TestTrigSum:
    def test_duplicate_frequencies_merge(self):
        f = TrigSum.from_terms([((1.0, 0.0), 1.0), ((1.0, 0.0), 2.0), ((0.0, 1.0), 0.0)])
        assert f.terms() == [((1.0, 0.0), 3 + 0j)]

    def test_eval(self):
        f = TrigSum.from_terms([((1.0, 2.0), 2.0), ((-0.5, 0.0), 1j)])
        x = np.array([[0.3, -0.4], [1.0, 2.0]])
        expected = 2.0 * np.exp(1j * (x[:, 0] + 2 * x[:, 1])) + 1j * np.exp(-0.5j * x[:, 0])
        assert np.allclose(f.eval(x), expected)

    def test_partial_multiplies_by_frequency(self):
        f = TrigSum.from_terms([((3.0,), 2.0)])
        assert partial(f, 0).terms() == [((3.0,), 6j)]

    def test_product_and_sum(self):
        f = TrigSum.from_terms([((1.0,), 1.0)])
        g = TrigSum.from_terms([((-1.0,), 1.0)])
        assert (f * g).terms() == [((0.0,), 1 + 0j)]
        assert len(f + g) == 2

    def test_wiener_seminorm(self):
        f = TrigSum.from_terms([((3.0,), 2.0), ((-2.0,), 1j)])
        assert wiener_seminorm(f, (0,)) == pytest.approx(3.0)
        assert wiener_seminorm(f, (1,)) == pytest.approx(8.0)
        assert wiener_seminorm(f, (2,)) == pytest.approx(22.0)


class TestRationalSum:
    def test_real_pole_rejected(self):
        with pytest.raises(InvalidSpec):
            RationalSum.from_terms([(1.0 + 0j, (1,), 1.0)])

    def test_negative_power_rejected(self):
        with pytest.raises(InvalidSpec):
            RationalSum.from_terms([(1j, (-1,), 1.0)])

    def test_lower(self):
        assert RationalSum.from_terms([(-1j, (1,), 1.0)]).lower
        assert not RationalSum.from_terms([(1j, (1,), 1.0)]).lower

    def test_partial_matches_finite_difference(self, rational):
        x = np.array([0.2, -0.1])
        h = 1e-5
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            fd = (evaluate(rational, x + e) - evaluate(rational, x - e)) / (2 * h)
            assert evaluate(partial(rational, j), x) == pytest.approx(fd, rel=1e-7, abs=1e-9)

    def test_wiener_seminorm_unsupported(self, rational):
        with pytest.raises(UnsupportedClass):
            wiener_seminorm(rational, (1, 0))


def test_derivative_multi_index_checked(rational):
    with pytest.raises(InputError):
        derivative(rational, (1,))
    assert unit(3, 0, 2, 2) == (1, 0, 2)


class TestSupNorm:
    def test_trig_certified_is_seminorm(self):
        f = TrigSum.from_terms([((1.0,), 1.0)])
        est = sup_norm_partial(f, (1,))
        assert est.grid_max == pytest.approx(1.0)
        assert est.certified_upper == pytest.approx(1.0)

    def test_rational_single_pole(self):
        f = RationalSum.from_terms([(1j, (1,), 1.0)])
        est = sup_norm_partial(f, (0,))
        assert est.grid_max > 0.99
        assert est.grid_max <= est.certified_upper + 1e-12
        assert est.certified_upper <= 1.0 + 1e-12

    def test_certified_dominates_grid(self, rational):
        for alpha in [(1, 0), (0, 1), (1, 1), (2, 0)]:
            est = sup_norm_partial(rational, alpha)
            assert est.grid_max <= est.certified_upper

    def test_bad_box(self, rational):
        with pytest.raises(InputError):
            sup_norm_partial(rational, (1, 0), box=((0.0, 1.0),))


class TestBumps:
    def test_raised_cosine_is_exact(self):
        samples, axes = raised_cosine_bump(-2.0, 2.0, 1, points=16)
        syn = synthesize_bump(samples, axes, cutoff=5)
        assert syn.error < 1e-12
        assert len(syn.function) == 3
        assert syn.periods == (4.0,)

    def test_two_dimensional_bump(self):
        samples, axes = raised_cosine_bump(-3.0, 3.0, 2, points=16)
        syn = synthesize_bump(samples, axes, cutoff=5)
        assert syn.error < 1e-12
        assert evaluate(syn.function, (0.0, 0.0)) == pytest.approx(1.0)

    def test_non_uniform_axis(self):
        with pytest.raises(NonUniformGrid):
            synthesize_bump(np.ones(3), [np.array([0.0, 1.0, 3.0])], cutoff=3)

    def test_shape_mismatch(self):
        with pytest.raises(InputError):
            synthesize_bump(np.ones(4), [np.linspace(0, 1, 3)], cutoff=3)

    def test_mixed_partial_domination(self):
        samples, axes = raised_cosine_bump(-2.0, 2.0, 2, points=16)
        f = synthesize_bump(samples, axes, cutoff=5).function
        rows = mixed_partial_domination(f, (-2.0, 2.0))
        assert len(rows) == 4
        assert all(r["pass"] for r in rows)

    def test_fourier_l1_estimate(self):
        samples, axes = raised_cosine_bump(-2.0, 2.0, 1, points=16)
        syn = synthesize_bump(samples, axes, cutoff=5)
        total, bound = fourier_l1_estimate(syn.function, syn.periods)
        assert total == pytest.approx(1.0)
        assert total <= bound

    def test_fourier_l1_needs_lattice(self):
        f = TrigSum.from_terms([((1.0,), 1.0)])
        with pytest.raises(InputError):
            fourier_l1_estimate(f, (4.0,))
