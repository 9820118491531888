import numpy as np
import pytest

from app.errors import BoxTooSmall, NotPathCommuting, UnsupportedClass
from app.services.functions import RationalSum, derivative, partial, raised_cosine_bump, synthesize_bump, unit
from app.services.generators import FunctionSpec, InstanceSpec, gen, gen_function, random_rational, rng_for
from app.services.linalg import make_path, shared_eigenlines, trace_norm
from app.services.ssm import (
    AtomicMeasure,
    BoundCheck,
    VerificationReport,
    eigenline_krein_oracle,
    koplienko_lhs,
    koplienko_ssm,
    koplienko_verify,
    krein_exact_ssm,
    krein_lhs,
    krein_ssm,
    krein_verify,
    second_order_weaker_bound,
    weaker_bound_check,
)


@pytest.fixture(scope="module")
def path():
    return gen(InstanceSpec(seed=7, N=8, n=2))


@pytest.fixture(scope="module")
def trig():
    return gen_function(FunctionSpec(cls="trig", seed=7), 2)


@pytest.fixture(scope="module")
def rational():
    return gen_function(FunctionSpec(cls="rational", seed=7), 2)


class TestReports:
    def test_bound_check_slack(self):
        assert BoundCheck("tight", 1.0, 1.0 + 5e-10).passed
        assert not BoundCheck("loose", 1.0, 1.0 + 1e-8).passed

    def test_strict_bound_check_has_no_slack(self):
        assert BoundCheck("weights", 1e-12, 5e-10).passed
        assert not BoundCheck("weights", 1e-12, 5e-10, slack=0.0).passed
        assert BoundCheck("weights", 1e-12, 1e-12, slack=0.0).passed
        assert "slack" not in BoundCheck("weights", 1e-12, 0.0, slack=0.0).as_dict()

    def test_relative_residual(self):
        report = VerificationReport("krein", 3 + 0j, 3 + 0.4j, 1e-8)
        assert report.rel_residual == pytest.approx(0.1)
        assert not report.passed
        report.asserted = False
        assert report.passed

    def test_report_dict_keys(self):
        d = VerificationReport("krein", 1 + 0j, 1 + 0j, 1e-8, [BoundCheck("b", 1.0, 0.5)]).as_dict()
        assert d["pass"] is True
        assert d["lhs"] == [1.0, 0.0]
        assert d["bound_checks"][0]["name"] == "b"


def test_atomic_measure_canonical():
    mu = AtomicMeasure.canonical(2, [[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]], [1.0, 2.0, 3.0])
    assert mu.points.tolist() == [[0.0, 1.0], [1.0, 0.0]]
    assert mu.weights.tolist() == [2 + 0j, 4 + 0j]
    assert mu.total_variation == pytest.approx(6.0)
    assert len(AtomicMeasure.empty(3)) == 0


class TestKrein:
    def test_trig_identity(self, path, trig):
        report = krein_verify(path, trig)
        assert report.passed
        assert report.rel_residual <= 1e-8
        assert report.notes["eigenline_oracle_residual"] <= 1e-10

    def test_rational_identity(self, path, rational):
        assert krein_verify(path, rational).passed

    def test_total_variation_bound(self, path):
        for mu, V in zip(krein_ssm(path), path.direction):
            assert mu.total_variation <= trace_norm(V) * (1 + 1e-9) + 1e-9

    def test_exact_measures_match_oracle(self, path, trig, rational):
        starts, dirs = shared_eigenlines(path)
        for f in (trig, rational):
            exact = krein_exact_ssm(path)
            rhs = sum(m.integrate(partial(f, j)) for j, m in enumerate(exact))
            oracle = eigenline_krein_oracle(starts, dirs, f)
            assert abs(rhs - oracle) <= 1e-10 * (1.0 + abs(oracle))

    def test_zero_perturbation(self, trig):
        path = gen(InstanceSpec(seed=7, N=8, n=2, scale=0.0))
        measures = krein_ssm(path)
        assert all(len(mu) == 0 for mu in measures)
        report = krein_verify(path, trig)
        assert report.lhs == 0
        assert report.passed

    def test_nonnegative_weights_for_psd(self):
        path = gen(InstanceSpec(seed=3, N=8, n=2, psd=True))
        f = gen_function(FunctionSpec(cls="monotone_trig"), 2)
        report = krein_verify(path, f)
        assert report.passed
        check = next(b for b in report.bound_checks if b.name == "nonnegative_weights")
        assert check.slack == 0.0 and check.passed
        assert report.lhs.real >= -1e-10
        for mu in krein_ssm(path):
            assert np.all(mu.weights.real >= -1e-12)

    def test_not_path_commuting(self, trig):
        path = make_path(
            [np.diag([1.0, 2.0]), np.diag([3.0, 4.0])],
            [np.array([[0.0, 1.0], [1.0, 0.0]]), -np.diag([3.0, 4.0])],
        )
        assert not path.path_commuting
        krein_lhs(path, trig)
        with pytest.raises(NotPathCommuting):
            krein_ssm(path)

    def test_other_families(self, trig):
        for spec in (InstanceSpec(seed=1, N=6, n=2, family="direct_sum"),
                     InstanceSpec(seed=1, N=8, n=2, family="function_of_one", spread=1.0, scale=0.3),
                     InstanceSpec(seed=1, N=18, n=2, family="tensor_projection")):
            assert krein_verify(gen(spec), trig).passed


class TestKoplienko:
    def test_rational_identity(self, path, rational):
        report = koplienko_verify(path, rational)
        assert report.passed
        assert report.rel_residual <= 1e-7
        kernels = next(b for b in report.bound_checks if b.name == "kernel_agreement")
        assert kernels.bound == 1e-9
        assert kernels.passed and kernels.attained <= 1e-9
        assert report.notes["eigenline_oracle_residual"] <= 1e-10

    def test_kernel_mismatch_fails_report(self, path, rational, monkeypatch):
        from app.services import ssm
        exact = ssm.koplienko_kernels

        def shifted(*args, **kwargs):
            return {key: value * (1.0 + 1e-6) + 1e-6 for key, value in exact(*args, **kwargs).items()}

        monkeypatch.setattr(ssm, "koplienko_kernels", shifted)
        report = koplienko_verify(path, rational)
        assert report.rel_residual <= 1e-7
        assert not report.passed
        assert not next(b for b in report.bound_checks if b.name == "kernel_agreement").passed

    def test_scalar_closed_form(self):
        f = RationalSum.from_terms([(0.5 + 1j, (2,), 1.0), (-1.0 - 0.7j, (1,), 0.5j)])
        path = make_path([np.array([[0.3]])], [np.array([[0.8]])])
        lhs = koplienko_lhs(path, f)
        df = partial(f, 0).eval(np.array([[0.3]]))[0]
        expected = f.eval(np.array([[1.1]]))[0] - f.eval(np.array([[0.3]]))[0] - 0.8 * df
        assert lhs == pytest.approx(expected, abs=1e-12)
        assert koplienko_verify(path, f).passed

    def test_measures_pair_by_quadrature(self):
        path = gen(InstanceSpec(seed=2, N=4, n=2))
        f = random_rational(rng_for(2), 2, 3, min_imag=1.0)
        for (i, j), nu in koplienko_ssm(path, f).items():
            closed = nu.pair(f)
            quad = nu.integrate(derivative(f, unit(2, i, j)), order=32)
            assert abs(closed - quad) <= 1e-9 * (1.0 + abs(closed))

    def test_trig_measures_unsupported(self, path, trig):
        with pytest.raises(UnsupportedClass):
            koplienko_ssm(path, trig)


class TestWeakerBounds:
    @pytest.fixture
    def bump(self):
        samples, axes = raised_cosine_bump(-3.0, 3.0, 2, points=16)
        return synthesize_bump(samples, axes, cutoff=5).function

    @pytest.fixture
    def small_path(self):
        return gen(InstanceSpec(seed=4, N=4, n=2, scale=0.5))

    def test_first_order_bounds(self, small_path, bump):
        checks = weaker_bound_check(small_path, bump, (-3.0, 3.0))
        assert {c.name for c in checks} >= {"fourier_seminorm_bound", "sup_norm_bound"}
        assert all(c.passed for c in checks)

    def test_box_too_small(self, small_path, bump):
        with pytest.raises(BoxTooSmall):
            weaker_bound_check(small_path, bump, (2.0, 3.0))

    def test_needs_trig(self, small_path, rational):
        with pytest.raises(UnsupportedClass):
            weaker_bound_check(small_path, rational, (-3.0, 3.0))

    def test_second_order_bound(self, small_path, bump):
        assert second_order_weaker_bound(small_path, bump).passed
