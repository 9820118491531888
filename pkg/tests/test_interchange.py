import json

import numpy as np
import pytest

from app.errors import DimensionMismatch, InputError, UnsupportedClass
from app.services import interchange
from app.services.generators import InstanceSpec, gen, random_rational, random_trig, rng_for
from app.services.ssm import AtomicMeasure, BoundCheck, VerificationReport, koplienko_ssm, krein_ssm


def test_fmt_round_trips():
    assert interchange.fmt(0.1) == "0.10000000000000001"
    assert interchange.fmt(float("nan")) == "NaN"
    assert interchange.fmt(float("-inf")) == "-Infinity"
    for x in rng_for(0).standard_normal(20) * 1e3:
        assert float(interchange.fmt(x)) == x


def test_dumps_layout():
    text = interchange.dumps({"a": [1, 2.5], "b": {"c": np.float64(0.25)}, "z": 1 + 2j})
    assert text == '{\n  "a": [1, 2.5],\n  "b": {\n    "c": 0.25\n  },\n  "z": [1, 2]\n}\n'
    assert json.loads(text)["z"] == [1.0, 2.0]


def test_read_json_rejects_garbage(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(InputError):
        interchange.read_json(p)


class TestMatrices:
    def test_round_trip(self):
        A = rng_for(1).standard_normal((3, 3)) + 1j * rng_for(2).standard_normal((3, 3))
        doc = json.loads(interchange.dumps(interchange.matrix_to_dict(A)))
        assert np.array_equal(interchange.matrix_from_dict(doc), A)

    def test_declared_dimension_checked(self):
        with pytest.raises(DimensionMismatch):
            interchange.matrix_from_dict({"dim": 3, "re": [[1, 0], [0, 1]]})

    def test_malformed(self):
        with pytest.raises(InputError):
            interchange.matrix_from_dict({"re": [[1]]})

    def test_path_round_trip(self):
        path = gen(InstanceSpec(seed=3, N=4, n=2))
        doc = json.loads(interchange.dumps(interchange.path_to_dict(path)))
        base, direction = interchange.path_from_dict(doc)
        for x, y in zip(base + direction, list(path.base) + list(path.direction)):
            assert np.array_equal(x, y)

    def test_tuple_round_trip(self):
        path = gen(InstanceSpec(seed=4, N=3, n=3))
        doc = json.loads(interchange.dumps(interchange.tuple_to_dict(path.base)))
        assert len(doc["matrices"]) == 3
        for x, y in zip(interchange.tuple_from_dict(doc), path.base):
            assert np.array_equal(x, y)
        with pytest.raises(InputError):
            interchange.tuple_from_dict({})

    def test_path_missing_direction(self):
        with pytest.raises(InputError):
            interchange.path_from_dict({"base": []})


class TestFunctions:
    @pytest.mark.parametrize("f", [random_trig(rng_for(4), 2, 5), random_rational(rng_for(4), 3, 4)])
    def test_round_trip(self, f):
        doc = json.loads(interchange.dumps(interchange.function_to_dict(f)))
        g = interchange.function_from_dict(doc)
        x = rng_for(5).uniform(-2, 2, (7, f.arity))
        assert np.array_equal(f.eval(x), g.eval(x))

    def test_unknown_class(self):
        with pytest.raises(UnsupportedClass):
            interchange.function_from_dict({"class": "bessel", "arity": 1, "terms": []})

    def test_bad_complex(self):
        with pytest.raises(InputError):
            interchange.function_from_dict({"class": "trig", "arity": 1, "terms": [{"freq": [1.0], "coeff": [1, 2, 3]}]})


class TestMeasures:
    def test_empty_measure_has_header_only(self, tmp_path):
        p = interchange.write_measure_csv(tmp_path / "mu.csv", AtomicMeasure.empty(2))
        assert p.read_text() == "lambda_1,lambda_2,re_weight,im_weight\n"
        assert len(interchange.read_measure_csv(p)) == 0

    def test_csv_preserves_measure(self, tmp_path):
        path = gen(InstanceSpec(seed=6, N=6, n=2))
        f = random_trig(rng_for(6), 2, 3)
        for j, mu in enumerate(krein_ssm(path)):
            back = interchange.read_measure_csv(interchange.write_measure_csv(tmp_path / f"mu_{j}.csv", mu))
            assert np.array_equal(back.points, mu.points)
            assert np.array_equal(back.weights, mu.weights)
            assert back.integrate(f) == mu.integrate(f)

    def test_bad_header(self, tmp_path):
        p = tmp_path / "mu.csv"
        p.write_text("x,y\n1,2\n")
        with pytest.raises(InputError):
            interchange.read_measure_csv(p)

    def test_simplex_sidecar(self, tmp_path):
        path = gen(InstanceSpec(seed=6, N=4, n=2))
        f = random_rational(rng_for(6), 2, 3)
        measures = koplienko_ssm(path, f)
        p = interchange.write_json(tmp_path / "nu.json", interchange.simplex_to_dict(measures))
        back = interchange.simplex_from_dict(interchange.read_json(p))
        assert set(back) == set(measures)
        for key, nu in measures.items():
            assert back[key].pair(f) == pytest.approx(nu.pair(f), rel=1e-14, abs=1e-14)


def test_sequence_round_trip(tmp_path):
    values = rng_for(7).standard_normal(10)
    back = interchange.read_sequence(interchange.write_sequence(tmp_path / "s.txt", values))
    assert np.array_equal(back, values)


def test_reports_are_byte_stable(tmp_path):
    def report():
        return VerificationReport("krein", 1.5 + 0.1j, 1.5 + 0.1j, 1e-8, [BoundCheck("tv", 2.0, 1.0)], {"b": 1.0, "a": 2.0})

    a = interchange.write_report(tmp_path / "a.json", [report(), report()])
    b = interchange.write_report(tmp_path / "b.json", [report(), report()])
    assert a.read_bytes() == b.read_bytes()
    doc = interchange.read_json(a)
    assert list(doc["reports"][0]["notes"]) == ["a", "b"]


def test_json_safe_replaces_non_finite():
    assert interchange.json_safe({"x": float("inf"), "y": [np.float64(1.0), float("nan")]}) == {"x": None, "y": [1.0, None]}
