import pytest

from app.errors import InputError
from app.services import interchange
from app.services.suite import CRITERIA, RICHARDSON_STEPS, run_suite, write_suite


@pytest.mark.parametrize("keys", [["krein", "measure_bounds"], ["divdiff", "ideals"], ["determinism"]])
def test_subsets_pass(keys):
    summary = run_suite("quick", seed=3, only=keys)
    assert summary["pass"] is True
    assert [c["key"] for c in summary["criteria"]] == keys
    for c in summary["criteria"]:
        assert c["checked"] > 0
        assert c["failures"] == 0


def test_criteria_keys_are_unique():
    keys = [key for key, _, _ in CRITERIA]
    assert len(keys) == len(set(keys))


def test_summary_is_deterministic():
    a = run_suite("quick", seed=5, only=["moi", "duhamel"])
    b = run_suite("quick", seed=5, only=["moi", "duhamel"])
    assert interchange.dumps(a) == interchange.dumps(b)


def test_write_suite_is_byte_stable(tmp_path):
    summary = run_suite("quick", seed=2, only=["ideals"])
    first = write_suite(tmp_path / "a", summary, seed=2)
    second = write_suite(tmp_path / "b", summary, seed=2)
    assert [p.name for p in first] == ["suite_report.json", "suite_mu_1.csv", "suite_mu_2.csv"]
    for p, q in zip(first, second):
        assert p.read_bytes() == q.read_bytes()


def test_unknown_profile():
    with pytest.raises(InputError):
        run_suite("exhaustive")


def test_derivative_criterion_uses_fixed_steps():
    assert RICHARDSON_STEPS == (1e-3, 5e-4)
    summary = run_suite("quick", seed=0, only=["derivatives"])
    assert summary["pass"] is True
