import json

import pytest

from app.config import get_settings, init_settings, load_settings, override_settings
from app.errors import ConfigError


def test_defaults():
    s = get_settings()
    assert s.quad_krein == 16 and s.quad_koplienko == 24
    assert s.tol.comm == 1e-10
    assert s.tol.bound_slack == 1e-9


def test_environment_overrides(monkeypatch):
    monkeypatch.setenv("SSLAB_QUAD_KREIN", "32")
    monkeypatch.setenv("SSLAB_TOL_COMM", "1e-9")
    s = load_settings()
    assert s.quad_krein == 32
    assert s.tol.comm == 1e-9
    assert s.tol.herm == 1e-10


def test_config_file_settings_block(tmp_path, monkeypatch):
    monkeypatch.delenv("SSLAB_QUAD_KREIN", raising=False)
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"instance": {"seed": 1}, "settings": {"quad_krein": 20, "tol": {"eig": 1e-8}}}))
    s = init_settings(str(cfg))
    assert s.quad_krein == 20
    assert s.tol.eig == 1e-8
    assert get_settings() is s


def test_run_config_keys_are_ignored(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"instance": {"seed": 1}, "tol": 1e-6, "out_dir": str(tmp_path)}))
    s = load_settings(str(cfg))
    assert s.out_dir == str(tmp_path)
    assert s.tol.krein_residual == 1e-8


@pytest.mark.parametrize("content", ["{broken", json.dumps({"settings": {"quad_krein": 1}})])
def test_bad_config_file(tmp_path, content):
    cfg = tmp_path / "run.json"
    cfg.write_text(content)
    with pytest.raises(ConfigError):
        load_settings(str(cfg))


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_settings(str(tmp_path / "missing.json"))


def test_override_settings():
    s = override_settings(tol={"krein_residual": 1e-12}, quad_krein=8)
    assert s.tol.krein_residual == 1e-12
    assert s.tol.comm == 1e-10
    assert get_settings().quad_krein == 8
    with pytest.raises(ConfigError):
        override_settings(tol={"comm": -1.0})
