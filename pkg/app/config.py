"""Runtime settings.

Defaults live here; a JSON config file and ``SSLAB_*`` environment variables
override them, and the CLI applies its flags last through
``override_settings``.
"""

import json
import logging
import os
import threading
from typing import Optional

from pydantic import BaseModel, Field, field_validator

from app.errors import ConfigError

logger = logging.getLogger(__name__)

ENV_PREFIX = "SSLAB_"
DEFAULT_OUT_DIR = "data/out"


class Tolerances(BaseModel):
    herm: float = 1e-10
    comm: float = 1e-10
    eig: float = 1e-9
    diag: float = 1e-9
    unitary: float = 1e-11
    cluster: float = 1e-8
    diss: float = 1e-10
    confluent: float = 1e-8
    freq_merge: float = 1e-12
    atom_merge: float = 1e-10
    atom_drop: float = 1e-14
    bound_slack: float = 1e-9
    krein_residual: float = 1e-8
    eigenline_residual: float = 1e-10
    koplienko_residual: float = 1e-7
    kernel_agreement: float = 1e-9
    dissipative_residual: float = 1e-7

    @field_validator("*")
    @classmethod
    def positive(cls, v):
        if not v > 0:
            raise ValueError("tolerances must be positive")
        return v


class Settings(BaseModel):
    tol: Tolerances = Field(default_factory=Tolerances)
    quad_krein: int = 16
    quad_koplienko: int = 24
    quad_dissipative: int = 24
    sup_grid_points: int = 64
    sup_grid_budget: int = 1 << 16
    max_eig_iterations: int = 64
    out_dir: str = DEFAULT_OUT_DIR
    log_level: str = "INFO"

    @field_validator("quad_krein", "quad_koplienko", "quad_dissipative")
    @classmethod
    def quad_order(cls, v):
        if v < 2:
            raise ValueError("quadrature order must be at least 2")
        return v


_settings: Optional[Settings] = None
_settings_lock = threading.Lock()

_ENV_FIELDS = {
    "QUAD_KREIN": ("quad_krein", int),
    "QUAD_KOPLIENKO": ("quad_koplienko", int),
    "QUAD_DISSIPATIVE": ("quad_dissipative", int),
    "SUP_GRID_POINTS": ("sup_grid_points", int),
    "OUT_DIR": ("out_dir", str),
    "LOG_LEVEL": ("log_level", str),
}


def _env_overrides() -> dict:
    data: dict = {}
    tol: dict = {}
    for key, value in os.environ.items():
        if not key.startswith(ENV_PREFIX):
            continue
        name = key[len(ENV_PREFIX):]
        if name in _ENV_FIELDS:
            field, cast = _ENV_FIELDS[name]
            data[field] = cast(value)
        elif name.startswith("TOL_"):
            tol[name[4:].lower()] = float(value)
    if tol:
        data["tol"] = tol
    return data


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_settings(config_file: Optional[str] = None) -> Settings:
    data = Settings().model_dump()
    if config_file:
        try:
            with open(config_file, "r") as f:
                file_data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read settings file {config_file}: {e}")
        section = file_data.get("settings", file_data)
        # run configs share the file; keep only settings fields
        section = {
            k: v for k, v in section.items()
            if k in Settings.model_fields and not (k == "tol" and not isinstance(v, dict))
        }
        data = _merge(data, section)
    try:
        data = _merge(data, _env_overrides())
        return Settings.model_validate(data)
    except ValueError as e:
        raise ConfigError(f"invalid settings: {e}")


def get_settings() -> Settings:
    global _settings
    with _settings_lock:
        if _settings is None:
            _settings = load_settings()
            logger.debug(f"Resolved settings: {_settings.model_dump()}")
        return _settings


def override_settings(**changes) -> Settings:
    """Replace selected fields (``tol`` may be a partial dict) and return the result."""
    global _settings
    current = get_settings().model_dump()
    merged = _merge(current, changes)
    try:
        new = Settings.model_validate(merged)
    except ValueError as e:
        raise ConfigError(f"invalid settings override: {e}")
    with _settings_lock:
        _settings = new
    return new


def reset_settings() -> None:
    global _settings
    with _settings_lock:
        _settings = None


def init_settings(config_file: Optional[str] = None) -> Settings:
    """Resolve defaults, ``config_file`` and the environment, and make the result current."""
    global _settings
    settings = load_settings(config_file)
    with _settings_lock:
        _settings = settings
    return settings
