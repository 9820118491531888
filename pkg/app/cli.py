"""Batch driver: ``python -m app.cli <command> [flags]``.

Exit codes: 0 when every residual and bound check passes, 1 when a
verification fails (the report is still written), 2 on configuration,
input or I/O errors.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from app.config import Settings, init_settings, override_settings
from app.errors import ConfigError, LabError, UnsupportedClass
from app.services import interchange
from app.services.dissipative import dissipative_koplienko_verify, dissipative_krein_verify, make_dissipative_path
from app.services.functions import RationalSum, ScalarFunction
from app.services.generators import FunctionSpec, InstanceSpec, gen, gen_function
from app.services.linalg import PerturbationPath, make_path, trace_norm
from app.services.ssm import koplienko_ssm, koplienko_verify, krein_ssm, krein_verify
from app.services.suite import run_suite, write_suite

logger = logging.getLogger("sslab")

COMMANDS = ("verify-krein", "verify-koplienko", "verify-dissipative", "compute-ssm", "suite")
FORMATS = ("csv", "report")
LOG_FALLBACK = os.path.join(os.path.expanduser("~"), "spectral-shift-lab.log")


class RunConfig(BaseModel):
    command: str
    instance: Optional[InstanceSpec] = None
    input_file: Optional[str] = None
    function: Optional[FunctionSpec] = None
    function_file: Optional[str] = None
    quad_q: Optional[int] = Field(None, ge=2)
    tol: Optional[float] = Field(None, gt=0.0)
    out_dir: str = "data/out"
    format: str = "csv"
    profile: str = "quick"
    seed: Optional[int] = Field(None, ge=0, lt=2 ** 64)

    @field_validator("command")
    @classmethod
    def known_command(cls, v):
        if v not in COMMANDS:
            raise ValueError(f"unknown command {v!r}")
        return v

    @field_validator("format")
    @classmethod
    def known_format(cls, v):
        if v not in FORMATS:
            raise ValueError(f"format must be one of {', '.join(FORMATS)}")
        return v

    @model_validator(mode="after")
    def files_exist(self):
        for name in ("input_file", "function_file"):
            value = getattr(self, name)
            if value and not Path(value).is_file():
                raise ValueError(f"{name} {value} does not exist")
        return self

    def instance_spec(self) -> InstanceSpec:
        spec = self.instance or InstanceSpec(family="hardy_dissipative" if self.command == "verify-dissipative" else "shared_basis")
        return spec.model_copy(update={"seed": self.seed}) if self.seed is not None else spec

    def function_spec(self) -> FunctionSpec:
        default_cls = "rational" if self.command in ("verify-koplienko", "verify-dissipative") else "trig"
        spec = self.function or FunctionSpec(cls=default_cls, lower=self.command == "verify-dissipative")
        return spec.model_copy(update={"seed": self.seed}) if self.seed is not None else spec


def setup_logging(out_dir: str, level: str = "INFO") -> str:
    log_file = os.path.join(out_dir, "lab.log")
    try:
        os.makedirs(out_dir, exist_ok=True)
        with open(log_file, "a"):
            pass
    except OSError as e:
        print(f"WARNING: Cannot write to log file {log_file}: {e}", file=sys.stderr)
        log_file = LOG_FALLBACK
    logging.basicConfig(
        level=getattr(logging, os.environ.get("SSLAB_LOG_LEVEL", level).upper(), logging.INFO),
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        handlers=[logging.FileHandler(log_file), logging.StreamHandler()],
        force=True,
    )
    return log_file


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sslab", description="Trace-formula verification for commuting and dissipative tuples.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON run config (RunConfig fields, optional 'settings' block)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="override the instance and function seeds")
    p.add_argument("--quad-q", type=int, dest="quad_q", help="quadrature order in t")
    p.add_argument("--tol", type=float, help="residual tolerance of the verified identity")
    p.add_argument("--format", choices=FORMATS, help="csv: write measure files next to the report; report: report only")
    p.add_argument("--input", dest="input_file", help="path document (base/direction matrices)")
    p.add_argument("--function", dest="function_file", help="function document")
    p.add_argument("--profile", choices=("quick", "full"), help="suite profile")
    return p


def load_run_config(args: argparse.Namespace) -> RunConfig:
    data: dict = {}
    if args.config:
        try:
            with open(args.config, "r") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {args.config}: {e}")
        data.pop("settings", None)
    data["command"] = args.command
    flags = {"out_dir": args.out, "seed": args.seed, "quad_q": args.quad_q, "tol": args.tol,
             "format": args.format, "input_file": args.input_file, "function_file": args.function_file,
             "profile": args.profile}
    data.update({k: v for k, v in flags.items() if v is not None})
    try:
        return RunConfig.model_validate(data)
    except ValueError as e:
        raise ConfigError(f"invalid run config: {e}")


# ── Inputs ───────────────────────────────────────────────────────────────────

def load_path(cfg: RunConfig):
    if cfg.input_file:
        base, direction = interchange.path_from_dict(interchange.read_json(cfg.input_file))
        if cfg.command == "verify-dissipative":
            return make_dissipative_path(base, direction, cfg.quad_q)
        return make_path(base, direction)
    return gen(cfg.instance_spec())


def load_function(cfg: RunConfig, n: int) -> ScalarFunction:
    if cfg.function_file:
        f = interchange.function_from_dict(interchange.read_json(cfg.function_file))
    else:
        f = gen_function(cfg.function_spec(), n)
    if f.arity != n:
        raise ConfigError(f"function arity {f.arity} does not match the tuple size {n}")
    return f


def _require_hermitian_path(path) -> PerturbationPath:
    if not isinstance(path, PerturbationPath):
        raise ConfigError("this command needs a Hermitian path, got a dissipative instance")
    return path


# ── Commands ─────────────────────────────────────────────────────────────────

def cmd_verify_krein(cfg: RunConfig, out: Path) -> bool:
    path = _require_hermitian_path(load_path(cfg))
    f = load_function(cfg, path.n)
    report = krein_verify(path, f, cfg.quad_q)
    if cfg.format == "csv":
        for j, mu in enumerate(krein_ssm(path, cfg.quad_q)):
            interchange.write_measure_csv(out / f"krein_mu_{j + 1}.csv", mu)
    interchange.write_report(out / "krein_report.json", report)
    return report.passed


def cmd_verify_koplienko(cfg: RunConfig, out: Path) -> bool:
    path = _require_hermitian_path(load_path(cfg))
    f = load_function(cfg, path.n)
    report = koplienko_verify(path, f, cfg.quad_q)
    if cfg.format == "csv":
        interchange.write_json(out / "koplienko_nu.json", interchange.simplex_to_dict(koplienko_ssm(path, f, cfg.quad_q)))
    interchange.write_report(out / "koplienko_report.json", report)
    return report.passed


def cmd_verify_dissipative(cfg: RunConfig, out: Path) -> bool:
    path = load_path(cfg)
    if isinstance(path, PerturbationPath):
        raise ConfigError("verify-dissipative needs a dissipative instance")
    f = load_function(cfg, path.n)
    if not isinstance(f, RationalSum):
        raise UnsupportedClass("dissipative identities are verified for RationalSum functions")
    reports = [dissipative_krein_verify(path, f, cfg.quad_q), dissipative_koplienko_verify(path, f, cfg.quad_q)]
    interchange.write_report(out / "dissipative_report.json", reports)
    return all(r.passed for r in reports)


def cmd_compute_ssm(cfg: RunConfig, out: Path) -> bool:
    path = _require_hermitian_path(load_path(cfg))
    measures = krein_ssm(path, cfg.quad_q)
    summary = {"measures": []}
    ok = True
    for j, (mu, V) in enumerate(zip(measures, path.direction)):
        name = f"mu_{j + 1}.csv" if cfg.format == "csv" else None
        if name:
            interchange.write_measure_csv(out / name, mu)
        bound = trace_norm(V)
        passed = mu.total_variation <= bound * (1.0 + 1e-9) + 1e-9
        ok = ok and passed
        summary["measures"].append({"file": name, "atoms": len(mu), "total_variation": mu.total_variation,
                                    "trace_norm_bound": bound, "pass": passed})
    if cfg.format == "csv" and (cfg.function is not None or cfg.function_file):
        f = load_function(cfg, path.n)
        if isinstance(f, RationalSum):
            interchange.write_json(out / "nu.json", interchange.simplex_to_dict(koplienko_ssm(path, f, cfg.quad_q)))
            summary["koplienko_sidecar"] = "nu.json"
    summary["pass"] = ok
    interchange.write_json(out / "ssm_report.json", summary)
    return ok


def cmd_suite(cfg: RunConfig, out: Path) -> bool:
    seed = cfg.seed if cfg.seed is not None else 0
    summary = run_suite(cfg.profile, seed, q_krein=cfg.quad_q)
    write_suite(out, summary, seed, cfg.quad_q)
    return summary["pass"]


HANDLERS = {
    "verify-krein": cmd_verify_krein,
    "verify-koplienko": cmd_verify_koplienko,
    "verify-dissipative": cmd_verify_dissipative,
    "compute-ssm": cmd_compute_ssm,
    "suite": cmd_suite,
}

_RESIDUAL_TOLERANCE = {
    "verify-krein": "krein_residual",
    "verify-koplienko": "koplienko_residual",
    "verify-dissipative": "dissipative_residual",
}


def _apply_overrides(cfg: RunConfig, settings: Settings) -> None:
    changes: dict = {"out_dir": cfg.out_dir}
    if cfg.tol is not None and cfg.command in _RESIDUAL_TOLERANCE:
        changes["tol"] = {_RESIDUAL_TOLERANCE[cfg.command]: cfg.tol}
    override_settings(**changes)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = init_settings(args.config)
        cfg = load_run_config(args)
    except ConfigError as e:
        print(f"ERROR: {e.message}", file=sys.stderr)
        return 2
    log_file = setup_logging(cfg.out_dir, settings.log_level)
    logger.info(f"{cfg.command}: writing to {cfg.out_dir} (log {log_file})")
    try:
        _apply_overrides(cfg, settings)
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        passed = HANDLERS[cfg.command](cfg, out)
    except LabError as e:
        logger.error(f"{cfg.command} aborted: [{e.code}] {e.message}")
        print(f"ERROR [{e.code}]: {e.message}", file=sys.stderr)
        return 2
    except OSError as e:
        logger.error(f"{cfg.command} I/O failure: {e}")
        print(f"ERROR: {e}", file=sys.stderr)
        return 2
    if not passed:
        logger.warning(f"{cfg.command}: verification failed")
        return 1
    logger.info(f"{cfg.command}: all checks passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
