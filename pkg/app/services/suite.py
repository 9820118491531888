"""Acceptance matrix.

Each criterion runs a seeded batch of instances and records how many checks
ran, how many failed and the worst observed value. ``quick`` keeps the batch
small enough for the test run and the HTTP endpoint; ``full`` uses the
acceptance counts. Nothing time-dependent enters the summary, so two runs with
the same seed produce identical files.
"""

import itertools
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from app.errors import InputError, LabError
from app.services import interchange
from app.services.dissipative import dissipative_koplienko_verify, dissipative_krein_verify
from app.services.divdiff import (
    dd1,
    dd2_mixed,
    dd2_same,
    hermite_genocchi_dd1,
    hermite_genocchi_dd2_mixed,
    hermite_genocchi_dd2_same,
)
from app.services.functions import raised_cosine_bump, sup_norm_partial, synthesize_bump, unit
from app.services.generators import (
    FunctionSpec,
    InstanceSpec,
    gen,
    gen_function,
    monotone_trig,
    random_hermitian,
    random_rational,
    random_trig,
    rng_for,
)
from app.services.ideals import (
    PsiFunction,
    dominance_check,
    holder_check,
    matrix_lorentz_norm,
    psi_growth_certificate,
    triangle_check,
)
from app.services.linalg import frobenius_norm, make_path, operator_norm, trace_norm
from app.services.moi import MoiSymbol, agreement, expand_slots, moi_norm_bounds, moi_spectral
from app.services.perturb import FD_STEPS, duhamel_residual, richardson_ratio
from app.services.ssm import krein_ssm, krein_verify, koplienko_verify, second_order_weaker_bound, weaker_bound_check

logger = logging.getLogger(__name__)

PROFILES: Dict[str, Dict[str, int]] = {
    "quick": {"krein": 6, "koplienko": 4, "moi": 3, "duhamel": 10, "derivative": 4, "positivity": 3,
              "dissipative": 3, "divdiff": 20, "ideals": 10, "weaker": 2},
    "full": {"krein": 50, "koplienko": 50, "moi": 20, "duhamel": 100, "derivative": 50, "positivity": 20,
             "dissipative": 12, "divdiff": 200, "ideals": 100, "weaker": 10},
}
QUICK_DIMS = (4, 8)
FULL_DIMS = (4, 8, 16, 32)
ARITIES = (2, 3, 4)
RICHARDSON_STEPS = FD_STEPS
RICHARDSON_WINDOW = (3.8, 4.2)


@dataclass
class CriterionResult:
    key: str
    description: str
    checked: int = 0
    failures: int = 0
    worst: float = 0.0
    messages: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def record(self, ok: bool, value: float = 0.0, message: str = "") -> None:
        self.checked += 1
        if np.isfinite(value):
            self.worst = max(self.worst, float(value))
        if not ok:
            self.failures += 1
            if message:
                self.messages.append(message)

    def as_dict(self) -> dict:
        return {
            "key": self.key,
            "description": self.description,
            "checked": self.checked,
            "failures": self.failures,
            "worst": self.worst,
            "pass": self.passed,
            "messages": self.messages[:10],
        }


@dataclass
class SuiteContext:
    profile: str
    seed: int
    counts: Dict[str, int]
    dims: tuple
    q_krein: Optional[int] = None
    q_koplienko: Optional[int] = None
    bound_results: List[tuple] = field(default_factory=list)


def _seed(ctx: SuiteContext, salt: int, k: int) -> int:
    return (ctx.seed * 1_000_003 + salt * 10_007 + k) % (2 ** 63)


def _grid(ctx: SuiteContext, count: int, max_dim: Optional[int] = None):
    dims = [N for N in ctx.dims if max_dim is None or N <= max_dim]
    cells = list(itertools.product(dims, ARITIES))
    for k in range(count):
        yield k, cells[k % len(cells)]


# ── Criteria ─────────────────────────────────────────────────────────────────

def _krein(ctx: SuiteContext, res: CriterionResult) -> None:
    for k, (N, n) in _grid(ctx, ctx.counts["krein"]):
        seed = _seed(ctx, 1, k)
        path = gen(InstanceSpec(seed=seed, N=N, n=n))
        f = random_trig(rng_for(seed), n, 20) if k % 2 == 0 else random_rational(rng_for(seed), n, 5)
        report = krein_verify(path, f, ctx.q_krein)
        ctx.bound_results.extend((f"krein seed {seed}", b) for b in report.bound_checks if b.name.startswith("total_variation"))
        res.record(report.passed, report.rel_residual, f"seed {seed} N={N} n={n}: rel_residual {report.rel_residual:.3e}")


def _koplienko(ctx: SuiteContext, res: CriterionResult) -> None:
    for k, (N, n) in _grid(ctx, ctx.counts["koplienko"], max_dim=16):
        seed = _seed(ctx, 2, k)
        path = gen(InstanceSpec(seed=seed, N=N, n=n))
        f = random_rational(rng_for(seed), n, 5)
        report = koplienko_verify(path, f, ctx.q_koplienko)
        ctx.bound_results.extend((f"koplienko seed {seed}", b) for b in report.bound_checks)
        res.record(report.passed, report.rel_residual, f"seed {seed} N={N} n={n}: rel_residual {report.rel_residual:.3e}")
    # scalar closed form: f(h + v) − f(h) − f'(h)·v
    f = random_rational(rng_for(ctx.seed), 1, 3)
    path = make_path([np.array([[0.3]])], [np.array([[0.7]])])
    report = koplienko_verify(path, f, ctx.q_koplienko)
    exact = complex(f.eval(np.array([[1.0]]))[0] - f.eval(np.array([[0.3]]))[0]
                    - 0.7 * sum(c * k[0] * (z - 0.3) ** (-k[0] - 1) for z, k, c in f.terms()))
    err = abs(report.rhs - exact)
    res.record(err <= 1e-12 * (1.0 + abs(exact)), err, f"scalar closed form off by {err:.3e}")


def _measure_bounds(ctx: SuiteContext, res: CriterionResult) -> None:
    for label, check in ctx.bound_results:
        slack = check.bound - check.attained
        res.record(check.passed, -slack, f"{label}: {check.name} attained {check.attained:.6g} > {check.bound:.6g}")


def _moi(ctx: SuiteContext, res: CriterionResult) -> None:
    for k in range(ctx.counts["moi"]):
        rng = rng_for(_seed(ctx, 4, k))
        mats = [random_hermitian(rng, 8) for _ in range(2)]
        V1, V2 = random_hermitian(rng, 8), random_hermitian(rng, 8)
        f = random_trig(rng, 2, 5)
        cases = [
            (MoiSymbol.plain(f), []),
            (MoiSymbol.first(f, 0), [V1]),
            (MoiSymbol.second_same(f, 1), [V1, V2]),
            (MoiSymbol.second_mixed(f, 0, 1), [V1, V2]),
        ]
        for sym, inner in cases:
            ops, Vs = expand_slots(sym, mats, inner)
            if inner:
                err = agreement(sym, ops, Vs, 24)
                res.record(err <= 1e-8, err, f"{sym.kind} fourier/spectral disagreement {err:.3e}")
            value = moi_spectral(sym, ops, Vs)
            const = moi_norm_bounds(sym)
            op_bound = const * float(np.prod([operator_norm(V) for V in inner]))
            res.record(operator_norm(value) <= op_bound * (1 + 1e-9) + 1e-12, 0.0,
                       f"{sym.kind} operator norm bound violated")
            if inner:
                tr_bound = const * trace_norm(inner[0]) * float(np.prod([operator_norm(V) for V in inner[1:]]))
                res.record(trace_norm(value) <= tr_bound * (1 + 1e-9) + 1e-12, 0.0,
                           f"{sym.kind} trace norm bound violated")


def _duhamel(ctx: SuiteContext, res: CriterionResult) -> None:
    for k in range(ctx.counts["duhamel"]):
        rng = rng_for(_seed(ctx, 5, k))
        n = 2 + k % 2
        N = 6
        f = random_trig(rng, n, 4) if k % 2 == 0 else random_rational(rng, n, 3)
        context = [random_hermitian(rng, N) for _ in range(n)]
        j = int(rng.integers(0, n))
        A, B = random_hermitian(rng, N), random_hermitian(rng, N)
        lhs, _, resid = duhamel_residual(f, j, A, B, context)
        rel = resid / (1.0 + frobenius_norm(lhs))
        res.record(rel <= 1e-9, rel, f"slot {j}: duhamel residual {rel:.3e}")


def _derivatives(ctx: SuiteContext, res: CriterionResult) -> None:
    lo, hi = RICHARDSON_WINDOW
    for k in range(ctx.counts["derivative"]):
        seed = _seed(ctx, 6, k)
        n = 2 + k % 2
        path = gen(InstanceSpec(seed=seed, N=6, n=n))
        rational = random_rational(rng_for(seed), n, 3)
        trig = random_trig(rng_for(seed), n, 6)
        for label, f, order in (("trig d1", trig, 1), ("rational d1", rational, 1), ("rational d2", rational, 2)):
            ratio = richardson_ratio(path, f, 0.5, order, RICHARDSON_STEPS)
            res.record(lo <= ratio <= hi, abs(ratio - 4.0), f"seed {seed} {label}: ratio {ratio:.4f}")


def _positivity(ctx: SuiteContext, res: CriterionResult) -> None:
    for k in range(ctx.counts["positivity"]):
        seed = _seed(ctx, 7, k)
        n = 2 + k % 2
        path = gen(InstanceSpec(seed=seed, N=8, n=n, psd=True))
        f = monotone_trig(n)
        report = krein_verify(path, f, ctx.q_krein)
        res.record(report.lhs.real >= -1e-10, max(0.0, -report.lhs.real), f"seed {seed}: lhs {report.lhs.real:.3e}")
        low = min((float(np.min(mu.weights.real)) for mu in krein_ssm(path, ctx.q_krein) if len(mu)), default=0.0)
        res.record(low >= -1e-12, max(0.0, -low), f"seed {seed}: atom weight {low:.3e}")


def _dissipative(ctx: SuiteContext, res: CriterionResult) -> None:
    cells = list(itertools.product((8, 16, 32, 64), (1, 2, 3)))
    for k in range(ctx.counts["dissipative"]):
        N, n = cells[(k * 5) % len(cells)]
        seed = _seed(ctx, 8, k)
        path = gen(InstanceSpec(seed=seed, N=N, n=n, family="hardy_dissipative", scale=0.1))
        f = gen_function(FunctionSpec(cls="rational", seed=seed, terms=3, lower=True), n)
        for report in (dissipative_krein_verify(path, f), dissipative_koplienko_verify(path, f)):
            res.record(report.passed, report.rel_residual,
                       f"seed {seed} N={N} n={n} {report.identity}: rel_residual {report.rel_residual:.3e}")


def _divdiff(ctx: SuiteContext, res: CriterionResult) -> None:
    for k in range(ctx.counts["divdiff"]):
        rng = rng_for(_seed(ctx, 9, k))
        f = random_trig(rng, 2, 4) if k % 2 == 0 else random_rational(rng, 2, 3)
        x = rng.uniform(-2.0, 2.0, 5)
        if k % 5 == 0:
            x[1] = x[0]
        spect = rng.uniform(-2.0, 2.0, 2)
        sup1 = sup_norm_partial(f, unit(2, 0)).certified_upper
        sup_same = sup_norm_partial(f, unit(2, 0, 0)).certified_upper
        sup_mixed = sup_norm_partial(f, unit(2, 0, 1)).certified_upper
        rows = [
            (dd1(f, 0, x[0], x[1], spect), hermite_genocchi_dd1(f, 0, x[0], x[1], spect), sup1, "dd1"),
            (dd2_same(f, 0, x[0], x[1], x[2], spect),
             hermite_genocchi_dd2_same(f, 0, x[0], x[1], x[2], spect), 0.5 * sup_same, "dd2_same"),
            (dd2_mixed(f, 0, 1, (x[0], x[1]), (x[3], x[4]), spect),
             hermite_genocchi_dd2_mixed(f, 0, 1, (x[0], x[1]), (x[3], x[4]), spect), sup_mixed, "dd2_mixed"),
        ]
        for exact, quad, bound, label in rows:
            err = abs(exact - quad) / (1.0 + abs(exact))
            res.record(err <= 1e-10, err, f"{label}: Hermite-Genocchi disagreement {err:.3e}")
            res.record(abs(exact) <= bound * (1 + 1e-9) + 1e-12, 0.0, f"{label}: |{abs(exact):.6g}| exceeds {bound:.6g}")


def _ideals(ctx: SuiteContext, res: CriterionResult) -> None:
    psi = PsiFunction.log1p()
    for k in range(ctx.counts["ideals"]):
        rng = rng_for(_seed(ctx, 10, k))
        N = 4 + k % 5
        A = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
        B = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
        c = complex(rng.standard_normal(), rng.standard_normal())
        for report in (triangle_check(A, B, "lorentz", psi), holder_check(A, B, "trace_norm"),
                       holder_check(A, B, "lorentz", psi), dominance_check(A @ A.conj().T, A @ A.conj().T + B @ B.conj().T, psi)):
            res.record(report.passed, -report.slack, f"{report.name}: {report.lhs:.6g} > {report.rhs:.6g}")
        scaled, plain = matrix_lorentz_norm(c * A, psi), abs(c) * matrix_lorentz_norm(A, psi)
        err = abs(scaled - plain) / (1.0 + plain)
        res.record(err <= 1e-12, err, f"lorentz homogeneity off by {err:.3e}")
    cert = psi_growth_certificate(psi, 0.4, 1e6)
    res.record(cert.uniform, 0.0, f"psi growth certificate not uniform (argmax t={cert.argmax_t:.3g})")


def _weaker(ctx: SuiteContext, res: CriterionResult) -> None:
    for k in range(ctx.counts["weaker"]):
        seed = _seed(ctx, 11, k)
        n = 1 + k % 2
        path = gen(InstanceSpec(seed=seed, N=6, n=n, scale=0.5))
        a, b = -3.0 - 0.25 * k, 3.0 + 0.25 * k
        samples, axes = raised_cosine_bump(a, b, n, points=16)
        f = synthesize_bump(samples, axes, cutoff=5).function
        for check in weaker_bound_check(path, f, (a, b)) + [second_order_weaker_bound(path, f)]:
            res.record(check.passed, check.attained / check.bound if check.bound > 0 else 0.0,
                       f"seed {seed}: {check.name} attained {check.attained:.6g} > {check.bound:.6g}")


def _determinism(ctx: SuiteContext, res: CriterionResult) -> None:
    texts = []
    for _ in range(2):
        path = gen(InstanceSpec(seed=ctx.seed, N=4, n=2))
        mu = krein_ssm(path, ctx.q_krein)
        rows = [interchange.fmt(x) for m in mu for p, w in zip(m.points, m.weights) for x in (*p, w.real, w.imag)]
        texts.append(",".join(rows))
    res.record(texts[0] == texts[1], 0.0, "regenerated measures differ")


CRITERIA: List[tuple] = [
    ("krein", "Krein identity on shared-basis instances", _krein),
    ("koplienko", "Koplienko identity and scalar closed form", _koplienko),
    ("measure_bounds", "total variation bounds of the Krein and Koplienko measures", _measure_bounds),
    ("moi", "Fourier against spectral MOI and norm bounds", _moi),
    ("duhamel", "Duhamel identity on random slots", _duhamel),
    ("derivatives", "Richardson ratios of the Gateaux derivatives", _derivatives),
    ("positivity", "positive perturbations with monotone functions", _positivity),
    ("dissipative", "dissipative identities on Hardy tuples", _dissipative),
    ("divdiff", "divided difference bounds and Hermite-Genocchi consistency", _divdiff),
    ("ideals", "Lorentz norm inequalities and the psi growth certificate", _ideals),
    ("weaker", "weaker-formula bounds for synthesized bumps", _weaker),
    ("determinism", "regenerated instances reproduce their measures", _determinism),
]


def run_suite(profile: str = "quick", seed: int = 0, only: Optional[List[str]] = None,
              q_krein: Optional[int] = None, q_koplienko: Optional[int] = None) -> dict:
    """Run the acceptance matrix and return the summary document."""
    if profile not in PROFILES:
        raise InputError(f"unknown suite profile {profile!r}")
    ctx = SuiteContext(profile, seed, PROFILES[profile], QUICK_DIMS if profile == "quick" else FULL_DIMS,
                       q_krein, q_koplienko)
    results = []
    for key, description, runner in CRITERIA:
        if only is not None and key not in only:
            continue
        res = CriterionResult(key, description)
        started = time.monotonic()
        try:
            runner(ctx, res)
        except LabError as e:
            res.record(False, float("nan"), f"{e.code}: {e.message}")
        logger.info(f"suite {key}: {res.checked} checks, {res.failures} failures ({time.monotonic() - started:.1f}s)")
        if not res.passed:
            logger.warning(f"suite {key} failed: {res.messages[:3]}")
        results.append(res)
    return {
        "profile": profile,
        "seed": seed,
        "pass": all(r.passed for r in results),
        "criteria": [r.as_dict() for r in results],
    }


def write_suite(out_dir: Path, summary: dict, seed: int, q_krein: Optional[int] = None) -> List[Path]:
    """suite_report.json plus the Krein measure CSVs of the seed instance."""
    out_dir = Path(out_dir)
    written = [interchange.write_json(out_dir / "suite_report.json", summary)]
    path = gen(InstanceSpec(seed=seed, N=4, n=2))
    for j, mu in enumerate(krein_ssm(path, q_krein)):
        written.append(interchange.write_measure_csv(out_dir / f"suite_mu_{j + 1}.csv", mu))
    return written
