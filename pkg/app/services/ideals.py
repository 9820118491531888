"""Singular values, Lorentz norms and the ideal inequalities.

Sequences are finite truncations; every supremum is taken over the stored
length. ψ(t) = log(1 + t) is the default concave weight so that ψ(1) > 0.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from app.errors import IllConditionedPsi, InputError, NotMonotone
from app.services.linalg import absolute_value, as_matrix, eig_hermitian, trace, trace_norm

logger = logging.getLogger(__name__)

PSI_FAMILIES = ("log1p", "power", "table")
HOLDER_SLACK = 1e-10


@dataclass(frozen=True, eq=False)
class PsiFunction:
    family: str
    eps: Optional[float] = None
    table_t: Optional[np.ndarray] = None
    table_v: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.family not in PSI_FAMILIES:
            raise InputError(f"unknown psi family {self.family!r}")
        if self.family == "power" and not (self.eps is not None and self.eps > 0):
            raise InputError("power psi needs a positive exponent")
        if self.family == "table":
            t, v = np.asarray(self.table_t, dtype=np.float64), np.asarray(self.table_v, dtype=np.float64)
            if t.ndim != 1 or t.shape != v.shape or len(t) < 2:
                raise InputError("psi table needs matching 1-d arrays of at least two samples")
            if np.any(np.diff(t) <= 0) or np.any(np.diff(v) < 0) or np.any(v <= 0):
                raise NotMonotone("psi table must be positive and nondecreasing on increasing abscissae")

    @classmethod
    def log1p(cls) -> "PsiFunction":
        return cls("log1p")

    @classmethod
    def power(cls, eps: float) -> "PsiFunction":
        return cls("power", eps=float(eps))

    @classmethod
    def table(cls, t: Sequence[float], values: Sequence[float]) -> "PsiFunction":
        return cls("table", table_t=np.asarray(t, dtype=np.float64), table_v=np.asarray(values, dtype=np.float64))

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        if self.family == "log1p":
            return np.log1p(t)
        if self.family == "power":
            return t ** self.eps
        return np.interp(t, self.table_t, self.table_v)

    def describe(self) -> dict:
        out = {"family": self.family}
        if self.eps is not None:
            out["eps"] = self.eps
        return out


@dataclass(frozen=True, eq=False)
class SingularValueSeq:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise InputError("singular values form a 1-d sequence")
        if np.any(v < 0):
            raise NotMonotone("singular values must be nonnegative")
        if np.any(np.diff(v) > 0):
            raise NotMonotone("singular values must be nonincreasing")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.values)

    def scaled(self, c: float) -> "SingularValueSeq":
        return SingularValueSeq(abs(c) * self.values)

    def power(self, p: float) -> "SingularValueSeq":
        return SingularValueSeq(self.values ** p)


def singular_values(A) -> SingularValueSeq:
    """Square roots of eig(A*A), descending, clamped at 0."""
    A = as_matrix(A)
    _, w = eig_hermitian(A.conj().T @ A, check=False)
    return SingularValueSeq(np.sqrt(np.clip(w[::-1], 0.0, None)))


def _as_seq(s) -> SingularValueSeq:
    return s if isinstance(s, SingularValueSeq) else SingularValueSeq(np.asarray(s, dtype=np.float64))


def lorentz_norm(s, psi: Optional[PsiFunction] = None) -> float:
    """max over 0 ≤ n < len of (1/ψ(1+n))·Σ_{k≤n} s(k)."""
    s = _as_seq(s)
    psi = psi or PsiFunction.log1p()
    if not float(psi(1.0)) > 0:
        raise IllConditionedPsi("psi(1) must be positive")
    if len(s) == 0:
        return 0.0
    partial_sums = np.cumsum(s.values)
    return float(np.max(partial_sums / psi(1.0 + np.arange(len(s)))))


def matrix_lorentz_norm(A, psi: Optional[PsiFunction] = None) -> float:
    return lorentz_norm(singular_values(A), psi)


@dataclass(frozen=True)
class GrowthCertificate:
    C: float
    eps: float
    t_max: float
    grid_points: int
    argmax_t: float
    uniform: bool


def psi_growth_certificate(psi: PsiFunction, eps: float, t_max: float, points: int = 2000) -> GrowthCertificate:
    """Smallest C with ψ(t) ≤ C·t^ε on a log-spaced grid of [1, t_max].

    The certificate is uniform when the maximum of ψ(t)/t^ε is attained
    strictly inside the grid; a maximum at t_max means C keeps growing.
    """
    if not 0 < eps < 1:
        raise InputError("growth exponent must lie in (0, 1)")
    if t_max <= 1:
        raise InputError("t_max must exceed 1")
    t = np.logspace(0.0, np.log10(t_max), points)
    ratio = psi(t) / t ** eps
    k = int(np.argmax(ratio))
    uniform = bool(k < points - 1 or np.isclose(ratio[k], ratio[0], rtol=1e-12))
    cert = GrowthCertificate(float(ratio[k]), float(eps), float(t_max), points, float(t[k]), uniform)
    if not uniform:
        logger.warning(f"psi growth ratio still increasing at t_max={t_max:.3g}: C={cert.C:.6g}")
    return cert


# ── Norm identifiers and inequality checks ───────────────────────────────────

NormFn = Callable[[np.ndarray], float]


def norm_by_id(norm_id: str, psi: Optional[PsiFunction] = None) -> NormFn:
    if norm_id == "trace_norm":
        return trace_norm
    if norm_id == "lorentz":
        return lambda A: matrix_lorentz_norm(A, psi)
    raise InputError(f"unknown norm id {norm_id!r}")


def root_ideal_norm(A, norm_id: str = "trace_norm", psi: Optional[PsiFunction] = None) -> float:
    """‖A‖_{I^{1/2}} = ‖A*A‖_I^{1/2}."""
    A = as_matrix(A)
    return float(np.sqrt(norm_by_id(norm_id, psi)(A.conj().T @ A)))


@dataclass
class InequalityReport:
    name: str
    lhs: float
    rhs: float
    slack: float = field(init=False)
    passed: bool = field(init=False)

    def __post_init__(self):
        self.slack = float(self.rhs - self.lhs)
        self.passed = bool(self.lhs <= self.rhs + HOLDER_SLACK * (1.0 + abs(self.rhs)))

    def as_dict(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "slack": self.slack, "pass": self.passed}


def holder_check(A, B, norm_id: str = "trace_norm", psi: Optional[PsiFunction] = None) -> InequalityReport:
    """‖AB‖_I ≤ ‖A‖_{I^{1/2}}·‖B‖_{I^{1/2}}."""
    A, B = as_matrix(A), as_matrix(B)
    norm = norm_by_id(norm_id, psi)
    lhs = norm(A @ B)
    rhs = root_ideal_norm(A, norm_id, psi) * root_ideal_norm(B, norm_id, psi)
    return InequalityReport(f"holder_{norm_id}", lhs, rhs)


def ideal_property_check(A, B, C, norm_id: str = "trace_norm", psi: Optional[PsiFunction] = None) -> InequalityReport:
    """‖ABC‖_I ≤ ‖A‖·‖B‖_I·‖C‖."""
    A, B, C = as_matrix(A), as_matrix(B), as_matrix(C)
    norm = norm_by_id(norm_id, psi)
    op = lambda M: float(np.linalg.norm(M, 2))
    return InequalityReport(f"ideal_{norm_id}", norm(A @ B @ C), op(A) * norm(B) * op(C))


def triangle_check(A, B, norm_id: str = "lorentz", psi: Optional[PsiFunction] = None) -> InequalityReport:
    norm = norm_by_id(norm_id, psi)
    return InequalityReport(f"triangle_{norm_id}", norm(as_matrix(A) + as_matrix(B)), norm(A) + norm(B))


def dominance_check(A, B, psi: Optional[PsiFunction] = None) -> InequalityReport:
    """0 ⪯ A ⪯ B implies ‖A‖_ψ ≤ ‖B‖_ψ."""
    A, B = as_matrix(A), as_matrix(B)
    for name, M in (("A", A), ("B - A", B - A)):
        _, w = eig_hermitian(M, check=False)
        if w[0] < -1e-10 * (1.0 + abs(w[-1])):
            raise InputError(f"{name} is not positive semidefinite")
    return InequalityReport("dominance_lorentz", matrix_lorentz_norm(A, psi), matrix_lorentz_norm(B, psi))


def singular_value_decay_check(s, psi: Optional[PsiFunction] = None, alpha: float = 1.0) -> List[InequalityReport]:
    """s(n)^{1/α} ≤ ψ(1+n)/(n+1)·‖s^{1/α}‖_ψ for every stored n."""
    if alpha < 1:
        raise InputError("alpha must be at least 1")
    s = _as_seq(s)
    psi = psi or PsiFunction.log1p()
    root = s.power(1.0 / alpha)
    norm = lorentz_norm(root, psi)
    idx = np.arange(len(s))
    bound = psi(1.0 + idx) / (idx + 1.0) * norm
    worst = int(np.argmax(root.values - bound)) if len(s) else 0
    reports = [InequalityReport(f"decay_n{n}", float(root.values[n]), float(bound[n])) for n in idx]
    if reports and not reports[worst].passed:
        logger.warning(f"singular value decay violated at n={worst}")
    return reports


# ── Trace functionals ────────────────────────────────────────────────────────

def _zero_trace(A) -> complex:
    return 0j


# Jordan decomposition of the trace on a full matrix algebra: only the first
# (positive real) component is nonzero.
TRACE_JORDAN: Tuple[Callable, Callable, Callable, Callable] = (trace, _zero_trace, _zero_trace, _zero_trace)


def jordan_weighted_trace(A, coefficients: Sequence[complex] = (1, -1, 1j, -1j)) -> complex:
    """Σ_k c_k·τ_k(A) over the Jordan components."""
    return sum((c * tau(A) for c, tau in zip(coefficients, TRACE_JORDAN)), 0j)


def jordan_total_norm(A) -> float:
    """Σ_k τ_k(|A|): the trace norm for the degenerate decomposition."""
    absA = absolute_value(A)
    return float(sum(abs(tau(absA)) for tau in TRACE_JORDAN))
