"""Dissipative matrices, Cayley transforms, truncated Hardy shifts and the
dissipative trace identities.

Operator functions of dissipative tuples are products of resolvent powers
(zI − L_l)^{−k_l} with Im z < 0, evaluated by LU solves since the matrices
need not be diagonalizable.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from app.config import get_settings
from app.errors import (
    CayleyPole,
    DimensionMismatch,
    InputError,
    PathLeavesDissipative,
    UnsupportedClass,
    WrongHalfPlane,
)
from app.services.functions import RationalSum, partial, sup_norm_partial, unit
from app.services.linalg import absolute_value, as_matrix, commutator_norm, eig_hermitian, frobenius_norm, trace
from app.services.perturb import resolvent_first_parts, resolvent_parts
from app.services.quadrature import gauss_legendre
from app.services.ssm import BoundCheck, VerificationReport

logger = logging.getLogger(__name__)

PERTURBATION_KINDS = ("diagonal", "shift")


def imaginary_part(L: np.ndarray) -> np.ndarray:
    return (L - L.conj().T) / 2j


def real_part(L: np.ndarray) -> np.ndarray:
    return (L + L.conj().T) / 2.0


def is_dissipative(L) -> Tuple[float, bool]:
    """(smallest eigenvalue of Im L, margin ≥ −tol_diss)."""
    L = as_matrix(L)
    _, w = eig_hermitian(imaginary_part(L), check=False)
    margin = float(w[0])
    return margin, margin >= -get_settings().tol.diss


def cayley(L) -> np.ndarray:
    """T = (L − iI)(L + iI)^{−1}."""
    L = as_matrix(L)
    I = np.eye(L.shape[0])
    try:
        # T (L + iI) = L − iI, solved through the transposed system
        return scipy.linalg.solve((L + 1j * I).T, (L - 1j * I).T).T
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as e:
        raise CayleyPole(f"L + iI is singular: {e}")


def inverse_cayley(T, cond_limit: float = 1e12) -> np.ndarray:
    """L = i(I + T)(I − T)^{−1}."""
    T = as_matrix(T)
    I = np.eye(T.shape[0])
    A = I - T
    cond = float(np.linalg.cond(A))
    if not np.isfinite(cond) or cond > cond_limit:
        raise CayleyPole(f"I − T is singular (condition number {cond:.3e})", {"cond": cond})
    return 1j * scipy.linalg.solve(A.T, (I + T).T).T


# ── Hardy shift ──────────────────────────────────────────────────────────────

def lower_shift(N: int) -> np.ndarray:
    return np.eye(N, k=-1, dtype=np.complex128)


def hardy_generator(N: int, k: int) -> np.ndarray:
    """i(I + S^k)(I − S^k)^{−1} = i(I + 2 Σ_{m≥1} S^{km}) for the nilpotent shift S."""
    X = np.linalg.matrix_power(lower_shift(N), k)
    acc = np.zeros((N, N), dtype=np.complex128)
    P = X.copy()
    while np.any(P):
        acc += P
        P = P @ X
    return 1j * (np.eye(N) + 2.0 * acc)


@dataclass(frozen=True, eq=False)
class DissipativeTuple:
    mats: Tuple[np.ndarray, ...]
    resolvent_commuting: bool

    @property
    def n(self) -> int:
        return len(self.mats)

    @property
    def dim(self) -> int:
        return self.mats[0].shape[0]


def resolvent_commuting(mats: Sequence[np.ndarray], tol: Optional[float] = None) -> bool:
    tol = get_settings().tol.comm if tol is None else tol
    N = mats[0].shape[0]
    R = [np.linalg.inv(L + 1j * np.eye(N)) for L in mats]
    for a in range(len(R)):
        for b in range(a + 1, len(R)):
            bound = tol * (frobenius_norm(R[a]) * frobenius_norm(R[b]) + 1.0)
            if commutator_norm(R[a], R[b]) > bound:
                return False
    return True


def make_dissipative_tuple(mats: Sequence) -> DissipativeTuple:
    if len(mats) == 0:
        raise InputError("a tuple needs at least one matrix")
    L = [as_matrix(m) for m in mats]
    if any(m.shape != L[0].shape for m in L):
        raise DimensionMismatch("tuple matrices have different dimensions")
    for j, m in enumerate(L):
        margin, ok = is_dissipative(m)
        if not ok:
            raise PathLeavesDissipative(f"matrix {j} is not dissipative (margin {margin:.3e})", {"index": j, "margin": margin})
    return DissipativeTuple(tuple(L), resolvent_commuting(L))


def hardy_shift_tuple(N: int, n: int) -> DissipativeTuple:
    if N < n + 1:
        raise InputError(f"Hardy truncation needs N >= n + 1, got N={N}, n={n}")
    mats = tuple(hardy_generator(N, k) for k in range(1, n + 1))
    return DissipativeTuple(mats, True)


def hardy_resolvent(z: complex, N: int, k: int) -> np.ndarray:
    """(zI − L_k)^{−1} = (z − i)^{−1}·Σ_m (wX)^m·(I − X), w = (z + i)/(z − i), X = S^k."""
    if z == 1j:
        raise InputError("z = i is a pole of the Hardy resolvent formula")
    X = np.linalg.matrix_power(lower_shift(N), k)
    w = (z + 1j) / (z - 1j)
    acc = np.eye(N, dtype=np.complex128)
    P = w * X
    while np.any(P):
        acc += P
        P = w * (P @ X)
    return acc @ (np.eye(N) - X) / (z - 1j)


def hardy_perturbations(N: int, n: int, scale: float, kind: str = "shift", rng: Optional[np.random.Generator] = None) -> List[np.ndarray]:
    """``shift``: V_j = ε·i·(I + S^j); ``diagonal``: V_j = ε·diag(u), u ∈ [0, 1)."""
    if kind not in PERTURBATION_KINDS:
        raise InputError(f"unknown Hardy perturbation kind {kind!r}")
    if kind == "shift":
        S = lower_shift(N)
        return [scale * 1j * (np.eye(N) + np.linalg.matrix_power(S, j)) for j in range(1, n + 1)]
    rng = rng or np.random.Generator(np.random.PCG64(0))
    return [scale * np.diag(rng.random(N)).astype(np.complex128) for _ in range(n)]


# ── Functional calculus ──────────────────────────────────────────────────────

def _require_lower(f) -> RationalSum:
    if not isinstance(f, RationalSum):
        raise UnsupportedClass("dissipative functional calculus needs a RationalSum")
    if not f.lower:
        raise WrongHalfPlane("every pole must lie in the open lower half-plane")
    return f


def apply_rational_lower(f: RationalSum, mats: Sequence[np.ndarray]) -> np.ndarray:
    """Σ c·(zI − L₁)^{−k₁}⋯(zI − L_n)^{−k_n}, each power by repeated LU solves."""
    f = _require_lower(f)
    if len(mats) != f.arity:
        raise InputError(f"function arity {f.arity} does not match {len(mats)} matrices")
    N = mats[0].shape[0]
    out = np.zeros((N, N), dtype=np.complex128)
    lu_cache = {}
    for z, powers, c in zip(f.poles, f.powers, f.coeffs):
        M = np.eye(N, dtype=np.complex128)
        for l in reversed(range(f.arity)):
            key = (complex(z), l)
            if key not in lu_cache and powers[l] > 0:
                lu_cache[key] = scipy.linalg.lu_factor(z * np.eye(N) - mats[l])
            for _ in range(int(powers[l])):
                M = scipy.linalg.lu_solve(lu_cache[key], M)
        out += c * M
    return out


# ── Paths and verification ───────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class DissipativePath:
    base: Tuple[np.ndarray, ...]
    direction: Tuple[np.ndarray, ...]
    resolvent_commuting: bool

    @property
    def n(self) -> int:
        return len(self.base)

    @property
    def dim(self) -> int:
        return self.base[0].shape[0]

    def at(self, t: float) -> List[np.ndarray]:
        return [L + t * V for L, V in zip(self.base, self.direction)]


def make_dissipative_path(base: Sequence, direction: Sequence, q: Optional[int] = None) -> DissipativePath:
    """Check dissipativity at the endpoints and the quadrature nodes."""
    if len(base) != len(direction) or len(base) == 0:
        raise DimensionMismatch("base and direction must have the same positive length")
    L = tuple(as_matrix(m) for m in base)
    V = tuple(as_matrix(m) for m in direction)
    if any(m.shape != L[0].shape for m in L + V):
        raise DimensionMismatch("path matrices have different dimensions")
    q = q or get_settings().quad_dissipative
    nodes, _ = gauss_legendre(q)
    samples = np.concatenate([[0.0, 1.0], nodes])
    commuting = True
    for t in samples:
        mats = [a + t * b for a, b in zip(L, V)]
        for j, m in enumerate(mats):
            margin, ok = is_dissipative(m)
            if not ok:
                raise PathLeavesDissipative(
                    f"L_{j}(t) leaves the dissipative cone at t={t:.4f} (margin {margin:.3e})",
                    {"index": j, "t": float(t), "margin": margin},
                )
        commuting = commuting and resolvent_commuting(mats)
    return DissipativePath(L, V, commuting)


def _trace_f(f: RationalSum, mats) -> complex:
    return trace(apply_rational_lower(f, mats))


def _re_im_trace_norm(V: np.ndarray) -> float:
    return float(np.real(np.trace(absolute_value(real_part(V)) + absolute_value(imaginary_part(V)))))


def dissipative_krein_verify(path: DissipativePath, f: RationalSum, q: Optional[int] = None) -> VerificationReport:
    """Tr f(L⃗(1)) − Tr f(L⃗(0)) against Σ_j ∫_0^1 Tr D_{L_j}(t) dt.

    The reduced form Tr(∂_j f(L⃗(t))·V_j) and the per-node bounds are asserted
    only on resolvent-commuting paths; otherwise they are logged as diagnostics.
    """
    f = _require_lower(f)
    settings = get_settings()
    q = q or settings.quad_dissipative
    lhs = _trace_f(f, path.at(1.0)) - _trace_f(f, path.at(0.0))
    t, w = gauss_legendre(q)
    n = f.arity
    partials = [partial(f, j) for j in range(n)]
    sups = [sup_norm_partial(f, unit(n, j)).certified_upper for j in range(n)]
    norms = [_re_im_trace_norm(V) for V in path.direction]
    rhs = 0j
    reduced = 0j
    worst_ratio = 0.0
    for tq, wq in zip(t, w):
        mats = path.at(tq)
        for j, Dj in enumerate(resolvent_first_parts(f, mats, path.direction)):
            d = trace(Dj)
            rhs += wq * d
            reduced += wq * trace(apply_rational_lower(partials[j], mats) @ path.direction[j])
            bound = norms[j] * sups[j]
            worst_ratio = max(worst_ratio, abs(d) / bound if bound > 0 else (0.0 if d == 0 else np.inf))
    report = VerificationReport("dissipative_krein", lhs, rhs, settings.tol.dissipative_residual, quad_order=q)
    reduced_residual = abs(reduced - rhs) / (1.0 + abs(rhs))
    report.notes["reduced_residual"] = reduced_residual
    report.notes["bound_ratio_max"] = worst_ratio
    report.notes["resolvent_commuting"] = float(path.resolvent_commuting)
    if path.resolvent_commuting:
        report.bound_checks.append(BoundCheck("reduced_form_agreement", settings.tol.dissipative_residual, reduced_residual))
        report.bound_checks.append(BoundCheck("derivative_trace_bound", 1.0, worst_ratio))
    else:
        logger.warning(f"dissipative path is not resolvent-commuting: reduced residual {reduced_residual:.3e} is diagnostic")
    logger.info(f"dissipative krein: lhs={lhs:.6g} rhs={rhs:.6g} rel_residual={report.rel_residual:.3e}")
    return report


def dissipative_koplienko_verify(path: DissipativePath, f: RationalSum, q: Optional[int] = None) -> VerificationReport:
    """Taylor remainder of Tr f(L⃗(t)) against ∫_0^1 (1 − t)·Tr[2Σ_{i<j} D_ij + Σ_j D_jj] dt."""
    f = _require_lower(f)
    settings = get_settings()
    q = q or settings.quad_dissipative
    n = f.arity
    first0, _ = resolvent_parts(f, path.at(0.0), path.direction)
    lhs = _trace_f(f, path.at(1.0)) - _trace_f(f, path.at(0.0)) - trace(first0)
    t, w = gauss_legendre(q)
    hs = [frobenius_norm(V) for V in path.direction]
    sups = {(i, j): sup_norm_partial(f, unit(n, i, j)).certified_upper for i in range(n) for j in range(i, n)}
    rhs = 0j
    worst_ratio = 0.0
    for tq, wq in zip(t, w):
        _, parts = resolvent_parts(f, path.at(tq), path.direction)
        for (i, j), D in parts.items():
            d = trace(D)
            rhs += wq * (1.0 - tq) * (1.0 if i == j else 2.0) * d
            bound = hs[i] * hs[j] * sups[(i, j)]
            worst_ratio = max(worst_ratio, abs(d) / bound if bound > 0 else (0.0 if d == 0 else np.inf))
    report = VerificationReport("dissipative_koplienko", lhs, rhs, settings.tol.dissipative_residual, quad_order=q)
    report.notes["bound_ratio_max"] = worst_ratio
    report.notes["resolvent_commuting"] = float(path.resolvent_commuting)
    if path.resolvent_commuting:
        report.bound_checks.append(BoundCheck("second_derivative_trace_bound", 1.0, worst_ratio))
    logger.info(f"dissipative koplienko: lhs={lhs:.6g} rhs={rhs:.6g} rel_residual={report.rel_residual:.3e}")
    return report
