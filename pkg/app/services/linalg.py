"""Dense matrix plumbing: Hermitian eigendecomposition, joint diagonalization
of commuting tuples, functional calculus and the standard matrix norms.

All matrices are ``numpy`` complex arrays. Returned decompositions are
read-only.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from app.config import get_settings
from app.errors import (
    ArityMismatch,
    DimensionMismatch,
    EigenNonConvergence,
    InputError,
    NotCommuting,
    NotHermitian,
    PoleOnSpectrum,
)

logger = logging.getLogger(__name__)

PATH_SAMPLES = (0.0, 0.25, 0.5, 0.75, 1.0)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def as_matrix(A) -> np.ndarray:
    """Validate a square finite matrix and return it as complex128."""
    A = np.asarray(A, dtype=np.complex128)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise DimensionMismatch(f"expected a non-empty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InputError("matrix has non-finite entries")
    return A


def hermitian_defect(A: np.ndarray) -> float:
    return float(np.max(np.abs(A - A.conj().T))) if A.size else 0.0


def as_hermitian(A, tol: Optional[float] = None) -> np.ndarray:
    A = as_matrix(A)
    tol = get_settings().tol.herm if tol is None else tol
    defect = hermitian_defect(A)
    if defect > tol * (1.0 + float(np.max(np.abs(A)))):
        raise NotHermitian(f"matrix is not Hermitian (defect {defect:.3e})", {"defect": defect})
    return 0.5 * (A + A.conj().T)


# ── Norms and elementary operations ──────────────────────────────────────────

def trace(A) -> complex:
    return complex(np.trace(A))


def frobenius_norm(A) -> float:
    return float(np.linalg.norm(A, "fro"))


def operator_norm(A) -> float:
    A = np.asarray(A)
    if not A.any():
        return 0.0
    return float(np.linalg.norm(A, 2))


def trace_norm(A) -> float:
    A = np.asarray(A)
    if not A.any():
        return 0.0
    return float(np.sum(np.linalg.svd(A, compute_uv=False)))


def absolute_value(A) -> np.ndarray:
    """|A| = (A*A)^{1/2}, negative rounding eigenvalues of A*A clamped to 0."""
    A = as_matrix(A)
    U, w = eig_hermitian(A.conj().T @ A, check=False)
    w = np.sqrt(np.clip(w, 0.0, None))
    return (U * w) @ U.conj().T


def commutator_norm(A, B) -> float:
    return frobenius_norm(A @ B - B @ A)


# ── Eigendecomposition ───────────────────────────────────────────────────────

def eig_hermitian(A, check: bool = True) -> Tuple[np.ndarray, np.ndarray]:
    """Return (U, w): U unitary, w ascending, A = U diag(w) U*.

    Ties keep the solver's order, which is ascending and stable.
    """
    A = as_hermitian(A) if check else np.asarray(A, dtype=np.complex128)
    settings = get_settings()
    try:
        w, U = scipy.linalg.eigh(A, driver="evd")
    except (np.linalg.LinAlgError, ValueError):
        try:
            w, U = scipy.linalg.eigh(A, driver="ev")
        except (np.linalg.LinAlgError, ValueError) as e:
            raise EigenNonConvergence(settings.max_eig_iterations, str(e))
    order = np.argsort(w, kind="stable")
    w, U = w[order], U[:, order]
    if check:
        scale = frobenius_norm(A)
        residual = frobenius_norm(A - (U * w) @ U.conj().T)
        if residual > settings.tol.eig * (scale + 1.0):
            raise EigenNonConvergence(
                settings.max_eig_iterations, f"(reconstruction residual {residual:.3e})"
            )
    return U, np.asarray(w, dtype=np.float64)


def cluster_labels(values: np.ndarray, tol: float) -> np.ndarray:
    """Label sorted values; consecutive values closer than ``tol`` share a label."""
    labels = np.zeros(len(values), dtype=int)
    for k in range(1, len(values)):
        labels[k] = labels[k - 1] + (0 if values[k] - values[k - 1] <= tol else 1)
    return labels


def snap_clusters(values: np.ndarray, tol: float) -> np.ndarray:
    """Replace each cluster of nearly equal values by its mean (order preserved)."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return values
    order = np.argsort(values, kind="stable")
    labels = cluster_labels(values[order], tol)
    snapped = values[order].copy()
    for lab in np.unique(labels):
        idx = labels == lab
        snapped[idx] = snapped[idx].mean()
    out = np.empty_like(values)
    out[order] = snapped
    return out


# ── Commuting tuples ─────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class CommutingTuple:
    mats: Tuple[np.ndarray, ...]

    @property
    def n(self) -> int:
        return len(self.mats)

    @property
    def dim(self) -> int:
        return self.mats[0].shape[0]


def check_commuting(mats: Sequence[np.ndarray], tol: Optional[float] = None):
    """Return (worst_pair, norm, bound) or None if every pair commutes."""
    tol = get_settings().tol.comm if tol is None else tol
    worst = None
    worst_ratio = 1.0
    for i in range(len(mats)):
        for j in range(i + 1, len(mats)):
            norm = commutator_norm(mats[i], mats[j])
            bound = tol * (frobenius_norm(mats[i]) * frobenius_norm(mats[j]) + 1.0)
            if norm > bound and norm / bound > worst_ratio:
                worst, worst_ratio = ((i, j), norm, bound), norm / bound
    return worst


def make_tuple(mats: Sequence, tol: Optional[float] = None) -> CommutingTuple:
    if len(mats) == 0:
        raise InputError("a tuple needs at least one matrix")
    herm = [as_hermitian(m) for m in mats]
    dim = herm[0].shape[0]
    if any(m.shape[0] != dim for m in herm):
        raise DimensionMismatch("tuple matrices have different dimensions")
    worst = check_commuting(herm, tol)
    if worst is not None:
        pair, norm, bound = worst
        raise NotCommuting(pair, norm, bound)
    return CommutingTuple(tuple(_frozen(m) for m in herm))


@dataclass(frozen=True, eq=False)
class JointEigenDecomposition:
    U: np.ndarray
    table: np.ndarray  # N×n, row k is the joint eigenvalue of column k of U

    @property
    def dim(self) -> int:
        return self.U.shape[0]

    @property
    def n(self) -> int:
        return self.table.shape[1]

    def reconstruct(self, j: int) -> np.ndarray:
        return (self.U * self.table[:, j]) @ self.U.conj().T

    def permuted(self, perm: Sequence[int]) -> "JointEigenDecomposition":
        perm = np.asarray(perm)
        return JointEigenDecomposition(_frozen(self.U[:, perm]), _frozen(self.table[perm]))


def _cascade(mats: List[np.ndarray], basis: np.ndarray, level: int, tol_cluster: float) -> np.ndarray:
    if level == len(mats) or basis.shape[1] == 1:
        return basis
    sub = basis.conj().T @ mats[level] @ basis
    sub = 0.5 * (sub + sub.conj().T)
    V, w = eig_hermitian(sub, check=False)
    rotated = basis @ V
    scale = frobenius_norm(mats[level])
    labels = cluster_labels(w, tol_cluster * scale)
    blocks = []
    for lab in np.unique(labels):
        idx = np.nonzero(labels == lab)[0]
        block = rotated[:, idx]
        if len(idx) > 1:
            logger.debug(f"cascade level {level}: degenerate cluster of size {len(idx)}")
            block = _cascade(mats, block, level + 1, tol_cluster)
        blocks.append(block)
    return np.hstack(blocks)


def joint_diagonalize(T) -> JointEigenDecomposition:
    """Shared eigenbasis of a commuting tuple by cascade on degenerate clusters."""
    if not isinstance(T, CommutingTuple):
        T = make_tuple(T)
    settings = get_settings()
    mats = list(T.mats)
    N = T.dim
    U = _cascade(mats, np.eye(N, dtype=np.complex128), 0, settings.tol.cluster)
    # re-orthonormalize against accumulated rounding
    U, _ = np.linalg.qr(U)
    table = np.empty((N, T.n), dtype=np.float64)
    for j, H in enumerate(mats):
        conj = U.conj().T @ H @ U
        table[:, j] = np.real(np.diag(conj))
        off = frobenius_norm(conj - np.diag(np.diag(conj)))
        if off > settings.tol.diag * (frobenius_norm(H) + 1.0):
            raise EigenNonConvergence(
                settings.max_eig_iterations,
                f"(matrix {j} left {off:.3e} off the diagonal after joint diagonalization)",
            )
    defect = frobenius_norm(U.conj().T @ U - np.eye(N))
    if defect > settings.tol.unitary * max(1.0, np.sqrt(N)):
        logger.warning(f"joint eigenbasis unitarity defect {defect:.3e}")
    return JointEigenDecomposition(_frozen(U), _frozen(table))


def apply_function(f, D: JointEigenDecomposition) -> np.ndarray:
    """f(H⃗) = U diag(f(row_k of Λ)) U*."""
    if f.arity != D.n:
        raise ArityMismatch(f"function arity {f.arity} does not match tuple size {D.n}")
    if hasattr(f, "min_pole_distance"):
        dist = f.min_pole_distance(D.table)
        if dist <= 0.0:
            raise PoleOnSpectrum("a pole of the rational function lies on the joint spectrum")
    values = f.eval(D.table)
    return (D.U * values) @ D.U.conj().T


# ── Perturbation paths ───────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class PerturbationPath:
    base: Tuple[np.ndarray, ...]
    direction: Tuple[np.ndarray, ...]
    path_commuting: bool

    @property
    def n(self) -> int:
        return len(self.base)

    @property
    def dim(self) -> int:
        return self.base[0].shape[0]

    def at(self, t: float) -> List[np.ndarray]:
        return [H + t * V for H, V in zip(self.base, self.direction)]

    def tuple_at(self, t: float) -> CommutingTuple:
        return make_tuple(self.at(t))

    def scaled(self, s: float) -> "PerturbationPath":
        return PerturbationPath(self.base, tuple(_frozen(s * V) for V in self.direction), self.path_commuting)


def make_path(base: Sequence, direction: Sequence, tol: Optional[float] = None) -> PerturbationPath:
    if len(base) != len(direction) or len(base) == 0:
        raise DimensionMismatch("base and direction must have the same positive length")
    H = [as_hermitian(m) for m in base]
    V = [as_hermitian(m) for m in direction]
    dim = H[0].shape[0]
    if any(m.shape[0] != dim for m in H + V):
        raise DimensionMismatch("path matrices have different dimensions")
    commuting = all(
        check_commuting([h + t * v for h, v in zip(H, V)], tol) is None for t in PATH_SAMPLES
    )
    return PerturbationPath(tuple(_frozen(m) for m in H), tuple(_frozen(m) for m in V), commuting)


def require_endpoints_commuting(path: PerturbationPath) -> None:
    for t in (0.0, 1.0):
        worst = check_commuting(path.at(t))
        if worst is not None:
            pair, norm, bound = worst
            raise NotCommuting(pair, norm, bound)


def shared_eigenlines(path: PerturbationPath) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """(Λ_H, Λ_V) when all of H⃗ and V⃗ share an eigenbasis, else None.

    Row k of Λ_H is the start of the eigenline λ⃗_k + t·v⃗_k, row k of Λ_V its
    direction.
    """
    mats = list(path.base) + list(path.direction)
    if check_commuting(mats) is not None:
        return None
    D = joint_diagonalize(CommutingTuple(tuple(mats)))
    n = path.n
    return D.table[:, :n].copy(), D.table[:, n:].copy()
