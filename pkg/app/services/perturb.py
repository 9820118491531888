"""Duhamel identity and Gâteaux derivatives of f(H⃗(t)) along H⃗(t) = H⃗ + tV⃗.

For RationalSum the operator function is the slot-ordered product
Σ c·∏_l (zI − H_l)^{−k_l}, differentiated factor by factor:

    d/ds   R^k = Σ_{p0+p1=k+1}    R^{p0} V R^{p1}
    d²/ds² R^k = 2 Σ_{p0+p1+p2=k+2} R^{p0} V R^{p1} V R^{p2}

TrigSum first derivatives go through the first-order multiple operator
integrals, one per coordinate.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.errors import DimensionMismatch, InputError, UnsupportedClass
from app.services.divdiff import compositions
from app.services.functions import RationalSum, ScalarFunction, TrigSum
from app.services.linalg import PerturbationPath, as_hermitian, frobenius_norm, operator_norm
from app.services.moi import MoiSymbol, expand_slots, moi_spectral, ordered_function

logger = logging.getLogger(__name__)

FD_STEPS = (1e-3, 5e-4)


@dataclass(frozen=True, eq=False)
class DerivativeBundle:
    t: float
    first: np.ndarray
    second: Optional[np.ndarray] = None
    parts: Dict[Tuple[int, int], np.ndarray] = field(default_factory=dict)

    def assembled(self) -> np.ndarray:
        """2·Σ_{i<j} D_ij + Σ_j D_jj."""
        if not self.parts:
            raise InputError("bundle carries no second-order parts")
        return sum((1.0 if i == j else 2.0) * D for (i, j), D in self.parts.items())


def _check_t(t0: float) -> float:
    t0 = float(t0)
    if not 0.0 <= t0 <= 1.0:
        raise InputError(f"path parameter {t0} outside [0, 1]")
    return t0


# ── Resolvent algebra ────────────────────────────────────────────────────────

class _Resolvents:
    """Powers of (zI − H)^{−1} cached per (pole, coordinate)."""

    def __init__(self, mats: Sequence[np.ndarray]):
        self.mats = list(mats)
        self.N = self.mats[0].shape[0]
        self._cache: Dict[Tuple[complex, int], List[np.ndarray]] = {}

    def power(self, z: complex, l: int, p: int) -> np.ndarray:
        key = (complex(z), l)
        powers = self._cache.get(key)
        if powers is None:
            R = np.linalg.inv(z * np.eye(self.N) - self.mats[l])
            powers = [np.eye(self.N, dtype=np.complex128), R]
            self._cache[key] = powers
        while len(powers) <= p:
            powers.append(powers[-1] @ powers[1])
        return powers[p]

    def d1(self, z: complex, l: int, k: int, V: np.ndarray) -> np.ndarray:
        out = np.zeros((self.N, self.N), dtype=np.complex128)
        for p0, p1 in compositions(k + 1, 2):
            out += self.power(z, l, p0) @ V @ self.power(z, l, p1)
        return out

    def d2(self, z: complex, l: int, k: int, V: np.ndarray) -> np.ndarray:
        out = np.zeros((self.N, self.N), dtype=np.complex128)
        for p0, p1, p2 in compositions(k + 2, 3):
            out += self.power(z, l, p0) @ V @ self.power(z, l, p1) @ V @ self.power(z, l, p2)
        return 2.0 * out


def _ordered_product(factors: List[np.ndarray]) -> np.ndarray:
    out = factors[0]
    for F in factors[1:]:
        out = out @ F
    return out


def rational_apply(f: RationalSum, mats: Sequence[np.ndarray]) -> np.ndarray:
    """Σ c·∏_l (zI − H_l)^{−k_l} in slot order."""
    res = _Resolvents(mats)
    out = np.zeros((res.N, res.N), dtype=np.complex128)
    for z, k, c in zip(f.poles, f.powers, f.coeffs):
        out += c * _ordered_product([res.power(z, l, int(k[l])) for l in range(f.arity)])
    return out


def operator_function(f: ScalarFunction, mats: Sequence[np.ndarray]) -> np.ndarray:
    """Slot-ordered f(H⃗); for commuting tuples this is the joint functional calculus."""
    if len(mats) != f.arity:
        raise InputError(f"function arity {f.arity} does not match {len(mats)} matrices")
    if isinstance(f, RationalSum):
        return rational_apply(f, mats)
    return ordered_function(f, mats)


# ── Duhamel ──────────────────────────────────────────────────────────────────

def duhamel_residual(f: ScalarFunction, j: int, A, B, context: Sequence) -> Tuple[np.ndarray, np.ndarray, float]:
    """T_f(A at slot j) − T_f(B at slot j) against T_{f_j^{[1]}}(…, A, B, …) with A − B inserted."""
    if len(context) != f.arity:
        raise InputError(f"context needs {f.arity} matrices")
    A, B = as_hermitian(A), as_hermitian(B)
    if A.shape != B.shape:
        raise DimensionMismatch("A and B have different dimensions")
    with_a = list(context)
    with_b = list(context)
    with_a[j], with_b[j] = A, B
    plain = MoiSymbol.plain(f)
    lhs = moi_spectral(plain, *expand_slots(plain, with_a)) - moi_spectral(plain, *expand_slots(plain, with_b))
    sym = MoiSymbol.first(f, j)
    ops, Vs = expand_slots(sym, with_a, [A - B])
    ops[j + 1] = B
    rhs = moi_spectral(sym, ops, Vs)
    return lhs, rhs, frobenius_norm(lhs - rhs)


# ── Derivatives ──────────────────────────────────────────────────────────────

def first_derivative(path: PerturbationPath, f: ScalarFunction, t0: float) -> np.ndarray:
    """d/dt f(H⃗(t)) at t0."""
    t0 = _check_t(t0)
    if f.arity != path.n:
        raise InputError(f"function arity {f.arity} does not match path size {path.n}")
    mats = path.at(t0)
    N = path.dim
    out = np.zeros((N, N), dtype=np.complex128)
    if isinstance(f, TrigSum):
        for k, V in enumerate(path.direction):
            if not np.any(V):
                continue
            sym = MoiSymbol.first(f, k)
            out += moi_spectral(sym, *expand_slots(sym, mats, [V]))
        return out
    return sum(resolvent_first_parts(f, mats, path.direction), out)


def second_derivative(path: PerturbationPath, f: ScalarFunction, t0: float) -> DerivativeBundle:
    """First and second derivatives at t0 with every D_ij part."""
    if not isinstance(f, RationalSum):
        raise UnsupportedClass("second derivatives are provided for RationalSum only")
    t0 = _check_t(t0)
    if f.arity != path.n:
        raise InputError(f"function arity {f.arity} does not match path size {path.n}")
    first, parts = resolvent_parts(f, path.at(t0), path.direction)
    bundle = DerivativeBundle(t0, first, None, parts)
    return DerivativeBundle(t0, first, bundle.assembled(), parts)


def resolvent_first_parts(f: RationalSum, mats: Sequence[np.ndarray], direction: Sequence[np.ndarray]) -> List[np.ndarray]:
    """D_j: the resolvent product with factor j replaced by its derivative along V_j."""
    res = _Resolvents(mats)
    out = [np.zeros((res.N, res.N), dtype=np.complex128) for _ in range(f.n)]
    for z, powers, c in zip(f.poles, f.powers, f.coeffs):
        base = [res.power(z, l, int(powers[l])) for l in range(f.n)]
        for j in range(f.n):
            factors = list(base)
            factors[j] = res.d1(z, j, int(powers[j]), direction[j])
            out[j] += c * _ordered_product(factors)
    return out


def resolvent_parts(f: RationalSum, mats: Sequence[np.ndarray], direction: Sequence[np.ndarray]):
    """(first, {(i, j): D_ij}) for the slot-ordered resolvent product at ``mats``.

    Works for any square tuple with no pole on the spectra, normal or not.
    """
    res = _Resolvents(mats)
    N, n = res.N, f.n
    V = direction
    parts = {(i, j): np.zeros((N, N), dtype=np.complex128) for i in range(n) for j in range(i, n)}
    first = np.zeros((N, N), dtype=np.complex128)
    for z, powers, c in zip(f.poles, f.powers, f.coeffs):
        k = [int(p) for p in powers]
        base = [res.power(z, l, k[l]) for l in range(n)]
        d1 = [res.d1(z, l, k[l], V[l]) for l in range(n)]
        for i in range(n):
            factors = list(base)
            factors[i] = d1[i]
            first += c * _ordered_product(factors)
            factors[i] = res.d2(z, i, k[i], V[i])
            parts[(i, i)] += c * _ordered_product(factors)
            for j in range(i + 1, n):
                factors = list(base)
                factors[i], factors[j] = d1[i], d1[j]
                parts[(i, j)] += c * _ordered_product(factors)
    return first, parts


def first_derivative_lipschitz_bound(path: PerturbationPath, f: ScalarFunction) -> float:
    """Bound on ‖d²/dt² f(H⃗(t))‖, hence the Lipschitz constant of the first derivative.

    RationalSum: Σ|c|·|Im z|^{−K−2}·[(Σ k_j‖V_j‖)² + Σ k_j‖V_j‖²], K = Σ k_j.
    TrigSum:     Σ|c|·(Σ |t_j|‖V_j‖)².
    """
    norms = np.array([operator_norm(V) for V in path.direction])
    if isinstance(f, TrigSum):
        if len(f) == 0:
            return 0.0
        return float(np.sum(np.abs(f.coeffs) * (np.abs(f.freqs) @ norms) ** 2))
    total = 0.0
    for z, powers, c in zip(f.poles, f.powers, f.coeffs):
        k = powers.astype(np.float64)
        K = float(k.sum())
        total += abs(c) * abs(z.imag) ** (-K - 2) * (float(k @ norms) ** 2 + float(k @ norms ** 2))
    return total


# ── Finite-difference oracles ────────────────────────────────────────────────

def _values(path: PerturbationPath, f: ScalarFunction, t: float) -> np.ndarray:
    return operator_function(f, path.at(t))


def central_difference(path: PerturbationPath, f: ScalarFunction, t0: float, h: float) -> np.ndarray:
    return (_values(path, f, t0 + h) - _values(path, f, t0 - h)) / (2.0 * h)


def second_central_difference(path: PerturbationPath, f: ScalarFunction, t0: float, h: float) -> np.ndarray:
    return (_values(path, f, t0 + h) - 2.0 * _values(path, f, t0) + _values(path, f, t0 - h)) / (h * h)


def richardson_ratio(path: PerturbationPath, f: ScalarFunction, t0: float, order: int = 1, steps=FD_STEPS) -> float:
    """‖D_h − D‖/‖D_{h/2} − D‖ for the central difference of the given order (≈ 4).

    Traces are compared for the second order, matrices for the first.
    """
    h1, h2 = steps
    if order == 1:
        exact = first_derivative(path, f, t0)
        e1 = frobenius_norm(central_difference(path, f, t0, h1) - exact)
        e2 = frobenius_norm(central_difference(path, f, t0, h2) - exact)
    elif order == 2:
        exact = np.trace(second_derivative(path, f, t0).second)
        e1 = abs(np.trace(second_central_difference(path, f, t0, h1)) - exact)
        e2 = abs(np.trace(second_central_difference(path, f, t0, h2)) - exact)
    else:
        raise InputError("only first and second order differences are available")
    logger.debug(f"richardson order {order}: errors {e1:.3e}, {e2:.3e}")
    return e1 / e2 if e2 > 0 else float("inf")
