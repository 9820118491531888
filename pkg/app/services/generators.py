"""Seeded instance families.

All randomness comes from ``numpy.random.Generator(PCG64(seed))`` drawn in a
fixed order, so a spec reproduces its instance bit for bit.
"""

import logging
from typing import Union

import numpy as np
from pydantic import BaseModel, Field

from app.errors import InvalidFamily, NotPathCommuting, PathLeavesDissipative
from app.services.dissipative import DissipativePath, hardy_perturbations, hardy_shift_tuple, make_dissipative_path
from app.services.functions import RationalSum, ScalarFunction, TrigSum
from app.services.linalg import PerturbationPath, check_commuting, make_path

logger = logging.getLogger(__name__)

FAMILIES = ("shared_basis", "function_of_one", "direct_sum", "tensor_projection", "hardy_dissipative")


class InstanceSpec(BaseModel):
    seed: int = Field(0, ge=0, lt=2 ** 64)
    N: int = Field(8, ge=1)
    n: int = Field(2, ge=1)
    family: str = "shared_basis"
    scale: float = Field(1.0, ge=0.0)    # size of V
    spread: float = Field(2.0, gt=0.0)   # eigenvalues of H in [-spread/2, spread/2]
    psd: bool = False                    # V_j ⪰ 0
    degree: int = Field(3, ge=1, le=3)   # function_of_one polynomials
    m: int = Field(3, ge=2)              # tensor_projection factor dimension
    r: int = Field(1, ge=1)              # tensor_projection projection rank
    c: int = Field(2, ge=1)              # tensor_projection coupling dimension
    kind: str = "shift"                  # hardy_dissipative perturbation kind


Instance = Union[PerturbationPath, DissipativePath]


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def haar_unitary(rng: np.random.Generator, N: int) -> np.ndarray:
    Z = (rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))) / np.sqrt(2.0)
    Q, R = np.linalg.qr(Z)
    d = np.diag(R)
    return Q * (d / np.abs(d))[None, :]


def random_hermitian(rng: np.random.Generator, N: int, scale: float = 1.0) -> np.ndarray:
    A = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
    H = (A + A.conj().T) / 2.0
    return scale * H / max(1.0, float(np.linalg.norm(H, 2)))


def _diag_in(U: np.ndarray, d: np.ndarray) -> np.ndarray:
    H = (U * d) @ U.conj().T
    return (H + H.conj().T) / 2.0


def _perturbation_diag(rng: np.random.Generator, spec: InstanceSpec, N: int) -> np.ndarray:
    if spec.psd:
        return spec.scale * rng.random(N)
    return spec.scale * rng.uniform(-1.0, 1.0, N)


def _shared_basis(spec: InstanceSpec, rng: np.random.Generator) -> PerturbationPath:
    U = haar_unitary(rng, spec.N)
    half = spec.spread / 2.0
    base = [_diag_in(U, rng.uniform(-half, half, spec.N)) for _ in range(spec.n)]
    direction = [_diag_in(U, _perturbation_diag(rng, spec, spec.N)) for _ in range(spec.n)]
    return make_path(base, direction)


def _polynomial(rng: np.random.Generator, degree: int) -> np.ndarray:
    coeffs = rng.uniform(-1.0, 1.0, degree + 1)
    coeffs[0] = 0.0
    return coeffs


def _poly_of(coeffs: np.ndarray, H: np.ndarray) -> np.ndarray:
    out = np.zeros_like(H)
    P = np.eye(H.shape[0], dtype=H.dtype)
    for c in coeffs:
        out = out + c * P
        P = P @ H
    return (out + out.conj().T) / 2.0


def _function_of_one(spec: InstanceSpec, rng: np.random.Generator) -> PerturbationPath:
    """H_j = p_j(H₀), V_j = p_j(H₀ + V) − p_j(H₀) with H₀, V commuting."""
    U = haar_unitary(rng, spec.N)
    half = spec.spread / 2.0
    H0 = _diag_in(U, rng.uniform(-half, half, spec.N))
    V = _diag_in(U, _perturbation_diag(rng, spec, spec.N))
    polys = [_polynomial(rng, spec.degree) for _ in range(spec.n)]
    base = [_poly_of(p, H0) for p in polys]
    direction = [_poly_of(p, H0 + V) - b for p, b in zip(polys, base)]
    return make_path(base, direction)


def _direct_sum(spec: InstanceSpec, rng: np.random.Generator) -> PerturbationPath:
    """H_j and V_j supported on the j-th diagonal block; N = n·b."""
    if spec.N % spec.n:
        raise InvalidFamily(f"direct_sum needs N divisible by n, got N={spec.N}, n={spec.n}")
    b = spec.N // spec.n
    base, direction = [], []
    for j in range(spec.n):
        H = np.zeros((spec.N, spec.N), dtype=np.complex128)
        V = np.zeros_like(H)
        sl = slice(j * b, (j + 1) * b)
        H[sl, sl] = random_hermitian(rng, b, spec.spread / 2.0)
        block = random_hermitian(rng, b, spec.scale)
        if spec.psd:
            block = block @ block.conj().T
        V[sl, sl] = block
        base.append(H)
        direction.append(V)
    return make_path(base, direction)


def _embed(factor: np.ndarray, position: int, n: int, m: int, coupling: np.ndarray) -> np.ndarray:
    out = np.eye(1, dtype=np.complex128)
    for l in range(n):
        out = np.kron(out, factor if l == position else np.eye(m))
    return np.kron(out, coupling)


def _tensor_projection(spec: InstanceSpec, rng: np.random.Generator) -> PerturbationPath:
    """On (ℂ^m)^{⊗n} ⊗ ℂ^c: H_j = A_j at factor j, V_j = P_j at factor j ⊗ C_j.

    P_j is a rank-r orthogonal projection, the C_j are diagonal in one shared
    basis of ℂ^c, so different coordinates commute for every t.
    """
    N = spec.m ** spec.n * spec.c
    if spec.N != N:
        raise InvalidFamily(f"tensor_projection has N = m^n·c = {N}, spec says {spec.N}")
    if spec.r > spec.m:
        raise InvalidFamily("projection rank exceeds the factor dimension")
    W = haar_unitary(rng, spec.c)
    base, direction = [], []
    for j in range(spec.n):
        A = random_hermitian(rng, spec.m, spec.spread / 2.0)
        Q = haar_unitary(rng, spec.m)[:, : spec.r]
        P = Q @ Q.conj().T
        C = _diag_in(W, _perturbation_diag(rng, spec, spec.c))
        base.append(_embed(A, j, spec.n, spec.m, np.eye(spec.c)))
        direction.append(_embed(P, j, spec.n, spec.m, C))
    return make_path(base, direction)


def _hardy(spec: InstanceSpec, rng: np.random.Generator) -> DissipativePath:
    T = hardy_shift_tuple(spec.N, spec.n)
    V = hardy_perturbations(spec.N, spec.n, spec.scale, spec.kind, rng)
    return make_dissipative_path(T.mats, V)


_BUILDERS = {
    "shared_basis": _shared_basis,
    "function_of_one": _function_of_one,
    "direct_sum": _direct_sum,
    "tensor_projection": _tensor_projection,
    "hardy_dissipative": _hardy,
}


def gen(spec: InstanceSpec) -> Instance:
    """Build the instance and re-check the family's commutativity property."""
    builder = _BUILDERS.get(spec.family)
    if builder is None:
        raise InvalidFamily(f"unknown family {spec.family!r}; expected one of {', '.join(FAMILIES)}")
    instance = builder(spec, rng_for(spec.seed))
    if isinstance(instance, PerturbationPath):
        if not instance.path_commuting:
            raise NotPathCommuting(f"{spec.family} instance (seed {spec.seed}) does not commute along the path")
        if spec.family in ("shared_basis", "function_of_one"):
            worst = check_commuting(list(instance.base) + list(instance.direction))
            if worst is not None:
                raise NotPathCommuting(f"{spec.family} instance (seed {spec.seed}) lost its shared eigenbasis")
    elif spec.kind == "shift" and not instance.resolvent_commuting:
        raise PathLeavesDissipative(f"hardy instance (seed {spec.seed}) is not resolvent-commuting")
    logger.debug(f"generated {spec.family} instance N={spec.N} n={spec.n} seed={spec.seed}")
    return instance


# ── Functions ────────────────────────────────────────────────────────────────

FUNCTION_CLASSES = ("trig", "rational", "monotone_trig")


class FunctionSpec(BaseModel):
    cls: str = Field("trig", alias="class")
    seed: int = Field(0, ge=0, lt=2 ** 64)
    terms: int = Field(4, ge=0, le=64)
    max_freq: float = Field(2.0, gt=0.0)
    max_power: int = Field(2, ge=1, le=6)
    min_imag: float = Field(0.5, gt=0.0)   # rational poles keep |Im z| ≥ min_imag
    lower: bool = False                    # every pole in the lower half-plane

    model_config = {"populate_by_name": True}


def random_trig(rng: np.random.Generator, n: int, terms: int, max_freq: float = 2.0) -> TrigSum:
    freqs = rng.uniform(-max_freq, max_freq, (terms, n))
    coeffs = (rng.standard_normal(terms) + 1j * rng.standard_normal(terms)) / max(1, terms)
    return TrigSum.build(freqs, coeffs, n)


def monotone_trig(n: int, rate: float = 0.25) -> TrigSum:
    """Σ_j sin(rate·λ_j): nondecreasing in each coordinate on |λ_j| ≤ π/(2·rate)."""
    terms = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = rate
        terms.append((e, -0.5j))
        terms.append((-e, 0.5j))
    return TrigSum.from_terms(terms, n=n)


def random_rational(rng: np.random.Generator, n: int, terms: int, max_power: int = 2,
                    min_imag: float = 0.5, lower: bool = False) -> RationalSum:
    re = rng.uniform(-2.0, 2.0, terms)
    im = rng.uniform(min_imag, 3.0 * min_imag, terms)
    if not lower:
        im = im * rng.choice([-1.0, 1.0], terms)
    else:
        im = -im
    powers = rng.integers(0, max_power + 1, (terms, n))
    coeffs = (rng.standard_normal(terms) + 1j * rng.standard_normal(terms)) / max(1, terms)
    return RationalSum.build(re + 1j * im, powers, coeffs, n)


def gen_function(spec: FunctionSpec, n: int) -> ScalarFunction:
    rng = rng_for(spec.seed)
    if spec.cls == "trig":
        return random_trig(rng, n, spec.terms, spec.max_freq)
    if spec.cls == "rational":
        return random_rational(rng, n, spec.terms, spec.max_power, spec.min_imag, spec.lower)
    if spec.cls == "monotone_trig":
        return monotone_trig(n)
    raise InvalidFamily(f"unknown function class {spec.cls!r}; expected one of {', '.join(FUNCTION_CLASSES)}")
