"""Multiple operator integrals with TrigSum / RationalSum symbols.

A symbol is a plain function f or one of its divided differences f_j^{[1]},
f_j^{[2]}, f_{j,k}^{[2]}. Coordinate l of f occupies one, two or three
consecutive operator slots:

    plain               l → (l)
    first(j)            j → (j, j+1)             l > j shifted by 1
    second_same(j)      j → (j, j+1, j+2)        l > j shifted by 2
    second_mixed(j, k)  j → (j, j+1), k → (k+1, k+2), j < k

Every term of both classes factors across coordinates, so the integral is a
product, in slot order, of one block per coordinate separated by the V of
the slot boundary between blocks.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.config import get_settings
from app.errors import ArityMismatch, DimensionMismatch, InvalidSpec, UnsupportedClass
from app.services.divdiff import DividedDifferenceSpec, factor_dd1, factor_dd2
from app.services.functions import ScalarFunction, TrigSum, unit, wiener_seminorm
from app.services.linalg import as_hermitian, as_matrix, eig_hermitian, frobenius_norm, snap_clusters
from app.services.quadrature import gauss_legendre, triangle_rule

logger = logging.getLogger(__name__)

SYMBOL_KINDS = ("plain", "first", "second_same", "second_mixed")
_EXTRA_SLOTS = {"plain": 0, "first": 1, "second_same": 2, "second_mixed": 2}


@dataclass(frozen=True, eq=False)
class MoiSymbol:
    f: ScalarFunction
    kind: str = "plain"
    j: Optional[int] = None
    k: Optional[int] = None

    def __post_init__(self):
        if self.kind not in SYMBOL_KINDS:
            raise InvalidSpec(f"unknown symbol kind {self.kind!r}")
        if self.kind == "plain":
            if self.j is not None or self.k is not None:
                raise InvalidSpec("a plain symbol takes no positions")
            return
        DividedDifferenceSpec(self.kind, self.j, self.k)
        for p in (self.j, self.k):
            if p is not None and not 0 <= p < self.f.arity:
                raise InvalidSpec(f"position {p} out of range for arity {self.f.arity}")
        if self.kind == "second_mixed" and self.k < self.j:
            # f_{j,k}^{[2]} is symmetric under swapping the two positions
            j, k = self.k, self.j
            object.__setattr__(self, "j", j)
            object.__setattr__(self, "k", k)

    @classmethod
    def plain(cls, f: ScalarFunction) -> "MoiSymbol":
        return cls(f)

    @classmethod
    def first(cls, f: ScalarFunction, j: int) -> "MoiSymbol":
        return cls(f, "first", j)

    @classmethod
    def second_same(cls, f: ScalarFunction, j: int) -> "MoiSymbol":
        return cls(f, "second_same", j)

    @classmethod
    def second_mixed(cls, f: ScalarFunction, j: int, k: int) -> "MoiSymbol":
        return cls(f, "second_mixed", j, k)

    @property
    def arity(self) -> int:
        return self.f.arity + _EXTRA_SLOTS[self.kind]

    def layout(self) -> List[Tuple[int, Tuple[int, ...]]]:
        """(coordinate, slots) in slot order."""
        out = []
        s = 0
        for l in range(self.f.arity):
            width = 1
            if self.kind == "first" and l == self.j:
                width = 2
            elif self.kind == "second_same" and l == self.j:
                width = 3
            elif self.kind == "second_mixed" and l in (self.j, self.k):
                width = 2
            out.append((l, tuple(range(s, s + width))))
            s += width
        return out

    def inner_boundaries(self) -> List[int]:
        """V positions lying inside a coordinate's block."""
        return [slots[i] for _, slots in self.layout() for i in range(len(slots) - 1)]


def expand_slots(sym: MoiSymbol, mats: Sequence[np.ndarray], inner: Sequence[np.ndarray] = ()) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """Slot operators and V list for a tuple ``mats``.

    Slot operators repeat mats[l] over every slot of coordinate l; ``inner``
    fills the boundaries inside the divided-difference blocks in slot order,
    every other boundary gets the identity.
    """
    if len(mats) != sym.f.arity:
        raise ArityMismatch(f"expected {sym.f.arity} matrices, got {len(mats)}")
    ops: List[np.ndarray] = []
    for l, slots in sym.layout():
        ops.extend([mats[l]] * len(slots))
    positions = sym.inner_boundaries()
    if len(inner) != len(positions):
        raise ArityMismatch(f"symbol {sym.kind} takes {len(positions)} inner perturbations, got {len(inner)}")
    N = np.asarray(mats[0]).shape[0]
    Vs = [np.eye(N, dtype=np.complex128) for _ in range(sym.arity - 1)]
    for pos, V in zip(positions, inner):
        Vs[pos] = np.asarray(V, dtype=np.complex128)
    return ops, Vs


def _check_slots(sym: MoiSymbol, ops: Sequence, Vs: Sequence) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    if len(ops) != sym.arity:
        raise ArityMismatch(f"symbol has {sym.arity} slots, got {len(ops)} operators")
    if len(Vs) != sym.arity - 1:
        raise ArityMismatch(f"symbol has {sym.arity} slots, needs {sym.arity - 1} perturbations, got {len(Vs)}")
    seen: dict = {}
    H = []
    for A in ops:
        if id(A) not in seen:
            seen[id(A)] = as_hermitian(A)
        H.append(seen[id(A)])
    V = [as_matrix(B) for B in Vs]
    N = H[0].shape[0]
    if any(m.shape != (N, N) for m in H + V):
        raise DimensionMismatch("operator and perturbation dimensions differ")
    return H, V


def _slot_spectra(H: List[np.ndarray]) -> List[Tuple[np.ndarray, np.ndarray]]:
    """(U, snapped eigenvalues) per slot; identical operators are decomposed once."""
    tol = get_settings().tol.cluster
    cache: dict = {}
    out = []
    for A in H:
        key = id(A)
        if key not in cache:
            U, w = eig_hermitian(A, check=False)
            scale = max(1.0, float(np.max(np.abs(w))))
            cache[key] = (U, snap_clusters(w, tol * scale))
        out.append(cache[key])
    return out


def _chain(blocks: List[np.ndarray], boundary: List[np.ndarray]) -> np.ndarray:
    out = blocks[0]
    for V, B in zip(boundary, blocks[1:]):
        out = out @ V @ B
    return out


def moi_spectral(sym: MoiSymbol, ops: Sequence, Vs: Sequence) -> np.ndarray:
    """Σ over eigen-index tuples of symbol(eigenvalues)·P₁V₁P₂⋯P_m, term by term."""
    H, V = _check_slots(sym, ops, Vs)
    f = sym.f
    N = H[0].shape[0]
    if len(f) == 0:
        return np.zeros((N, N), dtype=np.complex128)
    spectra = _slot_spectra(H)
    blocks: List[np.ndarray] = []
    boundary: List[np.ndarray] = []
    for l, slots in sym.layout():
        if blocks:
            boundary.append(V[slots[0] - 1])
        U0, w0 = spectra[slots[0]]
        Ue, _ = spectra[slots[-1]]
        if len(slots) == 1:
            g = f.coordinate_factors(l, w0)
            blocks.append((U0[None] * g[:, None, :]) @ U0.conj().T)
            continue
        U1, w1 = spectra[slots[1]]
        X = U0.conj().T @ V[slots[0]] @ U1
        if len(slots) == 2:
            G = factor_dd1(f, l, w0[:, None], w1[None, :])
            core = G * X[None]
        else:
            U2, w2 = spectra[slots[2]]
            Y = U1.conj().T @ V[slots[1]] @ U2
            G = factor_dd2(f, l, w0[:, None, None], w1[None, :, None], w2[None, None, :])
            core = np.einsum("kabc,ab,bc->kac", G, X, Y)
        blocks.append(U0[None] @ core @ Ue.conj().T[None])
    terms = _chain(blocks, [B[None] for B in boundary])
    return np.tensordot(f.coeffs, terms, axes=(0, 0))


def ordered_function(f: ScalarFunction, mats: Sequence) -> np.ndarray:
    """T_f(I,…,I) with H_l in slot l; equals f(H⃗) when the H_l commute."""
    sym = MoiSymbol.plain(f)
    ops, Vs = expand_slots(sym, mats)
    return moi_spectral(sym, ops, Vs)


# ── Fourier route ────────────────────────────────────────────────────────────

def _expm_i(U: np.ndarray, w: np.ndarray, tau) -> np.ndarray:
    """exp(iτA) for every τ in ``tau``: shape (len(tau), N, N)."""
    tau = np.atleast_1d(np.asarray(tau, dtype=np.float64))
    phases = np.exp(1j * tau[:, None] * w[None, :])
    return (U[None] * phases[:, None, :]) @ U.conj().T[None]


def moi_fourier(sym: MoiSymbol, ops: Sequence, Vs: Sequence, q: int = 24) -> np.ndarray:
    """Same integral through the Bochner representation of the exponential terms.

    first:        i ∫_0^t e^{i(t−σ)A} V e^{iσB} dσ
    second_same:  i² ∫_0^t ∫_0^σ e^{i(t−σ)A} V e^{i(σ−p)B} V′ e^{ipC} dp dσ
    Inner integrals use Gauss–Legendre of order q; the triangle goes through
    the Duffy map.
    """
    f = sym.f
    if not isinstance(f, TrigSum):
        raise UnsupportedClass("the Fourier route needs a TrigSum symbol")
    if q < 2:
        raise InvalidSpec("quadrature order must be at least 2")
    H, V = _check_slots(sym, ops, Vs)
    N = H[0].shape[0]
    out = np.zeros((N, N), dtype=np.complex128)
    spectra = [eig_hermitian(A, check=False) for A in H]
    layout = sym.layout()
    u, wu = gauss_legendre(q)
    s_tri, r_tri, w_tri = triangle_rule(q)
    for freq, c in zip(f.freqs, f.coeffs):
        blocks = []
        boundary = []
        for l, slots in layout:
            t = float(freq[l])
            if blocks:
                boundary.append(V[slots[0] - 1])
            if len(slots) == 1:
                blocks.append(_expm_i(*spectra[slots[0]], t)[0])
            elif t == 0.0:
                blocks.append(np.zeros((N, N), dtype=np.complex128))
            elif len(slots) == 2:
                sigma = t * u
                left = _expm_i(*spectra[slots[0]], t - sigma)
                right = _expm_i(*spectra[slots[1]], sigma)
                inner = left @ V[slots[0]][None] @ right
                blocks.append(1j * t * np.tensordot(wu, inner, axes=(0, 0)))
            else:
                sigma, p = t * s_tri, t * r_tri
                a = _expm_i(*spectra[slots[0]], t - sigma)
                b = _expm_i(*spectra[slots[1]], sigma - p)
                cc = _expm_i(*spectra[slots[2]], p)
                inner = a @ V[slots[0]][None] @ b @ V[slots[1]][None] @ cc
                blocks.append(-(t * t) * np.tensordot(w_tri, inner, axes=(0, 0)))
        out += c * _chain(blocks, boundary)
    return out


def moi_norm_bounds(sym: MoiSymbol) -> float:
    """Operator-norm constant of the integral: Σ|c| times the frequency monomial."""
    f = sym.f
    if not isinstance(f, TrigSum):
        raise UnsupportedClass("norm bounds are stated for TrigSum symbols")
    n = f.arity
    if sym.kind == "plain":
        return wiener_seminorm(f, (0,) * n)
    if sym.kind == "first":
        return wiener_seminorm(f, unit(n, sym.j))
    if sym.kind == "second_same":
        return 0.5 * wiener_seminorm(f, unit(n, sym.j, sym.j))
    return wiener_seminorm(f, unit(n, sym.j, sym.k))


def agreement(sym: MoiSymbol, ops: Sequence, Vs: Sequence, q: int = 24) -> float:
    """‖fourier − spectral‖_F / (1 + ‖spectral‖_F)."""
    exact = moi_spectral(sym, ops, Vs)
    approx = moi_fourier(sym, ops, Vs, q)
    return frobenius_norm(approx - exact) / (1.0 + frobenius_norm(exact))
