"""First and second divided differences of TrigSum / RationalSum functions.

Both classes are sums of terms that factor across coordinates, so every
divided difference is a per-term product of a univariate divided difference
at the active coordinate(s) and plain factors at the spectator coordinates.

Univariate pieces, per term:
  exp(i t x):      f[a,b]   = i t·exp(i t (a+b)/2)·sinc(t (a−b)/2)
                   f[a,b,c] = (f[x,y] − f[y,w]) / (x − w) with x, w the extreme
                              nodes, or the centred Taylor limit when confluent
  (z − x)^{−k}:    f[a,b]   = Σ_{p0+p1=k+1} (z−a)^{−p0}(z−b)^{−p1}
                   f[a,b,c] = Σ_{p0+p1+p2=k+2} (z−a)^{−p0}(z−b)^{−p1}(z−c)^{−p2}
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from app.config import get_settings
from app.errors import InvalidSpec, InputError
from app.services.functions import RationalSum, ScalarFunction, TrigSum, derivative, unit
from app.services.quadrature import gauss_legendre, square_rule, triangle_rule

logger = logging.getLogger(__name__)

KINDS = ("first", "second_same", "second_mixed")


@dataclass(frozen=True)
class DividedDifferenceSpec:
    kind: str
    j: int
    k: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidSpec(f"unknown divided difference kind {self.kind!r}")
        if self.kind == "second_mixed":
            if self.k is None or self.k == self.j:
                raise InvalidSpec("a mixed second divided difference needs two distinct positions")
        elif self.k is not None:
            raise InvalidSpec(f"{self.kind} takes a single position")

    @property
    def node_count(self) -> int:
        return {"first": 2, "second_same": 3, "second_mixed": 4}[self.kind]

    @property
    def positions(self) -> Tuple[int, ...]:
        return (self.j,) if self.k is None else tuple(sorted((self.j, self.k)))


# ── Univariate per-term pieces ───────────────────────────────────────────────

def _per_term(values: np.ndarray, K: int, shape: tuple) -> np.ndarray:
    return np.asarray(values).reshape((K,) + (1,) * len(shape))


def _exp_dd1(t: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m = 0.5 * (a + b)
    d = 0.5 * (a - b)
    return 1j * t * np.exp(1j * t * m) * np.sinc(t * d / np.pi)


def _exp_dd2(t: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray, tol: float) -> np.ndarray:
    nodes = np.broadcast_arrays(a, b, c)
    stack = np.sort(np.stack(nodes), axis=0)
    lo, mid, hi = stack[0], stack[1], stack[2]
    gap = hi - lo
    confluent = gap <= tol * (1.0 + np.abs(lo) + np.abs(hi))
    safe = np.where(confluent, 1.0, gap)
    quotient = (_exp_dd1(t, hi, mid) - _exp_dd1(t, mid, lo)) / safe
    m = (lo + mid + hi) / 3.0
    limit = 0.5 * (1j * t) ** 2 * np.exp(1j * t * m)
    return np.where(confluent, limit, quotient)


def _resolvent_dd(z: np.ndarray, k: np.ndarray, nodes: Sequence[np.ndarray]) -> np.ndarray:
    """Σ over p_0+…+p_r = k+r, p_i ≥ 1 of ∏ (z − x_i)^{−p_i} (r+1 nodes)."""
    r = len(nodes) - 1
    inv = [1.0 / (z - x) for x in nodes]
    out = np.zeros(np.broadcast(z, *nodes).shape, dtype=np.complex128)
    kmax = int(np.max(k)) if k.size else 0
    for total in range(r + 1, kmax + r + 1):
        mask = (k + r) == total
        if not np.any(mask):
            continue
        acc = np.zeros_like(out)
        for p in compositions(total, r + 1):
            term = np.ones_like(out)
            for x_inv, pi in zip(inv, p):
                term = term * x_inv ** pi
            acc = acc + term
        out = np.where(mask, acc, out)
    return out


def compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(1, total - parts + 2):
        for rest in compositions(total - first, parts - 1):
            yield (first,) + rest


def factor_dd1(f: ScalarFunction, l: int, a, b) -> np.ndarray:
    """Per-term first divided difference of the l-th factor: shape (K,) + broadcast(a, b)."""
    a, b = np.broadcast_arrays(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))
    K = len(f)
    if isinstance(f, TrigSum):
        t = _per_term(f.freqs[:, l], K, a.shape)
        return _exp_dd1(t, a[None], b[None])
    z = _per_term(f.poles, K, a.shape)
    k = _per_term(f.powers[:, l], K, a.shape)
    return _resolvent_dd(z, k, [a[None], b[None]])


def factor_dd2(f: ScalarFunction, l: int, a, b, c) -> np.ndarray:
    a, b, c = np.broadcast_arrays(*(np.asarray(x, dtype=np.float64) for x in (a, b, c)))
    K = len(f)
    if isinstance(f, TrigSum):
        t = _per_term(f.freqs[:, l], K, a.shape)
        return _exp_dd2(t, a[None], b[None], c[None], get_settings().tol.confluent)
    z = _per_term(f.poles, K, a.shape)
    k = _per_term(f.powers[:, l], K, a.shape)
    return _resolvent_dd(z, k, [a[None], b[None], c[None]])


def factor_values(f: ScalarFunction, l: int, x) -> np.ndarray:
    return f.coordinate_factors(l, np.asarray(x, dtype=np.float64))


# ── Multivariate divided differences ─────────────────────────────────────────

def _spectators(f: ScalarFunction, spectators, shape: tuple) -> np.ndarray:
    if spectators is None:
        spectators = np.zeros(f.arity)
    s = np.asarray(spectators, dtype=np.float64)
    if s.shape[-1] != f.arity:
        raise InputError(f"spectator points need {f.arity} coordinates, got shape {s.shape}")
    return np.broadcast_to(s, shape + (f.arity,))


def _assemble(f: ScalarFunction, active: dict, spect: np.ndarray, shape: tuple) -> np.ndarray:
    if len(f) == 0:
        return np.zeros(shape, dtype=np.complex128)
    prod = np.ones((len(f),) + shape, dtype=np.complex128)
    for l in range(f.arity):
        prod = prod * (active[l] if l in active else factor_values(f, l, spect[..., l]))
    out = np.tensordot(f.coeffs, prod, axes=(0, 0))
    return out if shape else complex(out)


def _check(f: ScalarFunction, *idx: int) -> None:
    for j in idx:
        if not 0 <= j < f.arity:
            raise InputError(f"position {j} out of range for arity {f.arity}")


def dd1(f: ScalarFunction, j: int, mu1, mu2, spectators=None):
    _check(f, j)
    mu1, mu2 = np.broadcast_arrays(np.asarray(mu1, dtype=np.float64), np.asarray(mu2, dtype=np.float64))
    spect = _spectators(f, spectators, mu1.shape)
    return _assemble(f, {j: factor_dd1(f, j, mu1, mu2)}, spect, mu1.shape)


def dd2_same(f: ScalarFunction, j: int, mu1, mu2, mu3, spectators=None):
    _check(f, j)
    mu1, mu2, mu3 = np.broadcast_arrays(*(np.asarray(x, dtype=np.float64) for x in (mu1, mu2, mu3)))
    spect = _spectators(f, spectators, mu1.shape)
    return _assemble(f, {j: factor_dd2(f, j, mu1, mu2, mu3)}, spect, mu1.shape)


def dd2_mixed(f: ScalarFunction, j: int, k: int, mus, etas, spectators=None):
    """f_{j,k}^{[2]}: nodes ``mus`` at position j, ``etas`` at position k."""
    _check(f, j, k)
    if j == k:
        raise InvalidSpec("mixed divided difference needs j != k")
    arrays = np.broadcast_arrays(*(np.asarray(x, dtype=np.float64) for x in (*mus, *etas)))
    m1, m2, e1, e2 = arrays
    spect = _spectators(f, spectators, m1.shape)
    active = {j: factor_dd1(f, j, m1, m2), k: factor_dd1(f, k, e1, e2)}
    return _assemble(f, active, spect, m1.shape)


def evaluate_spec(f: ScalarFunction, spec: DividedDifferenceSpec, nodes: Sequence, spectators=None):
    if len(nodes) != spec.node_count:
        raise InvalidSpec(f"{spec.kind} needs {spec.node_count} nodes, got {len(nodes)}")
    if spec.kind == "first":
        return dd1(f, spec.j, nodes[0], nodes[1], spectators)
    if spec.kind == "second_same":
        return dd2_same(f, spec.j, nodes[0], nodes[1], nodes[2], spectators)
    return dd2_mixed(f, spec.j, spec.k, nodes[:2], nodes[2:], spectators)


# ── Hermite–Genocchi quadrature (reference route) ────────────────────────────

def hermite_genocchi_dd1(f: ScalarFunction, j: int, mu1: float, mu2: float, spectators, order: int = 64) -> complex:
    """∫_0^1 ∂_j f(…, (1−u)μ1 + uμ2, …) du."""
    u, w = gauss_legendre(order)
    pts = np.tile(np.asarray(spectators, dtype=np.float64), (len(u), 1))
    pts[:, j] = (1 - u) * mu1 + u * mu2
    return complex(w @ derivative(f, unit(f.arity, j)).eval(pts))


def hermite_genocchi_dd2_same(f: ScalarFunction, j: int, mu1: float, mu2: float, mu3: float, spectators, order: int = 64) -> complex:
    """∫_0^1 ∫_0^s ∂_j² f(…, μ1 + s(μ2−μ1) + r(μ3−μ2), …) dr ds."""
    s, r, w = triangle_rule(order)
    pts = np.tile(np.asarray(spectators, dtype=np.float64), (len(s), 1))
    pts[:, j] = mu1 + s * (mu2 - mu1) + r * (mu3 - mu2)
    return complex(w @ derivative(f, unit(f.arity, j, j)).eval(pts))


def hermite_genocchi_dd2_mixed(f: ScalarFunction, j: int, k: int, mus, etas, spectators, order: int = 64) -> complex:
    """∫∫_{[0,1]²} ∂_j∂_k f(…, (1−u)μ1+uμ2, …, (1−v)η1+vη2, …) du dv."""
    u, v, w = square_rule(order)
    pts = np.tile(np.asarray(spectators, dtype=np.float64), (len(u), 1))
    pts[:, j] = (1 - u) * mus[0] + u * mus[1]
    pts[:, k] = (1 - v) * etas[0] + v * etas[1]
    return complex(w @ derivative(f, unit(f.arity, j, k)).eval(pts))
