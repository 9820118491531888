"""Scalar function classes used as symbols of the operator functions.

``TrigSum``     finite Fourier sums  f(λ⃗) = Σ c·exp(i t⃗·λ⃗). The coefficients are
                the weights of the Fourier measure, so the (2π)^{n/2}
                normalisation of the Wiener-class bounds is already absorbed.
``RationalSum`` finite sums of resolvent-power products
                f(λ⃗) = Σ c·∏_l (z − λ_l)^{−k_l}.

Coordinates are 0-based throughout.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.config import get_settings
from app.errors import InputError, InvalidSpec, NonUniformGrid, UnsupportedClass

logger = logging.getLogger(__name__)


def _frozen(a) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def _points(points, arity: int) -> Tuple[np.ndarray, tuple]:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 0 or pts.shape[-1] != arity:
        if arity == 1 and pts.ndim <= 1:
            pts = pts[..., None]
        else:
            raise InputError(f"expected points with last axis {arity}, got shape {pts.shape}")
    lead = pts.shape[:-1]
    return pts.reshape(-1, arity), lead


@dataclass(frozen=True, eq=False)
class TrigSum:
    freqs: np.ndarray   # K×n real
    coeffs: np.ndarray  # K complex
    n: int = field(default=0)

    kind = "trig"

    @classmethod
    def from_terms(cls, terms: Iterable[Tuple[Sequence[float], complex]], n: Optional[int] = None) -> "TrigSum":
        terms = list(terms)
        if n is None:
            if not terms:
                raise InputError("arity is required for an empty TrigSum")
            n = len(terms[0][0])
        freqs = np.array([np.asarray(t, dtype=np.float64) for t, _ in terms]).reshape(-1, n)
        coeffs = np.array([complex(c) for _, c in terms], dtype=np.complex128)
        return cls.build(freqs, coeffs, n)

    @classmethod
    def build(cls, freqs, coeffs, n: int) -> "TrigSum":
        """Merge duplicate frequencies and drop exact zeros; terms sorted by frequency."""
        freqs = np.asarray(freqs, dtype=np.float64).reshape(-1, n)
        coeffs = np.asarray(coeffs, dtype=np.complex128).reshape(-1)
        if len(freqs) != len(coeffs):
            raise InputError("frequency and coefficient counts differ")
        if not (np.all(np.isfinite(freqs)) and np.all(np.isfinite(coeffs))):
            raise InputError("TrigSum terms must be finite")
        tol = get_settings().tol.freq_merge
        order = np.lexsort(freqs.T[::-1]) if len(freqs) else np.arange(0)
        merged_f: List[np.ndarray] = []
        merged_c: List[complex] = []
        for k in order:
            if merged_f and np.max(np.abs(merged_f[-1] - freqs[k])) <= tol:
                merged_c[-1] += coeffs[k]
            else:
                merged_f.append(freqs[k])
                merged_c.append(coeffs[k])
        keep = [i for i, c in enumerate(merged_c) if c != 0]
        f = np.array([merged_f[i] for i in keep]).reshape(-1, n)
        c = np.array([merged_c[i] for i in keep], dtype=np.complex128)
        return cls(_frozen(f), _frozen(c), n)

    @classmethod
    def constant(cls, value: complex, n: int) -> "TrigSum":
        return cls.build(np.zeros((1, n)), [value], n)

    @property
    def arity(self) -> int:
        return self.n

    def __len__(self) -> int:
        return len(self.coeffs)

    def terms(self) -> List[Tuple[Tuple[float, ...], complex]]:
        return [(tuple(t), complex(c)) for t, c in zip(self.freqs, self.coeffs)]

    def eval(self, points) -> np.ndarray:
        pts, lead = _points(points, self.n)
        if len(self) == 0:
            return np.zeros(lead, dtype=np.complex128)
        vals = np.exp(1j * (pts @ self.freqs.T)) @ self.coeffs
        return vals.reshape(lead)

    def coordinate_factors(self, l: int, x) -> np.ndarray:
        """exp(i t_l x) for every term: shape (K,) + x.shape."""
        x = np.asarray(x, dtype=np.float64)
        t = self.freqs[:, l].reshape((-1,) + (1,) * x.ndim)
        return np.exp(1j * t * x[None, ...])

    def __mul__(self, other: "TrigSum") -> "TrigSum":
        if not isinstance(other, TrigSum) or other.n != self.n:
            return NotImplemented
        freqs = (self.freqs[:, None, :] + other.freqs[None, :, :]).reshape(-1, self.n)
        coeffs = (self.coeffs[:, None] * other.coeffs[None, :]).reshape(-1)
        return TrigSum.build(freqs, coeffs, self.n)

    def __add__(self, other: "TrigSum") -> "TrigSum":
        if not isinstance(other, TrigSum) or other.n != self.n:
            return NotImplemented
        return TrigSum.build(np.vstack([self.freqs, other.freqs]), np.concatenate([self.coeffs, other.coeffs]), self.n)

    def scaled(self, s: complex) -> "TrigSum":
        return TrigSum.build(self.freqs, s * self.coeffs, self.n)


@dataclass(frozen=True, eq=False)
class RationalSum:
    poles: np.ndarray   # K complex, Im ≠ 0
    powers: np.ndarray  # K×n nonnegative integers
    coeffs: np.ndarray  # K complex
    n: int = field(default=0)

    kind = "rational"

    @classmethod
    def from_terms(cls, terms: Iterable[Tuple[complex, Sequence[int], complex]], n: Optional[int] = None) -> "RationalSum":
        terms = list(terms)
        if n is None:
            if not terms:
                raise InputError("arity is required for an empty RationalSum")
            n = len(terms[0][1])
        poles = np.array([complex(z) for z, _, _ in terms], dtype=np.complex128)
        powers = np.array([list(k) for _, k, _ in terms], dtype=np.int64).reshape(-1, n)
        coeffs = np.array([complex(c) for _, _, c in terms], dtype=np.complex128)
        return cls.build(poles, powers, coeffs, n)

    @classmethod
    def build(cls, poles, powers, coeffs, n: int) -> "RationalSum":
        poles = np.asarray(poles, dtype=np.complex128).reshape(-1)
        powers = np.asarray(powers, dtype=np.int64).reshape(-1, n)
        coeffs = np.asarray(coeffs, dtype=np.complex128).reshape(-1)
        if not (len(poles) == len(powers) == len(coeffs)):
            raise InputError("pole, power and coefficient counts differ")
        if np.any(poles.imag == 0):
            raise InvalidSpec("rational poles must have nonzero imaginary part")
        if np.any(powers < 0):
            raise InvalidSpec("resolvent powers must be nonnegative")
        keep = coeffs != 0
        return cls(_frozen(poles[keep]), _frozen(powers[keep]), _frozen(coeffs[keep]), n)

    @property
    def arity(self) -> int:
        return self.n

    @property
    def lower(self) -> bool:
        """Every pole in the open lower half-plane."""
        return bool(np.all(self.poles.imag < 0))

    def __len__(self) -> int:
        return len(self.coeffs)

    def terms(self) -> List[Tuple[complex, Tuple[int, ...], complex]]:
        return [(complex(z), tuple(int(k) for k in p), complex(c)) for z, p, c in zip(self.poles, self.powers, self.coeffs)]

    def eval(self, points) -> np.ndarray:
        pts, lead = _points(points, self.n)
        if len(self) == 0:
            return np.zeros(lead, dtype=np.complex128)
        base = self.poles[None, :, None] - pts[:, None, :]
        vals = np.prod(base ** (-self.powers[None, :, :]), axis=2) @ self.coeffs
        return vals.reshape(lead)

    def coordinate_factors(self, l: int, x) -> np.ndarray:
        """(z − x)^{−k_l} for every term: shape (K,) + x.shape."""
        x = np.asarray(x, dtype=np.complex128)
        shape = (-1,) + (1,) * x.ndim
        return (self.poles.reshape(shape) - x[None, ...]) ** (-self.powers[:, l].reshape(shape))

    def min_pole_distance(self, points) -> float:
        pts, _ = _points(points, self.n)
        if len(self) == 0 or len(pts) == 0:
            return math.inf
        active = self.powers > 0
        dist = np.abs(self.poles[None, :, None] - pts[:, None, :])
        dist = np.where(active[None, :, :], dist, np.inf)
        return float(np.min(dist))

    def scaled(self, s: complex) -> "RationalSum":
        return RationalSum.build(self.poles, self.powers, s * self.coeffs, self.n)


ScalarFunction = Union[TrigSum, RationalSum]


def evaluate(f: ScalarFunction, point) -> complex:
    return complex(f.eval(np.asarray(point, dtype=np.float64).reshape(1, f.arity))[0])


def _check_index(f: ScalarFunction, j: int) -> None:
    if not 0 <= j < f.arity:
        raise InputError(f"coordinate index {j} out of range for arity {f.arity}")


def partial(f: ScalarFunction, j: int) -> ScalarFunction:
    _check_index(f, j)
    if isinstance(f, TrigSum):
        return TrigSum.build(f.freqs, 1j * f.freqs[:, j] * f.coeffs, f.n)
    powers = f.powers.copy()
    coeffs = f.coeffs * powers[:, j]
    powers[:, j] += 1
    return RationalSum.build(f.poles, powers, coeffs, f.n)


def derivative(f: ScalarFunction, alpha: Sequence[int]) -> ScalarFunction:
    alpha = _multi_index(f, alpha)
    g = f
    for j, a in enumerate(alpha):
        for _ in range(a):
            g = partial(g, j)
    return g


def _multi_index(f: ScalarFunction, alpha) -> Tuple[int, ...]:
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != f.arity or any(a < 0 for a in alpha):
        raise InputError(f"multi-index {alpha} does not fit arity {f.arity}")
    return alpha


def unit(n: int, *idx: int) -> Tuple[int, ...]:
    """Multi-index e_i + e_j + … of length n."""
    alpha = [0] * n
    for i in idx:
        alpha[i] += 1
    return tuple(alpha)


def wiener_seminorm(f: ScalarFunction, alpha: Sequence[int]) -> float:
    """Σ |c|·∏ |t_l|^{α_l}: the L¹ norm of the Fourier measure of ∂^α f."""
    if not isinstance(f, TrigSum):
        raise UnsupportedClass("the Wiener seminorm is defined for TrigSum only")
    alpha = np.asarray(_multi_index(f, alpha))
    if len(f) == 0:
        return 0.0
    return float(np.sum(np.abs(f.coeffs) * np.prod(np.abs(f.freqs) ** alpha[None, :], axis=1)))


# ── Sup-norm estimates ───────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class SupNormEstimate:
    grid_max: float
    certified_upper: float
    box: Tuple[Tuple[float, float], ...]
    points_per_axis: int


def _rising(k: np.ndarray, a: np.ndarray) -> np.ndarray:
    """k (k+1) ⋯ (k+a−1) elementwise."""
    out = np.ones(np.broadcast(k, a).shape)
    for step in range(int(np.max(a)) if a.size else 0):
        out = out * np.where(step < a, k + step, 1)
    return out


def _rational_global_bound(f: RationalSum, alpha: np.ndarray, dist: Optional[np.ndarray] = None) -> float:
    """Triangle-inequality bound of sup |∂^α f|, each factor |z − λ_l| ≥ dist[term, l]."""
    if len(f) == 0:
        return 0.0
    k = f.powers
    a = alpha[None, :]
    if dist is None:
        dist = np.repeat(np.abs(f.poles.imag)[:, None], f.n, axis=1)
    mag = _rising(k, a) * dist ** (-(k + a).astype(np.float64))
    mag = np.where(k + a == 0, 1.0, mag)
    return float(np.sum(np.abs(f.coeffs) * np.prod(mag, axis=1)))


def default_box(f: ScalarFunction) -> Tuple[Tuple[float, float], ...]:
    if isinstance(f, RationalSum) and len(f):
        lo = float(np.min(f.poles.real))
        hi = float(np.max(f.poles.real))
        pad = 4.0 * float(np.max(np.abs(f.poles.imag))) + 1.0
        return tuple((lo - pad, hi + pad) for _ in range(f.n))
    return tuple((-1.0, 1.0) for _ in range(f.arity))


def spectral_box(points: np.ndarray, directions: Optional[np.ndarray] = None) -> Tuple[Tuple[float, float], ...]:
    """Eigenvalue range padded by 2·(1 + max|V|)."""
    pts = np.asarray(points, dtype=np.float64)
    vmax = float(np.max(np.abs(directions))) if directions is not None and np.size(directions) else 0.0
    pad = 2.0 * (1.0 + vmax)
    return tuple((float(pts[:, l].min()) - pad, float(pts[:, l].max()) + pad) for l in range(pts.shape[1]))


def _grid_max(g: ScalarFunction, box, p: int) -> Tuple[float, np.ndarray, np.ndarray]:
    axes = [np.linspace(lo, hi, p) for lo, hi in box]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(box))
    vals = np.abs(g.eval(mesh))
    k = int(np.argmax(vals))
    spacing = np.array([(hi - lo) / (p - 1) for lo, hi in box])
    return float(vals[k]), mesh[k], spacing


def sup_norm_partial(f: ScalarFunction, alpha: Sequence[int], box=None) -> SupNormEstimate:
    """Estimate sup_{ℝⁿ} |∂^α f| as (grid maximum, certified upper bound).

    The grid covers ``box`` and is refined twice (4×) around the argmax. For
    TrigSum the certified bound is the Wiener seminorm; for RationalSum it
    is the larger of the grid maximum plus a Lipschitz slack and an analytic
    tail bound outside the box, capped by the term-wise global bound.
    """
    alpha_t = _multi_index(f, alpha)
    alpha_v = np.asarray(alpha_t)
    settings = get_settings()
    box = tuple(tuple(map(float, b)) for b in (box or default_box(f)))
    if len(box) != f.arity or any(hi < lo for lo, hi in box):
        raise InputError("box must give one nonempty interval per coordinate")
    g = derivative(f, alpha_t)
    if len(g) == 0:
        return SupNormEstimate(0.0, 0.0, box, 0)
    p = max(3, min(settings.sup_grid_points, int(settings.sup_grid_budget ** (1.0 / f.arity))))
    grid_max, arg, spacing = _grid_max(g, box, p)
    coarse_spacing = spacing
    for _ in range(2):
        sub = tuple(
            (max(lo, c - 2 * h), min(hi, c + 2 * h)) if h > 0 else (lo, hi)
            for (lo, hi), c, h in zip(box, arg, spacing)
        )
        refined, arg_r, spacing = _grid_max(g, sub, p)
        if refined > grid_max:
            grid_max, arg = refined, arg_r

    if isinstance(f, TrigSum):
        certified = wiener_seminorm(f, alpha_t)
        return SupNormEstimate(grid_max, max(certified, grid_max), box, p)

    global_bound = _rational_global_bound(f, alpha_v)
    slack = 0.0
    for l in range(f.n):
        slack += _rational_global_bound(f, alpha_v + np.asarray(unit(f.n, l))) * coarse_spacing[l] / 2.0
    tails = []
    for l in range(f.n):
        lo, hi = box[l]
        re = f.poles.real
        inside = (re > lo) & (re < hi)
        gap = np.where(inside, np.minimum(re - lo, hi - re), 0.0)
        dist = np.repeat(np.abs(f.poles.imag)[:, None], f.n, axis=1)
        dist[:, l] = np.sqrt(f.poles.imag ** 2 + gap ** 2)
        tails.append(_rational_global_bound(f, alpha_v, dist))
    certified = min(global_bound, max(grid_max + slack, max(tails)))
    return SupNormEstimate(grid_max, max(certified, grid_max), box, p)


# ── Bump synthesis and the weaker-formula estimates ──────────────────────────

@dataclass(frozen=True, eq=False)
class BumpSynthesis:
    function: TrigSum
    error: float
    periods: Tuple[float, ...]
    origin: Tuple[float, ...]


def _uniform_axis(axis) -> Tuple[float, float, int]:
    axis = np.asarray(axis, dtype=np.float64)
    if axis.ndim != 1 or len(axis) < 2:
        raise NonUniformGrid("each axis needs at least two sample points")
    d = np.diff(axis)
    h = float(d.mean())
    if h <= 0 or np.max(np.abs(d - h)) > 1e-9 * abs(h):
        raise NonUniformGrid("sample grid is not uniform")
    return float(axis[0]), h, len(axis)


def synthesize_bump(samples, axes: Sequence, cutoff: int) -> BumpSynthesis:
    """Truncated DFT of periodic samples of a compactly supported function.

    Axis l holds K_l points a_l, a_l + h_l, …; the period is K_l·h_l. Only
    integer wave numbers |k| ≤ (cutoff − 1) // 2 are kept, so each axis gets
    at most ``cutoff`` frequencies.
    """
    samples = np.asarray(samples, dtype=np.complex128)
    geo = [_uniform_axis(a) for a in axes]
    n = len(geo)
    if samples.shape != tuple(K for _, _, K in geo):
        raise InputError(f"samples shape {samples.shape} does not match the axes")
    if cutoff < 1:
        raise InputError("cutoff must be positive")
    periods = tuple(h * K for _, h, K in geo)
    origin = tuple(a for a, _, _ in geo)
    coeffs = np.fft.fftn(samples) / samples.size
    kmax = (cutoff - 1) // 2
    waves = [np.rint(np.fft.fftfreq(K, d=1.0 / K)).astype(int) for _, _, K in geo]
    freqs, cs = [], []
    scale = float(np.max(np.abs(coeffs))) if samples.size else 0.0
    for idx in itertools.product(*[np.nonzero(np.abs(w) <= kmax)[0] for w in waves]):
        c = coeffs[idx]
        if abs(c) <= 1e-14 * scale:
            continue
        t = np.array([2 * np.pi * waves[l][idx[l]] / periods[l] for l in range(n)])
        freqs.append(t)
        cs.append(c * np.exp(-1j * float(t @ np.asarray(origin))))
    f = TrigSum.build(np.array(freqs).reshape(-1, n), np.array(cs, dtype=np.complex128), n)
    mesh = np.stack(np.meshgrid(*[np.asarray(a, dtype=np.float64) for a in axes], indexing="ij"), axis=-1)
    err = float(np.max(np.abs(f.eval(mesh) - samples))) if samples.size else 0.0
    logger.debug(f"bump synthesis: {len(f)} terms, grid error {err:.3e}")
    return BumpSynthesis(f, err, periods, origin)


def raised_cosine_bump(a: float, b: float, n: int, points: int = 64) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Samples of ∏_l cos²(π(λ_l − c)/(b − a)) on the periodic grid of (a, b)ⁿ."""
    axis = a + (b - a) * np.arange(points) / points
    c = 0.5 * (a + b)
    one = np.cos(np.pi * (axis - c) / (b - a)) ** 2
    samples = one
    for _ in range(n - 1):
        samples = np.multiply.outer(samples, one)
    return samples, [axis.copy() for _ in range(n)]


def mixed_partial_domination(f: ScalarFunction, box) -> List[dict]:
    """‖∂^S f‖_∞ ≤ (b − a)^{n−|S|}·‖∂_1⋯∂_n f‖_∞ for every coordinate subset S.

    ``box`` is (a, b) applied to every coordinate; sup norms are grid maxima.
    """
    a, b = map(float, box)
    n = f.arity
    cube = tuple((a, b) for _ in range(n))
    top = sup_norm_partial(f, (1,) * n, cube).grid_max
    rows = []
    for size in range(n + 1):
        for S in itertools.combinations(range(n), size):
            attained = sup_norm_partial(f, unit(n, *S), cube).grid_max
            bound = (b - a) ** (n - size) * top
            rows.append({"subset": list(S), "attained": attained, "bound": bound,
                         "pass": attained <= bound * (1 + 1e-9) + 1e-12})
    return rows


def fourier_l1_estimate(f: TrigSum, periods: Sequence[float]) -> Tuple[float, float]:
    """(Σ|c|, bound) with the periodic form of the Fourier-L¹ estimate.

    Σ|c| ≤ ∏_l (coth(L_l/2)/2)^{1/2} · Σ_S ‖∂^S f‖_{L²(cell)}, L² norms over one
    period cell, exact by Parseval. Requires lattice frequencies 2πk/L_l.
    """
    if not isinstance(f, TrigSum):
        raise UnsupportedClass("the Fourier-L1 estimate is defined for TrigSum only")
    L = np.asarray(periods, dtype=np.float64)
    if len(L) != f.n:
        raise InputError("one period per coordinate is required")
    waves = f.freqs * L[None, :] / (2 * np.pi)
    if len(f) and np.max(np.abs(waves - np.rint(waves))) > 1e-8:
        raise InputError("frequencies are not on the period lattice")
    lhs = float(np.sum(np.abs(f.coeffs)))
    cell = float(np.prod(L))
    total = 0.0
    for size in range(f.n + 1):
        for S in itertools.combinations(range(f.n), size):
            weight = np.prod(f.freqs[:, list(S)] ** 2, axis=1) if S else np.ones(len(f))
            total += math.sqrt(cell * float(np.sum(np.abs(f.coeffs) ** 2 * weight)))
    const = float(np.prod(np.sqrt(1.0 / np.tanh(L / 2.0) / 2.0)))
    return lhs, const * total
