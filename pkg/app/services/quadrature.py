"""Gauss–Legendre rules on intervals, the unit square and the 2-simplex."""

from functools import lru_cache
from typing import Tuple

import numpy as np
from scipy.special import roots_legendre

from app.errors import InputError


@lru_cache(maxsize=64)
def _reference(q: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = roots_legendre(q)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(q: int, a: float = 0.0, b: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the q-point rule on [a, b] (exact to degree 2q − 1)."""
    if q < 1:
        raise InputError("quadrature order must be positive")
    x, w = _reference(int(q))
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def square_rule(q: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Tensor rule on [0,1]²: (u, v, w) flattened."""
    x, w = gauss_legendre(q)
    u, v = np.meshgrid(x, x, indexing="ij")
    return u.ravel(), v.ravel(), np.outer(w, w).ravel()


def triangle_rule(q: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rule for ∫_0^1 ∫_0^s g(s, r) dr ds through the Duffy map r = s·v."""
    x, w = gauss_legendre(q)
    s, v = np.meshgrid(x, x, indexing="ij")
    weights = np.outer(w, w) * s
    return s.ravel(), (s * v).ravel(), weights.ravel()
