"""Vectorized Gauss-Legendre helpers used by the radial and barrier modules."""

from __future__ import annotations

import functools

import numpy as np


@functools.lru_cache(maxsize=32)
def gauss_legendre(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def panel_integrals(f, edges, order: int = 16) -> np.ndarray:
    """Integral of vectorized ``f`` over each panel ``[edges[i], edges[i+1]]``."""
    edges = np.asarray(edges, dtype=float)
    x, w = gauss_legendre(order)
    lo, hi = edges[:-1, None], edges[1:, None]
    half = 0.5 * (hi - lo)
    nodes = lo + half * (x + 1)
    vals = np.asarray(f(nodes), dtype=float).reshape(nodes.shape)
    return (half[:, 0]) * (vals @ w)


def interval_integrals(f, lo, hi, order: int = 16) -> np.ndarray:
    """Integral of ``f`` over ``[lo[i], hi[i]]`` for arrays of endpoints."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    x, w = gauss_legendre(order)
    half = 0.5 * (hi - lo)[:, None]
    nodes = lo[:, None] + half * (x + 1)
    vals = np.asarray(f(nodes), dtype=float).reshape(nodes.shape)
    return half[:, 0] * (vals @ w)


def cumulative(panel_values: np.ndarray) -> np.ndarray:
    """Running sums with a leading zero, so ``out[i]`` integrates up to edge ``i``."""
    return np.concatenate([[0.0], np.cumsum(panel_values)])

