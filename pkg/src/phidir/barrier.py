"""Boundary barriers ``w = g + f(d)`` built from a power-law minorant.

The profile is tabulated in the slope variable ``s = f'``: ``h`` is the
inverse of ``f'`` and is defined by an ODE chosen so that the supersolution
certificate holds with equality.  Distances and heights follow as
``d = h(s)`` and ``f = int_s^beta t |h'(t)| dt``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import _quad
from .errors import DomainError, PhidirError
from .symbol import Minorant

BETA_GUARD = 1e12
STRONG_CONSTANTS = ("certificate", "literal")


@dataclass(frozen=True)
class DomainGeometry:
    """Bounds on the boundary strip ``{d < delta0}`` supplied by the caller."""

    delta0: float
    c1: float
    C_geom: float
    n: int = 2
    mean_convex: bool = False

    def __post_init__(self):
        if not self.delta0 > 0:
            raise DomainError("delta0 must be positive")
        if not self.c1 >= 0:
            raise DomainError("c1 must be non-negative")
        if not self.C_geom > 0:
            raise DomainError("C_geom must be positive")
        if self.n < 2:
            raise DomainError("dimension must be >= 2")


def alpha_of(M: float, delta0: float, c1: float) -> float:
    if not (M > 0 and delta0 > 0 and c1 >= 0):
        raise DomainError("need M > 0, delta0 > 0, c1 >= 0")
    return max(M / delta0, 1.0, 3.0 * c1)


@dataclass
class BarrierProfile:
    regime: str
    minorant: Minorant
    geom: DomainGeometry
    M: float
    alpha: float
    beta: float
    delta: float
    K: float
    s_table: np.ndarray = field(repr=False)
    h_table: np.ndarray = field(repr=False)
    f_table: np.ndarray = field(repr=False)
    strong_constant: str = "certificate"
    order: int = 16

    @property
    def shrink(self) -> float:
        """Argument factor inside the minorant: 2/3 (mild) or 4/3 (strong)."""
        return 2.0 / 3.0 if self.regime == "mild" else 4.0 / 3.0

    def h_prime(self, s):
        s = np.asarray(s, dtype=float)
        return _h_prime(self.regime, self.minorant, self.K, s)

    def h(self, s):
        return _from_table(self, s, lambda t: -self.h_prime(t), self.h_table)

    def f_of_s(self, s):
        return _from_table(self, s, lambda t: -t * self.h_prime(t), self.f_table)

    def slope_at(self, d):
        """``f'(d)``, found by inverting ``h``."""
        d = np.atleast_1d(np.asarray(d, dtype=float))
        _check_d(self, d)
        out = np.empty_like(d)
        for i, di in enumerate(d):
            if di <= 0:
                out[i] = self.beta
            elif di >= self.delta:
                out[i] = self.alpha
            else:
                j = int(np.searchsorted(-self.h_table, -di))  # h_table decreasing
                lo, hi = self.s_table[j - 1], self.s_table[j]
                out[i] = optimize.brentq(lambda s: float(self.h(s)) - di, lo, hi, xtol=1e-15, rtol=1e-15)
        return out

    def metadata(self) -> dict:
        return {
            "regime": self.regime, "alpha": self.alpha, "beta": self.beta, "delta": self.delta, "M": self.M,
            "C_geom": self.geom.C_geom, "minorant": {"c": self.minorant.c, "m": self.minorant.m},
            "strong_constant": self.strong_constant if self.regime == "strong" else None,
        }

    def to_csv(self, path) -> None:
        d = self.h_table[::-1]
        f = self.f_table[::-1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("d", "f"))
            for row in zip(d, f):
                w.writerow([repr(float(v)) for v in row])

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.metadata(), fh, indent=2)


def _h_prime(regime, phi, K, s):
    if regime == "mild":
        return -K * phi(2.0 * s / 3.0) / s**3
    return -K * phi(4.0 * s / 3.0) / s**2


def _check_d(prof, d):
    if np.any(d < 0) or np.any(d > prof.delta * (1 + 1e-14)):
        raise DomainError(f"d outside [0, {prof.delta}]")


def _from_table(prof, s, integrand, table):
    """Integral ``int_s^beta integrand`` using the tabulated value at the next node."""
    s_arr = np.asarray(s, dtype=float)
    flat = s_arr.ravel()
    if np.any(flat < prof.alpha * (1 - 1e-14)) or np.any(flat > prof.beta * (1 + 1e-14)):
        raise DomainError(f"s outside [{prof.alpha}, {prof.beta}]")
    flat = np.clip(flat, prof.alpha, prof.beta)
    j = np.clip(np.searchsorted(prof.s_table, flat, side="left"), 0, prof.s_table.size - 1)
    out = table[j] + _quad.interval_integrals(integrand, flat, prof.s_table[j], prof.order)
    out = out.reshape(s_arr.shape)
    return float(out) if out.ndim == 0 else out


def _edges(alpha, beta, per_octave=4):
    panels = max(8, int(math.ceil(per_octave * math.log2(beta / alpha))))
    return np.geomspace(alpha, beta, panels + 1)


def _height(regime, phi, K, alpha, beta, order=16):
    if beta <= alpha:
        return 0.0
    return float(np.sum(_quad.panel_integrals(lambda t: -t * _h_prime(regime, phi, K, t), _edges(alpha, beta), order)))


def build_profile(
    regime: str,
    minorant: Minorant,
    geom: DomainGeometry,
    M: float,
    *,
    strong_constant: str = "certificate",
    n_table: int = 257,
) -> BarrierProfile:
    """Solve for ``beta`` with ``f(delta) = M`` and tabulate the profile.

    ``strong_constant`` selects the strong-regime multiplier: ``"certificate"``
    uses ``1/C`` (equality in the supersolution certificate), ``"literal"``
    uses ``C``.
    """
    if regime not in ("mild", "strong"):
        raise DomainError(f"unknown regime {regime!r}")
    if strong_constant not in STRONG_CONSTANTS:
        raise DomainError(f"strong_constant must be one of {STRONG_CONSTANTS}")
    if not minorant.c > 0:
        raise DomainError("minorant coefficient must be positive")
    C = geom.C_geom
    if regime == "mild":
        if minorant.m < 1:
            raise PhidirError(f"int^inf phi(t)/t^2 dt converges for m = {minorant.m:g} < 1; mild barrier needs divergence")
        K = 1.0 / C
    else:
        if minorant.m < 0:
            raise PhidirError(f"int^inf phi(t)/t dt converges for m = {minorant.m:g} < 0; strong barrier needs divergence")
        if not geom.mean_convex:
            raise PhidirError("strong-decay barrier requires a mean convex boundary strip")
        K = 1.0 / C if strong_constant == "certificate" else C
    alpha = alpha_of(M, geom.delta0, geom.c1)

    def excess(beta):
        return _height(regime, minorant, K, alpha, beta) - M

    hi = 2.0 * alpha
    while excess(hi) < 0:
        hi *= 2.0
        if hi > BETA_GUARD:
            raise PhidirError(f"beta search exceeded {BETA_GUARD:g}")
    lo = hi / 2.0 if hi > 2.0 * alpha else alpha
    beta = optimize.brentq(excess, lo, hi, xtol=1e-15 * hi, rtol=4 * np.finfo(float).eps, maxiter=500)

    s_table = np.geomspace(alpha, beta, n_table)
    s_table[0], s_table[-1] = alpha, beta
    h_pieces = _quad.panel_integrals(lambda t: -_h_prime(regime, minorant, K, t), s_table)
    f_pieces = _quad.panel_integrals(lambda t: -t * _h_prime(regime, minorant, K, t), s_table)
    h_table = np.concatenate([np.cumsum(h_pieces[::-1])[::-1], [0.0]])
    f_table = np.concatenate([np.cumsum(f_pieces[::-1])[::-1], [0.0]])
    delta = float(h_table[0])
    if not (delta <= M / alpha * (1 + 1e-12) and M / alpha <= geom.delta0 * (1 + 1e-12)):
        raise PhidirError(f"width chain delta={delta:g} <= M/alpha={M / alpha:g} <= delta0={geom.delta0:g} fails")
    return BarrierProfile(regime, minorant, geom, float(M), float(alpha), float(beta), delta, K,
                          s_table, h_table, f_table, strong_constant)


def eval_profile(prof: BarrierProfile, d, lower: bool = False):
    """``f(d)`` on ``[0, delta]``; ``lower=True`` gives the sub-barrier ``-f(d)``."""
    d_arr = np.asarray(d, dtype=float)
    flat = np.atleast_1d(d_arr).ravel()
    _check_d(prof, flat)
    out = np.where(flat <= 0, 0.0, np.nan)
    mid = flat > 0
    if np.any(mid):
        s = prof.slope_at(flat[mid])
        vals = np.atleast_1d(prof.f_of_s(s))
        vals = np.where(flat[mid] >= prof.delta, prof.f_table[0], vals)
        out[mid] = vals
    if lower:
        out = -out
    out = out.reshape(d_arr.shape)
    return float(out) if out.ndim == 0 else out


def profile_residual(prof: BarrierProfile, s_samples, *, f2_scale: float = 1.0):
    """Certificate right-hand side at slopes ``s = f'``; non-positive means supersolution.

    ``f2_scale`` multiplies ``f''`` to probe perturbed profiles.
    """
    s = np.asarray(s_samples, dtype=float)
    if np.any(s < prof.alpha * (1 - 1e-12)) or np.any(s > prof.beta * (1 + 1e-12)):
        raise DomainError(f"samples outside [{prof.alpha}, {prof.beta}]")
    f2 = f2_scale / prof.h_prime(s)
    C = prof.geom.C_geom
    phi = prof.minorant
    if prof.regime == "mild":
        return C + f2 * phi(2.0 * s / 3.0) / s**3
    return C + f2 * phi(4.0 * s / 3.0) / s**2
