"""Radial solutions on warped products and the barrier at infinity.

On ``dr^2 + psi(r)^2 dsigma^2`` a radial solution obeys the first integral
``psi^{n-1} a(|u'|) = |c|``, so ``u`` is recovered by quadrature of
``a^{-1}(|c| / psi^{n-1})`` once the flux constant ``c`` matches the boundary
gap.  These tables are the reference oracle for the 2D solver.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from . import _quad
from .errors import DomainError, NoRadialSolution, PhidirError, SymbolError
from .symbol import SymbolSpec, inverse_a

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WarpedProduct:
    """Rotationally symmetric metric ``dr^2 + psi(r)^2 dsigma^2`` of dimension ``n``."""

    n: int = 2
    kind: str = "euclidean"
    k: float = 1.0
    r_min: float = 1.0
    r_max: float = 2.0
    warp: Callable | None = field(default=None, compare=False)
    warp_prime: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.n < 2:
            raise DomainError("dimension n must be >= 2")
        if self.kind not in ("euclidean", "hyperbolic", "custom"):
            raise DomainError(f"unknown warp kind {self.kind!r}")
        if self.kind == "custom" and (self.warp is None or self.warp_prime is None):
            raise DomainError("custom warp needs psi and psi'")
        if self.kind == "hyperbolic" and not self.k > 0:
            raise DomainError("hyperbolic warp needs k > 0")
        if not (0 <= self.r_min < self.r_max):
            raise DomainError("need 0 <= r_min < r_max")

    def psi(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "euclidean":
            return r
        if self.kind == "hyperbolic":
            return np.sinh(self.k * r) / self.k
        return np.asarray(self.warp(r), dtype=float)

    def psi_prime(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "euclidean":
            return np.ones_like(r)
        if self.kind == "hyperbolic":
            return np.cosh(self.k * r)
        return np.asarray(self.warp_prime(r), dtype=float)

    def weight(self, r):
        """``psi(r)^{-(n-1)}``, the factor turning flux into ``a(|u'|)``."""
        return self.psi(r) ** (1 - self.n)

    def to_json(self) -> dict:
        return {"n": self.n, "kind": self.kind, "k": self.k, "r_min": self.r_min, "r_max": self.r_max}


@dataclass
class RadialSolution:
    spec: SymbolSpec
    manifold: WarpedProduct
    flux_c: float
    r_table: np.ndarray
    u_table: np.ndarray
    boundary: tuple
    tol: float
    order: int = 16
    gap_residual: float = 0.0

    @property
    def sign(self) -> float:
        return math.copysign(1.0, self.flux_c) if self.flux_c else 0.0

    def slope(self, r):
        """``|u'(r)|`` from the first integral."""
        r = np.asarray(r, dtype=float)
        return inverse_a(self.spec, abs(self.flux_c) * self.manifold.weight(r))

    def __call__(self, r):
        return evaluate_radial(self, r)

    def flux_residual(self) -> float:
        """Max deviation of ``psi^{n-1} a(|u'|)`` from ``|c|`` over the table nodes."""
        if self.flux_c == 0:
            return 0.0
        r = self.r_table
        flux = self.manifold.psi(r) ** (self.manifold.n - 1) * self.spec.a(self.slope(r))
        return float(np.max(np.abs(flux - abs(self.flux_c))))

    def metadata(self) -> dict:
        return {
            "flux_c": self.flux_c, "boundary": list(self.boundary), "tolerance": self.tol,
            "gap_residual": self.gap_residual, "nodes": int(self.r_table.size),
            "manifold": self.manifold.to_json(), "symbol": self.spec.to_json(),
        }

    def to_csv(self, path) -> None:
        _write_columns(path, ("r", "u"), (self.r_table, self.u_table))


def _write_columns(path, names, cols) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in zip(*cols):
            writer.writerow([repr(float(v)) for v in row])


def _gap(spec, manifold, c, edges, order):
    """Panel integrals of ``a^{-1}(c psi^{1-n})``."""
    return _quad.panel_integrals(lambda r: inverse_a(spec, c * manifold.weight(r)), edges, order)


def solve_radial(
    spec: SymbolSpec,
    manifold: WarpedProduct,
    u_at_rmin: float,
    u_at_rmax: float,
    *,
    tol: float = 1e-10,
    panels: int = 32,
    order: int = 16,
    max_panels: int = 8192,
) -> RadialSolution:
    """Find the flux constant matching the boundary gap and tabulate ``u``.

    Raises :class:`NoRadialSolution` when the gap exceeds what any flux below
    ``sup a * psi(r_min)^{n-1}`` can produce (minimal-surface saturation).
    """
    r0, r1 = manifold.r_min, manifold.r_max
    gap = float(u_at_rmax) - float(u_at_rmin)
    target = abs(gap)
    if target == 0.0:
        edges = np.linspace(r0, r1, panels + 1)
        return RadialSolution(spec, manifold, 0.0, edges, np.full(edges.size, float(u_at_rmin)),
                              (float(u_at_rmin), float(u_at_rmax)), tol, order)
    if r0 <= 0 and manifold.kind != "custom":
        raise DomainError("non-constant radial data needs r_min > 0")

    probe = np.linspace(r0, r1, 257)
    w_max = float(np.max(manifold.weight(probe)))
    if math.isfinite(spec.sup_a):
        c_cap = spec.sup_a / w_max
    else:
        c_cap = math.inf

    n_panels = panels
    while True:
        edges = np.linspace(r0, r1, n_panels + 1)

        def total(c, edges=edges):
            return float(np.sum(_gap(spec, manifold, c, edges, order)))

        if math.isfinite(c_cap):
            c_hi = c_cap * (1 - 1e-12)
            if total(c_hi) < target:
                raise NoRadialSolution(
                    f"boundary gap {target:g} exceeds the largest radial rise {total(c_hi):g} "
                    f"(flux saturates at sup a = {spec.sup_a:g})"
                )
        else:
            c_hi = 1.0
            while total(c_hi) < target:
                c_hi *= 2.0
                if c_hi > 1e300:
                    raise NoRadialSolution("no flux bracket found")
        c = optimize.brentq(lambda cc: total(cc) - target, 0.0, c_hi, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                            maxiter=500)
        coarse = total(c)
        fine_edges = np.linspace(r0, r1, 2 * n_panels + 1)
        fine = float(np.sum(_gap(spec, manifold, c, fine_edges, order)))
        if abs(fine - coarse) <= 0.1 * tol or 2 * n_panels > max_panels:
            break
        n_panels *= 2
        logger.debug("radial quadrature refined to %d panels", n_panels)

    pieces = _gap(spec, manifold, c, edges, order)
    sign = math.copysign(1.0, gap)
    u = float(u_at_rmin) + sign * _quad.cumulative(pieces)
    residual = abs(abs(u[-1] - u[0]) - target)
    if residual > tol:
        raise PhidirError(f"boundary match residual {residual:g} exceeds tolerance {tol:g}")
    u[-1] = float(u_at_rmax)
    return RadialSolution(spec, manifold, sign * c, edges, u, (float(u_at_rmin), float(u_at_rmax)), tol,
                          order, gap_residual=residual)


def evaluate_radial(sol: RadialSolution, r):
    """``u(r)`` by quadrature from the nearest table node on the left; endpoints exact."""
    r_arr = np.asarray(r, dtype=float)
    r0, r1 = sol.manifold.r_min, sol.manifold.r_max
    span = r1 - r0
    if np.any(r_arr < r0 - 1e-12 * span) or np.any(r_arr > r1 + 1e-12 * span):
        raise DomainError(f"r outside [{r0}, {r1}]")
    flat = np.clip(r_arr.ravel(), r0, r1)
    if sol.flux_c == 0:
        out = np.full(flat.shape, sol.boundary[0])
    else:
        edges = sol.r_table
        k = np.clip(np.searchsorted(edges, flat, side="right") - 1, 0, edges.size - 2)
        c = abs(sol.flux_c)
        part = _quad.interval_integrals(lambda x: inverse_a(sol.spec, c * sol.manifold.weight(x)),
                                        edges[k], flat, sol.order)
        out = sol.u_table[k] + sol.sign * part
        out = np.where(flat == r0, sol.boundary[0], out)
        out = np.where(flat == r1, sol.boundary[1], out)
    out = out.reshape(r_arr.shape)
    return float(out) if out.ndim == 0 else out


def boundary_gap_map(spec: SymbolSpec, manifold: WarpedProduct, c, panels: int = 64, order: int = 16):
    """Rise ``c -> int a^{-1}(c psi^{1-n}) dr`` over the manifold's radial interval."""
    edges = np.linspace(manifold.r_min, manifold.r_max, panels + 1)
    return np.array([np.sum(_gap(spec, manifold, float(ci), edges, order)) for ci in np.atleast_1d(c)])


# --------------------------------------------------------------------------- barrier at infinity


def _sech_pow(x, m):
    x = np.asarray(x, dtype=float)
    e = np.exp(-x)
    return (2 * e / (1 + e * e)) ** m


@dataclass
class AsymptoticBarrier:
    """Profile ``g(s) = int_s^inf a^{-1}(c cosh^{1-n}(k t)) dt`` and its calibration."""

    spec: SymbolSpec
    n: int
    k: float
    height_C: float
    delta_small: float
    calib_c: float
    nominal_c: float
    tau: float
    g0: float
    s_table: np.ndarray
    g_table: np.ndarray
    method: str = "adaptive"
    order: int = 16

    def target(self, s):
        """``c cosh^{1-n}(k s)``, the prescribed value of ``a(|g'|)``."""
        return self.calib_c * _sech_pow(self.k * np.asarray(s, dtype=float), self.n - 1)

    def slope(self, s):
        """``|g'(s)|``."""
        return inverse_a(self.spec, self.target(s))

    def g(self, s):
        s_arr = np.asarray(s, dtype=float)
        if np.any(s_arr < self.s_table[0]) or np.any(~np.isfinite(s_arr)):
            raise DomainError(f"g is tabulated from s={self.s_table[0]}")
        flat = s_arr.ravel()
        out = np.zeros_like(flat)
        if self.calib_c > 0:
            inside = flat <= self.s_table[-1]
            if np.any(inside):
                x = flat[inside]
                j = np.clip(np.searchsorted(self.s_table, x, side="left"), 1, self.s_table.size - 1)
                part = _quad.interval_integrals(self.slope, x, self.s_table[j], self.order)
                out[inside] = self.g_table[j] + part
            for i in np.flatnonzero(~inside):
                out[i] = _tail_integral(self, flat[i])
        out = out.reshape(s_arr.shape)
        return float(out) if out.ndim == 0 else out

    def w(self, s):
        """Upper barrier value ``min(g(s), C)``."""
        return np.minimum(self.g(s), self.height_C)

    def tail_bound(self, s):
        """Explicit upper bound for ``g`` from the growth bound ``a^{-1}(t) <= t^{1/q}``."""
        s = np.asarray(s, dtype=float)
        q = self.spec.q
        m = self.n - 1
        head = inverse_a(self.spec, self.calib_c) * np.maximum(self.tau - s, 0.0)
        tail = (2.0**m * self.calib_c) ** (1 / q) * q / (m * self.k) * np.exp(-m * self.k * np.maximum(s, self.tau) / q)
        return head + tail

    def metadata(self) -> dict:
        return {
            "calib_c": self.calib_c, "nominal_c": self.nominal_c, "tau": self.tau, "g0": self.g0,
            "height_C": self.height_C, "delta_small": self.delta_small, "n": self.n, "k": self.k,
            "method": self.method, "symbol": self.spec.to_json(),
        }

    def to_csv(self, path) -> None:
        _write_columns(path, ("s", "g"), (self.s_table, self.g_table))


def _integrand(spec, c, n, k):
    return lambda t: inverse_a(spec, c * _sech_pow(k * np.asarray(t, dtype=float), n - 1))


def _tail_fixed(spec, c, n, k, start, order=32):
    """``int_start^inf`` on uniform panels cut where the exponential envelope drops below 1e-18."""
    f = _integrand(spec, c, n, k)
    m, q = n - 1, spec.q
    rate = m * k / q
    scale = (2.0**m * c) ** (1 / q) / rate
    if scale <= 0:
        return 0.0
    stop = max(math.log(scale / 1e-18) / rate, start + 1.0 / rate)
    width = 0.5 / max(k, rate)
    panels = max(1, int(math.ceil((stop - start) / width)))
    return float(np.sum(_quad.panel_integrals(f, np.linspace(start, stop, panels + 1), order)))


def _tail_adaptive(spec, c, n, k, start):
    f = _integrand(spec, c, n, k)
    val, _ = integrate.quad(lambda t: float(f(t)), start, np.inf, epsabs=1e-14, epsrel=1e-12, limit=400)
    return val


def _tail_integral(bar: AsymptoticBarrier, start: float) -> float:
    if bar.method == "fixed":
        return _tail_fixed(bar.spec, bar.calib_c, bar.n, bar.k, start)
    return _tail_adaptive(bar.spec, bar.calib_c, bar.n, bar.k, start)


def _g_table(spec, c, n, k, s_table, method, order=16):
    f = _integrand(spec, c, n, k)
    if method == "fixed":
        pieces = _quad.panel_integrals(f, s_table, 2 * order)
        tail = _tail_fixed(spec, c, n, k, s_table[-1])
    elif method == "adaptive":
        pieces = np.array([
            integrate.quad(lambda t: float(f(t)), lo, hi, epsabs=1e-15, epsrel=1e-13, limit=200)[0]
            for lo, hi in zip(s_table[:-1], s_table[1:])
        ])
        tail = _tail_adaptive(spec, c, n, k, s_table[-1])
    else:
        raise ValueError(f"unknown quadrature method {method!r}")
    return tail + np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]])


def _check_growth(spec: SymbolSpec, delta: float) -> None:
    s = np.linspace(0.0, delta, 513)[1:]
    if np.any(spec.a(s) < s**spec.q * (1 - 1e-12)):
        raise SymbolError(f"growth bound a(s) >= s^{spec.q:g} fails on [0, {delta:g}]; tail may diverge")


def asymptotic_barrier(
    spec: SymbolSpec,
    n: int,
    k: float,
    height_C: float,
    delta_small: float | None = None,
    *,
    s_max: float | None = None,
    n_table: int = 65,
    method: str = "adaptive",
    s_floor: float = 0.0,
) -> AsymptoticBarrier:
    """Barrier at infinity on a model space of curvature ``-k^2``.

    The flux constant starts from ``a(2C) / cosh^{n-1}(k)`` and is raised by
    root-finding when that value leaves ``g(0) < 2C``; both are recorded.
    """
    if n < 2 or not k > 0:
        raise DomainError("need n >= 2 and k > 0")
    if height_C < 0:
        raise DomainError("height must be non-negative")
    delta = spec.delta_growth if delta_small is None else float(delta_small)
    if not delta > 0:
        raise DomainError("delta_small must be positive")
    _check_growth(spec, delta)
    if s_max is None:
        s_max = 40.0 / ((n - 1) * k)
    s_table = np.linspace(s_floor, s_max, n_table)

    if height_C == 0:
        zeros = np.zeros_like(s_table)
        return AsymptoticBarrier(spec, n, k, 0.0, delta, 0.0, 0.0, 0.0, 0.0, s_table, zeros, method)

    two_C = 2.0 * height_C
    nominal_c = float(spec.a(two_C)) / math.cosh(k) ** (n - 1)

    def g0(c):
        return _tail_fixed(spec, c, n, k, 0.0)

    c = nominal_c
    if g0(c) < two_C:
        if math.isfinite(spec.sup_a):
            c_hi = spec.sup_a * (1 - 1e-12)
            if g0(c_hi) < two_C:
                raise PhidirError(f"no flux constant below sup a reaches g(0) >= {two_C:g}")
        else:
            c_hi = 2 * c
            while g0(c_hi) < two_C:
                c_hi *= 2
        c = optimize.brentq(lambda cc: g0(cc) - two_C, nominal_c, c_hi, xtol=1e-15, rtol=1e-14)
        # a hair above the root so that g(0) >= 2C survives quadrature rounding
        c = min(c * (1 + 1e-10), c_hi)
    if spec.a(delta) >= c:
        delta = inverse_a(spec, 0.5 * c)
    tau = math.acosh((c / float(spec.a(delta))) ** (1.0 / (n - 1))) / k

    g_table = _g_table(spec, c, n, k, s_table, method)
    g_zero = float(g_table[0]) if s_floor == 0 else g0(c)
    return AsymptoticBarrier(spec, n, k, float(height_C), float(delta), float(c), nominal_c, float(tau), g_zero,
                             s_table, g_table, method)


def asymptotic_residual(bar: AsymptoticBarrier, s_samples, laplacian=None, return_terms: bool = False):
    """``Q[v]`` for ``v = g(s)`` with ``Delta s`` replaced by a lower bound.

    ``Q[v] = -d/ds a(|g'|) - a(|g'|) Delta s``; the default bound for
    ``Delta s`` is ``(n-1) k tanh(k s)``.  Non-positive values certify a
    supersolution.
    """
    s = np.asarray(s_samples, dtype=float)
    if np.any(s <= 0):
        raise DomainError("residual samples must be positive")
    if bar.calib_c == 0:
        zero = np.zeros_like(s)
        return (zero, zero, zero) if return_terms else zero
    spec, n, k = bar.spec, bar.n, bar.k
    slope = bar.slope(s)
    flux = spec.a(slope)
    # d/ds of the target c cosh^{1-n}(ks), pulled back through a'(slope) and pushed forward again
    d_target = -(n - 1) * k * np.tanh(k * s) * bar.target(s)
    d_slope = d_target / spec.da(slope)
    d_flux = spec.da(slope) * d_slope
    lap = (n - 1) * k * np.tanh(k * s) if laplacian is None else np.asarray(laplacian(s), dtype=float)
    first = -d_flux
    second = -flux * lap
    res = first + second
    return (res, first, second) if return_terms else res
