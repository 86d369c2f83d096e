"""Numerical checks of comparison and maximum principles, flux monotonicity and the flat Bochner identity."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .errors import DomainError, PreconditionError
from .grid2d import Grid, Solution2D
from .radial import RadialSolution, evaluate_radial
from .symbol import SymbolSpec


@dataclass
class CheckReport:
    name: str
    passed: bool
    worst_violation: float
    location: object
    tolerance_used: float
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        loc = self.location
        if isinstance(loc, tuple):
            loc = [int(v) for v in loc]
        elif isinstance(loc, (np.integer, int)):
            loc = int(loc)
        return {"name": self.name, "passed": bool(self.passed), "worst_violation": float(self.worst_violation),
                "location": loc, "tolerance_used": float(self.tolerance_used), "details": self.details}


def _report(name, violation, location, tol, **details) -> CheckReport:
    return CheckReport(name, bool(violation <= tol), float(violation), location, float(tol), details)


def default_tolerance(grid: Grid) -> float:
    """``1e-6 + 10 h^2``: the principles are exact only in the continuum limit."""
    return 1e-6 + 10.0 * grid.h**2


def _field(x):
    return x.u if isinstance(x, Solution2D) else np.asarray(x, dtype=float)


def comparison_check(u, v, grid: Grid, tol: float | None = None) -> CheckReport:
    """``u <= v`` inside whenever ``u <= v`` on the boundary."""
    U, V = _field(u), _field(v)
    tol = default_tolerance(grid) if tol is None else tol
    mask = grid.boundary_mask()
    if np.any(U[mask] > V[mask]):
        raise PreconditionError("comparison check needs boundary data g_u <= g_v")
    diff = np.where(mask, -np.inf, U - V)
    loc = np.unravel_index(int(np.argmax(diff)), diff.shape)
    return _report("comparison", max(float(diff[loc]), 0.0), loc, tol)


def max_principle_check(u, v, grid: Grid, tol: float | None = None) -> CheckReport:
    """``max |u - v|`` over the grid equals its boundary maximum."""
    U, V = _field(u), _field(v)
    tol = default_tolerance(grid) if tol is None else tol
    mask = grid.boundary_mask()
    d = np.abs(U - V)
    loc = np.unravel_index(int(np.argmax(d)), d.shape)
    gap = float(d[loc] - np.max(d[mask]))
    return _report("max_principle", abs(gap), loc, tol, boundary_max=float(np.max(d[mask])))


def monotonicity_check(spec: SymbolSpec, s, t, tol: float = 0.0) -> CheckReport:
    """``(a(s) - a(t))(s - t) >= 0`` on every sampled pair."""
    s = np.asarray(s, dtype=float).ravel()
    t = np.asarray(t, dtype=float).ravel()
    if s.shape != t.shape:
        raise DomainError("sample arrays must match")
    if np.any(s < 0) or np.any(t < 0):
        raise DomainError("samples must be non-negative")
    val = (spec.a(s) - spec.a(t)) * (s - t)
    i = int(np.argmin(val))
    distinct = s != t
    strict = int(np.count_nonzero(val[distinct] > 0))
    return _report("monotone_flux", float(-val[i]), i, tol, pairs=int(s.size), strictly_positive=strict,
                   distinct=int(np.count_nonzero(distinct)))


# --------------------------------------------------------------------------- Bochner identity


def _d(c, axis):
    return np.polynomial.polynomial.polyder(c, axis=axis)


def _pad_add(*arrs):
    shape = tuple(max(a.shape[k] for a in arrs) for k in range(2))
    out = np.zeros(shape)
    for a in arrs:
        out[: a.shape[0], : a.shape[1]] += a
    return out


def _mul(a, b):
    return signal.convolve2d(a, b)


def bochner_terms(coeffs, x, y):
    """``(<grad Lap u, grad u>, 1/2 Lap |grad u|^2, |Hess u|^2)`` for ``u = sum c[i,j] x^i y^j``.

    The middle term is computed from the product polynomial ``|grad u|^2``, not
    from the identity itself.
    """
    c = np.atleast_2d(np.asarray(coeffs, dtype=float))
    P = np.polynomial.polynomial
    ux, uy = _d(c, 0), _d(c, 1)
    uxx, uyy, uxy = _d(ux, 0), _d(uy, 1), _d(ux, 1)
    lap = _pad_add(uxx, uyy)
    first = P.polyval2d(x, y, _d(lap, 0)) * P.polyval2d(x, y, ux) + P.polyval2d(x, y, _d(lap, 1)) * P.polyval2d(x, y, uy)
    grad2 = _pad_add(_mul(ux, ux), _mul(uy, uy))
    half_lap = 0.5 * P.polyval2d(x, y, _pad_add(_d(_d(grad2, 0), 0), _d(_d(grad2, 1), 1)))
    hess2 = P.polyval2d(x, y, uxx) ** 2 + 2 * P.polyval2d(x, y, uxy) ** 2 + P.polyval2d(x, y, uyy) ** 2
    return first, half_lap, hess2


def bochner_residual(coeffs, grid: Grid, tol: float = 1e-10) -> CheckReport:
    """Flat-space Bochner identity at every grid node for a polynomial of degree <= 3."""
    if grid.chart != "cartesian_rectangle":
        raise DomainError("Bochner check needs a flat metric; curvature terms are not represented")
    c = np.atleast_2d(np.asarray(coeffs, dtype=float))
    deg = max(i + j for i in range(c.shape[0]) for j in range(c.shape[1]) if c[i, j] != 0) if np.any(c) else 0
    if deg > 3:
        raise DomainError("polynomial degree must be <= 3")
    X, Y = grid.mesh()
    t1, t2, t3 = bochner_terms(c, X, Y)
    res = np.abs(t1 - t2 + t3)
    loc = np.unravel_index(int(np.argmax(res)), res.shape)
    return _report("bochner", float(res[loc]), loc, tol, degree=int(deg))


# --------------------------------------------------------------------------- oracle comparison


def oracle_compare(sol2d: Solution2D, radial: RadialSolution, norm: str = "inf",
                   tol: float | None = None) -> CheckReport:
    grid = sol2d.grid
    if grid.chart != "polar_annulus":
        raise DomainError("radial comparison needs a polar annulus grid")
    m = radial.manifold
    if not (np.isclose(grid.x_range[0], m.r_min) and np.isclose(grid.x_range[1], m.r_max)):
        raise DomainError("grid and radial solution cover different radial intervals")
    ref = np.asarray(evaluate_radial(radial, np.clip(grid.x, m.r_min, m.r_max)))[:, None]
    diff = sol2d.u - ref
    tol = default_tolerance(grid) if tol is None else tol
    if norm == "inf":
        a = np.abs(diff)
        loc = np.unravel_index(int(np.argmax(a)), a.shape)
        err = float(a[loc])
    elif norm == "l2":
        w = np.broadcast_to(grid.sqrt_g(grid.x)[:, None], diff.shape)
        err = float(np.sqrt(np.sum(w * diff**2) / np.sum(w)))
        loc = None
    else:
        raise DomainError(f"unknown norm {norm!r}")
    return _report(f"oracle_{norm}", err, loc, tol, h=grid.h)


def summarize(reports) -> dict:
    items = [r.to_json() for r in reports]
    return {"passed": all(r["passed"] for r in items), "count": len(items),
            "failed": [r["name"] for r in items if not r["passed"]], "reports": items}


def write_summary(reports, path) -> dict:
    doc = summarize(reports)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
    return doc
