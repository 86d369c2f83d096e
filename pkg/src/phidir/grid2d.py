"""Frozen-coefficient (Kacanov) solver for the regularized Dirichlet problem on 2D grids.

The operator ``div(a_k(|grad u|)/|grad u| grad u)`` is discretized in flux form
on a structured node grid whose metric is diagonal and depends only on the
first coordinate.  Face coefficients ``sqrt(g) g^{ii} A_k(|grad u|)`` are frozen
at the previous iterate, so every linear solve is symmetric positive definite.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .errors import ConvergenceError, DomainError, EllipticityError
from .radial import WarpedProduct
from .symbol import SymbolSpec

logger = logging.getLogger(__name__)

KAPPA_MIN = 1e-6
CHARTS = ("cartesian_rectangle", "polar_annulus")


@dataclass(frozen=True)
class Grid:
    """Node grid; ``dims`` counts interior nodes per direction.

    For ``polar_annulus`` the first coordinate is ``r`` and the second ``theta``;
    a full turn makes ``theta`` periodic, with ``dims[1]`` nodes around.
    """

    chart: str
    dims: tuple
    x_range: tuple
    y_range: tuple
    warp: WarpedProduct | None = None

    def __post_init__(self):
        if self.chart not in CHARTS:
            raise DomainError(f"unknown chart {self.chart!r}")
        if len(self.dims) != 2 or min(self.dims) < 3:
            raise DomainError("dims must be two integers >= 3")
        if not (self.x_range[0] < self.x_range[1] and self.y_range[0] < self.y_range[1]):
            raise DomainError("coordinate ranges must be increasing")
        if self.chart == "polar_annulus" and self.x_range[0] <= 0:
            raise DomainError("annulus needs r_min > 0")
        if self.chart == "polar_annulus" and self.warp is None:
            object.__setattr__(self, "warp", WarpedProduct(2, "euclidean", r_min=self.x_range[0], r_max=self.x_range[1]))
        if np.any(self.sqrt_g(self.x) <= 0):
            raise DomainError("metric entries must be positive")

    @property
    def periodic(self) -> bool:
        return self.chart == "polar_annulus" and math.isclose(self.y_range[1] - self.y_range[0], 2 * math.pi)

    @property
    def shape(self) -> tuple:
        nx = self.dims[0] + 2
        ny = self.dims[1] if self.periodic else self.dims[1] + 2
        return nx, ny

    @property
    def hx(self) -> float:
        return (self.x_range[1] - self.x_range[0]) / (self.shape[0] - 1)

    @property
    def hy(self) -> float:
        span = self.y_range[1] - self.y_range[0]
        return span / self.shape[1] if self.periodic else span / (self.shape[1] - 1)

    @property
    def h(self) -> float:
        """Mesh size in arc length (largest step)."""
        scale = float(np.max(self.sqrt_g(self.x))) if self.chart == "polar_annulus" else 1.0
        return max(self.hx, self.hy * scale)

    @property
    def x(self) -> np.ndarray:
        return self.x_range[0] + self.hx * np.arange(self.shape[0])

    @property
    def y(self) -> np.ndarray:
        return self.y_range[0] + self.hy * np.arange(self.shape[1])

    def mesh(self):
        return np.meshgrid(self.x, self.y, indexing="ij")

    def sqrt_g(self, x):
        x = np.asarray(x, dtype=float)
        return self.warp.psi(x) if self.chart == "polar_annulus" else np.ones_like(x)

    def g22_inv(self, x):
        """``g^{22}``; ``g_{11} = 1`` for both charts."""
        x = np.asarray(x, dtype=float)
        return self.warp.psi(x) ** -2 if self.chart == "polar_annulus" else np.ones_like(x)

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[0, :] = mask[-1, :] = True
        if not self.periodic:
            mask[:, 0] = mask[:, -1] = True
        return mask

    def cartesian(self):
        """Node positions in the plane (for exports)."""
        X, Y = self.mesh()
        if self.chart == "polar_annulus":
            return X * np.cos(Y), X * np.sin(Y)
        return X, Y


@dataclass
class PicardParams:
    """``damping="auto"`` uses ``theta = 1/max(1, sup 1+b_k)`` over the current face gradients."""

    max_iters: int = 200
    damping: float | str = "auto"
    tol_update: float = 1e-12
    tol_residual: float | None = None
    cg_rtol: float = 1e-10
    patience: int = 10
    min_damping: float = 1.0 / 64

    def __post_init__(self):
        if self.damping != "auto" and not (isinstance(self.damping, (int, float)) and 0 < self.damping <= 1):
            raise DomainError("damping must lie in (0, 1] or be 'auto'")
        if self.max_iters < 1:
            raise DomainError("max_iters must be >= 1")


@dataclass
class Problem2D:
    spec: SymbolSpec
    grid: Grid
    boundary_data: Callable | np.ndarray
    kappa_schedule: list = field(default_factory=lambda: [1.0])
    picard: PicardParams = field(default_factory=PicardParams)
    kappa_min: float = KAPPA_MIN
    growth_limit: float = 10.0

    def __post_init__(self):
        ks = [float(k) for k in self.kappa_schedule]
        if not ks:
            raise DomainError("kappa schedule is empty")
        if any(k <= 0 for k in ks) or any(k < self.kappa_min for k in ks):
            raise DomainError(f"kappa values must be >= kappa_min = {self.kappa_min:g} > 0")
        if any(b >= a for a, b in zip(ks, ks[1:])):
            raise DomainError("kappa schedule must be strictly decreasing")
        self.kappa_schedule = ks

    def boundary_values(self) -> np.ndarray:
        """Full nodal array carrying the data on boundary nodes (interior entries unspecified)."""
        if callable(self.boundary_data):
            X, Y = self.grid.mesh()
            vals = np.broadcast_to(np.asarray(self.boundary_data(X, Y), dtype=float), X.shape).copy()
        else:
            vals = np.array(self.boundary_data, dtype=float)
            if vals.shape != self.grid.shape:
                raise DomainError(f"boundary array shape {vals.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(vals[self.grid.boundary_mask()])):
            raise DomainError("boundary data must be finite")
        return vals


@dataclass
class Solution2D:
    grid: Grid
    spec: SymbolSpec
    kappa: float
    u: np.ndarray
    trace: list
    converged: bool

    @property
    def grad_norm(self) -> np.ndarray:
        return gradient_field(self)

    def to_csv(self, path) -> None:
        X, Y = self.grid.mesh()
        G = self.grad_norm
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("x", "y", "u", "grad_norm"))
            for row in zip(X.ravel(), Y.ravel(), self.u.ravel(), G.ravel()):
                w.writerow([repr(float(v)) for v in row])

    def trace_json(self) -> dict:
        return {"iterations": [dict(t) for t in self.trace], "converged": bool(self.converged)}


# --------------------------------------------------------------------------- discretization


def coefficient(spec: SymbolSpec, kappa: float, s):
    """``A_k(s) = a_k(s)/s = (k + s^2)^{p/2-1} A(s)``."""
    s = np.asarray(s, dtype=float)
    return (kappa + s * s) ** (spec.p / 2 - 1) * spec.A(s)


def auto_damping(spec: SymbolSpec, kappa: float, s) -> float:
    """Damping that cancels the slowest mode of the frozen-coefficient map.

    Linearized, ``T`` scales gradient perturbations along ``grad u`` by ``-b_k``,
    so ``theta = 1/max(1, 1+b_k)`` maps that eigenvalue to ``1 - theta(1+b_k) <= 0``
    while keeping all others in ``[0, 1)``.
    """
    s = np.maximum(np.asarray(s, dtype=float), 1e-12)
    ratio = spec.fns.one_plus_b(s) - (spec.p - 2) * kappa / (kappa + s * s)
    top = float(np.max(ratio))
    return 1.0 / max(1.0, top) if math.isfinite(top) else 1.0


def _node_derivatives(grid: Grid, u: np.ndarray):
    ux = np.gradient(u, grid.hx, axis=0, edge_order=2)
    if grid.periodic:
        uy = (np.roll(u, -1, axis=1) - np.roll(u, 1, axis=1)) / (2 * grid.hy)
    else:
        uy = np.gradient(u, grid.hy, axis=1, edge_order=2)
    return ux, uy


def _faces(grid: Grid, u: np.ndarray):
    """Face list ``(p, q, weight, |grad u|)`` over flattened node indices."""
    nx, ny = grid.shape
    idx = np.arange(nx * ny).reshape(nx, ny)
    ux_n, uy_n = _node_derivatives(grid, u)
    x = grid.x

    # faces normal to the first coordinate
    xm = 0.5 * (x[:-1] + x[1:])
    dux = (u[1:, :] - u[:-1, :]) / grid.hx
    uy_f = 0.5 * (uy_n[1:, :] + uy_n[:-1, :])
    sx = np.sqrt(dux**2 + grid.g22_inv(xm)[:, None] * uy_f**2)
    wx = np.broadcast_to((grid.sqrt_g(xm) * grid.hy / grid.hx)[:, None], dux.shape)
    px, qx = idx[:-1, :], idx[1:, :]

    # faces normal to the second coordinate
    if grid.periodic:
        uq = np.roll(u, -1, axis=1)
        iq = np.roll(idx, -1, axis=1)
        ux_q = np.roll(ux_n, -1, axis=1)
        duy = (uq - u) / grid.hy
        ux_f = 0.5 * (ux_n + ux_q)
        py, qy = idx, iq
        xs = np.broadcast_to(x[:, None], u.shape)
    else:
        duy = (u[:, 1:] - u[:, :-1]) / grid.hy
        ux_f = 0.5 * (ux_n[:, 1:] + ux_n[:, :-1])
        py, qy = idx[:, :-1], idx[:, 1:]
        xs = np.broadcast_to(x[:, None], duy.shape)
    g22 = grid.g22_inv(xs)
    sy = np.sqrt(ux_f**2 + g22 * duy**2)
    wy = grid.sqrt_g(xs) * g22 * grid.hx / grid.hy

    p = np.concatenate([px.ravel(), py.ravel()])
    q = np.concatenate([qx.ravel(), qy.ravel()])
    w = np.concatenate([wx.ravel(), np.ravel(wy)])
    s = np.concatenate([sx.ravel(), sy.ravel()])
    return p, q, w, s


def _full_operator(grid: Grid, spec: SymbolSpec, kappa: float, u: np.ndarray):
    p, q, w, s = _faces(grid, u)
    c = w * coefficient(spec, kappa, s)
    if not np.all(np.isfinite(c)) or np.any(c <= 0):
        raise EllipticityError("non-positive or non-finite face coefficient; check symbol and kappa")
    n = u.size
    rows = np.concatenate([p, q, p, q])
    cols = np.concatenate([p, q, q, p])
    vals = np.concatenate([c, c, -c, -c])
    L = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return L, (p, q, c)


@dataclass
class LinearSystem:
    matrix: sparse.csr_matrix
    rhs: np.ndarray
    interior: np.ndarray
    boundary: np.ndarray
    face_coefficients: np.ndarray


def assemble_linearized(grid: Grid, spec: SymbolSpec, kappa: float, u_current: np.ndarray) -> LinearSystem:
    """SPD system for interior unknowns with coefficients frozen at ``u_current``.

    Boundary entries of ``u_current`` supply the Dirichlet values.
    """
    if not kappa > 0:
        raise DomainError("kappa must be positive")
    u_current = np.asarray(u_current, dtype=float)
    if u_current.shape != grid.shape:
        raise DomainError(f"field shape {u_current.shape} != grid shape {grid.shape}")
    L, (_, _, c) = _full_operator(grid, spec, kappa, u_current)
    mask = grid.boundary_mask().ravel()
    interior = np.flatnonzero(~mask)
    boundary = np.flatnonzero(mask)
    A = L[interior][:, interior].tocsr()
    rhs = -(L[interior][:, boundary] @ u_current.ravel()[boundary])
    return LinearSystem(A, rhs, interior, boundary, c)


def _solve(system: LinearSystem, x0: np.ndarray, rtol: float) -> np.ndarray:
    """CG on the correction about ``x0``, so the relative tolerance applies to the current defect."""
    defect = system.rhs - system.matrix @ x0
    if not np.any(defect):
        return x0.copy()
    diag = system.matrix.diagonal()
    M = spla.LinearOperator(system.matrix.shape, matvec=lambda v: v / diag)
    corr, info = spla.cg(system.matrix, defect, rtol=rtol, atol=0.0, M=M, maxiter=20 * system.rhs.size)
    if info != 0:
        raise ConvergenceError(f"conjugate gradient failed (info={info})")
    return x0 + corr


def weak_residual(solution_or_u, spec: SymbolSpec | None = None, kappa: float | None = None, grid: Grid | None = None):
    """Largest nodal flux imbalance against interior hat functions, relative to the largest face flux."""
    if isinstance(solution_or_u, Solution2D):
        u = solution_or_u.u
        grid = solution_or_u.grid
        spec = spec or solution_or_u.spec
        kappa = solution_or_u.kappa if kappa is None else kappa
    else:
        u = np.asarray(solution_or_u, dtype=float)
        if grid is None or spec is None or kappa is None:
            raise DomainError("raw fields need grid, spec and kappa")
    p, q, w, s = _faces(grid, u)
    flux = w * coefficient(spec, kappa, s) * (u.ravel()[q] - u.ravel()[p])
    net = np.zeros(u.size)
    np.add.at(net, p, flux)
    np.add.at(net, q, -flux)
    scale = float(np.max(np.abs(flux))) if flux.size else 0.0
    if scale == 0.0:
        return 0.0
    interior = ~grid.boundary_mask().ravel()
    return float(np.max(np.abs(net[interior])) / scale)


def picard_solve(problem: Problem2D, kappa: float | None = None, u_init: np.ndarray | None = None) -> Solution2D:
    """Iterate ``u <- (1-theta) u + theta T(u)`` at fixed ``kappa``.

    Without ``u_init`` the interior starts at the mean boundary value, so the
    first step is a linear solve with uniform coefficients.
    """
    grid, spec, prm = problem.grid, problem.spec, problem.picard
    kappa = problem.kappa_schedule[-1] if kappa is None else float(kappa)
    if not kappa > 0:
        raise DomainError("kappa must be positive")
    g = problem.boundary_values()
    mask = grid.boundary_mask()
    if u_init is None:
        u = g.copy()
        u[~mask] = float(np.mean(g[mask]))
    else:
        u = np.array(u_init, dtype=float)
        u[mask] = g[mask]

    scale = 1.0
    trace = []
    rising = 0
    prev = math.inf
    converged = False
    for it in range(prm.max_iters):
        system = assemble_linearized(grid, spec, kappa, u)
        if prm.damping == "auto":
            theta = scale * auto_damping(spec, kappa, _faces(grid, u)[3])
        else:
            theta = scale * prm.damping
        w_int = _solve(system, u.ravel()[system.interior], prm.cg_rtol)
        new = u.copy().ravel()
        new[system.interior] = (1 - theta) * new[system.interior] + theta * w_int
        new = new.reshape(u.shape)
        update = float(np.max(np.abs(new - u)))
        u = new
        res = weak_residual(u, spec, kappa, grid)
        trace.append({"kappa": kappa, "iteration": it, "update_norm": update, "residual": res, "damping": theta})
        if update <= prm.tol_update and (prm.tol_residual is None or res <= prm.tol_residual):
            converged = True
            break
        rising = rising + 1 if update > prev else 0
        prev = update
        if rising >= prm.patience:
            scale /= 2
            rising = 0
            logger.info("update norm grew for %d iterations; damping halved", prm.patience)
            if scale < prm.min_damping:
                raise ConvergenceError("Picard iteration diverges despite damping", trace)
    return Solution2D(grid, spec, kappa, u, trace, converged)


def kappa_continuation(problem: Problem2D) -> Solution2D:
    """Run the schedule with warm starts; abort on a failed stage or gradient blow-up."""
    trace = []
    u = None
    first_grad = None
    sol = None
    for kappa in problem.kappa_schedule:
        sol = picard_solve(problem, kappa, u)
        trace.extend(sol.trace)
        if not sol.converged:
            raise ConvergenceError(f"stage kappa={kappa:g} did not converge", trace)
        gmax = float(np.max(gradient_field(sol)))
        if first_grad is None:
            first_grad = gmax
        elif gmax > problem.growth_limit * max(first_grad, 1.0):
            raise ConvergenceError(f"max gradient {gmax:g} grew beyond {problem.growth_limit:g}x across kappa", trace)
        u = sol.u
    return Solution2D(sol.grid, sol.spec, sol.kappa, sol.u, trace, sol.converged)


def gradient_field(solution: Solution2D | tuple) -> np.ndarray:
    """Nodal ``|grad u|`` from centered differences (one-sided on the boundary), metric contracted."""
    if isinstance(solution, Solution2D):
        grid, u = solution.grid, solution.u
    else:
        grid, u = solution
    ux, uy = _node_derivatives(grid, u)
    return np.sqrt(ux**2 + grid.g22_inv(grid.x)[:, None] * uy**2)


def write_outputs(solution: Solution2D, out_dir, stem: str = "grid") -> dict:
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{stem}.csv"
    json_path = out / f"{stem}_trace.json"
    solution.to_csv(csv_path)
    json_path.write_text(json.dumps(solution.trace_json(), indent=2))
    return {"csv": str(csv_path), "trace": str(json_path)}
