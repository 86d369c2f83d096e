"""``phidir <command> --config <file> [--out <dir>]``.

Exit status: 0 success, 2 a check failed, 1 error (including invalid configs).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import re
import sys
from pathlib import Path
from typing import Literal, Optional

import numpy as np
import sympy
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import barrier, estimates, grid2d, radial, symbol, verify
from .errors import ConfigError, NoRadialSolution, PhidirError

logger = logging.getLogger("phidir")

EXIT_OK, EXIT_ERROR, EXIT_CHECK = 0, 1, 2


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SymbolCfg(Strict):
    name: str = "custom"
    p: Optional[float] = None
    A_expr: Optional[str] = None
    params: dict[str, float] = Field(default_factory=dict)
    q: Optional[float] = None
    delta_growth: Optional[float] = None

    def build(self) -> symbol.SymbolSpec:
        if self.A_expr is None:
            return symbol.make_builtin(self.name, self.p)
        if self.p is None:
            raise ConfigError("custom symbol needs p", "symbol.p")
        return symbol.SymbolSpec(p=self.p, A_expr=self.A_expr, q=1.0 if self.q is None else self.q,
                                 delta_growth=0.5 if self.delta_growth is None else self.delta_growth,
                                 label=self.name, params=tuple(self.params.items()))


class MinorantCfg(Strict):
    c: float
    m: float


class ConditionCfg(Strict):
    id: Literal["I", "II", "C6", "C10", "C11_1", "C18_1"]
    s0: float = 1.0
    s_max: float = symbol.DEFAULT_S_MAX
    n_grid: int = symbol.DEFAULT_GRID_POINTS
    minorant: Optional[MinorantCfg] = None
    beta: Optional[float] = None
    epsilon: Optional[float] = None
    alpha: Optional[float] = None

    def run(self, spec):
        mino = None if self.minorant is None else symbol.Minorant(self.minorant.c, self.minorant.m)
        return symbol.check_condition(spec, self.id, s0=self.s0, s_max=self.s_max, n_grid=self.n_grid,
                                      minorant=mino, beta=self.beta, epsilon=self.epsilon, alpha=self.alpha)


class SymbolCheckCfg(Strict):
    symbol: SymbolCfg
    conditions: list[ConditionCfg] = Field(default_factory=list)


class ManifoldCfg(Strict):
    n: int = 2
    kind: Literal["euclidean", "hyperbolic"] = "euclidean"
    k: float = 1.0
    r_min: float
    r_max: float


class RadialCfg(Strict):
    symbol: SymbolCfg
    manifold: ManifoldCfg
    u_rmin: float
    u_rmax: float
    tol: float = 1e-10


class PicardCfg(Strict):
    max_iters: int = 200
    damping: float | Literal["auto"] = "auto"
    tol_update: float = 1e-12
    tol_residual: Optional[float] = None
    cg_rtol: float = 1e-10


class WarpCfg(Strict):
    kind: Literal["euclidean", "hyperbolic"] = "euclidean"
    k: float = 1.0


class GridCfg(Strict):
    symbol: SymbolCfg
    chart: Literal["cartesian_rectangle", "polar_annulus"]
    dims: tuple[int, int]
    x_range: tuple[float, float]
    y_range: tuple[float, float]
    warp: Optional[WarpCfg] = None
    boundary_expr: str
    kappa_schedule: list[float] = Field(default_factory=lambda: [1.0])
    kappa_min: float = grid2d.KAPPA_MIN
    picard: PicardCfg = Field(default_factory=PicardCfg)


class GeometryCfg(Strict):
    delta0: float
    c1: float
    C_geom: float
    n: int = 2
    mean_convex: bool = False


class BoundaryBarrierCfg(Strict):
    regime: Literal["mild", "strong"]
    minorant: MinorantCfg
    geometry: GeometryCfg
    M: float
    strong_constant: Literal["certificate", "literal"] = "certificate"
    samples: int = 100
    tol: float = 1e-9


class AsymptoticCfg(Strict):
    symbol: SymbolCfg
    n: int
    k: float
    height_C: float
    delta_small: Optional[float] = None
    method: Literal["adaptive", "fixed"] = "adaptive"
    s_max: Optional[float] = None
    n_table: int = 65
    samples: list[float] = Field(default_factory=lambda: [0.25, 0.5, 1.0, 2.0, 4.0])
    tol: float = 1e-9


class EstimateParamsCfg(Strict):
    n: int = 2
    r: float = 1.0
    M: float = 0.0
    ric_minus: float = 0.0
    hess_rho2_max: float = 0.0
    K: Optional[float] = None
    beta: Optional[float] = None
    C_free: float = 1.0
    s0: float = 1.0
    alpha: Optional[float] = None
    u_sup: float = 0.0


class EstimateCfg(Strict):
    theorem: Literal["local_mild", "local_strong", "global_mild", "global_strong"]
    symbol: Optional[SymbolCfg] = None
    params: EstimateParamsCfg = Field(default_factory=EstimateParamsCfg)
    condition: Optional[ConditionCfg] = None

    @model_validator(mode="after")
    def _needs_symbol(self):
        if (self.theorem.startswith("global") or self.condition is not None) and self.symbol is None:
            raise ValueError(f"theorem {self.theorem} with a condition needs a symbol")
        return self


class VerifyCfg(Strict):
    symbols: list[SymbolCfg] = Field(default_factory=lambda: [
        SymbolCfg(name="p_laplacian", p=2.0), SymbolCfg(name="p_laplacian", p=3.0), SymbolCfg(name="minimal_surface")])
    dims: int = 16
    monotone_pairs: int = 10000
    monotone_range: float = 10.0
    seed: int = 0


SCHEMAS = {
    "symbol-check": SymbolCheckCfg, "solve-radial": RadialCfg, "solve-grid": GridCfg,
    "barrier-boundary": BoundaryBarrierCfg, "barrier-asymptotic": AsymptoticCfg,
    "estimate": EstimateCfg, "verify-suite": VerifyCfg,
}


def load_config(command: str, raw: dict):
    """Validate ``raw`` against the command's schema; errors name the offending key path."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw = dict(raw)
    declared = raw.pop("command", command)
    if declared != command:
        raise ConfigError(f"config is for {declared!r}, not {command!r}", "command")
    try:
        return SCHEMAS[command].model_validate(raw)
    except ValidationError as exc:
        err = exc.errors()[0]
        path = ".".join(str(p) for p in err["loc"])
        raise ConfigError(err["msg"], path) from exc


# --------------------------------------------------------------------------- helpers

_EXPR_RE = re.compile(r"^[0-9A-Za-z_+\-*/(). ,]*$")
_EXPR_NAMES = {
    "x": sympy.Symbol("x"), "y": sympy.Symbol("y"), "pi": sympy.pi, "E": sympy.E,
    "sin": sympy.sin, "cos": sympy.cos, "exp": sympy.exp, "log": sympy.log, "sqrt": sympy.sqrt,
    "Abs": sympy.Abs, "Min": sympy.Min, "Max": sympy.Max,
}


def boundary_function(text: str):
    """Compile a data expression in the chart coordinates ``x, y`` (``r, theta`` on an annulus)."""
    if not _EXPR_RE.match(text) or "__" in text:
        raise ConfigError("boundary_expr has characters outside the grammar", "boundary_expr")
    words = set(re.findall(r"[A-Za-z_][A-Za-z_0-9]*", text))
    unknown = words - set(_EXPR_NAMES)
    if unknown:
        raise ConfigError(f"unknown names {sorted(unknown)}", "boundary_expr")
    try:
        expr = sympy.sympify(text, locals=_EXPR_NAMES)
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise ConfigError(f"cannot parse: {exc}", "boundary_expr") from exc
    fn = sympy.lambdify((_EXPR_NAMES["x"], _EXPR_NAMES["y"]), expr, modules="numpy")
    return lambda X, Y: np.broadcast_to(np.asarray(fn(X, Y), dtype=float), np.shape(X))


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, default=_jsonable))


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")


# --------------------------------------------------------------------------- commands


def cmd_symbol_check(cfg: SymbolCheckCfg, out: Path) -> int:
    spec = cfg.symbol.build()
    reports = [c.run(spec) for c in cfg.conditions]
    _write_json(out / "symbol.json", spec.to_json())
    _write_json(out / "conditions.json", {"symbol": spec.to_json(), "reports": [r.to_json() for r in reports]})
    for r in reports:
        logger.info("%s: holds=%s inf=%.6g", r.condition_id, r.holds, r.infimum_value)
    return EXIT_OK if all(r.holds for r in reports) else EXIT_CHECK


def cmd_solve_radial(cfg: RadialCfg, out: Path) -> int:
    spec = cfg.symbol.build()
    m = cfg.manifold
    manifold = radial.WarpedProduct(m.n, m.kind, m.k, m.r_min, m.r_max)
    try:
        sol = radial.solve_radial(spec, manifold, cfg.u_rmin, cfg.u_rmax, tol=cfg.tol)
    except NoRadialSolution as exc:
        _write_json(out / "radial.json", {"status": "no_radial_solution", "message": str(exc),
                                         "manifold": manifold.to_json(), "symbol": spec.to_json()})
        return EXIT_CHECK
    sol.to_csv(out / "radial.csv")
    meta = sol.metadata()
    meta["flux_residual"] = sol.flux_residual()
    meta["status"] = "ok"
    _write_json(out / "radial.json", meta)
    return EXIT_OK


def cmd_solve_grid(cfg: GridCfg, out: Path) -> int:
    spec = cfg.symbol.build()
    warp = None
    if cfg.warp is not None and cfg.chart == "polar_annulus":
        warp = radial.WarpedProduct(2, cfg.warp.kind, cfg.warp.k, cfg.x_range[0], cfg.x_range[1])
    grid = grid2d.Grid(cfg.chart, tuple(cfg.dims), tuple(cfg.x_range), tuple(cfg.y_range), warp)
    picard = grid2d.PicardParams(**cfg.picard.model_dump())
    problem = grid2d.Problem2D(spec, grid, boundary_function(cfg.boundary_expr), cfg.kappa_schedule, picard,
                               kappa_min=cfg.kappa_min)
    sol = grid2d.kappa_continuation(problem)
    paths = grid2d.write_outputs(sol, out)
    summary = {"converged": sol.converged, "kappa": sol.kappa, "weak_residual": grid2d.weak_residual(sol),
               "iterations": len(sol.trace), "h": grid.h, "outputs": paths, "config": cfg.model_dump()}
    _write_json(out / "grid_summary.json", summary)
    return EXIT_OK if sol.converged else EXIT_CHECK


def cmd_barrier_boundary(cfg: BoundaryBarrierCfg, out: Path) -> int:
    geom = barrier.DomainGeometry(**cfg.geometry.model_dump())
    phi = symbol.Minorant(cfg.minorant.c, cfg.minorant.m)
    prof = barrier.build_profile(cfg.regime, phi, geom, cfg.M, strong_constant=cfg.strong_constant)
    s = np.linspace(prof.alpha, prof.beta, cfg.samples)
    res = barrier.profile_residual(prof, s)
    height = float(barrier.eval_profile(prof, prof.delta))
    prof.to_csv(out / "profile.csv")
    meta = prof.metadata()
    meta.update({"max_residual": float(np.max(res)), "height_error": abs(height - cfg.M), "tol": cfg.tol})
    _write_json(out / "profile.json", meta)
    ok = meta["max_residual"] <= cfg.tol and meta["height_error"] <= 1e-8 * (1 + cfg.M)
    return EXIT_OK if ok else EXIT_CHECK


def cmd_barrier_asymptotic(cfg: AsymptoticCfg, out: Path) -> int:
    spec = cfg.symbol.build()
    bar = radial.asymptotic_barrier(spec, cfg.n, cfg.k, cfg.height_C, cfg.delta_small, s_max=cfg.s_max,
                                    n_table=cfg.n_table, method=cfg.method)
    res = radial.asymptotic_residual(bar, np.asarray(cfg.samples))
    bar.to_csv(out / "barrier.csv")
    meta = bar.metadata()
    decreasing = bool(np.all(np.diff(bar.g_table) < 0)) if bar.calib_c > 0 else True
    meta.update({"samples": cfg.samples, "residuals": res.tolist(), "decreasing": decreasing, "tol": cfg.tol})
    _write_json(out / "barrier.json", meta)
    ok = float(np.max(res)) <= cfg.tol and bar.g0 >= 2 * cfg.height_C and decreasing
    return EXIT_OK if ok else EXIT_CHECK


def cmd_estimate(cfg: EstimateCfg, out: Path) -> int:
    spec = cfg.symbol.build() if cfg.symbol is not None else None
    report = cfg.condition.run(spec) if cfg.condition is not None else None
    p = cfg.params
    if cfg.theorem in ("local_mild", "local_strong"):
        params = estimates.EstimateParams(n=p.n, r=p.r, M=p.M, ric_minus=p.ric_minus, hess_rho2_max=p.hess_rho2_max,
                                          K=p.K, beta=p.beta, C_free=p.C_free)
        fn = estimates.local_bound_mild if cfg.theorem == "local_mild" else estimates.local_bound_strong
        bound = fn(params, report)
    elif cfg.theorem == "global_strong":
        alpha = p.alpha if p.alpha is not None else (report.infimum_value if report is not None else None)
        if alpha is None:
            raise ConfigError("global_strong needs params.alpha or a C11_1 condition", "params.alpha")
        params = p.model_dump()
        bound = estimates.global_bound_strong(spec, p.ric_minus, p.s0, alpha, report=report)
    else:
        if p.beta is None:
            raise ConfigError("global_mild needs beta", "params.beta")
        params = p.model_dump()
        bound = estimates.global_bound_mild(spec, p.ric_minus, p.beta, p.u_sup, s0=p.s0, report=report)
    doc = estimates.estimate_report(cfg.theorem, params, bound, report)
    _write_json(out / "estimate.json", doc)
    return EXIT_CHECK if isinstance(bound, estimates.Refusal) else EXIT_OK


def run_verify_suite(cfg: VerifyCfg) -> list:
    """Default battery: flux monotonicity, Bochner polynomials, principles and the radial oracle."""
    rng = np.random.default_rng(cfg.seed)
    reports = []
    for sc in cfg.symbols:
        spec = sc.build()
        s, t = rng.uniform(0, cfg.monotone_range, (2, cfg.monotone_pairs))
        rep = verify.monotonicity_check(spec, s, t)
        rep.name = f"monotone_flux[{spec.label}]"
        reports.append(rep)

    flat = grid2d.Grid("cartesian_rectangle", (cfg.dims, cfg.dims), (-1.0, 1.0), (-1.0, 1.0))
    polys = {"x2+y2": [[0, 0, 1], [0, 0, 0], [1, 0, 0]], "x3": [[0], [0], [0], [1]],
             "cubic": [[1, 2, 0, -1], [0.5, 3, 1, 0], [2, -1, 0, 0], [1, 0, 0, 0]]}
    for name, c in polys.items():
        rep = verify.bochner_residual(np.asarray(c, dtype=float), flat)
        rep.name = f"bochner[{name}]"
        reports.append(rep)

    ann = grid2d.Grid("polar_annulus", (cfg.dims, cfg.dims + 2), (1.0, 2.0), (0.0, 2 * math.pi))
    manifold = radial.WarpedProduct(2, "euclidean", r_min=1.0, r_max=2.0)
    for sc in cfg.symbols:
        spec = sc.build()
        sols = []
        for lo, hi in ((0.0, 1.0), (0.5, 1.5)):
            prob = grid2d.Problem2D(spec, ann, lambda r, th, lo=lo, hi=hi: lo + (hi - lo) * (r - 1.0),
                                    [1.0, 1e-2, 1e-4, 1e-6], grid2d.PicardParams(max_iters=500))
            sols.append(grid2d.kappa_continuation(prob))
        for rep in (verify.comparison_check(sols[0], sols[1], ann), verify.max_principle_check(sols[0], sols[1], ann)):
            rep.name = f"{rep.name}[{spec.label}]"
            reports.append(rep)
        try:
            rad = radial.solve_radial(spec, manifold, 0.0, 1.0)
        except NoRadialSolution:
            continue
        rep = verify.oracle_compare(sols[0], rad)
        rep.name = f"{rep.name}[{spec.label}]"
        reports.append(rep)
    return reports


def cmd_verify_suite(cfg: VerifyCfg, out: Path) -> int:
    reports = run_verify_suite(cfg)
    doc = verify.write_summary(reports, out / "summary.json")
    return EXIT_OK if doc["passed"] else EXIT_CHECK


COMMANDS = {
    "symbol-check": cmd_symbol_check, "solve-radial": cmd_solve_radial, "solve-grid": cmd_solve_grid,
    "barrier-boundary": cmd_barrier_boundary, "barrier-asymptotic": cmd_barrier_asymptotic,
    "estimate": cmd_estimate, "verify-suite": cmd_verify_suite,
}


def run(command: str, raw_config: dict, out_dir) -> int:
    cfg = load_config(command, raw_config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return COMMANDS[command](cfg, out)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="phidir", description="Quasilinear Dirichlet problem toolkit.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", default=".", help="output directory (default: current)")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        raw = json.loads(Path(args.config).read_text())
        return run(args.command, raw, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except PhidirError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
