"""Explicit a-priori gradient bounds, evaluated only when their hypotheses are certified."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import optimize

from .errors import DomainError
from .symbol import ConditionReport, SymbolSpec, derive


@dataclass(frozen=True)
class Refusal:
    """Returned instead of a number when the required condition report fails.

    Falsy, so ``if bound:`` reads naturally.
    """

    theorem: str
    reason: str
    condition_report_ref: str | None = None

    def __bool__(self) -> bool:
        return False

    def to_json(self) -> dict:
        return {"refused": True, "theorem": self.theorem, "reason": self.reason,
                "condition_report_ref": self.condition_report_ref}


@dataclass
class EstimateParams:
    n: int = 2
    r: float = 1.0
    M: float = 0.0
    ric_minus: float = 0.0
    hess_rho2_max: float = 0.0
    K: float | None = None
    beta: float | None = None
    C_free: float = 1.0

    def __post_init__(self):
        if self.n < 2:
            raise DomainError("n must be >= 2")
        if not self.r > 0:
            raise DomainError("ball radius must be positive")
        if self.ric_minus < 0 or self.hess_rho2_max < 0:
            raise DomainError("curvature and Hessian bounds must be non-negative")
        if not self.C_free > 0:
            raise DomainError("C_free must be positive")


@dataclass(frozen=True)
class GlobalStrong:
    K_required: float
    gradient_cap: float


@dataclass(frozen=True)
class GlobalMild:
    K: float
    gradient_cap: float
    crossing_found: bool
    s_max: float


def _refuse(theorem: str, report: ConditionReport | None, needed: str):
    if report is None:
        return None
    if report.condition_id != needed:
        return Refusal(theorem, f"needs a {needed} report, got {report.condition_id}", report.condition_id)
    if not report.holds:
        return Refusal(theorem, f"{needed} does not hold: {report.message}".rstrip(": "), report.condition_id)
    return None


def c0_bound(boundary_data) -> float:
    """``sup |g|`` over the supplied boundary samples (or a problem's boundary nodes)."""
    if hasattr(boundary_data, "boundary_values") and hasattr(boundary_data, "grid"):
        vals = boundary_data.boundary_values()[boundary_data.grid.boundary_mask()]
    else:
        vals = np.asarray(boundary_data, dtype=float)
    if vals.size == 0:
        return 0.0
    return float(np.max(np.abs(vals)))


def k_from_beta(beta: float) -> float:
    """``K`` solving ``2/(ln K - 1) = beta``."""
    if not beta > 0:
        raise DomainError("beta must be positive")
    return math.exp(1.0 + 2.0 / beta)


def local_bound_mild(params: EstimateParams, report: ConditionReport | None = None):
    """Bound on ``|grad u(x0)|`` for non-negative solutions in a ball under the mild-decay condition."""
    refused = _refuse("local_mild", report, "C10")
    if refused is not None:
        return refused
    if params.K is not None:
        K = params.K
    elif params.beta is not None:
        K = k_from_beta(params.beta)
    else:
        raise DomainError("local_bound_mild needs K or beta")
    if params.M < 0:
        raise DomainError("M = max u must be non-negative")
    if K + params.M <= 1:
        raise DomainError("K + M must exceed 1")
    r = params.r
    geom = 1 + 1 / r + (1 + params.hess_rho2_max) / r**2 + params.ric_minus
    KM = K + params.M
    return params.C_free * math.sqrt(geom) * KM * math.log(KM) ** 2


def local_bound_strong(params: EstimateParams, report: ConditionReport | None = None):
    """Bound on ``ln |grad u(x0)|`` under the strong-decay condition; needs ``K > 1``."""
    refused = _refuse("local_strong", report, "C18_1")
    if refused is not None:
        return refused
    if params.K is None or not params.K > 1:
        raise DomainError("local_bound_strong needs K > 1")
    if params.M < 0:
        raise DomainError("M = max |u - u(x0)| must be non-negative")
    r = params.r
    return params.C_free * math.exp(params.K * params.M) * (1 + 1 / r + params.ric_minus + params.hess_rho2_max / r**2)


def global_bound_strong(spec: SymbolSpec, ric_minus: float, s0: float, alpha: float,
                        report: ConditionReport | None = None):
    """``K`` must exceed ``sqrt(ric/alpha)``; an interior maximum of ``e^{Ku}|grad u|`` then has slope <= s0."""
    refused = _refuse("global_strong", report, "C11_1")
    if refused is not None:
        return refused
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    if ric_minus < 0:
        raise DomainError("ric_minus must be non-negative")
    return GlobalStrong(math.sqrt(ric_minus / alpha), float(s0))


def global_bound_mild(spec: SymbolSpec, ric_minus: float, beta: float, u_sup: float, *, s0: float = 1.0,
                      s_max: float = 1e6, n_grid: int = 4096, extensions: int = 3,
                      report: ConditionReport | None = None):
    """Gradient cap at an interior maximum of ``|grad u|/ln(K+u)`` with ``K = e^{1/beta}``.

    The cap is the supremum of slopes ``s >= s0`` at which the necessary
    inequality ``LHS(s) <= ric_minus`` can still hold; ``s0`` when there are none.
    """
    refused = _refuse("global_mild", report, "C6")
    if refused is not None:
        return refused
    if not beta > 0:
        raise DomainError("beta must be positive")
    if ric_minus < 0:
        raise DomainError("ric_minus must be non-negative")
    K = math.exp(1.0 / beta)
    L = math.log(K + u_sup)
    if not L > 0:
        raise DomainError("K + u_sup must exceed 1")
    d = derive(spec)

    def lhs(s):
        s = np.asarray(s, dtype=float)
        bp = np.maximum(d.b_prime(s), 0.0)
        return (d.one_plus_b(s) - bp / L) * s**2 / ((K + u_sup) ** 2 * L)

    top = s_max
    for _ in range(extensions + 1):
        grid = np.geomspace(s0, top, n_grid)
        ok = lhs(grid) <= ric_minus
        if not ok.any():
            return GlobalMild(K, float(s0), False, top)
        last = int(np.flatnonzero(ok)[-1])
        if last < grid.size - 1:
            lo, hi = grid[last], grid[last + 1]
            cap = optimize.brentq(lambda s: float(lhs(s)) - ric_minus, lo, hi, xtol=1e-14 * hi, rtol=1e-15)
            return GlobalMild(K, max(float(s0), cap), True, top)
        top *= 1e3
    return GlobalMild(K, math.inf, False, top)


def calibrate_C(measured_gradient: float, params: EstimateParams) -> float:
    """Smallest ``C_free`` making ``local_bound_mild`` cover a measured gradient."""
    unit = EstimateParams(**{**asdict(params), "C_free": 1.0})
    return float(measured_gradient) / local_bound_mild(unit)


def estimate_report(theorem: str, params, bound, report: ConditionReport | None = None) -> dict:
    if isinstance(params, EstimateParams):
        params = asdict(params)
    if isinstance(bound, Refusal):
        value = bound.to_json()
    elif isinstance(bound, (GlobalStrong, GlobalMild)):
        value = asdict(bound)
    else:
        value = float(bound)
    return {"theorem": theorem, "params": params, "bound": value,
            "condition_report_ref": None if report is None else report.to_json()}
