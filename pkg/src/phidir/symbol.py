"""Integrands ``a(s) = s^{p-1} A(s)`` and their structural functions.

A symbol is stored as an expression for ``A`` in a small grammar (numbers,
``s``, ``+ - * / **``, ``sqrt``, ``exp``, ``log`` and named numeric
parameters).  Derivatives are taken symbolically, so ``b = s a'/a - 1`` and
``b'`` carry no finite-difference noise.
"""

from __future__ import annotations

import functools
import math
import re
from dataclasses import dataclass, field
from types import SimpleNamespace
from typing import Callable

import numpy as np
import sympy
from sympy.parsing.sympy_parser import parse_expr

from .errors import DomainError, EllipticityError, OutOfRangeError, SymbolError

S = sympy.Symbol("s", positive=True)

_TOKEN_RE = re.compile(r"^[0-9A-Za-z_+\-*/(). ]*$")
_GRAMMAR_FUNCS = {"sqrt": sympy.sqrt, "exp": sympy.exp, "log": sympy.log}

CONDITION_IDS = ("I", "II", "C6", "C10", "C11_1", "C18_1")
DEFAULT_S_MAX = 1e6
DEFAULT_GRID_POINTS = 4096


def _exact(value) -> sympy.Expr:
    if isinstance(value, bool):
        raise SymbolError("boolean is not a numeric parameter")
    if isinstance(value, int):
        return sympy.Integer(value)
    return sympy.Rational(repr(float(value)))


def parse_A(text: str, params: dict | None = None) -> sympy.Expr:
    """Parse ``text`` in the fixed grammar and return a sympy expression in ``s``."""
    if not isinstance(text, str) or not text.strip():
        raise SymbolError("A_expr must be a non-empty string")
    if not _TOKEN_RE.match(text) or "__" in text:
        raise SymbolError(f"A_expr contains characters outside the grammar: {text!r}")
    local = {"s": S, "E": sympy.E, "pi": sympy.pi, **_GRAMMAR_FUNCS}
    for name, value in (params or {}).items():
        if name in local:
            raise SymbolError(f"parameter name {name!r} is reserved")
        local[name] = _exact(value)
    try:
        expr = parse_expr(text, local_dict=local, evaluate=True)
    except Exception as exc:  # sympy raises a zoo of types here
        raise SymbolError(f"cannot parse A_expr {text!r}: {exc}") from exc
    _check_grammar(sympy.sympify(expr))
    return sympy.sympify(expr)


def _check_grammar(expr: sympy.Expr) -> None:
    for node in sympy.preorder_traversal(expr):
        if node.is_Symbol:
            if node != S:
                raise SymbolError(f"unbound name {node} in A_expr")
        elif node.is_Number or node.is_NumberSymbol:
            continue
        elif isinstance(node, (sympy.Add, sympy.Mul, sympy.Pow, sympy.exp, sympy.log)):
            continue
        else:
            raise SymbolError(f"{type(node).__name__} is not in the expression grammar")


def _lambdify(expr: sympy.Expr) -> Callable:
    raw = sympy.lambdify(S, expr, modules="numpy")

    def fn(s):
        arr = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = np.asarray(raw(arr), dtype=float)
        if out.shape != arr.shape:
            out = np.broadcast_to(out, arr.shape).copy()
        return float(out) if out.ndim == 0 else out

    return fn


@functools.lru_cache(maxsize=256)
def _compile(p_text: str, A_expr: str, params: tuple) -> SimpleNamespace:
    p = sympy.Rational(p_text)
    A = parse_A(A_expr, dict(params))
    dA = sympy.diff(A, S)
    d2A = sympy.diff(dA, S)
    a = S ** (p - 1) * A
    da = sympy.diff(a, S)
    sAA = sympy.simplify(S * dA / A)
    one_plus_b = sympy.simplify(p - 1 + sAA)
    b = sympy.simplify(one_plus_b - 1)
    db = sympy.simplify(sympy.diff(b, S))
    try:
        lim = sympy.limit(a, S, sympy.oo)
        sup_a = math.inf if lim in (sympy.oo, sympy.zoo) or not lim.is_finite else float(lim)
    except Exception:  # pragma: no cover - limit() failure falls back to sampling
        sup_a = math.nan
    ns = SimpleNamespace(
        exprs=SimpleNamespace(A=A, dA=dA, d2A=d2A, a=a, da=da, sAA=sAA, one_plus_b=one_plus_b, b=b, db=db),
        A=_lambdify(A),
        dA=_lambdify(dA),
        d2A=_lambdify(d2A),
        a=_lambdify(a),
        da=_lambdify(da),
        sAA=_lambdify(sAA),
        one_plus_b=_lambdify(one_plus_b),
        b=_lambdify(b),
        db=_lambdify(db),
        sup_a=sup_a,
    )
    if math.isnan(ns.sup_a):
        ns.sup_a = float(ns.a(1e15))
    return ns


@dataclass(frozen=True)
class SymbolSpec:
    """Integrand data defining ``a(s) = s^{p-1} A(s)``.

    ``q`` and ``delta_growth`` describe a lower bound ``a(s) >= s^q`` on
    ``[0, delta_growth]``; they are only needed by the asymptotic barrier.
    Specs produced by :func:`regularize` carry ``kappa`` and the unregularized
    ``base`` spec.
    """

    p: float
    A_expr: str
    q: float = 1.0
    delta_growth: float = 0.5
    s0_valid: float = 0.0
    label: str = "custom"
    params: tuple = ()
    kappa: float | None = None
    base: "SymbolSpec | None" = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not (self.p > 1):
            raise SymbolError(f"p must exceed 1, got {self.p}")
        if not (self.q > 0 and self.delta_growth > 0):
            raise SymbolError("q and delta_growth must be positive")
        if self.s0_valid < 0:
            raise SymbolError("s0_valid must be >= 0")
        object.__setattr__(self, "params", tuple(sorted(dict(self.params).items())))
        self._validate()

    @property
    def fns(self) -> SimpleNamespace:
        return _compile(repr(float(self.p)), self.A_expr, self.params)

    @property
    def sup_a(self) -> float:
        return self.fns.sup_a

    def A(self, s):
        return self.fns.A(s)

    def dA(self, s):
        return self.fns.dA(s)

    def d2A(self, s):
        return self.fns.d2A(s)

    def a(self, s):
        return self.fns.a(s)

    def da(self, s):
        return self.fns.da(s)

    def _validate(self) -> None:
        fns = self.fns
        s = np.concatenate([[0.0], np.logspace(-6, 4, 401)])
        A = np.asarray(fns.A(s))
        if not np.all(np.isfinite(A)) or np.any(A <= 0):
            raise SymbolError(f"{self.label}: A must be finite and positive on [0, 1e4]")
        a = np.asarray(fns.a(s))
        if a[0] != 0.0:
            raise SymbolError(f"{self.label}: a(0) must vanish")
        if np.any(np.diff(a) <= 0):
            raise SymbolError(f"{self.label}: a must be strictly increasing")
        for fn, what in ((fns.A, "A"), (fns.dA, "A'")):
            near = np.asarray(fn(np.array([0.0, 1e-14, 1e-12])))
            if not np.all(np.isfinite(near)) or abs(near[2] - near[0]) > 1e-4 * (1 + abs(near[0])):
                raise SymbolError(f"{self.label}: {what} has no finite limit at 0")

    def to_json(self) -> dict:
        if self.base is not None:
            return {**self.base.to_json(), "kappa": self.kappa}
        doc = {"name": self.label, "p": float(self.p), "A_expr": self.A_expr,
               "params": dict(self.params), "q": self.q, "delta_growth": self.delta_growth}
        if self.kappa is not None:
            doc["kappa"] = self.kappa
        return doc


@dataclass(frozen=True)
class DerivedSymbol:
    """Structural functions of a symbol, all vectorized over ``s``."""

    spec: SymbolSpec

    def b(self, s):
        return self.spec.fns.b(s)

    def one_plus_b(self, s):
        return self.spec.fns.one_plus_b(s)

    def b_prime(self, s):
        arr = np.asarray(s, dtype=float)
        if np.any(arr < self.spec.s0_valid):
            raise DomainError(f"b' requested below s0_valid={self.spec.s0_valid}")
        out = self.spec.fns.db(arr)
        if not np.all(np.isfinite(out)):
            raise DomainError("b' is singular at the requested points")
        return out

    def B(self, s):
        return np.maximum(1.0, self.one_plus_b(s))

    def ratio(self, s):
        """Eigenvalue ratio ``1 + min(b, 0)``."""
        return np.minimum(1.0, self.one_plus_b(s))  # avoids cancellation in 1 + b for b near -1


def make_builtin(name: str, p: float | None = None) -> SymbolSpec:
    """Return one of ``p_laplacian(p)``, ``minimal_surface``, ``p_area(p)``."""
    if name == "p_laplacian":
        if p is None or not p > 1:
            raise SymbolError("p_laplacian needs p > 1")
        return SymbolSpec(p=p, A_expr="1", q=p - 1, delta_growth=1.0, label=f"p_laplacian({p:g})")
    if name == "minimal_surface":
        return SymbolSpec(p=2, A_expr="(1 + s**2)**(-1/2)", q=2.0, delta_growth=0.5, label="minimal_surface")
    if name == "p_area":
        if p is None or not p > 1:
            raise SymbolError("p_area needs p > 1")
        return SymbolSpec(p=p, A_expr="(1 + s**p)**(-(p - 1)/p)", q=p, delta_growth=0.5,
                          params=(("p", p),), label=f"p_area({p:g})")
    raise SymbolError(f"unknown builtin symbol {name!r}")


def symbol_from_json(doc: dict) -> SymbolSpec:
    """Build a spec from ``{name, p, A_expr, params}``; builtins need only name/p."""
    name = doc.get("name")
    if "A_expr" not in doc:
        if name not in ("p_laplacian", "minimal_surface", "p_area"):
            raise SymbolError(f"symbol {name!r} needs an A_expr")
        return make_builtin(name, doc.get("p"))
    spec = SymbolSpec(
        p=float(doc["p"]), A_expr=doc["A_expr"], q=float(doc.get("q", 1.0)),
        delta_growth=float(doc.get("delta_growth", 0.5)), label=name or "custom",
        params=tuple(dict(doc.get("params", {})).items()),
    )
    if doc.get("kappa") is not None:
        spec = regularize(spec, float(doc["kappa"]))
    return spec


def derive(spec: SymbolSpec) -> DerivedSymbol:
    return DerivedSymbol(spec)


def regularize(spec: SymbolSpec, kappa: float) -> SymbolSpec:
    """Return the ``SymbolSpec`` of ``a_kappa(s) = (kappa + s^2)^{p/2-1} A(s) s``."""
    if not kappa > 0:
        raise SymbolError(f"kappa must be positive, got {kappa}")
    if spec.kappa is not None:
        raise SymbolError("spec is already regularized")
    names = dict(spec.params)
    if "kappa" in names or "p_reg" in names:
        raise SymbolError("parameter names 'kappa'/'p_reg' are reserved for regularization")
    params = tuple(names.items()) + (("kappa", kappa), ("p_reg", spec.p))
    return SymbolSpec(
        p=2, A_expr=f"(kappa + s**2)**(p_reg/2 - 1)*({spec.A_expr})",
        q=spec.q, delta_growth=spec.delta_growth, s0_valid=spec.s0_valid,
        label=f"{spec.label}[kappa={kappa:g}]", params=params, kappa=kappa, base=spec,
    )


def regularized_identities(spec: SymbolSpec, kappa: float, s):
    """``(1 + b_kappa, b_kappa')`` from the closed-form shift of the base symbol."""
    s = np.asarray(s, dtype=float)
    d = derive(spec)
    shift = kappa / (kappa + s**2)
    one_plus_bk = d.one_plus_b(s) - (spec.p - 2) * shift
    dbk = d.b_prime(s) + (spec.p - 2) * 2 * kappa * s / (kappa + s**2) ** 2
    return one_plus_bk, dbk


def inverse_a(spec: SymbolSpec, t, tol: float = 1e-15, max_iter: int = 400):
    """Solve ``a(s) = t`` by bracketing plus safeguarded Newton steps."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(t_arr)) or np.any(t_arr < 0):
        raise DomainError("a^{-1} needs finite t >= 0")
    if np.any(t_arr >= spec.sup_a):
        raise OutOfRangeError(f"t must stay below sup a = {spec.sup_a}")
    flat = t_arr.ravel()
    x = np.zeros_like(flat)
    live = flat > 0
    if live.any():
        tt = flat[live]
        lo = np.zeros_like(tt)
        hi = np.ones_like(tt)
        for _ in range(2100):
            low = spec.a(hi) < tt
            if not np.any(low):
                break
            lo = np.where(low, hi, lo)
            hi = np.where(low, 2 * hi, hi)
        xs = 0.5 * (lo + hi)
        for _ in range(max_iter):
            fx = spec.a(xs) - tt
            lo = np.where(fx < 0, xs, lo)
            hi = np.where(fx > 0, xs, hi)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = xs - fx / spec.da(xs)
            bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
            nxt = np.where(bad, 0.5 * (lo + hi), step)
            nxt = np.where(fx == 0, xs, nxt)
            done = (np.abs(nxt - xs) <= tol * nxt) | (hi - lo <= tol * hi)
            xs = nxt
            if np.all(done):
                break
        x[live] = xs
    x = x.reshape(t_arr.shape)
    return float(x) if x.ndim == 0 else x


# --------------------------------------------------------------------------- conditions


@dataclass(frozen=True)
class Minorant:
    """Power-law minorant ``phi(s) = c * s**m``."""

    c: float
    m: float

    def __call__(self, s):
        return self.c * np.asarray(s, dtype=float) ** self.m


@dataclass
class ConditionReport:
    condition_id: str
    params: dict
    holds: bool
    infimum_value: float
    witness_s: float
    threshold: float
    grid: np.ndarray = field(repr=False)
    divergence_ok: bool | None = None
    minorant_monotone: str | None = None
    message: str = ""

    def to_json(self) -> dict:
        return {
            "condition_id": self.condition_id, "params": self.params, "holds": bool(self.holds),
            "infimum_value": float(self.infimum_value), "witness_s": float(self.witness_s),
            "threshold": float(self.threshold), "divergence_ok": self.divergence_ok,
            "minorant_monotone": self.minorant_monotone, "message": self.message,
            "grid": {"s0": float(self.grid[0]), "s_max": float(self.grid[-1]), "points": int(self.grid.size)},
        }


def condition_grid(s0: float, s_max: float = DEFAULT_S_MAX, n: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    if not (s0 > 0 and s_max > s0 and n >= 2):
        raise DomainError("condition grid needs 0 < s0 < s_max and at least 2 points")
    return np.geomspace(s0, s_max, n)


def check_condition(
    spec: SymbolSpec,
    condition_id: str,
    *,
    s0: float = 1.0,
    minorant: Minorant | tuple | None = None,
    beta: float | None = None,
    epsilon: float | None = None,
    alpha: float | None = None,
    s_max: float = DEFAULT_S_MAX,
    n_grid: int = DEFAULT_GRID_POINTS,
    grid: np.ndarray | None = None,
    rtol: float = 1e-12,
) -> ConditionReport:
    """Grid certificate for one structural condition on ``[s0, s_max]``.

    Conditions I, II and C6 compare against ``minorant`` and report the
    infimum of ``lhs / phi`` (threshold 1).  C10, C11_1 and C18_1 report the
    infimum of their left side against ``alpha``; with ``alpha=None`` the
    infimum itself is the witness constant and only positivity is required.
    """
    if condition_id not in CONDITION_IDS:
        raise SymbolError(f"unknown condition {condition_id!r}")
    s = np.asarray(grid, dtype=float) if grid is not None else condition_grid(s0, s_max, n_grid)
    if s.size == 0:
        raise DomainError("empty grid")
    d = derive(spec)
    params: dict = {"s0": float(s[0]), "s_max": float(s[-1])}
    divergence_ok = None
    monotone = None
    msg = ""

    if condition_id in ("I", "II", "C6"):
        if minorant is None:
            raise SymbolError(f"condition {condition_id} needs a minorant c*s**m")
        phi = minorant if isinstance(minorant, Minorant) else Minorant(*minorant)
        if not phi.c > 0:
            raise SymbolError("minorant coefficient must be positive")
        params.update(c=phi.c, m=phi.m)
        if condition_id == "I":
            lhs = d.ratio(s) * s**2
            divergence_ok = phi.m >= 1
            monotone = "non-decreasing" if phi.m >= 0 else "decreasing"
            if not divergence_ok:
                msg = "integral of phi/s^2 converges (needs m >= 1)"
        elif condition_id == "II":
            lhs = d.ratio(s) * s**2
            divergence_ok = phi.m >= 0
            monotone = "non-increasing" if phi.m <= 0 else "increasing"
            if phi.m != 0:
                msg = "phi must be non-increasing with divergent integral of phi/s (needs m = 0)"
        else:
            if beta is None or not beta > 0:
                raise SymbolError("C6 needs beta > 0")
            params["beta"] = beta
            lhs = (d.one_plus_b(s) - beta * np.maximum(d.b_prime(s), 0.0) * s) * s**2
            divergence_ok = phi.m > 0
            monotone = "non-decreasing" if phi.m >= 0 else "decreasing"
            if not divergence_ok:
                msg = "phi must tend to infinity (needs m > 0)"
        values = lhs / phi(s)
        threshold = 1.0
        structural = divergence_ok and (condition_id != "II" or phi.m == 0)
        if condition_id == "I":
            structural = structural and phi.m >= 0
    else:
        if condition_id == "C10":
            if beta is None or not beta > 0:
                raise SymbolError("C10 needs beta > 0")
            params["beta"] = beta
            values = (d.one_plus_b(s) - beta * np.abs(d.b_prime(s)) * s) / d.B(s)
        elif condition_id == "C11_1":
            values = (-d.b_prime(s) * s - d.one_plus_b(s)) * s**2
        else:
            if epsilon is None or not epsilon > 0:
                raise SymbolError("C18_1 needs epsilon > 0")
            params["epsilon"] = epsilon
            values = (-d.b_prime(s) * s - (1 + epsilon) * d.one_plus_b(s)) * s**2
        threshold = 0.0 if alpha is None else float(alpha)
        if alpha is not None:
            if not alpha > 0:
                raise SymbolError("alpha must be positive")
            params["alpha"] = alpha
        structural = True

    idx = int(np.argmin(values))
    inf = float(values[idx])
    if condition_id in ("C10", "C11_1", "C18_1") and alpha is None:
        meets = inf > 0
    else:
        meets = inf >= threshold * (1 - rtol)
    if not meets and not msg:
        msg = f"left side falls below threshold at s={s[idx]:.6g}"
    return ConditionReport(
        condition_id=condition_id, params=params, holds=bool(meets and structural),
        infimum_value=inf, witness_s=float(s[idx]), threshold=threshold, grid=s,
        divergence_ok=divergence_ok, minorant_monotone=monotone, message=msg,
    )


def ellipticity_bounds(spec: SymbolSpec, kappa: float, s_max: float, n_grid: int = 4001):
    """Sampled ``(c, C)`` of the ellipticity lemma for the kappa-regularized symbol.

    ``c`` is the minimum over ``[0, s_max]`` of ``A`` and
    ``min(1, p-1) + s A'/A``; ``C`` is the maximum of ``A`` and
    ``1 + (p-2)^+ + s A'/A``.  A regularized spec is measured through its base.
    """
    base = spec.base if spec.base is not None else spec
    if not kappa > 0:
        raise SymbolError("kappa must be positive")
    s = np.linspace(0.0, s_max, n_grid)
    A = base.A(s)
    sAA = base.fns.sAA(s)
    lower = np.minimum(A, min(1.0, base.p - 1) + sAA)
    upper = np.maximum(A, 1.0 + max(base.p - 2, 0.0) + sAA)
    c_low = float(np.min(lower))
    C_high = float(np.max(upper))
    if not c_low > 0:
        raise EllipticityError(f"sampled ellipticity constant {c_low:g} is not positive")
    return c_low, C_high


def quadratic_form(spec: SymbolSpec, kappa: float, s, cos_angle):
    """Symbol of the regularized operator on a unit vector at angle ``cos_angle`` to the gradient."""
    base = spec.base if spec.base is not None else spec
    s = np.asarray(s, dtype=float)
    c2 = np.asarray(cos_angle, dtype=float) ** 2
    normal = 1 + (base.p - 2) * s**2 / (kappa + s**2) + base.fns.sAA(s)
    return (kappa + s**2) ** (base.p / 2 - 1) * base.A(s) * ((1 - c2) + normal * c2)
