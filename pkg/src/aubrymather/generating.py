"""Generating functions h(x, x') of exact area-preserving twist maps.

The built-in "standard" family is the Frenkel-Kontorova form

    h(x, x') = (x' - x)^2 / 2 - (k / 4 pi^2) cos(2 pi x),

periodic under (x, x') -> (x+1, x'+1) and uniformly twisted (d12 h = -1).
Custom families are closed-form expressions in x and x' parsed once with
sympy; their partial derivatives come from symbolic differentiation.

All evaluators accept scalars or numpy arrays and enforce the coercivity
window: queries with |x' - x| > window raise CoercivityWindowError, the
numerical stand-in for superlinear growth of the action in the gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import CoercivityWindowError, UsageError

TWO_PI = 2.0 * math.pi
FOUR_PI2 = 4.0 * math.pi * math.pi

DEFAULT_WINDOW = 4.0

# Central finite-difference step used by derivative_selfcheck and by the
# map Jacobian; balances truncation against roundoff in double precision.
FD_STEP = 1e-5


@dataclass(frozen=True)
class GeneratingFunctionSpec:
    """Definition of a generating function h(x, x').

    family : "standard" (Frenkel-Kontorova, coupling k) or "custom"
             (closed-form expression in x and xp).
    k      : coupling of the standard family, k >= 0.
    coercivity_window : gap bound; h is treated as +inf for |x'-x| beyond it.
    expr   : expression source for the custom family (operators + - * / ^,
             sin, cos, constants, variables x and xp; x' and the prime
             character are accepted as aliases of xp).
    """

    family: str = "standard"
    k: float = 0.0
    coercivity_window: float = DEFAULT_WINDOW
    expr: str | None = None

    def __post_init__(self):
        if self.family not in ("standard", "custom"):
            raise UsageError(f"unknown generating-function family {self.family!r}")
        if self.family == "standard" and self.k < 0:
            raise UsageError("standard family requires coupling k >= 0")
        if self.coercivity_window <= 0:
            raise UsageError("coercivity_window must be positive")
        if self.family == "custom":
            if not self.expr:
                raise UsageError("custom family requires an expr")
            _compile_expression(self.expr)  # fail fast on parse errors

    @staticmethod
    def standard(k: float, coercivity_window: float = DEFAULT_WINDOW) -> "GeneratingFunctionSpec":
        return GeneratingFunctionSpec("standard", float(k), float(coercivity_window))

    @staticmethod
    def custom(expr: str, coercivity_window: float = DEFAULT_WINDOW) -> "GeneratingFunctionSpec":
        return GeneratingFunctionSpec("custom", 0.0, float(coercivity_window), expr)


@dataclass(frozen=True)
class MomentumPair:
    """Momenta recovered from h: y = -d1h(x, x'), y' = d2h(x, x')."""

    y: float
    yp: float


@dataclass(frozen=True)
class TwistReport:
    """Result of check_twist: minimum of -d12h over the sampled grid."""

    passed: bool
    min_twist: float
    argmin: tuple[float, float]
    grid_n: int


@dataclass(frozen=True)
class DerivativeReport:
    """Result of derivative_selfcheck; worst point over the sampled grid."""

    passed: bool
    worst_error: float
    worst_point: tuple[float, float]
    worst_component: str
    tol: float


@lru_cache(maxsize=None)
def _compile_expression(expr: str):
    """Parse a custom h expression and return vectorized h and derivatives.

    Returns a dict of numpy callables (x, xp) -> array for keys
    h, h1, h2, h11, h12, h22.
    """
    import sympy
    from sympy.parsing.sympy_parser import (
        convert_xor,
        parse_expr,
        standard_transformations,
    )

    source = expr.replace("′", "p").replace("x'", "xp")
    x, xp = sympy.symbols("x xp", real=True)
    allowed = {
        "x": x,
        "xp": xp,
        "sin": sympy.sin,
        "cos": sympy.cos,
        "pi": sympy.pi,
    }
    try:
        tree = parse_expr(
            source,
            local_dict=allowed,
            transformations=standard_transformations + (convert_xor,),
            evaluate=True,
        )
    except Exception as exc:
        raise UsageError(f"cannot parse h expression {expr!r}: {exc}") from exc
    extra = tree.free_symbols - {x, xp}
    if extra:
        names = ", ".join(sorted(str(s) for s in extra))
        raise UsageError(f"h expression uses unknown symbols: {names}")

    derivs = {
        "h": tree,
        "h1": tree.diff(x),
        "h2": tree.diff(xp),
        "h11": tree.diff(x, x),
        "h12": tree.diff(x, xp),
        "h22": tree.diff(xp, xp),
    }
    return {
        name: sympy.lambdify((x, xp), e, modules="numpy")
        for name, e in derivs.items()
    }


def _check_window(spec: GeneratingFunctionSpec, x, xp):
    gap = np.asarray(xp, dtype=float) - np.asarray(x, dtype=float)
    bad = np.abs(gap) > spec.coercivity_window
    if np.any(bad):
        worst = float(np.max(np.abs(gap)))
        raise CoercivityWindowError(worst, spec.coercivity_window)
    return gap


def eval_h(spec: GeneratingFunctionSpec, x, xp):
    """Evaluate h(x, x'); scalars in give a float out, arrays broadcast."""
    gap = _check_window(spec, x, xp)
    if spec.family == "standard":
        val = 0.5 * gap * gap - (spec.k / FOUR_PI2) * np.cos(TWO_PI * np.asarray(x, dtype=float))
    else:
        fns = _compile_expression(spec.expr)
        val = np.broadcast_to(
            np.asarray(fns["h"](np.asarray(x, dtype=float), np.asarray(xp, dtype=float)), dtype=float),
            gap.shape,
        )
    if np.ndim(val) == 0:
        return float(val)
    return np.array(val, dtype=float)


def partials(spec: GeneratingFunctionSpec, x, xp):
    """First partials and the mixed partial: (d1h, d2h, d12h)."""
    gap = _check_window(spec, x, xp)
    xa = np.asarray(x, dtype=float)
    if spec.family == "standard":
        h1 = -gap + (spec.k / TWO_PI) * np.sin(TWO_PI * xa)
        h2 = gap
        h12 = np.broadcast_to(-1.0, gap.shape)
    else:
        fns = _compile_expression(spec.expr)
        xpa = np.asarray(xp, dtype=float)
        h1 = np.broadcast_to(np.asarray(fns["h1"](xa, xpa), dtype=float), gap.shape)
        h2 = np.broadcast_to(np.asarray(fns["h2"](xa, xpa), dtype=float), gap.shape)
        h12 = np.broadcast_to(np.asarray(fns["h12"](xa, xpa), dtype=float), gap.shape)
    if np.ndim(gap) == 0:
        return float(h1), float(h2), float(h12)
    return np.array(h1, dtype=float), np.array(h2, dtype=float), np.array(h12, dtype=float)


def second_partials(spec: GeneratingFunctionSpec, x, xp):
    """Second partials (d11h, d12h, d22h); used by the Newton optimizer."""
    gap = _check_window(spec, x, xp)
    xa = np.asarray(x, dtype=float)
    if spec.family == "standard":
        h11 = 1.0 + spec.k * np.cos(TWO_PI * xa)
        h11 = np.broadcast_to(h11, gap.shape)
        h12 = np.broadcast_to(-1.0, gap.shape)
        h22 = np.broadcast_to(1.0, gap.shape)
    else:
        fns = _compile_expression(spec.expr)
        xpa = np.asarray(xp, dtype=float)
        h11 = np.broadcast_to(np.asarray(fns["h11"](xa, xpa), dtype=float), gap.shape)
        h12 = np.broadcast_to(np.asarray(fns["h12"](xa, xpa), dtype=float), gap.shape)
        h22 = np.broadcast_to(np.asarray(fns["h22"](xa, xpa), dtype=float), gap.shape)
    if np.ndim(gap) == 0:
        return float(h11), float(h12), float(h22)
    return np.array(h11, dtype=float), np.array(h12, dtype=float), np.array(h22, dtype=float)


def momenta(spec: GeneratingFunctionSpec, x: float, xp: float) -> MomentumPair:
    """Momentum pair (y, y') generated by h at the step (x, x')."""
    h1, h2, _ = partials(spec, x, xp)
    return MomentumPair(y=-h1, yp=h2)


def _grid(spec: GeneratingFunctionSpec, grid_n: int):
    """Sampling grid: x over one period, gaps across the coercivity window."""
    xs = np.linspace(0.0, 1.0, grid_n, endpoint=False)
    gaps = np.linspace(-spec.coercivity_window, spec.coercivity_window, grid_n)
    gx, gg = np.meshgrid(xs, gaps, indexing="ij")
    return gx, gx + gg


def check_twist(spec: GeneratingFunctionSpec, grid_n: int) -> TwistReport:
    """Sample -d12h on a grid_n x grid_n grid; pass iff its minimum is positive."""
    if grid_n < 2:
        raise UsageError("check_twist needs grid_n >= 2")
    gx, gxp = _grid(spec, grid_n)
    _, _, h12 = partials(spec, gx, gxp)
    twist = -np.asarray(h12)
    flat = int(np.argmin(twist))
    i, j = np.unravel_index(flat, twist.shape)
    min_twist = float(twist[i, j])
    return TwistReport(
        passed=min_twist > 0.0,
        min_twist=min_twist,
        argmin=(float(gx[i, j]), float(gxp[i, j])),
        grid_n=grid_n,
    )


def derivative_selfcheck(spec: GeneratingFunctionSpec, tol: float, grid_n: int) -> DerivativeReport:
    """Check analytic partials against central finite differences of eval_h.

    Differences are compared relatively with an absolute floor of 1e-12.
    On failure the report carries the worst offending point and component.
    """
    if tol <= 0:
        raise UsageError("derivative_selfcheck needs tol > 0")
    if grid_n < 2:
        raise UsageError("derivative_selfcheck needs grid_n >= 2")
    # Sample gaps slightly inside the window so FD stencils stay legal.
    xs = np.linspace(0.0, 1.0, grid_n, endpoint=False)
    margin = 2.0 * FD_STEP
    gaps = np.linspace(-spec.coercivity_window + margin, spec.coercivity_window - margin, grid_n)
    gx, gg = np.meshgrid(xs, gaps, indexing="ij")
    gxp = gx + gg

    d = FD_STEP
    fd1 = (eval_h(spec, gx + d, gxp) - eval_h(spec, gx - d, gxp)) / (2 * d)
    fd2 = (eval_h(spec, gx, gxp + d) - eval_h(spec, gx, gxp - d)) / (2 * d)
    fd12 = (
        eval_h(spec, gx + d, gxp + d)
        - eval_h(spec, gx + d, gxp - d)
        - eval_h(spec, gx - d, gxp + d)
        + eval_h(spec, gx - d, gxp - d)
    ) / (4 * d * d)
    h1, h2, h12 = partials(spec, gx, gxp)

    worst_error = -1.0
    worst_point = (0.0, 0.0)
    worst_component = ""
    for name, fd, exact in (("d1h", fd1, h1), ("d2h", fd2, h2), ("d12h", fd12, h12)):
        scale = np.maximum(np.abs(exact), 1e-12)
        err = np.abs(fd - exact) / scale
        flat = int(np.argmax(err))
        i, j = np.unravel_index(flat, err.shape)
        if err[i, j] > worst_error:
            worst_error = float(err[i, j])
            worst_point = (float(gx[i, j]), float(gxp[i, j]))
            worst_component = name
    return DerivativeReport(
        passed=worst_error <= tol,
        worst_error=worst_error,
        worst_point=worst_point,
        worst_component=worst_component,
        tol=tol,
    )
