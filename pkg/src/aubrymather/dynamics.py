"""The twist map recovered from its generating function.

The image of (x, y) is found by solving y = -d1h(x, x') for x', which is
monotone in x' by the twist condition, then y' = d2h(x, x').  Orbits are
kept in lifted coordinates; reduce mod 1 only for display.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import MomentumRangeError, UsageError
from .generating import FD_STEP, GeneratingFunctionSpec, partials

RESIDUAL_TOL = 1e-12


@dataclass
class OrbitSample:
    """A finite orbit segment: lifted positions xs and momenta ys."""

    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=float)
        self.ys = np.asarray(self.ys, dtype=float)
        if self.xs.shape != self.ys.shape or self.xs.ndim != 1 or self.xs.size < 1:
            raise UsageError("OrbitSample needs matching 1-d xs and ys")

    @property
    def n(self) -> int:
        return int(self.xs.size)

    @property
    def points(self) -> np.ndarray:
        """(n, 2) array of (x, y) pairs."""
        return np.column_stack([self.xs, self.ys])

    def csv_rows(self):
        """Rows for the orbit CSV schema `i,x,y,x_mod1`."""
        for i in range(self.n):
            yield i, self.xs[i], self.ys[i], self.xs[i] % 1.0


def _solve_gap(spec: GeneratingFunctionSpec, x: float, y: float) -> float:
    """Solve y = -d1h(x, x') for x'; strictly increasing in x' by twist."""
    w = spec.coercivity_window

    def f(xp):
        h1, _, _ = partials(spec, x, xp)
        return -h1 - y

    # Bracket around the shear guess x + y, growing geometrically to the
    # window edge; f is increasing, so a sign change is conclusive.
    center = min(max(x + y, x - w), x + w)
    slack = 0.25
    lo = max(center - slack, x - w)
    hi = min(center + slack, x + w)
    while f(lo) > 0.0 and lo > x - w:
        slack *= 2.0
        lo = max(center - slack, x - w)
    while f(hi) < 0.0 and hi < x + w:
        slack *= 2.0
        hi = min(center + slack, x + w)
    flo, fhi = f(lo), f(hi)
    if flo > 0.0 or fhi < 0.0:
        raise MomentumRangeError(x, y)
    if flo == 0.0:
        xp = lo
    elif fhi == 0.0:
        xp = hi
    else:
        xp = brentq(f, lo, hi, xtol=1e-14, rtol=8.9e-16)
    # Newton polish: the bracketing solve controls x', we need the residual.
    for _ in range(3):
        h1, _, h12 = partials(spec, x, xp)
        r = -h1 - y
        if abs(r) <= RESIDUAL_TOL:
            break
        xp -= r / (-h12)
    h1, _, _ = partials(spec, x, xp)
    if abs(-h1 - y) > RESIDUAL_TOL:
        raise MomentumRangeError(x, y)
    return xp


def forward(spec: GeneratingFunctionSpec, x: float, y: float) -> tuple[float, float]:
    """One step of the twist map: (x, y) -> (x', y')."""
    xp = _solve_gap(spec, float(x), float(y))
    _, h2, _ = partials(spec, x, xp)
    return xp, h2


def iterate(spec: GeneratingFunctionSpec, x: float, y: float, n: int) -> OrbitSample:
    """Iterate the map n times from the seed (x, y); n = 0 gives the seed alone."""
    if n < 0:
        raise UsageError("iterate needs n >= 0")
    xs = np.empty(n + 1)
    ys = np.empty(n + 1)
    xs[0], ys[0] = float(x), float(y)
    for i in range(n):
        try:
            xs[i + 1], ys[i + 1] = forward(spec, xs[i], ys[i])
        except MomentumRangeError as exc:
            raise MomentumRangeError(xs[i], ys[i], step=i) from exc
    return OrbitSample(xs, ys)


def jacobian_det(spec: GeneratingFunctionSpec, x: float, y: float) -> float:
    """Finite-difference Jacobian determinant of the map at (x, y).

    Area preservation makes this 1 up to FD error for any exact twist map.
    """
    d = FD_STEP
    xp_xp, yp_xp = forward(spec, x + d, y)
    xp_xm, yp_xm = forward(spec, x - d, y)
    xp_yp, yp_yp = forward(spec, x, y + d)
    xp_ym, yp_ym = forward(spec, x, y - d)
    dxp_dx = (xp_xp - xp_xm) / (2 * d)
    dyp_dx = (yp_xp - yp_xm) / (2 * d)
    dxp_dy = (xp_yp - xp_ym) / (2 * d)
    dyp_dy = (yp_yp - yp_ym) / (2 * d)
    return dxp_dx * dyp_dy - dxp_dy * dyp_dx
