"""Rotation numbers and continued-fraction convergents.

Rotation numbers of exactly periodic lifts are detected with integer lift
arithmetic (no floating average), so minimizer orbits report their class
p/q exactly; generic orbits get a trailing-window slope estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import OrbitSample
from .errors import UsageError
from .variational import RotationClass

# A continued-fraction remainder beyond this is treated as the rational
# tail: double precision cannot distinguish further quotients.
RATIONAL_CUTOFF = 1e12

TRANSIENT_FRACTION = 0.2


def rotation_number(orbit: OrbitSample) -> float:
    """Average advance per step of an orbit's lift.

    If the lift is exactly periodic (x_{i+q} = x_i + p bit-for-bit, as
    produced by tiled minimizer configurations) the result is the rational
    p/q itself.  Otherwise the slope is averaged over the trailing 80% of
    the orbit to discard transients.
    """
    n = orbit.n
    if n < 2:
        raise UsageError("rotation_number needs an orbit of length >= 2")
    xs = orbit.xs
    for q in range(1, n):
        shift = xs[q] - xs[0]
        p = round(shift)
        if shift != p:
            continue
        if np.array_equal(xs[q:], xs[: n - q] + p):
            return p / q
    steps = n - 1
    j0 = int(np.floor(TRANSIENT_FRACTION * steps))
    if j0 >= steps:
        j0 = steps - 1
    return (xs[steps] - xs[j0]) / (steps - j0)


@dataclass
class ConvergentList:
    """Continued-fraction convergents of a target frequency, q increasing."""

    target: float
    entries: list[RotationClass]

    def csv_rows(self):
        """Rows for the convergents CSV schema `p,q,omega_approx,abs_err`."""
        for rc in self.entries:
            approx = rc.p / rc.q
            yield rc.p, rc.q, approx, abs(self.target - approx)


def convergents(omega: float, depth: int) -> ConvergentList:
    """First `depth` continued-fraction convergents of omega in (0, 1).

    The trivial denominator-1 approximations (0/1, and 1/1 when the first
    partial quotient is 1) are skipped: as periodic classes they duplicate
    (0, 1) up to translation.  A rational omega with a shorter expansion
    returns its full finite list.
    """
    omega = float(omega)
    if not (0.0 < omega < 1.0):
        raise UsageError("convergents needs 0 < omega < 1")
    if depth < 1:
        raise UsageError("convergents needs depth >= 1")

    entries: list[RotationClass] = []
    # standard recurrence p_j = a_j p_{j-1} + p_{j-2} (and likewise q_j)
    p_prev, q_prev = 1, 0
    p_cur, q_cur = 0, 1  # zeroth convergent 0/1 for omega in (0,1)
    x = omega
    while len(entries) < depth:
        frac = x - np.floor(x)
        if frac <= 0.0 or 1.0 / frac > RATIONAL_CUTOFF:
            break
        x = 1.0 / frac
        a = int(np.floor(x))
        p_cur, p_prev = a * p_cur + p_prev, p_cur
        q_cur, q_prev = a * q_cur + q_prev, q_cur
        if q_cur > 1:
            entries.append(RotationClass(p_cur, q_cur))
    return ConvergentList(target=omega, entries=entries)
