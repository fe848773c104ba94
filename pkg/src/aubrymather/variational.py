"""Discrete variational principle for twist-map configurations.

A configuration is a finite sequence of lifted circle points; its action is
the sum of h over consecutive pairs.  Stationary configurations are orbits
(discrete Euler-Lagrange equation d2h(x_{i-1}, x_i) + d1h(x_i, x_{i+1}) = 0),
and action minimizers of periodic type (p, q) are the Birkhoff orbits that
build Aubry-Mather sets, beta values, and Peierls barriers downstream.

Minimization is damped Newton on the free variables.  The Hessian of the
periodic problem is tridiagonal plus a corner and is solved by a
Sherman-Morrison correction over a banded solve; constrained and fixed-end
problems are plain tridiagonal.  Accepted steps never increase the action,
and iterates are sort-projected back to Birkhoff order after every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .dynamics import OrbitSample
from .errors import CoercivityWindowError, NumericalFailure, UsageError
from .generating import GeneratingFunctionSpec, eval_h, partials, second_partials

DEFAULT_TOL = 1e-10
ACTION_TIE = 1e-12


@dataclass(frozen=True)
class RotationClass:
    """A reduced rational rotation number p/q with q >= 1."""

    p: int
    q: int

    def __post_init__(self):
        if self.q < 1:
            raise UsageError("RotationClass needs q >= 1")
        if math.gcd(abs(self.p), self.q) != 1:
            raise UsageError(f"RotationClass {self.p}/{self.q} is not reduced")

    @property
    def omega(self) -> float:
        return self.p / self.q

    @staticmethod
    def from_string(text: str) -> "RotationClass":
        try:
            p_str, q_str = text.split("/")
            return RotationClass(int(p_str), int(q_str))
        except ValueError as exc:
            raise UsageError(f"cannot parse rotation class {text!r} (want p/q)") from exc

    def __str__(self):
        return f"{self.p}/{self.q}"


@dataclass
class Configuration:
    """A segment of lifted points with its boundary-condition kind.

    kind "periodic" stores q+1 points with xs[q] = xs[0] + p exactly, so the
    plain consecutive-pair action already contains the wrap term.  kind
    "constrained" additionally pins xs[0] = a.  kind "free" is a bare segment.
    """

    xs: np.ndarray
    kind: str = "free"
    rc: RotationClass | None = None
    a: float | None = None

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=float)
        if self.xs.ndim != 1 or self.xs.size < 1:
            raise UsageError("Configuration needs a nonempty 1-d point sequence")
        if self.kind not in ("free", "periodic", "constrained"):
            raise UsageError(f"unknown configuration kind {self.kind!r}")
        if self.kind in ("periodic", "constrained"):
            if self.rc is None:
                raise UsageError(f"{self.kind} configuration needs a rotation class")
            q = self.rc.q
            if self.xs.size != q + 1:
                raise UsageError(f"periodic ({self.rc}) configuration needs q+1 = {q + 1} points")
            if self.xs[q] != self.xs[0] + self.rc.p:
                raise UsageError("periodic configuration must close up: x_q = x_0 + p")
        if self.kind == "constrained":
            if self.a is None or self.xs[0] != self.a:
                raise UsageError("constrained configuration must start at x_0 = a")

    @property
    def n(self) -> int:
        return int(self.xs.size)

    def csv_rows(self):
        """Rows for the configuration CSV schema `i,x`."""
        for i, x in enumerate(self.xs):
            yield i, x


@dataclass
class MinimizeOptions:
    tol: float = DEFAULT_TOL
    restarts: int = 8
    seed: int = 0
    max_iter: int = 200
    jitter: float = 0.05
    extra_inits: tuple = ()  # warm starts tried before the standard restarts


@dataclass
class MinimizeResult:
    config: Configuration
    action: float
    residual_inf: float
    restarts_used: int
    seed: int
    converged: bool
    winner: int = 0
    action_trace: list = field(default_factory=list)

    def record(self) -> dict:
        """JSON record for the minimizer output schema."""
        rc = self.config.rc
        return {
            "p": rc.p if rc else None,
            "q": rc.q if rc else None,
            "action": self.action,
            "residual_inf": self.residual_inf,
            "restarts_used": self.restarts_used,
            "seed": self.seed,
        }


def action(spec: GeneratingFunctionSpec, config: Configuration) -> float:
    """Total action: sum of h over consecutive pairs of the stored points."""
    xs = config.xs
    if xs.size < 2:
        return 0.0
    return float(np.sum(eval_h(spec, xs[:-1], xs[1:])))


def el_residual(spec: GeneratingFunctionSpec, config: Configuration) -> np.ndarray:
    """Euler-Lagrange residuals r_i = d2h(x_{i-1}, x_i) + d1h(x_i, x_{i+1})
    at the interior indices; the configuration is stationary iff all vanish."""
    xs = config.xs
    if xs.size < 3:
        raise UsageError("el_residual needs at least 3 points (one interior)")
    h1, h2, _ = partials(spec, xs[:-1], xs[1:])
    return np.asarray(h1)[1:] + np.asarray(h2)[:-1]


def birkhoff_order_check(config: Configuration, rc: RotationClass | None = None) -> bool:
    """True iff the q lifted points (mod 1) are cyclically ordered like the
    rigid rotation by p/q: the rank of (x_i - x_0) mod 1 must be (i p) mod q."""
    rc = rc or config.rc
    if config.kind not in ("periodic", "constrained"):
        raise UsageError("birkhoff_order_check applies to periodic/constrained kinds")
    if rc is None:
        raise UsageError("birkhoff_order_check needs a rotation class")
    q, p = rc.q, rc.p
    if q == 1:
        return True
    w = np.mod(config.xs[:q] - config.xs[0], 1.0)
    ranks = np.empty(q, dtype=int)
    ranks[np.argsort(w, kind="stable")] = np.arange(q)
    target = (np.arange(q) * p) % q
    return bool(np.all(ranks == target))


# ---------------------------------------------------------------------------
# linear algebra: symmetric tridiagonal and cyclic-tridiagonal solves


def _solve_tridiag(diag: np.ndarray, off: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    n = diag.size
    if n == 1:
        return rhs / diag
    ab = np.zeros((3, n))
    ab[0, 1:] = off
    ab[1, :] = diag
    ab[2, :-1] = off
    return solve_banded((1, 1), ab, rhs)


def _solve_cyclic(diag: np.ndarray, off: np.ndarray, corner: float, rhs: np.ndarray) -> np.ndarray:
    """Solve (tridiag(diag, off) + corner coupling of first/last) z = rhs.

    Sherman-Morrison: write the cyclic matrix as T' + u v^T with T' a plain
    tridiagonal; two banded solves then combine.  Callers catch failures
    (singular T', vanishing denominator) and fall back to gradient steps.
    """
    n = diag.size
    gamma = -diag[0] if diag[0] != 0.0 else 1.0
    d = diag.copy()
    d[0] -= gamma
    d[-1] -= corner * corner / gamma
    u = np.zeros(n)
    u[0] = gamma
    u[-1] = corner
    v = np.zeros(n)
    v[0] = 1.0
    v[-1] = corner / gamma
    sol = _solve_tridiag(d, off, np.column_stack([rhs, u]))
    y, z = sol[:, 0], sol[:, 1]
    denom = 1.0 + v @ z
    if denom == 0.0 or not np.isfinite(denom):
        raise np.linalg.LinAlgError("cyclic correction denominator vanished")
    return y - z * (v @ y) / denom


# ---------------------------------------------------------------------------
# problem forms: periodic (cyclic) and pinned-ends (chain)


class _PeriodicProblem:
    """Free variables are x_0..x_{q-1}; x_q = x_0 + p is derived."""

    def __init__(self, spec, rc: RotationClass):
        self.spec = spec
        self.rc = rc

    def full(self, z):
        return np.concatenate([z, [z[0] + self.rc.p]])

    def action(self, z):
        x = self.full(z)
        return float(np.sum(eval_h(self.spec, x[:-1], x[1:])))

    def gradient(self, z):
        x = self.full(z)
        h1, h2, _ = partials(self.spec, x[:-1], x[1:])
        return np.asarray(h1) + np.roll(np.asarray(h2), 1)

    def newton_direction(self, z, g):
        x = self.full(z)
        h11, h12, h22 = second_partials(self.spec, x[:-1], x[1:])
        diag = np.asarray(h11) + np.roll(np.asarray(h22), 1)
        q = z.size
        if q == 1:
            hess = diag[0] + 2.0 * h12
            if hess == 0.0:
                raise np.linalg.LinAlgError("degenerate 1x1 Hessian")
            return np.array([-g[0] / hess])
        if q == 2:
            # sub/super and corner collapse onto the same pair of entries
            c = float(h12[0] + h12[1])
            hmat = np.array([[diag[0], c], [c, diag[1]]])
            return np.linalg.solve(hmat, -g)
        return _solve_cyclic(diag, np.asarray(h12)[: q - 1], float(h12[q - 1]), -g)

    def project(self, z):
        """Sort-project onto Birkhoff order for rotation p/q, keeping x_0."""
        q, p = self.rc.q, self.rc.p
        if q == 1:
            return z
        w = np.sort(np.mod(z - z[0], 1.0))
        i = np.arange(q)
        return z[0] + (i * p) // q + w[(i * p) % q]


class _ChainProblem:
    """Free variables are the interior points of a segment with pinned ends."""

    def __init__(self, spec, xa: float, xb: float):
        self.spec = spec
        self.xa = float(xa)
        self.xb = float(xb)

    def full(self, z):
        return np.concatenate([[self.xa], z, [self.xb]])

    def action(self, z):
        x = self.full(z)
        return float(np.sum(eval_h(self.spec, x[:-1], x[1:])))

    def gradient(self, z):
        x = self.full(z)
        h1, h2, _ = partials(self.spec, x[:-1], x[1:])
        return np.asarray(h1)[1:] + np.asarray(h2)[:-1]

    def newton_direction(self, z, g):
        x = self.full(z)
        h11, h12, h22 = second_partials(self.spec, x[:-1], x[1:])
        diag = np.asarray(h11)[1:] + np.asarray(h22)[:-1]
        if z.size == 1:
            if diag[0] == 0.0:
                raise np.linalg.LinAlgError("degenerate 1x1 Hessian")
            return -g / diag
        return _solve_tridiag(diag, np.asarray(h12)[1:-1], -g)

    def project(self, z):
        """Monotone projection: minimizers between ordered ends are ordered."""
        if self.xb >= self.xa:
            return np.clip(np.sort(z), self.xa, self.xb)
        return np.clip(-np.sort(-z), self.xb, self.xa)


def _descend(problem, z0: np.ndarray, opts: MinimizeOptions):
    """Damped Newton descent with Birkhoff projection and monotone acceptance.

    A candidate is accepted only if its action does not exceed the current
    one (ties must strictly reduce the EL residual), so the recorded action
    trace is non-increasing by construction.
    """
    z = problem.project(np.asarray(z0, dtype=float).copy())
    try:
        a_cur = problem.action(z)
    except CoercivityWindowError:
        return z, np.inf, np.inf, [], False
    g = problem.gradient(z)
    r_cur = float(np.max(np.abs(g)))
    trace = [a_cur]
    for _ in range(opts.max_iter):
        if r_cur <= opts.tol:
            return z, a_cur, r_cur, trace, True
        try:
            d = problem.newton_direction(z, g)
            if not np.all(np.isfinite(d)) or float(g @ d) >= 0.0:
                d = -g
        except np.linalg.LinAlgError:
            d = -g
        t = 1.0
        accepted = False
        for _ in range(45):
            raw = z + t * d
            for cand in (problem.project(raw), raw):
                try:
                    a_new = problem.action(cand)
                except CoercivityWindowError:
                    continue
                if a_new > a_cur:
                    continue
                g_new = problem.gradient(cand)
                r_new = float(np.max(np.abs(g_new)))
                if a_new == a_cur and r_new >= r_cur:
                    continue
                z, a_cur, g, r_cur = cand, a_new, g_new, r_new
                trace.append(a_cur)
                accepted = True
                break
            if accepted:
                break
            t *= 0.5
        if not accepted:
            break
    return z, a_cur, r_cur, trace, r_cur <= opts.tol


def _pick_best(outcomes, x0_of):
    """Deterministic reduction over restarts: lowest action wins, ties within
    ACTION_TIE go to the smallest x_0 mod 1, then to the earliest restart."""
    best = None
    for idx, out in enumerate(outcomes):
        if not out["converged"]:
            continue
        if best is None:
            best = (idx, out)
            continue
        cur = best[1]
        if out["action"] < cur["action"] - ACTION_TIE:
            best = (idx, out)
        elif abs(out["action"] - cur["action"]) <= ACTION_TIE:
            if x0_of(out) < x0_of(cur):
                best = (idx, out)
    return best


def minimize_periodic(
    spec: GeneratingFunctionSpec, rc: RotationClass, opts: MinimizeOptions | None = None
) -> MinimizeResult:
    """Minimize the (p, q)-periodic action over configurations x_q = x_0 + p.

    Restarts start from rigid rotations x_i = x_0 + i p/q with x_0 walking a
    uniform grid (plus seeded jitter after the first); the best converged
    restart is returned.  Raises NumericalFailure with the best iterate if no
    restart reaches the residual tolerance.
    """
    opts = opts or MinimizeOptions()
    problem = _PeriodicProblem(spec, rc)
    q, p = rc.q, rc.p
    rng = np.random.default_rng(opts.seed)
    shifts = rng.uniform(-1.0, 1.0, size=max(opts.restarts, 1))
    rigid = np.arange(q) * (p / q)

    inits = [np.asarray(x0, dtype=float) for x0 in opts.extra_inits]
    for r in range(max(opts.restarts, 1)):
        base = r / max(opts.restarts, 1)
        if r > 0:
            base += opts.jitter * shifts[r]
        inits.append(base + rigid)

    outcomes = []
    for z0 in inits:
        z, a_val, r_val, trace, ok = _descend(problem, z0, opts)
        outcomes.append(
            {"z": z, "action": a_val, "resid": r_val, "trace": trace, "converged": ok}
        )
    best = _pick_best(outcomes, lambda o: o["z"][0] % 1.0)
    if best is None:
        fallback = min(outcomes, key=lambda o: o["resid"])
        cfg = Configuration(problem.full(fallback["z"]), "periodic", rc)
        raise NumericalFailure(
            f"minimize_periodic({rc}) did not reach residual {opts.tol:g} "
            f"(best {fallback['resid']:.3e})",
            best=cfg,
        )
    idx, out = best
    cfg = Configuration(problem.full(out["z"]), "periodic", rc)
    return MinimizeResult(
        config=cfg,
        action=out["action"],
        residual_inf=out["resid"],
        restarts_used=len(inits),
        seed=opts.seed,
        converged=True,
        winner=idx,
        action_trace=out["trace"],
    )


def minimize_constrained(
    spec: GeneratingFunctionSpec,
    rc: RotationClass,
    a: float,
    opts: MinimizeOptions | None = None,
) -> MinimizeResult:
    """Minimize the (p, q)-periodic action with the point constraint x_0 = a.

    Only x_1..x_{q-1} are free (the closing point is a + p); q = 1 has no
    free variables and returns immediately.
    """
    opts = opts or MinimizeOptions()
    q, p = rc.q, rc.p
    a = float(a)
    xb = a + p
    if q == 1:
        xs = np.array([a, xb])
        cfg = Configuration(xs, "constrained", rc, a=a)
        return MinimizeResult(
            config=cfg,
            action=action(spec, cfg),
            residual_inf=0.0,
            restarts_used=0,
            seed=opts.seed,
            converged=True,
        )

    problem = _ChainProblem(spec, a, xb)
    rng = np.random.default_rng(opts.seed)
    rigid = a + np.arange(1, q) * (p / q)
    inits = [np.asarray(x0, dtype=float) for x0 in opts.extra_inits]
    for r in range(max(opts.restarts, 1)):
        z0 = rigid.copy()
        if r > 0:
            z0 = z0 + opts.jitter * rng.uniform(-1.0, 1.0, size=q - 1)
        inits.append(z0)

    outcomes = []
    for z0 in inits:
        z, a_val, r_val, trace, ok = _descend(problem, z0, opts)
        outcomes.append(
            {"z": z, "action": a_val, "resid": r_val, "trace": trace, "converged": ok}
        )
    best = _pick_best(outcomes, lambda o: a % 1.0)
    if best is None:
        fallback = min(outcomes, key=lambda o: o["resid"])
        cfg = Configuration(problem.full(fallback["z"]), "constrained", rc, a=a)
        raise NumericalFailure(
            f"minimize_constrained({rc}, a={a:g}) did not reach residual {opts.tol:g} "
            f"(best {fallback['resid']:.3e})",
            best=cfg,
        )
    idx, out = best
    cfg = Configuration(problem.full(out["z"]), "constrained", rc, a=a)
    return MinimizeResult(
        config=cfg,
        action=out["action"],
        residual_inf=out["resid"],
        restarts_used=len(inits),
        seed=opts.seed,
        converged=True,
        winner=idx,
        action_trace=out["trace"],
    )


def minimize_fixed_ends(
    spec: GeneratingFunctionSpec,
    xs_init: np.ndarray,
    opts: MinimizeOptions | None = None,
) -> MinimizeResult:
    """Minimize a free segment with both endpoints pinned at their initial
    values; used to relax the legs of connecting-orbit candidates."""
    opts = opts or MinimizeOptions()
    xs_init = np.asarray(xs_init, dtype=float)
    if xs_init.size < 3:
        cfg = Configuration(xs_init.copy(), "free")
        return MinimizeResult(
            config=cfg,
            action=action(spec, cfg),
            residual_inf=0.0,
            restarts_used=0,
            seed=opts.seed,
            converged=True,
        )
    problem = _ChainProblem(spec, xs_init[0], xs_init[-1])
    rng = np.random.default_rng(opts.seed)
    inits = [xs_init[1:-1].copy()]
    straight = np.linspace(xs_init[0], xs_init[-1], xs_init.size)[1:-1]
    inits.append(straight)
    for r in range(1, max(opts.restarts, 1)):
        inits.append(straight + opts.jitter * rng.uniform(-1.0, 1.0, size=straight.size))

    outcomes = []
    for z0 in inits:
        z, a_val, r_val, trace, ok = _descend(problem, z0, opts)
        outcomes.append(
            {"z": z, "action": a_val, "resid": r_val, "trace": trace, "converged": ok}
        )
    best = _pick_best(outcomes, lambda o: xs_init[0] % 1.0)
    if best is None:
        fallback = min(outcomes, key=lambda o: o["resid"])
        cfg = Configuration(problem.full(fallback["z"]), "free")
        raise NumericalFailure(
            f"segment relaxation did not reach residual {opts.tol:g} "
            f"(best {fallback['resid']:.3e})",
            best=cfg,
        )
    idx, out = best
    cfg = Configuration(problem.full(out["z"]), "free")
    return MinimizeResult(
        config=cfg,
        action=out["action"],
        residual_inf=out["resid"],
        restarts_used=len(inits),
        seed=opts.seed,
        converged=True,
        winner=idx,
        action_trace=out["trace"],
    )


def orbit_from_configuration(
    spec: GeneratingFunctionSpec, config: Configuration, periods: int = 1
) -> OrbitSample:
    """Orbit induced by a stationary periodic configuration.

    Momenta come from y_i = -d1h(x_i, x_{i+1}); the lift is tiled block by
    block as x_{i+q} = x_i + p (each block computed from the previous one),
    so exact-period detection in rotation_number works on the result.
    """
    if config.kind not in ("periodic", "constrained") or config.rc is None:
        raise UsageError("orbit_from_configuration needs a periodic configuration")
    if periods < 1:
        raise UsageError("orbit_from_configuration needs periods >= 1")
    q, p = config.rc.q, config.rc.p
    base = config.xs[: q + 1]
    xs = np.empty(periods * q + 1)
    xs[: q + 1] = base
    for m in range(1, periods):
        xs[m * q + 1 : (m + 1) * q + 1] = xs[(m - 1) * q + 1 : m * q + 1] + p
    h1, _, _ = partials(spec, xs[:-1], xs[1:])
    ys = np.empty(xs.size)
    ys[:-1] = -np.asarray(h1)
    _, h2_last, _ = partials(spec, xs[-2], xs[-1])
    ys[-1] = h2_last
    return OrbitSample(xs, ys)
