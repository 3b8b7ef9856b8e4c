"""Time steppers for nonlinearly partitioned systems ``y' = F(y, y)``.

``step_generic`` walks the stage tensor directly and serves as the reference.
The ``step_mr*`` functions follow the implicitly wrapped structure: a few
implicit solves around one explicit RK step of ``w' = F(Y2, w)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import NewtonDivergence, NonIMEXTensor
from .methods import Mr2Coefficients, Mr3Coefficients, Variant
from .tableau import ButcherTableau, NprkTensor


class Jacobian(enum.Enum):
    FiniteDifference = "fd"
    HookOnly = "hook"


@dataclass
class SolverConfig:
    tol: float = 1e-12
    max_iter: int = 50
    jacobian: Jacobian = Jacobian.FiniteDifference

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")


@dataclass
class Stats:
    """Work counters. ``evals`` counts F calls made by the stepper itself,
    Newton's internal calls are tallied separately in ``newton_evals``."""

    evals: int = 0
    solves: int = 0
    newton_iters: int = 0
    newton_evals: int = 0

    def cost(self, ratio: float = 4.0) -> float:
        return self.evals + ratio * self.solves

    def add(self, other: Stats):
        self.evals += other.evals
        self.solves += other.solves
        self.newton_iters += other.newton_iters
        self.newton_evals += other.newton_evals


@dataclass
class PartitionedSystem:
    """``eval_f(u, v)`` is the partition ``F``; ``solve_hook(gh, v, rhs)``
    returns ``Y`` with ``Y = rhs + gh * F(Y, v)``."""

    n: int
    eval_f: Callable
    solve_hook: Optional[Callable] = None
    exact: Optional[Callable] = None
    name: str = ""


class _Counted:
    """Wraps a system so every F call and solve is tallied."""

    def __init__(self, sys: PartitionedSystem, cfg: SolverConfig, stats: Stats):
        self.sys = sys
        self.cfg = cfg
        self.stats = stats

    def f(self, u, v):
        self.stats.evals += 1
        return self.sys.eval_f(u, v)

    def solve(self, gh, v, rhs, guess=None):
        """Solve ``Y = rhs + gh F(Y, v)``."""
        self.stats.solves += 1
        if gh == 0:
            return np.array(rhs, dtype=float, copy=True)
        if self.sys.solve_hook is not None:
            return self.sys.solve_hook(gh, v, rhs)
        if self.cfg.jacobian is Jacobian.HookOnly:
            raise NewtonDivergence("system has no solve hook and finite differences are disabled")
        fixed = lambda y: y - gh * self._fn(y, v) - rhs
        return _newton(fixed, rhs if guess is None else guess, self.cfg, self.stats)

    def solve_general(self, residual, guess):
        self.stats.solves += 1
        if self.cfg.jacobian is Jacobian.HookOnly:
            raise NewtonDivergence("stage needs Newton but finite differences are disabled")
        return _newton(residual, guess, self.cfg, self.stats)

    def _fn(self, u, v):
        self.stats.newton_evals += 1
        return self.sys.eval_f(u, v)


def _newton(residual, guess, cfg: SolverConfig, stats: Stats):
    y = np.array(guess, dtype=float, copy=True)
    n = y.size
    eps = np.sqrt(np.finfo(float).eps)
    r = residual(y)
    scale = max(1.0, float(np.max(np.abs(y)))) if n else 1.0
    for _ in range(cfg.max_iter):
        stats.newton_iters += 1
        J = np.empty((n, n))
        for j in range(n):
            d = eps * max(1.0, abs(y[j]))
            yp = y.copy()
            yp[j] += d
            J[:, j] = (residual(yp) - r) / d
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError as exc:
            raise NewtonDivergence(f"singular Jacobian: {exc}") from exc
        norm0 = np.linalg.norm(r)
        lam = 1.0
        while True:
            y_new = y + lam * step
            r_new = residual(y_new)
            if np.linalg.norm(r_new) <= (1 - 1e-4 * lam) * norm0 or lam < 1e-4:
                break
            lam *= 0.5
        y, r = y_new, r_new
        if np.max(np.abs(lam * step)) <= cfg.tol * scale or np.max(np.abs(r)) <= cfg.tol * scale * 1e-2:
            return y
    raise NewtonDivergence(f"Newton did not converge in {cfg.max_iter} iterations")


def _check_imex(t: NprkTensor):
    bad = t.imex_violations()
    if bad:
        raise NonIMEXTensor(f"coefficients {bad[:5]} break the IMEX pattern")


def step_generic(t: NprkTensor, sys: PartitionedSystem, y, h: float, cfg: SolverConfig | None = None,
                 stats: Stats | None = None):
    """One step of an IMEX NPRK tensor method evaluated stage by stage."""
    cfg = cfg or SolverConfig()
    stats = stats if stats is not None else Stats()
    _check_imex(t)
    cs = _Counted(sys, cfg, stats)
    s = t.s
    y = np.asarray(y, dtype=float)
    Y = [None] * s
    cache = {}

    def F(j, k):
        key = (j, k)
        if key not in cache:
            cache[key] = cs.f(Y[j], Y[k])
        return cache[key]

    for i in range(s):
        acc = y.copy()
        for j, k in zip(*np.nonzero(t.a[i, :i])):
            acc = acc + h * t.a[i, j, k] * F(j, k)
        diag = np.nonzero(t.a[i, i])[0]
        if diag.size == 0:
            Y[i] = acc
        elif diag.size == 1:
            k = diag[0]
            Y[i] = cs.solve(h * t.a[i, i, k], Y[k], acc, guess=Y[i - 1] if i else y)
        else:
            coeffs = [(k, t.a[i, i, k]) for k in diag]

            def residual(z, acc=acc, coeffs=coeffs):
                out = z - acc
                for k, c in coeffs:
                    out = out - h * c * cs._fn(z, Y[k])
                return out

            Y[i] = cs.solve_general(residual, Y[i - 1] if i else y)
    out = y.copy()
    for i, j in zip(*np.nonzero(t.b)):
        out = out + h * t.b[i, j] * F(i, j)
    return out


def rk_step(t: ButcherTableau, g: Callable, y, h: float, keep=(), cfg: SolverConfig | None = None,
            stats: Stats | None = None, solve: Callable | None = None):
    """One classical RK step of ``w' = g(w)``.

    Returns ``(w1, stages, slopes)`` where ``stages``/``slopes`` hold the
    stage values and ``g`` evaluations for the 0-based indices in ``keep``.
    Diagonal entries need ``solve(gh, rhs)`` returning ``W = rhs + gh g(W)``.
    """
    y = np.asarray(y, dtype=float)
    A, b = t.A, t.b
    K = []
    kept_w, kept_k = {}, {}
    for i in range(t.s):
        w = y.copy()
        for j in range(i):
            if A[i, j] != 0:
                w = w + h * A[i, j] * K[j]
        if A[i, i] != 0:
            if solve is None:
                raise NonIMEXTensor("implicit tableau needs a solver")
            w = solve(h * A[i, i], w)
        k = g(w)
        K.append(k)
        if i in keep:
            kept_w[i] = w
            kept_k[i] = k
    out = y.copy()
    for i in range(t.s):
        if b[i] != 0:
            out = out + h * b[i] * K[i]
    return out, kept_w, kept_k


def step_rk(t: ButcherTableau, sys: PartitionedSystem, y, h: float, cfg: SolverConfig | None = None,
            stats: Stats | None = None):
    """Classical RK on the unpartitioned ``G(y) = F(y, y)``."""
    cfg = cfg or SolverConfig()
    stats = stats if stats is not None else Stats()
    cs = _Counted(sys, cfg, stats)
    g = lambda w: cs.f(w, w)

    def solve(gh, rhs):
        return cs.solve_general(lambda z: z - rhs - gh * cs._fn(z, z), rhs)

    return rk_step(t, g, y, h, solve=solve)[0]


def step_mr2(c: Mr2Coefficients, sys: PartitionedSystem, y, h: float, cfg: SolverConfig | None = None,
             stats: Stats | None = None):
    cfg = cfg or SolverConfig()
    stats = stats if stats is not None else Stats()
    cs = _Counted(sys, cfg, stats)
    y = np.asarray(y, dtype=float)
    gam = c.gamma
    ex = c.explicit_tableau
    last = ex.s - 1
    Y2 = cs.solve(h * gam, y, y)
    w1, W, K = rk_step(ex, lambda w: cs.f(Y2, w), y, h, keep=(last,))
    # F(Y2, W_{s2}) is the last explicit slope, so no extra evaluation is needed
    rhs = w1 - h * gam * K[last]
    return cs.solve(h * gam, W[last], rhs, guess=w1)


def _mr3_presolves(c: Mr3Coefficients, cs: _Counted, y, h):
    lam = c.lam
    Y2 = cs.solve(h * lam, y, y)
    f2n = cs.f(Y2, y)
    f22 = cs.f(Y2, Y2)
    a21 = c.sdirk.A[1, 0]
    rhs = y + h * ((a21 - c.a322) * f2n + c.a322 * f22)
    v = y if c.omega == 1 else Y2
    Y3 = cs.solve(h * lam, v, rhs, guess=Y2)
    return Y2, Y3, f2n


def step_mr3_v1(c: Mr3Coefficients, sys: PartitionedSystem, y, h: float, cfg: SolverConfig | None = None,
                stats: Stats | None = None):
    cfg = cfg or SolverConfig()
    stats = stats if stats is not None else Stats()
    cs = _Counted(sys, cfg, stats)
    y = np.asarray(y, dtype=float)
    ex = c.explicit_tableau
    s2 = ex.s
    lam = c.lam
    Y2, Y3, f2n = _mr3_presolves(c, cs, y, h)

    first = [True]

    def g(w):
        # the first explicit slope F(Y2, y_n) is already known
        if first[0]:
            first[0] = False
            return f2n
        return cs.f(Y2, w)

    w1, W, K = rk_step(ex, g, y, h, keep=(s2 - 2, s2 - 1))
    Wm, Wl = W[s2 - 2], W[s2 - 1]
    Km, Kl = K[s2 - 2], K[s2 - 1]
    # H(W_{s2-1}) = F(Y3, W_{s2-1}) - F(Y2, W_{s2-1}), the latter being Km
    Ysm1 = Wl + h * c.a_penult * (cs.f(Y3, Wm) - Km)
    f2s = cs.f(Y2, Ysm1)
    H_y = cs.f(Y3, y) - f2n
    H_s = cs.f(Y3, Ysm1) - f2s
    xi = w1 + h * (ex.b[-1] * (f2s - Kl) + c.as31 * H_y + c.as3sm1 * H_s - lam * f2s)
    return cs.solve(h * lam, Ysm1, xi, guess=Ysm1)


def step_mr3_v2(c: Mr3Coefficients, sys: PartitionedSystem, y, h: float, cfg: SolverConfig | None = None,
                stats: Stats | None = None):
    cfg = cfg or SolverConfig()
    stats = stats if stats is not None else Stats()
    cs = _Counted(sys, cfg, stats)
    y = np.asarray(y, dtype=float)
    ex = c.explicit_tableau
    s2 = ex.s
    lam, d = c.lam, c.delta
    Y2, Y3, f2n = _mr3_presolves(c, cs, y, h)
    f3n = cs.f(Y3, y)
    parts = {}
    first = [True]

    def g(w):
        if first[0]:
            first[0] = False
            f2, f3 = f2n, f3n
        else:
            f2, f3 = cs.f(Y2, w), cs.f(Y3, w)
        parts["f2"], parts["f3"] = f2, f3
        return (1 - d) * f2 + d * f3

    last = [None, None]

    def g_keep(w):
        k = g(w)
        last[0], last[1] = parts["f2"], parts["f3"]
        return k

    w1, W, _ = rk_step(ex, g_keep, y, h, keep=(s2 - 1,))
    Wl = W[s2 - 1]
    f2l, f3l = last
    H_y = f3n - f2n
    H_l = f3l - f2l
    bh = ex.b
    x = w1 + h * ((c.as31 - d * bh[0]) * H_y + (c.as3sm1 - d * bh[-1]) * H_l - lam * f2l)
    return cs.solve(h * lam, Wl, x, guess=Wl)


def step_mr3(c: Mr3Coefficients, sys, y, h, cfg=None, stats=None):
    fn = step_mr3_v1 if c.variant is Variant.V1 else step_mr3_v2
    return fn(c, sys, y, h, cfg, stats)


@dataclass
class StepDiagnostics:
    newton_iters: int
    evals: int
    solves: int


@dataclass
class IntegrationResult:
    y: np.ndarray
    steps: list = field(default_factory=list)
    totals: Stats = field(default_factory=Stats)


def integrate(stepper: Callable, sys: PartitionedSystem, y0, t0: float, t1: float, nsteps: int,
              cfg: SolverConfig | None = None) -> IntegrationResult:
    """Fixed-step integration; ``stepper(sys, y, h, cfg, stats)`` advances one step."""
    if nsteps < 1:
        raise ValueError("nsteps must be positive")
    cfg = cfg or SolverConfig()
    h = (t1 - t0) / nsteps
    y = np.array(y0, dtype=float, copy=True)
    res = IntegrationResult(y)
    for _ in range(nsteps):
        st = Stats()
        y = stepper(sys, y, h, cfg, st)
        if not np.all(np.isfinite(y)):
            raise NewtonDivergence("solution became non-finite")
        res.steps.append(StepDiagnostics(st.newton_iters, st.evals + st.newton_evals, st.solves))
        res.totals.add(st)
    res.y = y
    return res


def make_stepper(entry) -> Callable:
    """Stepper ``(sys, y, h, cfg, stats)`` for a resolved registry entry."""
    if entry.kind == "mr2":
        return lambda sys, y, h, cfg, st: step_mr2(entry.coefficients, sys, y, h, cfg, st)
    if entry.kind == "mr3":
        return lambda sys, y, h, cfg, st: step_mr3(entry.coefficients, sys, y, h, cfg, st)
    if entry.kind == "rk":
        return lambda sys, y, h, cfg, st: step_rk(entry.tableau, sys, y, h, cfg, st)
    return lambda sys, y, h, cfg, st: step_generic(entry.tensor, sys, y, h, cfg, st)
