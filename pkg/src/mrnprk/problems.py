"""Test problems with nonlinear partitions ``F(u, v)``."""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, solve_banded

from .errors import SolveFailure
from .integrate import PartitionedSystem

WENO_EPS = 1e-6
DOMAIN = (-2.0, 2.0)
DENSE_BELOW = 32


# ---------------------------------------------------------------------------
# scalar / linear problems


def dahlquist(l1, l2) -> PartitionedSystem:
    """``F(u, v) = l1 u + l2 v`` (real coefficients)."""
    l1 = float(l1)
    l2 = float(l2)

    def f(u, v):
        return l1 * u + l2 * v

    def hook(gh, v, rhs):
        den = 1.0 - gh * l1
        if den == 0:
            raise SolveFailure("singular scalar solve")
        return (rhs + gh * l2 * v) / den

    def exact(t, y0=1.0):
        return np.atleast_1d(np.asarray(y0, dtype=float) * np.exp((l1 + l2) * t))

    return PartitionedSystem(1, f, hook, exact, name=f"dahlquist({l1},{l2})")


def product_partition() -> PartitionedSystem:
    """``y' = -y^2`` split as ``F(u, v) = -u v``."""

    def f(u, v):
        return -u * v

    def hook(gh, v, rhs):
        den = 1.0 + gh * v
        if np.any(den == 0):
            raise SolveFailure("singular scalar solve")
        return rhs / den

    def exact(t, y0=1.0):
        y0 = np.asarray(y0, dtype=float)
        return np.atleast_1d(y0 / (1.0 + y0 * t))

    return PartitionedSystem(1, f, hook, exact, name="product")


def linear_partition(L1: np.ndarray, L2: np.ndarray, name: str = "linear") -> PartitionedSystem:
    """``F(u, v) = L1 u + L2 v`` for square matrices."""
    L1 = np.asarray(L1, dtype=float)
    L2 = np.asarray(L2, dtype=float)
    n = L1.shape[0]
    eye = np.eye(n)

    def f(u, v):
        return L1 @ u + L2 @ v

    def hook(gh, v, rhs):
        try:
            return np.linalg.solve(eye - gh * L1, rhs + gh * (L2 @ v))
        except np.linalg.LinAlgError as exc:
            raise SolveFailure(str(exc)) from exc

    return PartitionedSystem(n, f, hook, None, name=name)


# ---------------------------------------------------------------------------
# grid operators


@dataclass(frozen=True, eq=False)
class GridFunction:
    values: np.ndarray
    dx: float

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function has non-finite entries")
        object.__setattr__(self, "values", vals)


def grid(n: int) -> tuple[np.ndarray, float]:
    """Periodic nodes ``x_i = -2 + i dx`` on ``[-2, 2)``."""
    dx = (DOMAIN[1] - DOMAIN[0]) / n
    return DOMAIN[0] + dx * np.arange(n), dx


def diffusion_coefficient(x):
    return 0.5 + 2.0 * np.exp(-((x - 1.0) ** 2) / 25.0)


def advection_coefficient(x):
    return np.exp(-((x + 1.0) ** 2) / 25.0)


@functools.lru_cache(maxsize=None)
def _neighbours(n: int):
    """Periodic index arrays ``(i+1, i-1)``."""
    i = np.arange(n)
    return (i + 1) % n, (i - 1) % n


def _face_k(v):
    k = np.sqrt(np.abs(v))
    right, _ = _neighbours(v.size)
    return 0.5 * (k + k[right])  # k_{i+1/2}


def _diffusion(v, u, a, dx):
    right, left = _neighbours(u.size)
    q = _face_k(v) * (u[right] - u) / dx  # q_{i+1/2}
    return a * (q - q[left]) / dx


def diffusion_apply(v: GridFunction, u: GridFunction, a_coef: GridFunction) -> GridFunction:
    """``a (k(v) u_x)_x`` in flux form with ``k(v) = |v|^(1/2)`` averaged to faces."""
    return GridFunction(_diffusion(v.values, u.values, a_coef.values, v.dx), v.dx)


def _weno_left(fm2, fm1, f0, fp1, fp2):
    """Fifth-order reconstruction at the right face of the centre cell."""
    q0 = (2 * fm2 - 7 * fm1 + 11 * f0) / 6
    q1 = (-fm1 + 5 * f0 + 2 * fp1) / 6
    q2 = (2 * f0 + 5 * fp1 - fp2) / 6
    d0 = fm2 - 2 * fm1 + f0
    d1 = fm1 - 2 * f0 + fp1
    d2 = f0 - 2 * fp1 + fp2
    e0 = fm2 - 4 * fm1 + 3 * f0
    e1 = fm1 - fp1
    e2 = 3 * f0 - 4 * fp1 + fp2
    b0 = WENO_EPS + 13 / 12 * d0 * d0 + 0.25 * e0 * e0
    b1 = WENO_EPS + 13 / 12 * d1 * d1 + 0.25 * e1 * e1
    b2 = WENO_EPS + 13 / 12 * d2 * d2 + 0.25 * e2 * e2
    w0 = 0.1 / (b0 * b0)
    w1 = 0.6 / (b1 * b1)
    w2 = 0.3 / (b2 * b2)
    return (w0 * q0 + w1 * q1 + w2 * q2) / (w0 + w1 + w2)


@functools.lru_cache(maxsize=None)
def _weno_stencil(n: int) -> np.ndarray:
    """Indices into ``[g-, g+]`` (length ``2n``) of shape ``(5, 2, n)``."""
    i = np.arange(n)
    minus = np.stack([(i + k) % n for k in (-2, -1, 0, 1, 2)])
    plus = np.stack([(i + k) % n + n for k in (3, 2, 1, 0, -1)])
    return np.stack([minus, plus], axis=1)


def _weno_derivative(v, dx):
    """WENO-5 approximation of ``(v^2)_x``, upwinded for ``u_t = +(v^2)_x``.

    With the plus sign the characteristic speed is ``-2v``, so the roles of
    the split fluxes are swapped relative to ``u_t + (v^2)_x = 0``: the part
    ``g-`` is reconstructed from the left and ``g+`` from the right.
    """
    g = v * v
    alpha = float(np.max(np.abs(2.0 * v))) if v.size else 0.0
    # row 0 of the stencil: g- read left to right; row 1: g+ read right to left
    split = np.concatenate([0.5 * (g - alpha * v), 0.5 * (g + alpha * v)])
    faces = _weno_left(*split[_weno_stencil(v.size)])
    flux = faces[0] + faces[1]  # at i+1/2
    return (flux - flux[_neighbours(v.size)[1]]) / dx


def weno5_advection(v: GridFunction, b_coef: GridFunction) -> GridFunction:
    """``b (v^2)_x`` with WENO-5 (Jiang-Shu) and global Lax-Friedrichs splitting."""
    return GridFunction(b_coef.values * _weno_derivative(v.values, v.dx), v.dx)


def _cyclic_tridiag_solve(lower, diag, upper, rhs):
    """Solve a periodic tridiagonal system.

    Row ``i`` reads ``lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]``
    with indices taken modulo ``n``.
    """
    n = diag.size
    if n < DENSE_BELOW:
        M = np.diag(diag) + np.diag(lower[1:], -1) + np.diag(upper[:-1], 1)
        M[0, -1] += lower[0]
        M[-1, 0] += upper[-1]
        try:
            x = np.linalg.solve(M, rhs)
        except np.linalg.LinAlgError as exc:
            raise SolveFailure(str(exc)) from exc
        return x
    alpha = lower[0]  # coefficient of x[n-1] in row 0
    beta = upper[-1]  # coefficient of x[0] in row n-1
    gamma = -diag[0] if diag[0] != 0 else 1.0
    d = diag.astype(float).copy()
    d[0] -= gamma
    d[-1] -= alpha * beta / gamma
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = d
    ab[2, :-1] = lower[1:]
    u = np.zeros(n)
    u[0] = gamma
    u[-1] = beta
    try:
        sol = solve_banded((1, 1), ab, np.column_stack([rhs, u]), check_finite=False)
    except (LinAlgError, ValueError) as exc:
        raise SolveFailure(f"tridiagonal solve failed: {exc}") from exc
    y, z = sol[:, 0], sol[:, 1]
    vy = y[0] + alpha / gamma * y[-1]
    vz = z[0] + alpha / gamma * z[-1]
    den = 1.0 + vz
    if den == 0 or not np.all(np.isfinite(sol)):
        raise SolveFailure("cyclic tridiagonal system is singular")
    return y - (vy / den) * z


class IC(enum.Enum):
    TwoGaussian = "two"
    ThreeGaussian = "three"


def initial_condition(ic, x) -> np.ndarray:
    ic = IC(ic) if not isinstance(ic, IC) else ic
    u = 0.01 + np.exp(-60.0 * (x + 1.5) ** 2) + np.exp(-60.0 * x ** 2)
    if ic is IC.ThreeGaussian:
        u = u + np.exp(-60.0 * (x - 1.5) ** 2)
    return u


@dataclass
class BurgersConfig:
    n: int = 300
    t_final: float = 5.0
    ic: IC = IC.TwoGaussian

    def __post_init__(self):
        self.ic = IC(self.ic)
        if self.n < 16:
            raise ValueError("need at least 16 grid points")


def burgers_nld(cfg: BurgersConfig | None = None) -> PartitionedSystem:
    """Burgers with nonlinear diffusion, ``F(u, v) = a D[v] u + b W(v)``.

    The diffusion is implicit in ``u`` with the conductivity frozen at ``v``,
    so the stage equation is a periodic tridiagonal linear system.
    """
    cfg = cfg or BurgersConfig()
    x, dx = grid(cfg.n)
    a = diffusion_coefficient(x)
    b = advection_coefficient(x)
    inv = 1.0 / (dx * dx)

    def f(u, v):
        return _diffusion(v, u, a, dx) + b * _weno_derivative(v, dx)

    def hook(gh, v, rhs):
        kp = _face_k(v)
        km = kp[_neighbours(cfg.n)[1]]
        lower = -gh * a * km * inv
        upper = -gh * a * kp * inv
        diag = 1.0 + gh * a * (kp + km) * inv
        return _cyclic_tridiag_solve(lower, diag, upper, rhs + gh * b * _weno_derivative(v, dx))

    sys = PartitionedSystem(cfg.n, f, hook, None, name=f"burgers-n{cfg.n}")
    sys.x = x
    sys.dx = dx
    sys.a = a
    sys.b = b
    sys.y0 = initial_condition(cfg.ic, x)
    return sys
