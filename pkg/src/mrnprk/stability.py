"""Joint linear stability of NPRK methods on the partitioned Dahlquist problem.

For ``F(u, v) = l1 u + l2 v`` one step multiplies ``y`` by

    R(z1, z2) = det(I - z1 A1 - z2 A2 + e (z1 b1 + z2 b2)^T) / det(I - z1 A1 - z2 A2)

where ``(A1, b1)`` and ``(A2, b2)`` are the underlying methods. Determinants are
taken through ``slogdet`` so that very large ``|z|`` does not overflow.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegreeMismatch, SingularDenominator
from .tableau import ButcherTableau, Coupling, NprkTensor, StageSets, underlying_first, underlying_second

TINY_Q = 1e-300
LOG_TINY_Q = np.log(TINY_Q)
MEMBER_TOL = 1e-12
CHUNK = 20000


@dataclass(frozen=True, eq=False)
class StabilityEvaluator:
    A1: np.ndarray
    A2: np.ndarray
    b1: np.ndarray
    b2: np.ndarray

    @classmethod
    def from_tensor(cls, t: NprkTensor) -> StabilityEvaluator:
        m1, m2 = underlying_first(t), underlying_second(t)
        return cls(m1.A, m2.A, m1.b, m2.b)

    @classmethod
    def from_tableau(cls, t: ButcherTableau) -> StabilityEvaluator:
        """Classical method seen as an NPRK with ``F(u, v) = G(u)``."""
        zero = np.zeros_like(t.A)
        return cls(t.A, zero, t.b, np.zeros_like(t.b))

    @property
    def s(self) -> int:
        return self.b1.size

    def _matrices(self, z1, z2):
        z1 = np.asarray(z1, dtype=complex)[..., None, None]
        z2 = np.asarray(z2, dtype=complex)[..., None, None]
        den = np.eye(self.s) - z1 * self.A1 - z2 * self.A2
        num = den + z1 * np.outer(np.ones(self.s), self.b1) + z2 * np.outer(np.ones(self.s), self.b2)
        return num, den

    def log_pq(self, z1, z2):
        """``(sign_P, log|P|, sign_Q, log|Q|)`` evaluated elementwise."""
        z1, z2 = np.broadcast_arrays(np.asarray(z1, dtype=complex), np.asarray(z2, dtype=complex))
        shape = z1.shape
        z1 = z1.ravel()
        z2 = z2.ravel()
        out = [np.empty(z1.size, dtype=complex), np.empty(z1.size),
               np.empty(z1.size, dtype=complex), np.empty(z1.size)]
        for lo in range(0, z1.size, CHUNK):
            sl = slice(lo, lo + CHUNK)
            num, den = self._matrices(z1[sl], z2[sl])
            sp, lp = np.linalg.slogdet(num)
            sq, lq = np.linalg.slogdet(den)
            out[0][sl], out[1][sl], out[2][sl], out[3][sl] = sp, lp, sq, lq
        return tuple(o.reshape(shape) for o in out)

    @property
    def stiffly_accurate(self) -> bool:
        return bool(np.array_equal(self.A1[-1], self.b1) and np.array_equal(self.A2[-1], self.b2))

    @property
    def lower_triangular(self) -> bool:
        return not (np.any(np.triu(self.A1, 1)) or np.any(np.triu(self.A2, 1)))

    def evaluate(self, z1, z2, strict: bool = True):
        """Vectorised ``R``; with ``strict=False`` singular points give ``inf``."""
        if self.lower_triangular:
            return self._evaluate_triangular(z1, z2, strict)
        return self.evaluate_det(z1, z2, strict)

    def _evaluate_triangular(self, z1, z2, strict):
        # det(M + e w^T) = det(M) (1 + w^T M^{-1} e), M lower triangular;
        # x = M^{-1} e holds the stage values of the linear problem
        z1, z2 = np.broadcast_arrays(np.asarray(z1, dtype=complex), np.asarray(z2, dtype=complex))
        shape = z1.shape
        z1 = z1.ravel()
        z2 = z2.ravel()
        diag = 1.0 - z1[:, None] * np.diag(self.A1)[None, :] - z2[:, None] * np.diag(self.A2)[None, :]
        singular = np.abs(diag).min(axis=1) == 0
        with np.errstate(under="ignore"):
            logq = np.sum(np.log(np.abs(np.where(diag == 0, 1.0, diag))), axis=1)
        singular |= logq < LOG_TINY_Q
        if strict and np.any(singular):
            raise SingularDenominator("stability denominator vanishes")
        x = np.zeros((z1.size, self.s), dtype=complex)
        safe = np.where(diag == 0, 1.0, diag)
        for i in range(self.s):
            acc = 1.0 + z1 * (x[:, :i] @ self.A1[i, :i]) + z2 * (x[:, :i] @ self.A2[i, :i])
            x[:, i] = acc / safe[:, i]
        if self.stiffly_accurate:
            # the output is the last stage; avoids cancellation of O(|z|) terms
            r = x[:, -1]
        else:
            r = 1.0 + z1 * (x @ self.b1) + z2 * (x @ self.b2)
        return np.where(singular, np.inf, r).reshape(shape)

    def evaluate_det(self, z1, z2, strict: bool = True):
        """``R`` as a ratio of determinants (any tableau structure)."""
        sp, lp, sq, lq = self.log_pq(z1, z2)
        singular = lq < LOG_TINY_Q
        if strict and np.any(singular):
            raise SingularDenominator("stability denominator vanishes")
        with np.errstate(over="ignore", invalid="ignore"):
            r = (sp / np.where(singular, 1.0, sq)) * np.exp(lp - np.where(singular, 0.0, lq))
        return np.where(singular, np.inf, r)


def r_eval(ev: StabilityEvaluator, z1, z2) -> complex:
    r = ev.evaluate(z1, z2)
    return complex(r) if np.ndim(r) == 0 else r


def stiff_limit(ev: StabilityEvaluator, z2, far: float = 1e14, near: float = 1e12):
    """Approximate ``lim R(z1, z2)`` as ``z1 -> -inf`` along the real axis.

    Returns the value at ``-far`` and a flag telling whether the values at
    ``-near`` and ``-far`` agree to 1% (relative to ``max(1, |R|)``).
    """
    r_near = complex(ev.evaluate(-near, z2))
    r_far = complex(ev.evaluate(-far, z2))
    converged = abs(r_near - r_far) / max(1.0, abs(r_far)) < 1e-2
    return r_far, converged


@dataclass(frozen=True, eq=False)
class RegionSlice:
    z1: complex
    re: np.ndarray
    im: np.ndarray
    mask: np.ndarray  # shape (len(im), len(re))
    modulus: np.ndarray

    @property
    def cell_area(self) -> float:
        dre = (self.re[-1] - self.re[0]) / (len(self.re) - 1) if len(self.re) > 1 else 0.0
        dim = (self.im[-1] - self.im[0]) / (len(self.im) - 1) if len(self.im) > 1 else 0.0
        return dre * dim

    @property
    def area(self) -> float:
        """Approximate area of the stable set: member count times cell area."""
        return float(self.mask.sum()) * self.cell_area


def region_slice(ev: StabilityEvaluator, z1, re_range=(-4.0, 1.0), im_range=(-4.0, 4.0),
                 n_re: int = 301, n_im: int = 301) -> RegionSlice:
    """Rasterise ``{z2 : max(|R(z1, z2)|, |R(conj z1, z2)|) <= 1}``."""
    re = np.linspace(re_range[0], re_range[1], n_re) if n_re > 0 else np.empty(0)
    im = np.linspace(im_range[0], im_range[1], n_im) if n_im > 0 else np.empty(0)
    z2 = re[None, :] + 1j * im[:, None]
    z1 = complex(z1)
    mod = np.abs(ev.evaluate(z1, z2, strict=False))
    if z1.imag != 0.0:
        mod = np.maximum(mod, np.abs(ev.evaluate(z1.conjugate(), z2, strict=False)))
    return RegionSlice(z1, re, im, mod <= 1.0 + MEMBER_TOL, mod)


# ---------------------------------------------------------------------------
# degrees

RAY_DIRECTION = np.exp(1j * 2.0943951023931953 * 1.1)  # generic direction, not on an axis
FIXED_Z1 = 0.37 - 0.61j
FIXED_Z2 = -0.43 + 0.29j


def fit_degree(logabs: np.ndarray, radii: np.ndarray) -> float:
    slope, _ = np.polyfit(np.log(radii), logabs, 1)
    return float(slope)


@dataclass(frozen=True)
class DegreeReport:
    deg_z1_num: int
    deg_z1_den: int
    deg_z2_num: int
    fits: dict = field(default_factory=dict)
    implicit_diagonals: int = 0
    den_matches_diagonals: bool = True
    num_z1_bound: int = 0
    num_z2_bound: int = 0
    num_within_bounds: bool = True

    def to_json(self) -> dict:
        return {
            "deg_z1_num": self.deg_z1_num,
            "deg_z1_den": self.deg_z1_den,
            "deg_z2_num": self.deg_z2_num,
            "fits": self.fits,
            "implicit_diagonals": self.implicit_diagonals,
            "den_matches_diagonals": self.den_matches_diagonals,
            "num_z1_bound": self.num_z1_bound,
            "num_z2_bound": self.num_z2_bound,
            "num_within_bounds": self.num_within_bounds,
        }


def numerator_bounds(ss: StageSets) -> tuple[int, int]:
    """Upper bounds on the numerator degree in ``z1`` and ``z2`` for the coupling class."""
    s, s1, s2 = len(ss.all), len(ss.s1), len(ss.s2)
    return {
        Coupling.FullyDecoupled: (s1, s2),
        Coupling.OneToTwo: (s1, s),
        Coupling.TwoToOne: (s, s2),
        Coupling.FullyCoupled: (s, s),
    }[ss.coupling]


def degree_report(ev: StabilityEvaluator, ss: StageSets, radii=None, tol: float = 0.05) -> DegreeReport:
    """Fit polynomial degrees of ``P`` and ``Q`` from log-log slopes along rays.

    Raises :class:`DegreeMismatch` if a slope is further than ``tol`` from an
    integer.
    """
    radii = np.logspace(6, 10, 9) if radii is None else np.asarray(radii, dtype=float)
    z = radii * RAY_DIRECTION
    _, lp1, _, lq1 = ev.log_pq(z, FIXED_Z2)
    _, lp2, _, _ = ev.log_pq(FIXED_Z1, z)
    fits = {
        "z1_num": fit_degree(lp1, radii),
        "z1_den": fit_degree(lq1, radii),
        "z2_num": fit_degree(lp2, radii),
    }
    degs = {}
    for key, val in fits.items():
        d = int(round(val))
        if abs(val - d) > tol:
            raise DegreeMismatch(f"{key} slope {val:.4f} is not close to an integer")
        degs[key] = d
    diag = int(np.count_nonzero(np.diag(ev.A1)))
    b1, b2 = numerator_bounds(ss)
    return DegreeReport(
        deg_z1_num=degs["z1_num"],
        deg_z1_den=degs["z1_den"],
        deg_z2_num=degs["z2_num"],
        fits=fits,
        implicit_diagonals=diag,
        den_matches_diagonals=degs["z1_den"] == diag,
        num_z1_bound=b1,
        num_z2_bound=b2,
        num_within_bounds=degs["z1_num"] <= b1 and degs["z2_num"] <= b2,
    )
