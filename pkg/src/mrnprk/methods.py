"""Constructors for the concrete classical and multirate NPRK methods.

Every NPRK constructor returns a full :class:`NprkTensor`; the implicitly
wrapped families also return a small coefficient record that the optimized
steppers in :mod:`mrnprk.integrate` consume directly.
"""

from __future__ import annotations

import enum
import math
import re
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCoefficient, OrderPrerequisite, UsageError
from .tableau import ButcherTableau, NprkTensor, compose

LAMBDA_SEED = 0.43586652150845899941601945119356
PENALTY_WARN = 1e3


def _refine_lambda(x: float = LAMBDA_SEED) -> float:
    # root of p(z) = 1/6 - 3/2 z + 3 z^2 - z^3 near the seed
    for _ in range(8):
        p = 1.0 / 6.0 - 1.5 * x + 3.0 * x * x - x ** 3
        dp = -1.5 + 6.0 * x - 3.0 * x * x
        dx = p / dp
        x -= dx
        if abs(dx) < 1e-17:
            break
    return x


LAMBDA = _refine_lambda()


# ---------------------------------------------------------------------------
# classical tableaux


def forward_euler() -> ButcherTableau:
    return ButcherTableau([[0.0]], [1.0], name="euler")


def ssp2() -> ButcherTableau:
    return ButcherTableau([[0.0, 0.0], [1.0, 0.0]], [0.5, 0.5], name="ssp2")


def ssp3() -> ButcherTableau:
    A = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.25, 0.25, 0.0]]
    return ButcherTableau(A, [1 / 6, 1 / 6, 2 / 3], name="ssp3")


def sdirk3_lstable() -> ButcherTableau:
    """Three-stage, stiffly accurate, L-stable SDIRK of order 3."""
    lam = LAMBDA
    a31 = (-6 * lam ** 2 + 16 * lam - 1) / 4
    a32 = (6 * lam ** 2 - 20 * lam + 5) / 4
    A = np.array([
        [lam, 0.0, 0.0],
        [(1 - lam) / 2, lam, 0.0],
        [a31, a32, lam],
    ])
    # c is taken as row sums; the closed form c = (lam, (1+lam)/2, 1) agrees to rounding
    return ButcherTableau(A, A[2].copy(), name="sdirk3")


def _require_explicit(t: ButcherTableau, order: int):
    from .verify import classical_order_of

    if not t.is_explicit:
        raise OrderPrerequisite("base tableau must be explicit")
    got = classical_order_of(t)
    if got < order:
        raise OrderPrerequisite(f"base tableau has classical order {got}, need {order}")


class _Builder:
    """Accumulates 1-based tensor entries."""

    def __init__(self, s):
        self.s = s
        self.a = np.zeros((s, s, s))

    def add(self, i, j, k, v):
        self.a[i - 1, j - 1, k - 1] += v

    def stiffly_accurate(self, name, imex=True) -> NprkTensor:
        return NprkTensor(self.a, self.a[-1].copy(), imex=imex, name=name)


# ---------------------------------------------------------------------------
# first-order examples


def first_order_unstable(s2: int) -> NprkTensor:
    """Backward Euler wrapped around ``s2`` forward Euler substeps, fully coupled."""
    if s2 < 2:
        raise ValueError("s2 must be at least 2")
    s = s2 + 1
    B = _Builder(s)
    w = 1.0 / s2
    for i in range(2, s2 + 1):
        for j in range(1, i):
            B.add(i, 1, j, w)
    for j in range(1, s2):
        B.add(s, 1, j, w)
    B.add(s, 1, s2, -(s2 - 1) / s2)
    B.add(s, s, s2, 1.0)
    return B.stiffly_accurate(f"MR1-unstable-{s2}")


def first_order_example() -> NprkTensor:
    t = first_order_unstable(3)
    return NprkTensor(t.a, t.b, name="MR1-example")


def first_order_lstable(s2: int) -> NprkTensor:
    """First-order method with a two-stage L-stable DIRK as implicit part."""
    if s2 < 2:
        raise ValueError("s2 must be at least 2")
    s = s2 + 1
    B = _Builder(s)
    w = 1.0 / s2
    for i in range(2, s2 + 1):
        for j in range(1, i):
            B.add(i, 2, j, w)
    for j in range(1, s2):
        B.add(s, 2, j, w)
    B.add(s, 2, s2, w - 0.75)
    B.add(s, s, s2, 0.75)
    return B.stiffly_accurate(f"MR1-lstable-{s2}")


# ---------------------------------------------------------------------------
# second order


@dataclass(frozen=True)
class Mr2Coefficients:
    explicit_tableau: ButcherTableau
    gamma: float


def mr2_gamma(sign: int = -1) -> float:
    if sign not in (-1, 1):
        raise ValueError("sign must be -1 or +1")
    return (2 + sign * math.sqrt(2)) / 2


def mr2(explicit: ButcherTableau, sign: int = -1, name: str = ""):
    """Second-order implicitly wrapped method built on ``explicit``.

    ``sign=-1`` picks ``gamma = (2 - sqrt 2)/2`` (smaller error), ``+1`` the
    more damped root.
    """
    _require_explicit(explicit, 2)
    gamma = mr2_gamma(sign)
    Ah, bh = explicit.A, explicit.b
    s2 = explicit.s
    s = s2 + 2

    def idx(m):  # explicit stage (1-based) -> tensor stage
        return 1 if m == 1 else m + 1

    B = _Builder(s)
    B.add(2, 2, 1, gamma)
    for m in range(2, s2 + 1):
        for l in range(1, m):
            if Ah[m - 1, l - 1] != 0:
                B.add(idx(m), 2, idx(l), Ah[m - 1, l - 1])
    for l in range(1, s2 + 1):
        B.add(s, 2, idx(l), bh[l - 1])
    B.add(s, 2, s - 1, -gamma)
    B.add(s, s, s - 1, gamma)
    return B.stiffly_accurate(name), Mr2Coefficients(explicit, gamma)


# ---------------------------------------------------------------------------
# third order


class Variant(enum.Enum):
    V1 = 1
    V2 = 2


@dataclass(frozen=True)
class Mr3Coefficients:
    explicit_tableau: ButcherTableau
    omega: int
    variant: Variant
    lam: float
    a322: float
    a_penult: float
    as31: float
    as3sm1: float
    delta: float
    sdirk: ButcherTableau


def mr3_a322(omega: int) -> float:
    lam = LAMBDA
    base = (2 - 6 * lam) / (18 * lam ** 3 - 60 * lam ** 2 + 15 * lam)
    if omega == 1:
        return base
    if omega == 2:
        return base - lam
    raise ValueError("omega must be 1 or 2")


def mr3_delta() -> float:
    c1 = sdirk3_lstable().c
    return (1 - 3 * c1[0]) / (3 * (c1[1] - c1[0]))


def mr3_coefficients(explicit: ButcherTableau, omega: int = 2, variant: Variant = Variant.V1) -> Mr3Coefficients:
    variant = Variant(variant)
    sd = sdirk3_lstable()
    lam = LAMBDA
    c1 = sd.c
    a32 = sd.A[2, 1]
    bh = explicit.b
    cs2 = explicit.c[-1]
    bs2 = bh[-1]
    if cs2 == 0:
        raise DegenerateCoefficient("last abscissa of the explicit method is zero")
    den = (c1[0] - c1[1]) * cs2
    a322 = mr3_a322(omega)
    if variant is Variant.V1:
        if bs2 == 0:
            raise DegenerateCoefficient("last weight of the explicit method is zero")
        a_pen = (1 - 3 * c1[0]) / (6 * bs2 * (c1[1] - c1[0]))
        if abs(a_pen) > PENALTY_WARN:
            warnings.warn(f"coupling coefficient {a_pen:.3e} is large; consider variant V2",
                          RuntimeWarning, stacklevel=3)
        as31 = (1 / 3 - lam * cs2 + c1[0] * (lam * cs2 - 0.5) - a32 * (c1[1] - c1[0]) * cs2) / den
        as3sm1 = a32 - as31
        delta = 0.0
    else:
        a_pen = 0.0
        delta = mr3_delta()
        x1 = a32 - delta * (1 - bh[0] - bs2)
        x3 = bs2 - x1
        x4 = 0.5 - bs2 * cs2
        n1 = (1 - delta) * x4 + cs2 * (x3 - lam)
        n2 = delta * x4 + cs2 * x1
        as31 = (1 / 3 - lam * cs2 - c1[0] * n1 - c1[1] * n2) / den
        as3sm1 = a32 - as31 - delta * (1 - bh[0] - bs2)
    return Mr3Coefficients(explicit, omega, variant, lam, a322, a_pen, as31, as3sm1, delta, sd)


def mr3(explicit: ButcherTableau, omega: int = 2, variant: Variant = Variant.V1, name: str = ""):
    """Third-order implicitly wrapped method built on ``explicit``."""
    _require_explicit(explicit, 3)
    if explicit.s < 2:
        raise OrderPrerequisite("explicit method needs at least two stages")
    co = mr3_coefficients(explicit, omega, variant)
    Ah, bh = explicit.A, explicit.b
    s2 = explicit.s
    s = s2 + 3
    sd = co.sdirk
    lam = co.lam

    def idx(m):
        return 1 if m == 1 else m + 2

    B = _Builder(s)
    B.add(2, 2, 1, lam)
    B.add(3, 2, 1, sd.A[1, 0] - co.a322)
    B.add(3, 2, 2, co.a322)
    B.add(3, 3, omega, lam)

    v2 = co.variant is Variant.V2
    w2, w3 = (1 - co.delta, co.delta) if v2 else (1.0, 0.0)
    for m in range(2, s2 + 1):
        for l in range(1, m):
            v = Ah[m - 1, l - 1]
            if v == 0:
                continue
            B.add(idx(m), 2, idx(l), w2 * v)
            if w3:
                B.add(idx(m), 3, idx(l), w3 * v)
    if not v2:
        B.add(s - 1, 2, s - 2, -co.a_penult)
        B.add(s - 1, 3, s - 2, co.a_penult)

    B.add(s, 2, 1, bh[0] - co.as31)
    B.add(s, 3, 1, co.as31)
    for m in range(2, s2):
        B.add(s, 2, idx(m), w2 * bh[m - 1])
        if w3:
            B.add(s, 3, idx(m), w3 * bh[m - 1])
    B.add(s, 2, s - 1, bh[-1] - co.as3sm1 - lam)
    B.add(s, 3, s - 1, co.as3sm1)
    B.add(s, s, s - 1, lam)
    return B.stiffly_accurate(name), co


# ---------------------------------------------------------------------------
# registry


@dataclass(frozen=True)
class MethodEntry:
    """A resolved method name.

    ``kind`` is one of ``"rk"`` (classical tableau only), ``"mr2"``, ``"mr3"``
    or ``"tensor"`` (generic NPRK driven by :func:`step_generic`).
    """

    name: str
    kind: str
    tensor: NprkTensor | None = None
    tableau: ButcherTableau | None = None
    coefficients: object = None

    @property
    def nominal_order(self) -> int | None:
        return {"mr2": 2, "mr3": 3}.get(self.kind)


_PATTERNS = [
    (re.compile(r"^MR-NPRK2(p?)-\[ssp2-(\d+)x\]$"), "mr2"),
    (re.compile(r"^MR-NPRK3-([12])\[ssp3-(\d+)x\](-w1)?$"), "mr3"),
    (re.compile(r"^(ssp[23])-\[(\d+)x\]$"), "rk"),
    (re.compile(r"^MR1-(unstable|lstable)-(\d+)$"), "mr1"),
]


def resolve(name: str) -> MethodEntry:
    """Look up a registry name such as ``"MR-NPRK3-1[ssp3-4x]"``.

    ``MR-NPRK2p-...`` selects the plus-sign gamma and a trailing ``-w1`` on an
    MR-NPRK3 name selects ``omega = 1`` (the default is ``omega = 2``).
    """
    for pat, kind in _PATTERNS:
        m = pat.match(name)
        if not m:
            continue
        if kind == "mr2":
            base = compose(ssp2(), _positive(m.group(2)))
            t, co = mr2(base, +1 if m.group(1) else -1, name=name)
            return MethodEntry(name, "mr2", t, None, co)
        if kind == "mr3":
            base = compose(ssp3(), _positive(m.group(2)))
            variant = Variant(int(m.group(1)))
            omega = 1 if m.group(3) else 2
            t, co = mr3(base, omega, variant, name=name)
            return MethodEntry(name, "mr3", t, None, co)
        if kind == "rk":
            base = ssp2() if m.group(1) == "ssp2" else ssp3()
            tab = compose(base, _positive(m.group(2)))
            return MethodEntry(name, "rk", None, tab)
        s2 = int(m.group(2))
        if s2 < 2:
            raise UsageError(f"{name}: s2 must be at least 2")
        ctor = first_order_unstable if m.group(1) == "unstable" else first_order_lstable
        return MethodEntry(name, "tensor", ctor(s2))
    raise UsageError(f"unknown method name {name!r}")


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise UsageError("composition count must be positive")
    return v
