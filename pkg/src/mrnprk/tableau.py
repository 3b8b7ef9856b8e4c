"""Coefficient containers for classical and nonlinearly partitioned RK methods.

Stage indices exposed through the public API (``kept`` sets, :class:`StageSets`,
sparsity reports, JSON files) are 1-based to match the usual tableau notation.
Arrays are 0-based as always in numpy.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AssumptionViolation, UsageError

DUPLICATE_TOL = 1e-14


def _frozen(x) -> np.ndarray:
    arr = np.array(x, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ButcherTableau:
    """Classical Runge--Kutta coefficients ``(A, b, c)``.

    ``c`` defaults to the row sums of ``A``; passing an inconsistent ``c``
    raises ``ValueError``.
    """

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray = None
    name: str = ""

    def __post_init__(self):
        A = _frozen(self.A)
        b = _frozen(self.b)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or b.shape != (A.shape[0],):
            raise ValueError(f"inconsistent tableau shapes A{A.shape} b{b.shape}")
        if A.shape[0] < 1:
            raise ValueError("tableau needs at least one stage")
        rowsum = A.sum(axis=1)
        if self.c is None:
            c = _frozen(rowsum)
        else:
            c = _frozen(self.c)
            if c.shape != b.shape or not np.allclose(c, rowsum, rtol=0, atol=1e-12):
                raise ValueError("abscissae c must equal the row sums of A")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def s(self) -> int:
        return self.b.size

    @property
    def is_explicit(self) -> bool:
        return not np.any(np.triu(self.A))

    @property
    def is_diagonally_implicit(self) -> bool:
        """True when ``A`` is lower triangular (explicit methods included)."""
        return not np.any(np.triu(self.A, 1))

    @property
    def is_stiffly_accurate(self) -> bool:
        return bool(np.array_equal(self.A[-1], self.b))

    def equals(self, other: ButcherTableau, tol: float = 0.0) -> bool:
        if self.s != other.s:
            return False
        return bool(
            np.allclose(self.A, other.A, rtol=0, atol=tol)
            and np.allclose(self.b, other.b, rtol=0, atol=tol)
        )

    def stability(self, z):
        """Classical stability function ``1 + z b^T (I - zA)^{-1} e``."""
        z = np.asarray(z, dtype=complex)
        eye = np.eye(self.s)
        num = np.linalg.det(eye - z[..., None, None] * (self.A - np.outer(np.ones(self.s), self.b)))
        den = np.linalg.det(eye - z[..., None, None] * self.A)
        return num / den

    def to_json(self) -> dict:
        return {"A": self.A.tolist(), "b": self.b.tolist(), "c": self.c.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> ButcherTableau:
        try:
            return cls(np.array(doc["A"], dtype=float), np.array(doc["b"], dtype=float),
                       np.array(doc["c"], dtype=float) if "c" in doc else None)
        except (KeyError, TypeError) as exc:
            raise UsageError(f"malformed tableau document: {exc}") from exc


@dataclass(frozen=True, eq=False)
class NprkTensor:
    """Stage tensor ``a[i, j, k]`` and output matrix ``b[i, j]`` of an NPRK method.

    Storage is dense; :meth:`entries` gives the sparse view used by the JSON
    format and the sparsity checks.
    """

    a: np.ndarray
    b: np.ndarray
    imex: bool = True
    name: str = ""

    def __post_init__(self):
        a = _frozen(self.a)
        b = _frozen(self.b)
        s = b.shape[0] if b.ndim == 2 else -1
        if s < 1 or b.shape != (s, s) or a.shape != (s, s, s):
            raise ValueError(f"inconsistent tensor shapes a{a.shape} b{b.shape}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        if self.imex:
            bad = self.imex_violations()
            if bad:
                raise ValueError(f"IMEX sparsity violated at {bad[:5]}")

    @property
    def s(self) -> int:
        return self.b.shape[0]

    @property
    def c(self) -> np.ndarray:
        return self.a.sum(axis=(1, 2))

    @classmethod
    def from_entries(cls, s: int, a_entries, b_entries, imex: bool = True, name: str = "") -> NprkTensor:
        """Build from 1-based ``(i, j, k, value)`` and ``(i, j, value)`` triples.

        Repeated indices accumulate.
        """
        a = np.zeros((s, s, s))
        b = np.zeros((s, s))
        for i, j, k, v in a_entries:
            _check_index(s, i, j, k)
            a[i - 1, j - 1, k - 1] += v
        for i, j, v in b_entries:
            _check_index(s, i, j)
            b[i - 1, j - 1] += v
        return cls(a, b, imex=imex, name=name)

    def entries(self):
        """Nonzero coefficients as 1-based ``(a_entries, b_entries)`` lists."""
        a_entries = [(int(i) + 1, int(j) + 1, int(k) + 1, float(self.a[i, j, k]))
                     for i, j, k in zip(*np.nonzero(self.a))]
        b_entries = [(int(i) + 1, int(j) + 1, float(self.b[i, j]))
                     for i, j in zip(*np.nonzero(self.b))]
        return a_entries, b_entries

    def imex_violations(self):
        s = self.s
        i, j, k = np.indices((s, s, s))
        bad = (self.a != 0) & ((j > i) | (k >= i))
        return [(int(p) + 1, int(q) + 1, int(r) + 1) for p, q, r in zip(*np.nonzero(bad))]

    def implicit_stages(self):
        """0-based indices of stages with some ``a[i, i, k] != 0``."""
        return [i for i in range(self.s) if np.any(self.a[i, i])]

    @property
    def is_stiffly_accurate(self) -> bool:
        return bool(np.array_equal(self.a[-1], self.b))

    def to_json(self) -> dict:
        a_entries, b_entries = self.entries()
        return {"s": self.s, "a": [list(e) for e in a_entries], "b": [list(e) for e in b_entries]}

    @classmethod
    def from_json(cls, doc: dict, name: str = "") -> NprkTensor:
        try:
            s = int(doc["s"])
            a_entries = [(int(i), int(j), int(k), float(v)) for i, j, k, v in doc["a"]]
            b_entries = [(int(i), int(j), float(v)) for i, j, v in doc["b"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"malformed tensor document: {exc}") from exc
        imex = bool(doc.get("imex", True))
        try:
            return cls.from_entries(s, a_entries, b_entries, imex=imex, name=name)
        except (ValueError, IndexError) as exc:
            raise UsageError(str(exc)) from exc


def _check_index(s, *idx):
    for v in idx:
        if not 1 <= v <= s:
            raise IndexError(f"stage index {v} outside [1, {s}]")


def load_json(path) -> NprkTensor | ButcherTableau:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    if "A" in doc:
        return ButcherTableau.from_json(doc)
    return NprkTensor.from_json(doc, name=path.stem)


# ---------------------------------------------------------------------------
# underlying methods and reduction


def underlying_first(t: NprkTensor) -> ButcherTableau:
    """Classical method obtained when ``F(u, v) = G(u)``."""
    return ButcherTableau(t.a.sum(axis=2), t.b.sum(axis=1), name=f"{t.name}:M1")


def underlying_second(t: NprkTensor) -> ButcherTableau:
    """Classical method obtained when ``F(u, v) = G(v)``."""
    return ButcherTableau(t.a.sum(axis=1), t.b.sum(axis=0), name=f"{t.name}:M2")


def underlying(t: NprkTensor, r: int) -> ButcherTableau:
    if r == 1:
        return underlying_first(t)
    if r == 2:
        return underlying_second(t)
    raise ValueError("r must be 1 or 2")


def _reachable(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    used = b != 0
    frontier = used.copy()
    while frontier.any():
        nxt = (A[frontier] != 0).any(axis=0) & ~used
        used |= nxt
        frontier = nxt
    return used


def _first_duplicate(A: np.ndarray):
    s = A.shape[0]
    for i in range(s):
        for j in range(i + 1, s):
            if np.array_equal(A[i], A[j]) or np.allclose(A[i], A[j], rtol=0, atol=DUPLICATE_TOL):
                return i, j
    return None


def reduce(t: ButcherTableau) -> tuple[ButcherTableau, tuple[int, ...]]:
    """Remove unused stages and merge equivalent ones until nothing changes.

    Returns the reduced tableau and the 1-based indices of the surviving
    stages (a merged duplicate is represented by its lowest index).
    """
    A = np.array(t.A)
    b = np.array(t.b)
    kept = np.arange(1, t.s + 1)
    while True:
        used = _reachable(A, b)
        if not used.any():
            # zero method: keep a single stage so the tableau stays valid
            used[0] = True
        changed = not used.all()
        A = A[np.ix_(used, used)]
        b = b[used]
        kept = kept[used]
        dup = _first_duplicate(A)
        if dup is not None:
            i, j = dup
            A[:, i] += A[:, j]
            b[i] += b[j]
            keep = np.ones(A.shape[0], dtype=bool)
            keep[j] = False
            A = A[np.ix_(keep, keep)]
            b = b[keep]
            kept = kept[keep]
            changed = True
        if not changed:
            break
    return ButcherTableau(A, b, name=t.name), tuple(int(k) for k in kept)


# ---------------------------------------------------------------------------
# stage sets and timescale coupling


class Coupling(enum.Enum):
    FullyDecoupled = "fully-decoupled"
    OneToTwo = "1->2"
    TwoToOne = "2->1"
    FullyCoupled = "fully-coupled"


@dataclass(frozen=True)
class StageSets:
    """1-based stage index sets ``S``, ``S^{1}``, ``S^{2}`` plus coupling class."""

    all: tuple[int, ...]
    s1: tuple[int, ...]
    s2: tuple[int, ...]
    coupling: Coupling = Coupling.FullyCoupled

    @property
    def overlap(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.s1) & set(self.s2)))

    @property
    def is_multirate(self) -> bool:
        return len(self.s1) != len(self.s2)

    def mask(self, which: str, s: int) -> np.ndarray:
        idx = {"all": self.all, "s1": self.s1, "s2": self.s2}[which]
        m = np.zeros(s, dtype=bool)
        m[np.asarray(idx, dtype=int) - 1] = True
        return m


def stage_sets(t: NprkTensor) -> StageSets:
    """Irreducible stage sets of both underlying methods and the coupling class.

    Raises :class:`AssumptionViolation` if some stage is reducible in both
    underlying methods.
    """
    _, s1 = reduce(underlying_first(t))
    _, s2 = reduce(underlying_second(t))
    full = tuple(range(1, t.s + 1))
    missing = sorted(set(full) - set(s1) - set(s2))
    if missing:
        raise AssumptionViolation(
            f"stages {missing} are reducible in both underlying methods (S1={s1}, S2={s2})"
        )
    ss = StageSets(full, s1, s2)
    return StageSets(full, s1, s2, classify_coupling(t, ss))


def _allowed(t: NprkTensor, ss: StageSets):
    """Boolean masks of the allowable index sets for each coupling class."""
    s = t.s
    in1 = ss.mask("s1", s)
    in2 = ss.mask("s2", s)
    a_empty = in1[None, :, None] & in2[None, None, :] & np.ones((s, 1, 1), dtype=bool)
    a_12 = in1[:, None, None] & in1[None, :, None] & in1[None, None, :]
    a_21 = in2[:, None, None] & in2[None, :, None] & in2[None, None, :]
    b_empty = in1[:, None] & in2[None, :]
    return a_empty, a_12, a_21, b_empty


def classify_coupling(t: NprkTensor, ss: StageSets) -> Coupling:
    """Tightest coupling class whose allowable sets hold every nonzero coefficient."""
    a_empty, a_12, a_21, b_empty = _allowed(t, ss)
    nz_a = t.a != 0
    nz_b = t.b != 0
    if np.any(nz_b & ~b_empty):
        return Coupling.FullyCoupled
    if not np.any(nz_a & ~a_empty):
        return Coupling.FullyDecoupled
    if not np.any(nz_a & ~(a_empty | a_12)):
        return Coupling.OneToTwo
    if not np.any(nz_a & ~(a_empty | a_21)):
        return Coupling.TwoToOne
    return Coupling.FullyCoupled


@dataclass(frozen=True)
class SparsityViolation:
    kind: str  # "a" or "b"
    index: tuple[int, ...]
    value: float
    rule: str


def validate_sparsity(t: NprkTensor, claimed: Coupling, ss: StageSets | None = None) -> list[SparsityViolation]:
    """Coefficients that break the zero pattern implied by ``claimed``.

    Rules (``nu`` in S1, ``g`` in S2, others free):

    * fully decoupled: ``a[i,g,k] = 0``, ``a[i,j,nu] = 0``
    * 1->2: ``a[i,g,k] = 0``, ``a[g,j,nu] = 0``
    * 2->1: ``a[nu,g,k] = 0``, ``a[i,j,nu] = 0``
    * all three: ``b[g,k] = 0 = b[j,nu]``

    A fully coupled claim implies nothing, so the report is empty.
    """
    if claimed is Coupling.FullyCoupled:
        return []
    if ss is None:
        ss = stage_sets(t)
    s = t.s
    in1 = ss.mask("s1", s)
    in2 = ss.mask("s2", s)
    anyi = np.ones(s, dtype=bool)
    if claimed is Coupling.FullyDecoupled:
        rules = [("a[i,g,k]=0", anyi, in2, anyi), ("a[i,j,nu]=0", anyi, anyi, in1)]
    elif claimed is Coupling.OneToTwo:
        rules = [("a[i,g,k]=0", anyi, in2, anyi), ("a[g,j,nu]=0", in2, anyi, in1)]
    else:
        rules = [("a[nu,g,k]=0", in1, in2, anyi), ("a[i,j,nu]=0", anyi, anyi, in1)]
    out = []
    for i, j, k in zip(*np.nonzero(t.a)):
        for rule, mi, mj, mk in rules:
            if mi[i] and mj[j] and mk[k]:
                out.append(SparsityViolation("a", (int(i) + 1, int(j) + 1, int(k) + 1),
                                             float(t.a[i, j, k]), rule))
                break
    for i, j in zip(*np.nonzero(t.b)):
        if in2[i]:
            out.append(SparsityViolation("b", (int(i) + 1, int(j) + 1), float(t.b[i, j]), "b[g,k]=0"))
        elif in1[j]:
            out.append(SparsityViolation("b", (int(i) + 1, int(j) + 1), float(t.b[i, j]), "b[j,nu]=0"))
    return out


# ---------------------------------------------------------------------------
# composition


def compose(base: ButcherTableau, m: int) -> ButcherTableau:
    """Tableau equivalent to ``m`` substeps of ``base`` with step ``h/m``."""
    if m < 1:
        raise ValueError("m must be a positive integer")
    s = base.s
    A = np.zeros((s * m, s * m))
    B = np.outer(np.ones(s), base.b)
    for p in range(m):
        rows = slice(p * s, (p + 1) * s)
        A[rows, rows] = base.A / m
        for q in range(p):
            A[rows, q * s:(q + 1) * s] = B / m
    b = np.tile(base.b, m) / m
    c = np.concatenate([(p + base.c) / m for p in range(m)])
    return ButcherTableau(A, b, c, name=f"{base.name}-[{m}x]" if base.name else "")
