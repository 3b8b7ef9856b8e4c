"""Order conditions up to order three for NPRK tensors and classical tableaux."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tableau import ButcherTableau, Coupling, NprkTensor, StageSets, stage_sets

# (tree id, order, density)
TREES = (
    ("F", 1, 1),
    ("F1[F]", 2, 2),
    ("F2[F]", 2, 2),
    ("F11[F,F]", 3, 3),
    ("F12[F,F]", 3, 3),
    ("F22[F,F]", 3, 3),
    ("F1[F1[F]]", 3, 6),
    ("F1[F2[F]]", 3, 6),
    ("F2[F1[F]]", 3, 6),
    ("F2[F2[F]]", 3, 6),
)
TREE_IDS = tuple(t[0] for t in TREES)
DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class TreeCondition:
    tree: str
    order: int
    phi: float
    gamma: int

    @property
    def target(self) -> float:
        return 1.0 / self.gamma

    @property
    def residual(self) -> float:
        return self.phi - self.target


def _weights(a: np.ndarray, b: np.ndarray) -> dict:
    r = a.sum(axis=(1, 2))
    return {
        "F": b.sum(),
        "F1[F]": np.einsum("ij,i->", b, r),
        "F2[F]": np.einsum("ij,j->", b, r),
        "F11[F,F]": np.einsum("ij,i,i->", b, r, r),
        "F12[F,F]": np.einsum("ij,i,j->", b, r, r),
        "F22[F,F]": np.einsum("ij,j,j->", b, r, r),
        "F1[F1[F]]": np.einsum("ij,ikl,k->", b, a, r),
        "F1[F2[F]]": np.einsum("ij,ikl,l->", b, a, r),
        "F2[F1[F]]": np.einsum("ij,jkl,k->", b, a, r),
        "F2[F2[F]]": np.einsum("ij,jkl,l->", b, a, r),
    }


def elementary_weight(t: NprkTensor, tree: str) -> float:
    """Elementary weight of ``tree`` summed over the full stage set."""
    if tree not in TREE_IDS:
        raise KeyError(f"unknown tree {tree!r}")
    return float(_weights(t.a, t.b)[tree])


def residual_table(t: NprkTensor) -> list[TreeCondition]:
    w = _weights(t.a, t.b)
    return [TreeCondition(tid, order, float(w[tid]), gamma) for tid, order, gamma in TREES]


def _order_from(rows, tol) -> int:
    p = 0
    for order in (1, 2, 3):
        if all(abs(r.residual) < tol for r in rows if r.order == order):
            p = order
        else:
            break
    return p


def order_of(t: NprkTensor, tol: float = DEFAULT_TOL):
    """Largest ``p <= 3`` such that every condition of order ``<= p`` holds to ``tol``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    rows = residual_table(t)
    return _order_from(rows, tol), rows


def classical_residuals(t: ButcherTableau) -> list[tuple[str, int, float]]:
    b, c, A = t.b, t.c, t.A
    return [
        ("b.e", 1, float(b.sum() - 1.0)),
        ("b.c", 2, float(b @ c - 0.5)),
        ("b.c^2", 3, float(b @ (c * c) - 1.0 / 3.0)),
        ("b.Ac", 3, float(b @ (A @ c) - 1.0 / 6.0)),
    ]


def classical_order_of(t: ButcherTableau, tol: float = DEFAULT_TOL) -> int:
    res = classical_residuals(t)
    p = 0
    for order in (1, 2, 3):
        if all(abs(r) < tol for _, o, r in res if o == order):
            p = order
        else:
            break
    return p


def index_masks(ss: StageSets, s: int, coupling: Coupling | None = None):
    """Masks ``(A_mask[i,k,l], B_mask[i,j])`` of the restricted index sets."""
    coupling = ss.coupling if coupling is None else coupling
    full = np.ones(s, dtype=bool)
    if coupling is Coupling.FullyCoupled:
        return np.ones((s, s, s), dtype=bool), np.ones((s, s), dtype=bool)
    in1 = ss.mask("s1", s)
    in2 = ss.mask("s2", s)
    if coupling is Coupling.FullyDecoupled:
        I1 = np.tile(in1, (s, 1))
        I2 = np.tile(in2, (s, 1))
    elif coupling is Coupling.OneToTwo:
        I1 = np.tile(in1, (s, 1))
        I2 = np.where(in1[:, None], full[None, :], in2[None, :])
    else:
        I1 = np.where(in2[:, None], full[None, :], in1[None, :])
        I2 = np.tile(in2, (s, 1))
    A_mask = I1[:, :, None] & I2[:, None, :]
    B_mask = in1[:, None] & in2[None, :]
    return A_mask, B_mask


def restricted_weights(t: NprkTensor, ss: StageSets | None = None, coupling: Coupling | None = None) -> dict:
    """Elementary weights with sums limited to the coupling class index sets.

    ``coupling`` overrides the class stored in ``ss``; useful to test a
    claimed class against a tensor that does not honour it.
    """
    ss = stage_sets(t) if ss is None else ss
    A_mask, B_mask = index_masks(ss, t.s, coupling)
    return {k: float(v) for k, v in _weights(t.a * A_mask, t.b * B_mask).items()}


def index_set_reduction_check(t: NprkTensor, tol: float = 1e-13, ss: StageSets | None = None,
                              coupling: Coupling | None = None) -> bool:
    """True if restricting the sums to the index sets leaves every weight unchanged."""
    ss = stage_sets(t) if ss is None else ss
    full = _weights(t.a, t.b)
    red = restricted_weights(t, ss, coupling)
    return all(abs(full[k] - red[k]) <= tol for k in TREE_IDS)


def classical_order4_residuals(t: ButcherTableau) -> list[tuple[str, float]]:
    """The four classical fourth-order conditions."""
    b, c, A = t.b, t.c, t.A
    return [
        ("b.c^3", float(b @ c ** 3 - 0.25)),
        ("b.(c*Ac)", float(b @ (c * (A @ c)) - 0.125)),
        ("b.Ac^2", float(b @ (A @ c ** 2) - 1.0 / 12.0)),
        ("b.AAc", float(b @ (A @ (A @ c)) - 1.0 / 24.0)),
    ]


def order4_probe(t: NprkTensor) -> list[tuple[str, float]]:
    """A subset of the NPRK fourth-order conditions.

    When ``F`` depends on one argument only, the NPRK method is its underlying
    classical method, so the classical fourth-order conditions of both
    underlying methods are NPRK fourth-order conditions too. Useful for
    showing that a third-order method is not accidentally of order four.
    """
    from .tableau import underlying_first, underlying_second

    out = []
    for tag, m in (("M1", underlying_first(t)), ("M2", underlying_second(t))):
        out.extend((f"{tag}:{name}", r) for name, r in classical_order4_residuals(m))
    return out
