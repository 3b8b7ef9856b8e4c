import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mrnprk import (
    AssumptionViolation,
    ButcherTableau,
    Coupling,
    NprkTensor,
    StageSets,
    UsageError,
    classify_coupling,
    compose,
    first_order_example,
    first_order_lstable,
    first_order_unstable,
    mr2,
    mr3,
    reduce,
    ssp2,
    ssp3,
    stage_sets,
    underlying_first,
    underlying_second,
    validate_sparsity,
)
from mrnprk.integrate import rk_step
from mrnprk.tableau import load_json


def test_example_underlying_methods_reduce_as_described():
    t = first_order_example()
    m1, kept1 = reduce(underlying_first(t))
    assert kept1 == (4,)
    assert np.allclose(m1.A, [[1.0]]) and np.allclose(m1.b, [1.0])  # backward Euler
    m2, kept2 = reduce(underlying_second(t))
    assert kept2 == (1, 2, 3)
    fe3 = compose(ButcherTableau(np.zeros((1, 1)), np.ones(1)), 3)
    assert m2.equals(fe3, 1e-15)


def test_abscissae_agree():
    for t in (first_order_example(), first_order_lstable(5), mr2(ssp2())[0], mr3(ssp3())[0]):
        # same coefficients summed in a different order
        assert np.allclose(underlying_first(t).c, underlying_second(t).c, rtol=0, atol=2e-16)


def test_irreducible_tableau_is_fixed_point():
    red, kept = reduce(ssp3())
    assert kept == (1, 2, 3)
    assert red.equals(ssp3(), 0.0)


def test_reduce_is_idempotent():
    for t in (first_order_example(), mr3(compose(ssp3(), 2))[0]):
        r1, _ = reduce(underlying_second(t))
        r2, kept = reduce(r1)
        assert r2.equals(r1, 0.0)
        assert kept == tuple(range(1, r1.s + 1))


def test_reduce_merges_duplicate_rows():
    A = np.array([[0.0, 0, 0], [0.5, 0, 0], [0.5, 0, 0]])
    red, kept = reduce(ButcherTableau(A, np.array([0.0, 0.3, 0.7])))
    assert red.s == 2 and kept == (1, 2)
    assert np.allclose(red.b, [0.0, 1.0])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_reduced_tableau_gives_same_step(seed):
    rng = np.random.default_rng(seed)
    t = underlying_second(mr3(compose(ssp3(), 2))[0])
    red, _ = reduce(t)
    L = rng.standard_normal((3, 3))
    y = rng.standard_normal(3)
    g = lambda w: L @ w + np.sin(w)
    full = rk_step(t, g, y, 0.1)[0]
    short = rk_step(red, g, y, 0.1)[0]
    assert np.allclose(full, short, rtol=1e-13, atol=1e-14)


def test_stage_sets_of_example():
    ss = stage_sets(first_order_example())
    assert ss.s1 == (4,) and ss.s2 == (1, 2, 3)


def test_single_stage_tensor():
    t = NprkTensor.from_entries(1, [], [(1, 1, 1.0)])
    ss = stage_sets(t)
    assert ss.s1 == ss.s2 == (1,)


def test_unused_stage_violates_union_assumption():
    # stage 2 is never read by the output in either underlying method
    t = NprkTensor.from_entries(2, [(2, 1, 1, 1.0)], [(1, 1, 1.0)])
    with pytest.raises(AssumptionViolation):
        stage_sets(t)


@pytest.mark.parametrize(
    "tensor, expected",
    [
        (first_order_example(), Coupling.FullyCoupled),
        (first_order_unstable(4), Coupling.FullyCoupled),
        (first_order_lstable(4), Coupling.FullyDecoupled),
        (mr2(compose(ssp2(), 4))[0], Coupling.FullyDecoupled),
        (mr3(ssp3())[0], Coupling.OneToTwo),
    ],
)
def test_coupling_classes(tensor, expected):
    assert classify_coupling(tensor, stage_sets(tensor)) is expected


def test_sparsity_report():
    t = mr2(ssp2())[0]
    assert validate_sparsity(t, Coupling.FullyDecoupled) == []
    bad = validate_sparsity(first_order_example(), Coupling.FullyDecoupled)
    assert bad and all(v.rule for v in bad)


def test_zero_tensor_has_clean_report():
    zero = NprkTensor(np.zeros((2, 2, 2)), np.zeros((2, 2)))
    for cls in Coupling:
        ss = StageSets(all=(1, 2), s1=(2,), s2=(1,), coupling=cls)
        assert validate_sparsity(zero, cls, ss=ss) == []


def test_compose_identity_and_two_substeps():
    assert compose(ssp2(), 1).equals(ssp2(), 0.0)
    c2 = compose(ssp2(), 2)
    A = [[0, 0, 0, 0], [0.5, 0, 0, 0], [0.25, 0.25, 0, 0], [0.25, 0.25, 0.5, 0]]
    assert np.array_equal(c2.A, A)
    assert np.array_equal(c2.b, [0.25] * 4)
    assert np.array_equal(c2.c, [0, 0.5, 0.5, 1])


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_compose_equals_substeps(m, seed):
    rng = np.random.default_rng(seed)
    L = rng.standard_normal((2, 2))
    g = lambda w: L @ w - w ** 3
    y = rng.standard_normal(2)
    h = 0.2
    ref = y
    for _ in range(m):
        ref = rk_step(ssp3(), g, ref, h / m)[0]
    out = rk_step(compose(ssp3(), m), g, y, h)[0]
    assert np.allclose(out, ref, rtol=1e-13, atol=1e-14)


def test_tableau_rejects_bad_abscissae():
    with pytest.raises(ValueError):
        ButcherTableau(np.array([[0.0, 0], [1, 0]]), np.array([0.5, 0.5]), c=np.array([0.0, 0.5]))


def test_json_round_trip(tmp_path):
    t = mr3(compose(ssp3(), 2))[0]
    doc = json.loads(json.dumps(t.to_json()))
    back = NprkTensor.from_json(doc)
    assert np.array_equal(back.a, t.a) and np.array_equal(back.b, t.b)
    p = tmp_path / "ssp3.json"
    p.write_text(json.dumps(ssp3().to_json()))
    assert load_json(p).equals(ssp3(), 0.0)


def test_malformed_json_is_usage_error():
    with pytest.raises(UsageError):
        NprkTensor.from_json({"s": 2, "a": [[1, 2]], "b": []})
    with pytest.raises(UsageError):
        NprkTensor.from_json({"s": 1, "a": [[1, 1, 1, 1.0]], "b": []})  # explicit slot on the diagonal
