"""Acceptance criteria, one test per criterion.

Each criterion is a function returning ``(ok, detail)``; the tests assert on
``ok`` and log a PASS/FAIL line that is printed in the terminal summary.
Run the file directly (``python3 tests/test_acceptance.py``) to get the same
lines without pytest.
"""

import time

import numpy as np
import pytest

from mrnprk import (
    DegreeMismatch,
    Variant,
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
)
from mrnprk.harness import ExperimentConfig, cmd_converge, lsq_slope, rel_l2, resolve_method
from mrnprk.integrate import PartitionedSystem, Stats, integrate, make_stepper, rk_step, step_generic, step_mr2, step_mr3, step_rk
from mrnprk.problems import (
    BurgersConfig,
    GridFunction,
    burgers_nld,
    dahlquist,
    diffusion_apply,
    grid,
    linear_partition,
    product_partition,
    weno5_advection,
)
from mrnprk.stability import StabilityEvaluator, degree_report, region_slice
from mrnprk.verify import order4_probe, order_of

TITLES = {
    1: "order conditions",
    2: "oracle equivalence",
    3: "reduction behaviour",
    4: "convergence slopes",
    5: "stiff-limit stability",
    6: "degree checks",
    7: "stability-region trend",
    8: "spatial operators",
    9: "determinism",
}

STIFF_Z2 = [0.0, -2.0, -10.0, 4j, -1 + 4j]


def order_cases():
    cases = [(first_order_example(), 1)]
    cases += [(first_order_unstable(s2), 1) for s2 in (2, 4, 8)]
    cases += [(first_order_lstable(s2), 1) for s2 in (2, 4, 8, 32)]
    cases += [(mr2(compose(ssp2(), m))[0], 2) for m in (1, 2, 4, 8, 16)]
    for m in (1, 2, 4):
        for omega in (1, 2):
            for variant in Variant:
                cases.append((mr3(compose(ssp3(), m), omega=omega, variant=variant)[0], 3))
    return cases


def criterion_1():
    worst_below, weakest_above, bad = 0.0, np.inf, []
    for t, p in order_cases():
        _, rows = order_of(t)
        below = max(abs(r.residual) for r in rows if r.order <= p)
        if p < 3:
            above = max(abs(r.residual) for r in rows if r.order == p + 1)
        else:
            above = max(abs(r) for _, r in order4_probe(t))
        worst_below = max(worst_below, below)
        weakest_above = min(weakest_above, above)
        if not (below < 1e-10 and above > 1e-3):
            bad.append(t.name)
    ok = not bad
    return ok, (f"{len(order_cases())} methods, max residual at/below order {worst_below:.1e}, "
                f"smallest max residual at order+1 {weakest_above:.1e}" + (f"; failing {bad}" if bad else ""))


def fast_cases():
    out = [("MR2[ssp2-4x]", *mr2(compose(ssp2(), 4)))]
    for variant in Variant:
        for omega in (1, 2):
            out.append((f"MR3-{variant.value}[ssp3-4x] w{omega}", *mr3(compose(ssp3(), 4), omega=omega, variant=variant)))
    return out


def criterion_2():
    rng = np.random.default_rng(2024)
    L1 = -np.eye(4) + 0.4 * rng.standard_normal((4, 4))
    L2 = 0.6 * rng.standard_normal((4, 4))
    systems = [(product_partition(), lambda: rng.uniform(0.2, 2.0, 1)),
               (linear_partition(L1, L2), lambda: rng.standard_normal(4))]
    worst = 0.0
    for _, t, c in fast_cases():
        fast = step_mr2 if hasattr(c, "gamma") else step_mr3
        for sys, draw in systems:
            for _ in range(10):
                y, h = draw(), rng.uniform(0.01, 0.5)
                a = step_generic(t, sys, y, h)
                b = fast(c, sys, y, h)
                worst = max(worst, np.linalg.norm(a - b) / np.linalg.norm(a))
    return worst <= 1e-11, f"max relative difference {worst:.1e} over {len(fast_cases())} steppers x 2 systems x 10 steps"


def criterion_3():
    g = lambda w: np.sin(w) - 0.3 * w ** 3
    y = np.array([0.8, -0.4, 1.3])
    h = 0.2
    worst_v = worst_u = 0.0
    for m in (1, 2, 4, 8):
        t, c = mr2(compose(ssp2(), m))
        # F(u, v) = G(v): m substeps of SSP2
        ref = y
        for _ in range(m):
            ref = rk_step(ssp2(), g, ref, h / m)[0]
        out = step_mr2(c, PartitionedSystem(3, lambda u, v: g(v)), y, h)
        worst_v = max(worst_v, np.max(np.abs(out - ref)) / np.max(np.abs(ref)))
        # F(u, v) = G(u): the reduced two-stage DIRK
        dirk, _ = reduce(underlying_first(t))
        sys_u = PartitionedSystem(3, lambda u, v: g(u))
        ref = step_rk(dirk, sys_u, y, h)
        out = step_mr2(c, sys_u, y, h)
        worst_u = max(worst_u, np.max(np.abs(out - ref)) / np.max(np.abs(ref)))
    ok = worst_v <= 1e-12 and worst_u <= 1e-12
    return ok, f"G(v): {worst_v:.1e}, G(u) vs reduced DIRK: {worst_u:.1e} (m = 1, 2, 4, 8)"


DAHLQUIST_N = [20, 40, 80, 160, 320]
BURGERS_N = [800, 1600, 3200, 6400]
BURGERS_REF = ("ssp3-[4x]", 12800)
CONVERGENCE = [("MR-NPRK2-[ssp2-4x]", 2), ("MR-NPRK3-1[ssp3-4x]", 3), ("MR-NPRK3-2[ssp3-4x]", 3)]


def criterion_4():
    start = time.perf_counter()
    sys = dahlquist(-2.0, -1.0)
    y0 = np.array([1.0])
    exact = sys.exact(1.0, y0)
    parts, ok = [], True
    for name, p in CONVERGENCE:
        st = make_stepper(resolve_method(name))
        errs = [rel_l2(integrate(st, sys, y0, 0.0, 1.0, n).y - exact, exact) for n in DAHLQUIST_N]
        slope = lsq_slope(DAHLQUIST_N, errs)
        ok &= abs(slope - p) <= 0.1
        parts.append(f"{name} {slope:.3f}")
    dq = "Dahlquist: " + ", ".join(parts)
    bsys = burgers_nld(BurgersConfig(n=100, t_final=1.0))
    ref_name, ref_n = BURGERS_REF
    ref = integrate(make_stepper(resolve_method(ref_name)), bsys, bsys.y0, 0.0, 1.0, ref_n).y
    parts = []
    for name, p in CONVERGENCE:
        st = make_stepper(resolve_method(name))
        errs = [rel_l2(integrate(st, bsys, bsys.y0, 0.0, 1.0, n).y - ref, ref) for n in BURGERS_N]
        slope = lsq_slope(BURGERS_N, errs)
        ok &= abs(slope - p) <= 0.3
        parts.append(f"{name} {slope:.3f}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 120.0
    return ok, f"{dq}; Burgers: " + ", ".join(parts) + f"; {elapsed:.0f} s"


def lstable_methods():
    out = [(f"MR1-lstable-{s2}", first_order_lstable(s2)) for s2 in (4, 8, 32)]
    out.append(("MR2[ssp2-1x]", mr2(ssp2())[0]))
    out.append(("MR2[ssp2-4x]", mr2(compose(ssp2(), 4))[0]))
    for variant in Variant:
        out.append((f"MR3-{variant.value}[ssp3-1x]", mr3(ssp3(), variant=variant)[0]))
        out.append((f"MR3-{variant.value}[ssp3-4x]", mr3(compose(ssp3(), 4), variant=variant)[0]))
    return out


def criterion_5():
    worst = 0.0
    for _, t in lstable_methods():
        ev = StabilityEvaluator.from_tensor(t)
        worst = max(worst, float(np.max(np.abs(ev.evaluate(-1e12, np.array(STIFF_Z2))))))
    limit = complex(StabilityEvaluator.from_tensor(first_order_unstable(4)).evaluate(-1e12, -3.0))
    ok = worst < 1e-6 and abs(limit) > 1
    return ok, f"max |R(-1e12, z2)| = {worst:.1e} over {len(lstable_methods())} methods; MR1-unstable-4 at z2=-3: |R| = {abs(limit):.6f}"


def criterion_6():
    cases = [("MR1-unstable-4", first_order_unstable(4), 1, False),
             ("MR1-lstable-4", first_order_lstable(4), 2, True),
             ("MR1-lstable-8", first_order_lstable(8), 2, True),
             ("MR2[ssp2-4x]", mr2(compose(ssp2(), 4))[0], 2, True)]
    for variant in Variant:
        cases.append((f"MR3-{variant.value}[ssp3-2x]", mr3(compose(ssp3(), 2), variant=variant)[0], 3, True))
    ok, parts, worst_fit = True, [], 0.0
    for name, t, q, thm in cases:
        try:
            rep = degree_report(StabilityEvaluator.from_tensor(t), stage_sets(t))
        except DegreeMismatch as exc:
            ok = False
            parts.append(f"{name}: {exc}")
            continue
        worst_fit = max(worst_fit, max(abs(v - round(v)) for v in rep.fits.values()))
        good = rep.deg_z1_den == q and rep.den_matches_diagonals and (not thm or rep.deg_z1_num <= q - 1)
        ok &= good
        parts.append(f"{name} Q{rep.deg_z1_den}/P{rep.deg_z1_num}")
    return ok, ", ".join(parts) + f"; worst fit offset {worst_fit:.1e}"


WINDOW = dict(re_range=(-4.0, 1.0), im_range=(-4.0, 4.0), n_re=201, n_im=201)


def areas(t, z1s):
    ev = StabilityEvaluator.from_tensor(t)
    return [region_slice(ev, z1, **WINDOW).area for z1 in z1s]


def criterion_7():
    a0, a100, a10k = areas(first_order_lstable(4), [0.0, -100.0, -10000.0])
    trend = a10k > a100 > a0
    small = areas(first_order_lstable(4), [0.0])[0]
    big = areas(first_order_lstable(32), [0.0])[0]
    growth = big >= 6 * small
    return trend and growth, (f"lstable(4) areas P(0)={a0:.3f} P(-100)={a100:.3f} P(-1e4)={a10k:.3f} "
                              f"(full raster = 40.401); area P(0) s2=32 / s2=4 = {big / small:.3f}")


def criterion_8():
    ns = [80, 160, 320]
    werr, derr = [], []
    for n in ns:
        x, dx = grid(n)
        v = 1 + 0.1 * np.sin(np.pi * x / 2)
        exact_w = 2 * v * 0.1 * (np.pi / 2) * np.cos(np.pi * x / 2)
        w = weno5_advection(GridFunction(v, dx), GridFunction(np.ones(n), dx)).values
        werr.append(np.max(np.abs(w - exact_w)))
        a = 0.5 + 2.0 * np.exp(-((x - 1.0) ** 2) / 25.0)
        u = np.sin(np.pi * x / 2)
        d = diffusion_apply(GridFunction(np.ones(n), dx), GridFunction(u, dx), GridFunction(a, dx)).values
        derr.append(np.max(np.abs(d + a * (np.pi / 2) ** 2 * u)))
    ws, ds = lsq_slope(ns, werr), lsq_slope(ns, derr)
    sysb = burgers_nld(BurgersConfig(n=100))
    x, dx = sysb.x, sysb.dx
    flux_sum = abs(diffusion_apply(GridFunction(sysb.y0, dx), GridFunction(np.sin(np.pi * x / 2), dx),
                                   GridFunction(np.ones(100), dx)).values.sum())
    ok = ws >= 4.5 and ds >= 1.9 and flux_sum <= 1e-13
    return ok, f"WENO slope {ws:.3f}, diffusion slope {ds:.3f}, |sum| with a=1: {flux_sum:.1e}"


def criterion_9(tmp_dir):
    doc = {"methods": ["MR-NPRK2-[ssp2-2x]", "MR-NPRK3-1[ssp3-2x]", "MR-NPRK3-2[ssp3-1x]-w1"],
           "problem": {"id": "burgers", "n": 32}, "t1": 0.05, "nsteps": [20, 40],
           "reference_factor": 4}
    files = []
    for tag in ("first", "second"):
        out = tmp_dir / tag
        cmd_converge(ExperimentConfig.from_dict(dict(doc, out=str(out))))
        files.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    same = files[0] == files[1] and len(files[0]) == 4
    return same, f"{len(files[0])} files compared byte for byte"


def run(n, log, *args):
    start = time.perf_counter()
    ok, detail = globals()[f"criterion_{n}"](*args)
    line = f"C{n} {'PASS' if ok else 'FAIL'} {TITLES[n]}: {detail} [{time.perf_counter() - start:.1f} s]"
    log.append(line)
    print(line)
    return ok, line


@pytest.mark.parametrize("n", range(1, 9))
def test_criterion(n, acceptance_log):
    ok, line = run(n, acceptance_log)
    assert ok, line


def test_criterion_9(tmp_path, acceptance_log):
    ok, line = run(9, acceptance_log, tmp_path)
    assert ok, line


if __name__ == "__main__":
    import tempfile
    from pathlib import Path

    lines = []
    for k in range(1, 9):
        run(k, lines)
    with tempfile.TemporaryDirectory() as d:
        run(9, lines, Path(d))
