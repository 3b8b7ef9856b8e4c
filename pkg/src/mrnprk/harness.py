"""Experiment drivers behind the command line interface.

Every command writes CSV files (header row, ``%.16e`` numbers) plus an
``index.json`` summary into the output directory. Nothing time dependent is
written, so identical configurations give byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import UsageError
from .integrate import SolverConfig, integrate, make_stepper
from .methods import MethodEntry, resolve
from .problems import BurgersConfig, IC, burgers_nld, dahlquist, product_partition
from .stability import StabilityEvaluator, degree_report, region_slice, stiff_limit
from .tableau import ButcherTableau, NprkTensor, load_json, stage_sets
from .verify import classical_residuals, order_of

FMT = "%.16e"
DEFAULT_STABILITY = {
    "re": [-4.0, 1.0],
    "im": [-4.0, 4.0],
    "n_re": 301,
    "n_im": 301,
    "z1": [0.0, -100.0, -10000.0],
    "z2_limits": [0.0, -2.0, -10.0, [0.0, 4.0], [-1.0, 4.0]],
}


@dataclass
class ExperimentConfig:
    methods: list
    problem: dict = field(default_factory=lambda: {"id": "dahlquist", "l1": -2.0, "l2": -1.0})
    nsteps: list = field(default_factory=lambda: [20, 40, 80, 160, 320])
    t0: float = 0.0
    t1: float = 1.0
    y0: object = None
    cost_ratio: float = 4.0
    reference_factor: int = 64
    reference_method: str | None = None
    out: str = "out"
    stability: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.methods:
            raise UsageError("at least one method is required")
        ns = [int(n) for n in self.nsteps]
        if not ns or any(n < 1 for n in ns) or any(b <= a for a, b in zip(ns, ns[1:])):
            raise UsageError("nsteps must be positive and strictly increasing")
        self.nsteps = ns
        st = dict(DEFAULT_STABILITY)
        st.update(self.stability or {})
        self.stability = st

    @classmethod
    def from_dict(cls, doc: dict, **overrides) -> ExperimentConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        data = dict(doc)
        data.update({k: v for k, v in overrides.items() if v is not None})
        data.setdefault("methods", [])
        try:
            return cls(**data)
        except TypeError as exc:
            raise UsageError(str(exc)) from exc

    @classmethod
    def load(cls, path, **overrides) -> ExperimentConfig:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise UsageError("config must be a JSON object")
        return cls.from_dict(doc, **overrides)


# ---------------------------------------------------------------------------
# helpers


def resolve_method(name: str) -> MethodEntry:
    """Registry name or path to a JSON tensor/tableau file."""
    if name.endswith(".json"):
        obj = load_json(name)
        if isinstance(obj, ButcherTableau):
            return MethodEntry(name, "rk", None, obj)
        return MethodEntry(name, "tensor", obj)
    return resolve(name)


def safe_name(name: str) -> str:
    stem = Path(name).stem if name.endswith(".json") else name
    return re.sub(r"[^A-Za-z0-9._-]+", "_", stem).strip("_") or "method"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, str):
        return v
    return FMT % float(v)


def write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())


def write_index(out: Path, doc: dict) -> None:
    (out / "index.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _outdir(cfg_out) -> Path:
    out = Path(cfg_out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def build_problem(spec: dict):
    """Returns ``(system, y0)`` for a problem description."""
    pid = spec.get("id")
    if pid == "dahlquist":
        sys = dahlquist(spec.get("l1", -2.0), spec.get("l2", -1.0))
        return sys, np.array([float(spec.get("y0", 1.0))])
    if pid == "product":
        return product_partition(), np.array([float(spec.get("y0", 1.0))])
    if pid == "burgers":
        try:
            bc = BurgersConfig(n=int(spec.get("n", 300)), t_final=float(spec.get("t_final", 5.0)),
                               ic=IC(spec.get("ic", "two")))
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        sys = burgers_nld(bc)
        return sys, sys.y0.copy()
    raise UsageError(f"unknown problem id {pid!r}")


def _solver(cfg: ExperimentConfig) -> SolverConfig:
    try:
        return SolverConfig(**cfg.solver)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad solver settings: {exc}") from exc


def rel_l2(err: np.ndarray, ref: np.ndarray) -> float:
    den = np.linalg.norm(ref)
    return float(np.linalg.norm(err) / (den if den > 0 else 1.0))


def lsq_slope(nsteps, errors) -> float | None:
    """Least-squares convergence order from ``log(error)`` against ``log(h)``."""
    if len(nsteps) < 2:
        return None
    h = 1.0 / np.asarray(nsteps, dtype=float)
    e = np.asarray(errors, dtype=float)
    if np.any(e <= 0):
        return None
    return float(np.polyfit(np.log(h), np.log(e), 1)[0])


# ---------------------------------------------------------------------------
# commands


def cmd_verify(cfg: ExperimentConfig) -> dict:
    out = _outdir(cfg.out)
    index = {"command": "verify", "methods": {}}
    for name in cfg.methods:
        entry = resolve_method(name)
        fname = safe_name(name) + ".csv"
        if entry.tensor is not None:
            order, rows = order_of(entry.tensor)
            write_csv(out / fname, ["tree_id", "phi", "target", "residual"],
                      [(r.tree, r.phi, r.target, r.residual) for r in rows])
        else:
            from .verify import classical_order_of

            res = classical_residuals(entry.tableau)
            order = classical_order_of(entry.tableau)
            targets = {"b.e": 1.0, "b.c": 0.5, "b.c^2": 1 / 3, "b.Ac": 1 / 6}
            write_csv(out / fname, ["tree_id", "phi", "target", "residual"],
                      [(k, r + targets[k], targets[k], r) for k, _, r in res])
        index["methods"][name] = {"file": fname, "order": order}
    write_index(out, index)
    return index


def _reference(entry, sys, y0, cfg, solver, cache):
    """Exact solution when known, else a fine run of ``reference_method``
    (shared by all methods) or of the method itself."""
    if sys.exact is not None:
        return sys.exact(cfg.t1 - cfg.t0, y0), "exact"
    n_ref = cfg.reference_factor * max(cfg.nsteps)
    if cfg.reference_method:
        if "shared" not in cache:
            ref_entry = resolve_method(cfg.reference_method)
            res = integrate(make_stepper(ref_entry), sys, y0, cfg.t0, cfg.t1, n_ref, solver)
            cache["shared"] = res.y
        return cache["shared"], f"{cfg.reference_method}-{n_ref}"
    res = integrate(make_stepper(entry), sys, y0, cfg.t0, cfg.t1, n_ref, solver)
    return res.y, f"self-{n_ref}"


def _study(cfg: ExperimentConfig):
    sys, y0 = build_problem(cfg.problem)
    if cfg.y0 is not None:
        y0 = np.atleast_1d(np.asarray(cfg.y0, dtype=float))
    solver = _solver(cfg)
    cache = {}
    for name in cfg.methods:
        entry = resolve_method(name)
        ref, how = _reference(entry, sys, y0, cfg, solver, cache)
        stepper = make_stepper(entry)
        runs = []
        for n in cfg.nsteps:
            res = integrate(stepper, sys, y0, cfg.t0, cfg.t1, n, solver)
            runs.append((n, (cfg.t1 - cfg.t0) / n, rel_l2(res.y - ref, ref), res.totals))
        yield name, how, runs


def cmd_converge(cfg: ExperimentConfig) -> dict:
    out = _outdir(cfg.out)
    index = {"command": "converge", "problem": cfg.problem, "methods": {}}
    for name, how, runs in _study(cfg):
        rows = []
        for k, (n, h, err, _) in enumerate(runs):
            order = None
            if k > 0 and err > 0 and runs[k - 1][2] > 0:
                order = math.log(runs[k - 1][2] / err) / math.log(n / runs[k - 1][0])
            rows.append((n, h, err, order))
        fname = safe_name(name) + ".csv"
        write_csv(out / fname, ["nsteps", "h", "error", "observed_order"], rows)
        slope = lsq_slope([r[0] for r in runs], [r[2] for r in runs])
        index["methods"][name] = {"file": fname, "reference": how,
                                  "slope": None if slope is None else FMT % slope}
    write_index(out, index)
    return index


def cmd_work_precision(cfg: ExperimentConfig) -> dict:
    out = _outdir(cfg.out)
    index = {"command": "work-precision", "problem": cfg.problem, "cost_ratio": cfg.cost_ratio, "methods": {}}
    for name, how, runs in _study(cfg):
        rows = [(n, h, st.evals + st.newton_evals, st.solves, (st.evals + st.newton_evals) + cfg.cost_ratio * st.solves, err)
                for n, h, err, st in runs]
        fname = safe_name(name) + ".csv"
        write_csv(out / fname, ["nsteps", "h", "evals", "solves", "cost", "error"], rows)
        index["methods"][name] = {"file": fname, "reference": how}
    write_index(out, index)
    return index


def _as_complex(v) -> complex:
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise UsageError(f"complex value must be [re, im], got {v}")
        return complex(float(v[0]), float(v[1]))
    return complex(float(v))


def _complex_json(z: complex):
    return [FMT % z.real, FMT % z.imag]


def cmd_stability(cfg: ExperimentConfig) -> dict:
    out = _outdir(cfg.out)
    st = cfg.stability
    index = {"command": "stability", "window": {k: st[k] for k in ("re", "im", "n_re", "n_im")}, "methods": {}}
    for name in cfg.methods:
        entry = resolve_method(name)
        if entry.tensor is not None:
            ev = StabilityEvaluator.from_tensor(entry.tensor)
        else:
            ev = StabilityEvaluator.from_tableau(entry.tableau)
        info = {"slices": []}
        for z1 in st["z1"]:
            z1 = _as_complex(z1)
            sl = region_slice(ev, z1, tuple(st["re"]), tuple(st["im"]), int(st["n_re"]), int(st["n_im"]))
            fname = f"{safe_name(name)}_z1_{z1.real:g}_{z1.imag:g}.csv"
            re_g, im_g = np.meshgrid(sl.re, sl.im)
            write_csv(out / fname, ["re_z2", "im_z2", "abs_R", "member"],
                      zip(re_g.ravel(), im_g.ravel(), sl.modulus.ravel(), sl.mask.ravel().astype(int)))
            info["slices"].append({"z1": _complex_json(z1), "file": fname, "area": FMT % sl.area})
        limits = []
        for z2 in st["z2_limits"]:
            z2 = _as_complex(z2)
            val, conv = stiff_limit(ev, z2)
            limits.append({"z2": _complex_json(z2), "limit": _complex_json(val),
                           "abs": FMT % abs(val), "converged": bool(conv)})
        info["stiff_limits"] = limits
        if entry.tensor is not None:
            rep = degree_report(ev, stage_sets(entry.tensor))
            d = rep.to_json()
            d["fits"] = {k: FMT % v for k, v in d["fits"].items()}
            info["degrees"] = d
        index["methods"][name] = info
    write_index(out, index)
    return index


def cmd_dump_tableau(cfg: ExperimentConfig) -> dict:
    out = _outdir(cfg.out)
    index = {"command": "dump-tableau", "methods": {}}
    for name in cfg.methods:
        entry = resolve_method(name)
        obj = entry.tensor if entry.tensor is not None else entry.tableau
        fname = safe_name(name) + ".json"
        (out / fname).write_text(json.dumps(obj.to_json(), indent=1) + "\n")
        meta = {"file": fname, "kind": entry.kind}
        if entry.tensor is not None:
            ss = stage_sets(entry.tensor)
            meta.update(s1=list(ss.s1), s2=list(ss.s2), coupling=ss.coupling.value)
        index["methods"][name] = meta
    write_index(out, index)
    return index


COMMANDS = {
    "verify": cmd_verify,
    "converge": cmd_converge,
    "work-precision": cmd_work_precision,
    "stability": cmd_stability,
    "dump-tableau": cmd_dump_tableau,
}
