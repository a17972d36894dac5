"""Experiment configs, scenario pipelines and reproducible artifact output.

A config is a TOML file::

    name = "ou_gradient"
    scenario = "gradient_estimate"   # or hypothesis_check, mild_solve, fbsde_check, control_benchmark
    seed = 0

    [field]                          # kind = "ou" | "brownian" | "example_family"
    kind = "ou"

    [mc]                             # any MCConfig field
    paths = 4000

    [solver]                         # SolverConfig fields, plus grid/kernel tables and C_T
    tol = 1e-3

    [problem]                        # driver and terminal datum
    hamiltonian = "zero"
    phi = "cos"

    [params]                         # scenario-specific knobs, see SCENARIO_PARAMS

Every run writes ``report.json``, one or more CSV files and
``manifest.json``. Numeric artifacts depend only on (config, seed); the
manifest adds wall time and versions, and hashes every other file.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, fields, is_dataclass, replace
from dataclasses import field as dc_field
from pathlib import Path

import numpy as np

from . import __version__
from .coefficients import ExampleFamilyParams, brownian_field, check_hypotheses, make_example_family, ou_field
from .control import benchmark_problem, hjb_driver, verify_value_inequality
from .errors import ConfigError, MissingReportError
from .fbsde import backward_residual, build_yz, cross_oracle_gap, martingale_check, regression_backward_solve
from .functions import from_spec
from .grids import GridConfig
from .kernels import KernelConfig
from .mild_solver import (
    QuadConfig,
    SolverConfig,
    abs_hamiltonian,
    constant_hamiltonian,
    solve_mild,
    zero_hamiltonian,
)
from .sde import simulate_forward, uniform_grid
from .semigroup import MCConfig, estimate_CT, loglog_slope

try:  # Python >= 3.11
    import tomllib as _toml
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as _toml

SCENARIOS = ("gradient_estimate", "mild_solve", "fbsde_check", "control_benchmark", "hypothesis_check")
OUT_ENV = "HJBLAB_OUT"

SCENARIO_PARAMS = {
    "hypothesis_check": {"radius": 5.0, "samples": 256},
    "gradient_estimate": {
        "phis": ["cos"],
        "T": 1.0,
        "t_min": 1e-3,
        "t_max": 1.0,
        "n_t": 13,
        "domain": [-1.0, 1.0],
        "n_domain": 21,
        "slope_range": [4e-3, 0.1],
    },
    "mild_solve": {"T": 1.0},
    "fbsde_check": {"T": 1.0, "x0": [0.5], "dts": [0.02, 0.01, 0.005, 0.0025], "paths": 2000, "regression_paths": 4000},
    "control_benchmark": {"T": 1.0, "x0": [0.5], "n_policies": 256, "paths": 2000, "n_sub": 8, "dt": 0.01},
}

_TOP_KEYS = {"name", "scenario", "seed", "out", "workers", "field", "mc", "solver", "problem", "params"}


@dataclass
class ExperimentConfig:
    name: str
    scenario: str
    seed: int = 0
    field: dict = dc_field(default_factory=lambda: {"kind": "ou"})
    mc: MCConfig = MCConfig()
    solver: dict = dc_field(default_factory=dict)
    problem: dict = dc_field(default_factory=lambda: {"hamiltonian": "zero", "phi": "cos"})
    params: dict = dc_field(default_factory=dict)
    out: str | None = None
    workers: int = 1
    source: str = ""

    def canonical(self) -> dict:
        d = {
            "name": self.name,
            "scenario": self.scenario,
            "seed": self.seed,
            "field": self.field,
            "mc": asdict(self.mc),
            "solver": self.solver,
            "problem": self.problem,
            "params": self.resolved_params(),
        }
        return json.loads(json.dumps(d, sort_keys=True, default=_jsonable))

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.canonical(), sort_keys=True).encode()).hexdigest()

    def resolved_params(self) -> dict:
        p = dict(SCENARIO_PARAMS.get(self.scenario, {}))
        p.update(self.params)
        return p

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=int(seed), mc=self.mc.with_(seed=int(seed)))


# ---------------------------------------------------------------------------
# parsing and validation


def _build_dataclass(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"expected a table at {path}", path)
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in [{path}]", f"{path}.{unknown[0]}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{path}]: {exc}", path) from exc


def parse_config(data: dict, source: str = "<dict>") -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a table", "")
    unknown = sorted(set(data) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {unknown}", unknown[0])
    for key in ("name", "scenario"):
        if key not in data:
            raise ConfigError(f"missing required key {key!r}", key)
    scenario = data["scenario"]
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; choose one of {list(SCENARIOS)}", "scenario")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("seed must be an integer", "seed")
    mc_data = dict(data.get("mc", {}))
    mc_data.setdefault("seed", seed)
    mc = _build_dataclass(MCConfig, mc_data, "mc")
    cfg = ExperimentConfig(
        name=str(data["name"]),
        scenario=scenario,
        seed=seed,
        field=dict(data.get("field", {"kind": "ou"})),
        mc=mc,
        solver=dict(data.get("solver", {})),
        problem=dict(data.get("problem", {"hamiltonian": "zero", "phi": "cos"})),
        params=dict(data.get("params", {})),
        out=data.get("out"),
        workers=int(data.get("workers", 1)),
        source=source,
    )
    validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = _toml.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} not found", str(path)) from exc
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}", str(path)) from exc
    return parse_config(data, str(path))


def validate(cfg: ExperimentConfig) -> None:
    """Resolve every referenced spec once, raising ConfigError with the offending path."""
    build_field(cfg.field)
    build_solver_config(cfg.solver)
    if cfg.scenario in ("mild_solve", "fbsde_check"):
        build_problem(cfg.problem)
    if cfg.scenario == "gradient_estimate":
        for i, spec in enumerate(cfg.resolved_params()["phis"]):
            _phi(spec, f"params.phis[{i}]")
    allowed = set(SCENARIO_PARAMS[cfg.scenario])
    unknown = sorted(set(cfg.params) - allowed)
    if unknown:
        raise ConfigError(f"unknown parameter(s) {unknown} for scenario {cfg.scenario}", f"params.{unknown[0]}")


def _phi(spec, path):
    try:
        return from_spec(spec)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad test function at {path}: {exc}", path) from exc


def build_field(spec: dict):
    spec = dict(spec)
    kind = spec.pop("kind", None)
    try:
        if kind == "ou":
            return ou_field(**spec)
        if kind == "brownian":
            return brownian_field(**spec)
        if kind == "example_family":
            dim = int(spec.get("dim", 1))
            params = ExampleFamilyParams(
                dim=dim,
                m=float(spec["m"]),
                p=float(spec["p"]),
                b_coeffs=tuple(float(b) for b in spec.get("b", [1.0] * dim)),
                q=tuple(tuple(float(c) for c in row) for row in spec.get("q", np.eye(dim).tolist())),
            )
            return make_example_family(params)
    except KeyError as exc:
        raise ConfigError(f"missing key {exc} in [field]", f"field.{exc.args[0]}") from exc
    except TypeError as exc:
        raise ConfigError(f"invalid [field]: {exc}", "field") from exc
    raise ConfigError(f"unknown field kind {kind!r}; choose ou, brownian or example_family", "field.kind")


def build_solver_config(spec: dict) -> SolverConfig:
    spec = dict(spec)
    spec.pop("C_T", None)
    spec.pop("ct", None)
    grid = _build_dataclass(GridConfig, spec.pop("grid", {}), "solver.grid")
    kernel = _build_dataclass(KernelConfig, spec.pop("kernel", {}), "solver.kernel")
    quad = QuadConfig(**{k: spec.pop(k2) for k, k2 in (("nodes", "quad_nodes"), ("budget", "quad_budget")) if k2 in spec})
    return _build_dataclass(SolverConfig, {**spec, "grid": grid, "kernel": kernel, "quad": quad}, "solver")


def build_problem(spec: dict):
    """(driver, phi, control problem or None) from the [problem] table."""
    kind = spec.get("hamiltonian", "zero")
    if kind == "benchmark":
        prob = benchmark_problem(int(spec.get("n_controls", 101)))
        return hjb_driver(prob), prob.phi, prob
    phi = _phi(spec.get("phi", "cos"), "problem.phi")
    if kind == "zero":
        return zero_hamiltonian(), phi, None
    if kind == "abs":
        return abs_hamiltonian(float(spec.get("scale", 1.0))), phi, None
    if kind == "const":
        return constant_hamiltonian(float(spec.get("value", 1.0))), phi, None
    raise ConfigError(f"unknown hamiltonian {kind!r}; choose zero, abs, const or benchmark", "problem.hamiltonian")


# ---------------------------------------------------------------------------
# serialization


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if is_dataclass(o):
        return asdict(o)
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _clean(o):
    """Replace non-finite floats by strings so the JSON stays standard."""
    if isinstance(o, float) and not math.isfinite(o):
        return repr(o)
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    return o


def write_json(path: Path, data) -> None:
    text = json.dumps(_clean(json.loads(json.dumps(data, default=_jsonable))), indent=2, sort_keys=True)
    path.write_text(text + "\n")


def write_csv(path: Path, header: list, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# scenarios


def _t_grid(p) -> np.ndarray:
    return np.logspace(math.log10(p["t_min"]), math.log10(p["t_max"]), int(p["n_t"]))


def _measure_CT(cfg: ExperimentConfig, fld, T: float) -> tuple[float, dict]:
    """Use solver.C_T when given, otherwise estimate it and inflate by 10%."""
    if "C_T" in cfg.solver:
        return float(cfg.solver["C_T"]), {"source": "config", "C_T": float(cfg.solver["C_T"])}
    ct = dict(cfg.solver.get("ct", {}))
    phis = [from_spec(s) for s in ct.get("phis", ["cos", {"name": "tanh", "scale": 50.0}])]
    lo, hi = ct.get("domain", [-1.0, 1.0])
    dom = np.linspace(lo, hi, int(ct.get("n_domain", 21)))
    if fld.dim > 1:
        dom = np.stack([dom] + [np.zeros_like(dom)] * (fld.dim - 1), axis=1)
    tg = np.logspace(-3, math.log10(T), int(ct.get("n_t", 10)))
    mc = cfg.mc.with_(paths=int(ct.get("paths", 2000)), antithetic=True)
    est = estimate_CT(fld, phis, T, tg, dom, mc, workers=cfg.workers)
    return est.inflated, {"source": "estimate", **est.to_dict()}


def _scenario_hypothesis(cfg, out: Path) -> dict:
    p = cfg.resolved_params()
    fld = build_field(cfg.field)
    rep = check_hypotheses(fld, radius=float(p["radius"]), samples=int(p["samples"]), seed=cfg.seed)
    write_csv(
        out / "conditions.csv",
        ["name", "clause", "holds", "witness_constant"],
        [[c.name, c.clause, int(c.holds), c.witness_constant if c.witness_constant is not None else float("nan")] for c in rep.conditions],
    )
    return {"all_hold": rep.all_hold, "failed": rep.failed(), "report": rep.to_dict()}


def _scenario_gradient(cfg, out: Path) -> dict:
    p = cfg.resolved_params()
    fld = build_field(cfg.field)
    phis = [from_spec(s) for s in p["phis"]]
    tg = _t_grid(p)
    dom = np.linspace(p["domain"][0], p["domain"][1], int(p["n_domain"]))
    if fld.dim > 1:
        dom = np.stack([dom] + [np.zeros_like(dom)] * (fld.dim - 1), axis=1)
    est = estimate_CT(fld, phis, float(p["T"]), tg, dom, cfg.mc, workers=cfg.workers)
    lo, hi = p["slope_range"]
    sel = (tg >= lo) & (tg <= hi)
    slopes = {}
    rows = []
    for name, sw in est.sup_wgrad.items():
        slopes[name] = loglog_slope(tg[sel], sw[sel]) if sel.sum() >= 2 else float("nan")
        rows += [[name, float(t), float(s), float(math.sqrt(t) * s)] for t, s in zip(tg, sw)]
    write_csv(out / "profile.csv", ["phi", "t", "sup_wgrad", "sqrt_t_sup_wgrad"], rows)
    return {"C_T": est.C_T, "C_T_inflated": est.inflated, "slopes": slopes, "estimate": est.to_dict()}


def _solve(cfg, fld, T):
    ham, phi, prob = build_problem(cfg.problem)
    C_T, ct_info = _measure_CT(cfg, fld, T)
    solver = build_solver_config(cfg.solver)
    v = solve_mild(phi, ham, fld, T, C_T, solver)
    return v, ham, phi, prob, C_T, ct_info


def _solution_summary(v) -> dict:
    prov = dict(v.provenance)
    return {
        "knorm": prov.get("knorm"),
        "n_windows": prov.get("n_windows"),
        "window_length": prov.get("window_length"),
        "iterations": prov.get("iterations"),
        "contraction_ratios": prov.get("contraction_ratios"),
        "max_ratio": prov.get("max_ratio"),
        "all_in_ball": prov.get("all_in_ball"),
        "gronwall_envelope": prov.get("gronwall_envelope"),
        "within_envelope": prov.get("within_envelope"),
        "constants": prov.get("constants"),
    }


def _scenario_mild(cfg, out: Path) -> dict:
    p = cfg.resolved_params()
    fld = build_field(cfg.field)
    v, *_, C_T, ct_info = _solve(cfg, fld, float(p["T"]))
    header, rows = v.to_rows()
    write_csv(out / "solution.csv", header, rows)
    t, g = v.gradient_profile()
    write_csv(out / "gradient_profile.csv", ["t", "sup_wgrad", "weighted"], [[a, b, math.sqrt(max(v.T - a, 0)) * b] for a, b in zip(t, g)])
    return {"C_T_used": C_T, "C_T_measurement": ct_info, "solution": _solution_summary(v)}


def _scenario_fbsde(cfg, out: Path) -> dict:
    p = cfg.resolved_params()
    fld = build_field(cfg.field)
    T = float(p["T"])
    v, ham, phi, _, C_T, _ = _solve(cfg, fld, T)
    rows, by_dt = [], []
    mart = None
    for i, dt in enumerate(p["dts"]):
        ens = simulate_forward(fld, p["x0"], uniform_grid(0.0, T, float(dt)), int(p["paths"]), seed=cfg.seed)
        sol = build_yz(v, ens, fld)
        res = backward_residual(sol, ham, phi)
        m = martingale_check(sol)
        by_dt.append({"dt": float(dt), **res, "martingale": m})
        rows.append([float(dt), res["rms"], res["last_step_rms"], res["terminal_mean"], m["isometry_ratio"]])
        mart = m
    write_csv(out / "residuals.csv", ["dt", "rms_residual", "last_step_rms", "terminal_mean", "isometry_ratio"], rows)
    rms = [r["rms"] for r in by_dt]
    ratios = [a / b for a, b in zip(rms[:-1], rms[1:]) if b > 0]
    ens = simulate_forward(fld, p["x0"], uniform_grid(0.0, T, float(p["dts"][1] if len(p["dts"]) > 1 else p["dts"][0])), int(p["regression_paths"]), seed=cfg.seed + 1)
    gap = cross_oracle_gap(build_yz(v, ens, fld), regression_backward_solve(ens, ham, phi))
    pvals = [math.erfc(r["martingale"]["max_abs_z"] / math.sqrt(2)) for r in by_dt]
    return {
        "terminal_residual": {"mean": by_dt[-1]["terminal_mean"], "se": by_dt[-1]["terminal_se"]},
        "step_residual_rms_by_dt": {str(r["dt"]): r["rms"] for r in by_dt},
        "halving_ratios": ratios,
        "martingale_pvalues": pvals,
        "isometry_ratio": mart["isometry_ratio"],
        "cross_oracle_gap": gap,
        "by_dt": by_dt,
        "C_T_used": C_T,
        "solution": _solution_summary(v),
    }


def _scenario_control(cfg, out: Path) -> dict:
    p = cfg.resolved_params()
    fld = build_field(cfg.field)
    T = float(p["T"])
    spec = dict(cfg.problem)
    spec.setdefault("hamiltonian", "benchmark")
    if spec["hamiltonian"] != "benchmark":
        raise ConfigError("control_benchmark needs problem.hamiltonian = 'benchmark'", "problem.hamiltonian")
    cfg_solver = replace(cfg, problem=spec)
    v, ham, phi, prob, C_T, _ = _solve(cfg_solver, fld, T)
    rep = verify_value_inequality(
        prob, fld, v, p["x0"], 0.0, int(p["n_policies"]), int(p["paths"]), cfg.seed, n_sub=int(p["n_sub"]), dt=float(p["dt"]), workers=cfg.workers
    )
    write_csv(out / "policy_costs.csv", ["policy", "J", "SE"], [[i, j, s] for i, (j, s) in enumerate(zip(rep.openloop_J, rep.openloop_SE))])
    d = rep.to_dict()
    return {
        "v0": d["v0"],
        "feedback_J": d["feedback_J"],
        "feedback_SE": d["feedback_SE"],
        "feedback_gap": d["feedback_gap"],
        "feedback_budget": d["feedback_budget"],
        "best_openloop_J": d["best_openloop_J"],
        "n_policies": d["n_policies"],
        "violations": d["violations"],
        "selector_gap": d["selector_gap"],
        "C_T_used": C_T,
        "solution": _solution_summary(v),
        "notes": d["notes"],
    }


_PIPELINES = {
    "hypothesis_check": _scenario_hypothesis,
    "gradient_estimate": _scenario_gradient,
    "mild_solve": _scenario_mild,
    "fbsde_check": _scenario_fbsde,
    "control_benchmark": _scenario_control,
}


@dataclass
class RunResult:
    status: int
    out_dir: Path
    report: dict
    manifest: dict


def resolve_out_dir(cfg: ExperimentConfig, out: str | os.PathLike | None = None) -> Path:
    if out is not None:
        return Path(out)
    if cfg.out:
        return Path(cfg.out)
    return Path(os.environ.get(OUT_ENV, "results")) / cfg.name


def run(cfg: ExperimentConfig, out: str | os.PathLike | None = None) -> RunResult:
    """Execute the scenario and write report.json, CSV data and manifest.json."""
    out_dir = resolve_out_dir(cfg, out)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    body = _PIPELINES[cfg.scenario](cfg, out_dir)
    report = {"name": cfg.name, "scenario": cfg.scenario, "seed": cfg.seed, "config": cfg.canonical(), "results": body}
    write_json(out_dir / "report.json", report)
    files = sorted(p.name for p in out_dir.iterdir() if p.is_file() and p.name != "manifest.json")
    manifest = {
        "name": cfg.name,
        "scenario": cfg.scenario,
        "seed": cfg.seed,
        "config_hash": cfg.config_hash(),
        "config_source": cfg.source,
        "files": {f: sha256_file(out_dir / f) for f in files},
        "versions": {
            "hjblab": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": __import__("scipy").__version__,
        },
        "wall_time_s": time.perf_counter() - t0,
        "argv": sys.argv[1:],
    }
    write_json(out_dir / "manifest.json", manifest)
    return RunResult(0, out_dir, report, manifest)


# ---------------------------------------------------------------------------
# plot data


def _series(report: dict) -> list:
    sc = report.get("scenario")
    res = report.get("results", {})
    rows = []
    if sc == "gradient_estimate":
        est = res["estimate"]
        for name, sw in est["sup_wgrad"].items():
            for t, s in zip(est["t"], sw):
                rows.append([sc, f"sup_wgrad[{name}]", t, s])
                rows.append([sc, f"sqrt_t_sup_wgrad[{name}]", t, math.sqrt(t) * s])
    elif sc == "fbsde_check":
        for dt, rms in res["step_residual_rms_by_dt"].items():
            rows.append([sc, "rms_residual", float(dt), rms])
    elif sc in ("mild_solve", "control_benchmark"):
        for w, ratios in enumerate(res["solution"].get("contraction_ratios") or []):
            for it, r in enumerate(ratios):
                rows.append([sc, f"contraction_ratio[window={w}]", it + 2, r])
        if sc == "control_benchmark":
            rows.append([sc, "v0", 0, res["v0"]])
            rows.append([sc, "feedback_J", 0, res["feedback_J"]])
    elif sc == "hypothesis_check":
        for c in res["report"]["conditions"]:
            if isinstance(c.get("witness_constant"), (int, float)):
                rows.append([sc, f"witness[{c['name']}]", 0, c["witness_constant"]])
    return rows


def emit_plot_data(report_dir, out_file=None) -> Path:
    """Flatten every report.json below ``report_dir`` into one long-format CSV."""
    report_dir = Path(report_dir)
    reports = sorted(report_dir.rglob("report.json")) if report_dir.is_dir() else []
    if not reports:
        raise MissingReportError(f"no report.json found under {report_dir}")
    rows = []
    for path in reports:
        rep = json.loads(path.read_text())
        run_name = str(path.parent.relative_to(report_dir))
        series = _series(rep)
        if rep.get("scenario") == "control_benchmark":
            series += [["control_benchmark", "openloop_J", i, J] for i, J in enumerate(_load_policy_costs(path.parent))]
        rows += [[run_name, *r] for r in series]
    out_file = Path(out_file) if out_file else report_dir / "plot_data.csv"
    write_csv(out_file, ["run", "scenario", "series", "x", "y"], rows)
    return out_file


def _load_policy_costs(run_dir: Path) -> list:
    f = run_dir / "policy_costs.csv"
    if not f.exists():
        return []
    with open(f) as fh:
        return [float(r["J"]) for r in csv.DictReader(fh)]
