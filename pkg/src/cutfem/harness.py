"""Experiment drivers: convergence studies, condition-number sweeps, geometry validation.

Each driver takes an :class:`ExperimentConfig`, returns a :class:`StudyReport`
and (via :func:`write_outputs`) produces ``results.csv``, ``report.json`` and
VTK files of the last discretization that was built.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from . import analysis, assembly, cutcell, mesh, solver, vtk
from . import geometry as geo
from .errors import CutFEMError, NoConvergence, NonPositiveError

log = logging.getLogger(__name__)

EXPERIMENTS = ("solve", "convergence", "condition", "validate-geometry")


@dataclass(frozen=True)
class BoxConfig:
    """Cube ``[-half_width, half_width]^3`` with ``n`` cells per side at level 0."""

    half_width: float = 1.65
    n: int = 15


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    manifold: geo.ManifoldSpec = field(default_factory=geo.ManifoldSpec.torus)
    box: BoxConfig = BoxConfig()
    levels: tuple = (0,)
    # explicit mesh sizes; overrides box.n * 2**level when given
    h_list: tuple | None = None
    form: assembly.FormConfig = assembly.FormConfig()
    case: str | None = "torus_surface"
    case_value: float = 1.0
    segments: int = 100  # polyline segments at level 0, doubled per level
    delta_samples: int = 50
    deltas: tuple | None = None
    reference_tau: float | None = None
    cg: solver.CgConfig = solver.CgConfig()
    eigen_method: str = "lanczos"
    quadrature_degree: int = 4
    seed: int = 0
    out_dir: str | None = None
    write_vtk: bool = True
    write_matrix: bool = False
    checks: tuple = ()

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"experiment must be one of {EXPERIMENTS}")
        if self.h_list is None and len(self.levels) < 1:
            raise ValueError("at least one level is required")
        if self.h_list is not None and len(self.h_list) < 1:
            raise ValueError("h_list must not be empty")
        if any(int(k) < 0 for k in self.levels):
            raise ValueError("levels must be nonnegative")
        if self.experiment == "condition" and self.deltas is None and self.delta_samples < 2:
            raise ValueError("condition sweeps need delta_samples >= 2 (or an explicit deltas list)")
        if self.form.codim != self.manifold.codim:
            raise ValueError("form codim does not match the manifold")

    # -- levels ----------------------------------------------------------
    def level_list(self) -> list[tuple[int, int]]:
        """``(level index, cells per side)`` for every requested level."""
        if self.h_list is not None:
            width = 2.0 * self.box.half_width
            return [(k, int(round(width / h))) for k, h in enumerate(self.h_list)]
        return [(int(k), self.box.n * 2 ** int(k)) for k in self.levels]

    def delta_list(self) -> np.ndarray:
        if self.deltas is not None:
            return np.asarray(self.deltas, dtype=float)
        return np.linspace(0.0, 1.0, self.delta_samples)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        d.pop("$schema", None)
        if "manifold" in d:
            md = dict(d["manifold"])
            for key in ("offset", "axis"):
                if key in md:
                    md[key] = tuple(md[key])
            d["manifold"] = geo.ManifoldSpec(**md)
        if "box" in d:
            d["box"] = BoxConfig(**d["box"])
        if "form" in d:
            d["form"] = assembly.FormConfig(**d["form"])
        if "cg" in d:
            d["cg"] = solver.CgConfig(**d["cg"])
        for key in ("levels", "h_list", "deltas"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        if "checks" in d:
            d["checks"] = tuple(dict(c) for c in d["checks"])
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["checks"] = [dict(c) for c in self.checks]
        return json.loads(json.dumps(d))


def load_schema() -> dict:
    return json.loads(resources.files("cutfem").joinpath("config_schema.json").read_text())


def load_config(path) -> ExperimentConfig:
    """Read a JSON config, validate it against the shipped schema and build the dataclass."""
    import jsonschema

    data = json.loads(Path(path).read_text())
    jsonschema.validate(data, load_schema())
    return ExperimentConfig.from_dict(data)


# -- reports ---------------------------------------------------------------

@dataclass
class StudyReport:
    experiment: str
    columns: list
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)

    @property
    def failed_rows(self) -> int:
        return sum(1 for r in self.rows if r.get("status", "ok") != "ok")

    def column(self, name, ok_only=True) -> np.ndarray:
        rows = [r for r in self.rows if not ok_only or r.get("status", "ok") == "ok"]
        return np.array([r[name] for r in rows], dtype=float)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns)
            for r in self.rows:
                w.writerow([_fmt(r.get(c)) for c in self.columns])

    @classmethod
    def from_csv(cls, path, experiment="") -> "StudyReport":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            cols = next(reader)
            rows = [{c: _parse(v) for c, v in zip(cols, line)} for line in reader]
        return cls(experiment, cols, rows)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def to_json(self) -> dict:
        return {
            "experiment": self.experiment,
            "n_rows": len(self.rows),
            "failed_rows": self.failed_rows,
            "summary": _jsonable(self.summary),
            "checks": _jsonable(self.checks),
        }


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def _parse(s: str):
    if s == "":
        return None
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    return s


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def safe_eoc(hs, errs) -> list:
    """EOC per consecutive pair, NaN where undefined (nonpositive or missing errors)."""
    out = []
    for k in range(1, len(errs)):
        try:
            out.append(analysis.eoc([(hs[k - 1], errs[k - 1]), (hs[k], errs[k])])[0])
        except NonPositiveError:
            out.append(float("nan"))
    return out


def fitted_order(hs, errs) -> float:
    """Least-squares slope of log E against log h."""
    hs, errs = np.asarray(hs, float), np.asarray(errs, float)
    if len(hs) < 2 or np.any(errs <= 0) or not np.all(np.isfinite(errs)):
        return float("nan")
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])


# -- discretization pipeline ------------------------------------------------

@dataclass
class Discretization:
    bg: mesh.BackgroundMesh
    manifold: geo.ManifoldSpec
    dm: cutcell.DiscreteManifold
    active: mesh.ActiveMesh


def discretize(cfg: ExperimentConfig, k: int, n: int, manifold=None) -> Discretization:
    m = manifold or cfg.manifold
    bg = mesh.build_background(mesh.BoxSpec.cube(cfg.box.half_width, n))
    if m.codim == 1:
        dm = cutcell.marching_tets(bg, m)
    else:
        dm = cutcell.clip_polyline(bg, m, cfg.segments * 2**k)
    active = mesh.extract_active(bg, dm)
    return Discretization(bg, m, dm, active)


def solve_system(system: assembly.LinearSystem, cfg: ExperimentConfig, disc: Discretization):
    """CG solve; pure Laplace-Beltrami systems are deflated and post-normalized."""
    cg_cfg = solver.CgConfig(cfg.cg.rel_tol, cfg.cg.max_iter, cfg.cg.preconditioner,
                             deflate_constants=system.deflate)
    out = solver.cg(system.A, system.b, cg_cfg)
    u = out.x
    if system.deflate:
        u = solver.post_normalize(u, disc.dm, disc.active)
    return u, out


def _solve_level(cfg, k, n):
    disc = discretize(cfg, k, n)
    case = geo.manufactured_case(cfg.case, disc.manifold, cfg.case_value)
    system = assembly.build_system(disc.active, disc.dm, disc.manifold, cfg.form, case)
    u, out = solve_system(system, cfg, disc)
    err = analysis.error_norms(u, case, disc.dm, disc.active, disc.manifold, cfg.quadrature_degree)
    status = "ok" if out.converged else "no_convergence"
    row = {
        "level": k, "n": n, "h": disc.bg.h, "n_dof": disc.active.n_dof, "n_facets": len(disc.dm),
        "l2": err.l2, "h1_semi": err.h1_semi, "h1": err.h1, "cg_iterations": out.iterations,
        "status": status,
    }
    return row, disc, system, u


CONVERGENCE_COLUMNS = ["level", "n", "h", "n_dof", "n_facets", "l2", "h1_semi", "h1",
                       "eoc_l2", "eoc_h1", "cg_iterations", "status"]


def run_convergence(cfg: ExperimentConfig, keep_last=False):
    """Per level: mesh, cut, assemble, solve, measure errors; then EOCs.

    With ``keep_last`` also returns the last successful ``(disc, system, u)``.
    """
    return _run_levels(cfg, cfg.level_list(), keep_last)


def run_solve(cfg: ExperimentConfig, keep_last=False):
    """Single solve at the first configured level."""
    return _run_levels(cfg, cfg.level_list()[:1], keep_last)


def _run_levels(cfg, level_list, keep_last):
    report = StudyReport(cfg.experiment, list(CONVERGENCE_COLUMNS))
    last = None
    for k, n in level_list:
        try:
            row, disc, system, u = _solve_level(cfg, k, n)
            last = (disc, system, u)
        except CutFEMError as exc:
            log.error("level %d failed: %s", k, exc)
            row = {"level": k, "n": n, "h": 2 * cfg.box.half_width / n, "status": f"error: {exc}"}
        log.info("level %d: %s", k, {c: row.get(c) for c in ("n_dof", "l2", "h1", "status")})
        report.rows.append(row)
    ok = [r for r in report.rows if r["status"] == "ok"]
    hs = [r["h"] for r in ok]
    for name in ("l2", "h1"):
        rates = safe_eoc(hs, [r[name] for r in ok])
        for r, rate in zip(ok[1:], rates):
            r[f"eoc_{name}"] = rate
    report.summary = {
        "levels": len(report.rows),
        "failed_levels": report.failed_rows,
        "last_eoc_l2": ok[-1].get("eoc_l2") if len(ok) > 1 else None,
        "last_eoc_h1": ok[-1].get("eoc_h1") if len(ok) > 1 else None,
    }
    return (report, last) if keep_last else report


CONDITION_COLUMNS = ["level", "n", "h", "tau", "delta", "n_dof", "lambda_max", "lambda_min",
                     "kappa", "h2_kappa", "kappa_over_n2", "status"]


def _condition_row(cfg, form, k, n, delta):
    h = 2.0 * cfg.box.half_width / n
    m = cfg.manifold.translated(np.full(3, delta * h))
    disc = discretize(cfg, k, n, m)
    system = assembly.build_system(disc.active, disc.dm, m, form)
    row = {"level": k, "n": n, "h": h, "tau": form.tau, "delta": float(delta),
           "n_dof": disc.active.n_dof}
    est = solver.lambda_extremes(system.A, system.deflate, seed=cfg.seed, method=cfg.eigen_method)
    kappa = est.condition
    row.update(lambda_max=est.lambda_max, lambda_min=est.lambda_min_nonzero, kappa=kappa,
               h2_kappa=h * h * kappa, kappa_over_n2=kappa / n**2, status="ok")
    return row, disc, system


def run_condition_sweep(cfg: ExperimentConfig, keep_last=False):
    """Condition numbers of the system matrix for Gamma translated by delta*h*(1,1,1).

    Every level is swept over all deltas; ``reference_tau`` repeats the sweep
    with a second stabilization parameter (typically 0) for comparison.
    """
    report = StudyReport(cfg.experiment, list(CONDITION_COLUMNS))
    taus = [cfg.form.tau] + ([cfg.reference_tau] if cfg.reference_tau is not None else [])
    last = None
    for tau in taus:
        form = _with_tau(cfg.form, tau)
        for k, n in cfg.level_list():
            for delta in cfg.delta_list():
                try:
                    row, disc, system = _condition_row(cfg, form, k, n, delta)
                    last = (disc, system, None)
                except NoConvergence as exc:
                    row = {"level": k, "n": n, "h": 2 * cfg.box.half_width / n, "tau": tau,
                           "delta": float(delta), "status": f"no_convergence: {exc}"}
                except CutFEMError as exc:
                    row = {"level": k, "n": n, "h": 2 * cfg.box.half_width / n, "tau": tau,
                           "delta": float(delta), "status": f"error: {exc}"}
                report.rows.append(row)
            log.info("tau=%g level %d done", tau, k)
    report.summary = _condition_summary(report, taus, cfg)
    return (report, last) if keep_last else report


def _with_tau(form, tau):
    d = asdict(form)
    d["tau"] = float(tau)
    return assembly.FormConfig(**d)


def _condition_summary(report, taus, cfg):
    out = {"per_level": [], "excluded_rows": report.failed_rows}
    for tau in taus:
        for k, n in cfg.level_list():
            rows = [r for r in report.rows if r["level"] == k and r["tau"] == tau]
            good = [r for r in rows if r["status"] == "ok"]
            entry = {"level": k, "n": n, "h": 2 * cfg.box.half_width / n, "tau": tau,
                     "samples": len(rows), "excluded": len(rows) - len(good)}
            for col in ("kappa", "h2_kappa", "kappa_over_n2"):
                vals = np.array([r[col] for r in good], dtype=float)
                if len(vals):
                    entry[f"{col}_min"] = float(vals.min())
                    entry[f"{col}_max"] = float(vals.max())
                    entry[f"{col}_mean"] = float(vals.mean())
            out["per_level"].append(entry)
    return out


GEOMETRY_COLUMNS = ["level", "n", "h", "n_facets", "rho_max", "proj_dev_max", "measure_ratio",
                    "measure_defect", "normal_dev_max", "eoc_rho", "eoc_proj", "eoc_measure",
                    "eoc_normal", "status"]


def run_validate_geometry(cfg: ExperimentConfig, keep_last=False):
    """Distance, projector and measure defects of the discrete manifold over a ladder."""
    report = StudyReport(cfg.experiment, list(GEOMETRY_COLUMNS))
    last = None
    for k, n in cfg.level_list():
        try:
            disc = discretize(cfg, k, n)
            g = cutcell.geometry_validation(disc.dm, disc.manifold)
            Q = cutcell.discrete_normal_projector(disc.active, disc.dm, disc.manifold)
            cp = geo.closest_point(disc.manifold, disc.active.coords.mean(axis=1))
            Qex = geo.frames(disc.manifold, cp).Q
            row = {"level": k, "n": n, "h": disc.bg.h, "n_facets": len(disc.dm),
                   "rho_max": g.rho_max, "proj_dev_max": g.proj_dev_max,
                   "measure_ratio": g.measure_ratio, "measure_defect": abs(1.0 - g.measure_ratio),
                   "normal_dev_max": float(np.abs(Q - Qex).max()), "status": "ok"}
            last = (disc, None, None)
        except CutFEMError as exc:
            row = {"level": k, "n": n, "h": 2 * cfg.box.half_width / n, "status": f"error: {exc}"}
        report.rows.append(row)
    ok = [r for r in report.rows if r["status"] == "ok"]
    hs = [r["h"] for r in ok]
    summary = {}
    for col, name in (("rho_max", "rho"), ("proj_dev_max", "proj"), ("measure_defect", "measure"),
                      ("normal_dev_max", "normal")):
        errs = [r[col] for r in ok]
        for r, rate in zip(ok[1:], safe_eoc(hs, errs)):
            r[f"eoc_{name}"] = rate
        summary[f"order_{name}"] = fitted_order(hs, errs)
    report.summary = summary
    return (report, last) if keep_last else report


RUNNERS = {
    "solve": run_solve,
    "convergence": run_convergence,
    "condition": run_condition_sweep,
    "validate-geometry": run_validate_geometry,
}


def run_experiment(cfg: ExperimentConfig, keep_last=False):
    return RUNNERS[cfg.experiment](cfg, keep_last)


# -- checks ----------------------------------------------------------------

def evaluate_checks(report: StudyReport, specs) -> list:
    """Evaluate declarative tolerance checks; each spec is a dict with a ``type`` key.

    Types: ``eoc_range`` (last EOC of a column, or fitted order with ``fit``),
    ``within_factor`` (per-level reference values), ``max_value`` (every row),
    ``spread_factor`` (per-level summary statistic), ``ratio_max_min``
    (max/min of a column over one tau), ``peak_ratio`` (max at reference tau
    over max at the main tau), ``no_failed_rows``.
    """
    results = []
    for spec in specs:
        kind = spec["type"]
        name = spec.get("name", kind)
        try:
            passed, value, detail = _CHECKS[kind](report, spec)
        except (KeyError, ValueError, IndexError) as exc:
            passed, value, detail = False, None, f"could not evaluate: {exc}"
        results.append({"name": name, "type": kind, "passed": bool(passed), "value": value,
                        "detail": detail})
    report.checks = results
    return results


def _ok_rows(report, tau=None):
    return [r for r in report.rows if r.get("status") == "ok" and (tau is None or r.get("tau") == tau)]


def _check_eoc_range(report, spec):
    rows = _ok_rows(report)
    hs = [r["h"] for r in rows]
    errs = [r[spec["column"]] for r in rows]
    if spec.get("fit"):
        value = fitted_order(hs, errs)
    else:
        value = safe_eoc(hs, errs)[-1]
    lo, hi = spec["range"]
    return lo <= value <= hi, value, f"order {value:.3f} in [{lo}, {hi}]"


def _check_within_factor(report, spec):
    rows = _ok_rows(report)
    ref = spec["reference"]
    factor = spec["factor"]
    if len(rows) < len(ref):
        return False, None, f"only {len(rows)} levels for {len(ref)} reference values"
    ratios = [rows[i][spec["column"]] / ref[i] for i in range(len(ref))]
    passed = all(1.0 / factor <= q <= factor for q in ratios)
    return passed, ratios, "ratios " + ", ".join(f"{q:.3g}" for q in ratios) + f" within factor {factor}"


def _check_max_value(report, spec):
    vals = [r[spec["column"]] for r in _ok_rows(report)]
    if not vals or len(vals) != len(report.rows):
        return False, None, "missing or failed rows"
    value = max(vals)
    return value < spec["value"], value, f"max {value:.3e} < {spec['value']:.1e}"


def _check_spread_factor(report, spec):
    tau = spec.get("tau")
    stat = spec["statistic"]
    vals = [e[stat] for e in report.summary["per_level"] if tau is None or e["tau"] == tau]
    value = max(vals) / min(vals)
    return value < spec["factor"], value, f"{stat} spread {value:.3f} < {spec['factor']}"


def _check_ratio_max_min(report, spec):
    vals = np.array([r[spec["column"]] for r in _ok_rows(report, spec.get("tau"))])
    value = float(vals.max() / vals.min())
    return value <= spec["value"], value, f"max/min {value:.3f} <= {spec['value']}"


def _check_peak_ratio(report, spec):
    col = spec.get("column", "kappa")
    main = max(r[col] for r in _ok_rows(report, spec["tau"]))
    ref = max(r[col] for r in _ok_rows(report, spec["reference_tau"]))
    value = ref / main
    return value >= spec["factor"], value, f"peak ratio {value:.3g} >= {spec['factor']}"


def _check_no_failed(report, spec):
    n = report.failed_rows
    return n == 0, n, f"{n} failed rows"


_CHECKS = {
    "eoc_range": _check_eoc_range,
    "within_factor": _check_within_factor,
    "max_value": _check_max_value,
    "spread_factor": _check_spread_factor,
    "ratio_max_min": _check_ratio_max_min,
    "peak_ratio": _check_peak_ratio,
    "no_failed_rows": _check_no_failed,
}


# -- outputs ---------------------------------------------------------------

def write_outputs(cfg: ExperimentConfig, report: StudyReport, last, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.to_csv(out / "results.csv")
    payload = {"config": cfg.to_dict(), **report.to_json()}
    (out / "report.json").write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n")
    if last is not None:
        disc, system, u = last
        if cfg.write_vtk:
            vtk.write_discrete_manifold(out / "gamma_h.vtk", disc.dm, disc.active, u)
            vtk.write_active_mesh(out / "active_mesh.vtk", disc.active, u)
        if cfg.write_matrix and system is not None:
            assembly.write_matrix_market(out / "A.mtx", system.A)
    return out
