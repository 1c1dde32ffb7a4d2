"""Batch studies: refinement, θ0 sweeps, σ/γ sweeps and condition-number curves.

Each study returns a :class:`StudyReport` whose rows carry the full
parameter set, so a CSV line can be reproduced on its own.  Outputs are
deterministic for a fixed configuration (no timings are serialized).
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import problems
from .assembly import PhiFemParams, assemble, build_dof_layout
from .levelset import SAMPLING_RULES, classify_cells, diagnostics, interpolate_levelset
from .linalg import condition_number_2, factorize, solve
from .mesh import build_background_mesh
from .postproc import compute_errors, fit_rate

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "case", "dim", "k", "l", "n", "h", "theta0", "sigma", "gamma_div", "gamma_u", "gamma_p", "alpha",
    "dofs_V", "dofs_Z", "dofs_Q", "err_L2_rel", "err_H1_rel", "cond2", "residual",
)
SWEEP_AXES = ("none", "theta0", "sigma", "gamma")
DEFAULT_THETA_GRID = tuple(round(0.1 * i, 10) for i in range(9))
DEFAULT_PARAM_GRID = tuple(10.0 ** e for e in range(-6, 7))


class ConfigError(ValueError):
    pass


class StudyError(RuntimeError):
    """Numerical failure at a given refinement level."""

    def __init__(self, message, n=None):
        super().__init__(message)
        self.n = n


@dataclass
class StudyConfig:
    """Everything needed to reproduce a study.

    ``theta0=None`` keeps the case default.  ``gamma`` (if given) overrides
    all three of ``gamma_div``, ``gamma_u`` and ``gamma_p``.
    """

    case: str = "flower"
    theta0: float | None = None
    alpha: float = 1.0
    k: int = 1
    l: int = 3
    gamma_div: float = 10.0
    gamma_u: float = 10.0
    gamma_p: float = 10.0
    sigma: float = 0.01
    levels: list = field(default_factory=lambda: [8, 16, 32, 64])
    sweep: str = "none"
    grid: list = field(default_factory=list)
    out_csv: str | None = None
    out_json: str | None = None
    cond: bool = False
    patch: bool = False
    sampling: str = "lattice"
    solver_tol: float = 1e-10
    cond_tol: float = 1e-4

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.case not in problems.CASES:
            raise ConfigError(f"unknown case {self.case!r}; choose from {sorted(problems.CASES)}")
        for name in ("k", "l"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        for name in ("gamma_div", "gamma_u", "gamma_p", "sigma", "solver_tol", "cond_tol"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v) or v <= 0:
                raise ConfigError(f"{name} must be a positive number, got {v!r}")
        if not self.levels:
            raise ConfigError("levels must be non-empty")
        try:
            self.levels = [int(n) for n in self.levels]
        except (TypeError, ValueError):
            raise ConfigError(f"levels must be integers, got {self.levels!r}") from None
        if self.levels[0] < 1 or any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ConfigError(f"levels must be positive and strictly increasing, got {self.levels}")
        if self.sampling not in SAMPLING_RULES:
            raise ConfigError(f"sampling must be one of {SAMPLING_RULES}, got {self.sampling!r}")
        if self.sweep not in SWEEP_AXES:
            raise ConfigError(f"sweep must be one of {SWEEP_AXES}, got {self.sweep!r}")
        self.grid = [float(v) for v in self.grid]
        if self.sweep != "none" and not self.grid:
            raise ConfigError(f"sweep {self.sweep!r} needs a non-empty grid")
        if self.sweep in ("sigma", "gamma") and any(v <= 0 for v in self.grid):
            raise ConfigError(f"{self.sweep} grid values must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "StudyConfig":
        data = dict(data)
        gamma = data.pop("gamma", None)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        if gamma is not None:
            data.update(gamma_div=gamma, gamma_u=gamma, gamma_p=gamma)
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path) -> "StudyConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(data)

    def replace(self, **changes) -> "StudyConfig":
        d = asdict(self)
        d.update(changes)
        return StudyConfig(**d)

    def make_case(self, theta0: float | None = None) -> problems.TestCase:
        th = self.theta0 if theta0 is None else theta0
        if self.case == "flower-robin":
            return problems.test_case_1(0.0 if th is None else th, bc="robin", alpha=self.alpha)
        return problems.get_case(self.case, th)

    def params(self, case: problems.TestCase) -> PhiFemParams:
        return PhiFemParams(k=self.k, l=self.l, gamma_div=self.gamma_div, gamma_u=self.gamma_u,
                            gamma_p=self.gamma_p, sigma=self.sigma, bc=case.boundary_condition())


@dataclass
class StudyReport:
    kind: str
    config: dict
    rows: list
    summary: dict = field(default_factory=dict)

    def column(self, name, n=None) -> np.ndarray:
        return np.array([r[name] for r in self.rows if n is None or r["n"] == n], dtype=float)

    def to_dict(self) -> dict:
        return _jsonable({"kind": self.kind, "config": self.config, "summary": self.summary, "rows": self.rows})

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in self.rows:
                w.writerow([_csv_value(r[c]) for c in CSV_COLUMNS])

    def write(self, out_csv=None, out_json=None) -> None:
        if out_csv:
            self.write_csv(out_csv)
        if out_json:
            self.write_json(out_json)


def _csv_value(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def solve_case(cfg: StudyConfig, n: int, theta0: float | None = None, cond: bool | None = None) -> dict:
    """Solve one configuration at level ``n`` and return its report row."""
    case = cfg.make_case(theta0)
    cond = cfg.cond if cond is None else cond
    t0 = time.perf_counter()
    try:
        params = cfg.params(case)
        mesh = build_background_mesh(case.box, n)
        phi_h = interpolate_levelset(case.levelset(cfg.l), mesh)
        decomp = classify_cells(phi_h, cfg.sampling)
        layout = build_dof_layout(decomp, cfg.k)
        system = assemble(decomp, phi_h, params, case.data(), layout)
        lu = factorize(system.matrix)
        sol = solve(system.matrix, system.rhs, tol=cfg.solver_tol, lu=lu)
        u_h, _, _ = layout.split(sol.x)
        err = compute_errors(u_h, layout, case.u, case.grad_u)
        kappa = condition_number_2(system.matrix, tol=cfg.cond_tol, lu=lu) if cond else float("nan")
    except Exception as exc:
        raise StudyError(f"{case.name} n={n}: {type(exc).__name__}: {exc}", n=n) from exc
    sizes = layout.sizes()
    row = {
        "case": case.name, "dim": case.dim, "k": cfg.k, "l": cfg.l, "n": n, "h": float(mesh.h_max),
        "theta0": float(case.params.get("theta0", float("nan"))),
        "sigma": params.sigma, "gamma_div": params.gamma_div, "gamma_u": params.gamma_u,
        "gamma_p": params.gamma_p, "alpha": float(case.alpha),
        "dofs_V": sizes["V"], "dofs_Z": sizes["Z"], "dofs_Q": sizes["Q"],
        "err_L2_rel": err.err_L2_rel, "err_H1_rel": err.err_H1_rel,
        "cond2": float(kappa), "residual": sol.residual, "status": "ok",
    }
    if cfg.patch:
        row["diagnostics"] = diagnostics(phi_h, decomp)
    log.info("%s n=%d L2=%.4e H1=%.4e (%.1fs)", case.name, n, err.err_L2_rel, err.err_H1_rel,
             time.perf_counter() - t0)
    return row


def finest_half(levels) -> slice:
    """The last ``max(2, ceil(len/2))`` levels."""
    m = len(levels)
    return slice(m - max(2, math.ceil(m / 2)), m)


def _rates(rows, key) -> dict:
    pts = [(r["h"], r[key]) for r in rows]
    if len(pts) < 2 or any(not (e > 0) for _, e in pts):
        return {"all": float("nan"), "finest_half": float("nan")}
    return {"all": fit_rate(pts), "finest_half": fit_rate(pts[finest_half(pts)])}


def _cond_slope(rows) -> dict:
    pts = [(1.0 / r["h"], r["cond2"]) for r in rows]
    if len(pts) < 2 or any(not (c > 0) for _, c in pts):
        return {"all": float("nan"), "finest_half": float("nan")}
    return {"all": fit_rate(pts), "finest_half": fit_rate(pts[finest_half(pts)])}


def run_solve(cfg: StudyConfig) -> StudyReport:
    """Single solve at the finest configured level."""
    row = solve_case(cfg, cfg.levels[-1])
    return StudyReport("solve", asdict(cfg), [row])


def run_convergence(cfg: StudyConfig) -> StudyReport:
    """One row per level plus least-squares rates.

    Rates are fitted both over all levels and over the finest half.
    """
    rows = [solve_case(cfg, n) for n in cfg.levels]
    summary = {"rate_L2": _rates(rows, "err_L2_rel"), "rate_H1": _rates(rows, "err_H1_rel")}
    if cfg.cond:
        summary["cond_slope"] = _cond_slope(rows)
    return StudyReport("convergence", asdict(cfg), rows, summary)


def run_angle_sweep(cfg: StudyConfig) -> StudyReport:
    """Errors against θ0 at every level, with max/min ratios per level."""
    grid = sorted(cfg.grid or DEFAULT_THETA_GRID)
    rows = [solve_case(cfg, n, theta0=th) for n in cfg.levels for th in grid]
    ratios = {}
    for n in cfg.levels:
        l2, h1 = [np.array([r[key] for r in rows if r["n"] == n]) for key in ("err_L2_rel", "err_H1_rel")]
        ratios[str(n)] = {"L2": float(l2.max() / l2.min()), "H1": float(h1.max() / h1.min())}
    return StudyReport("sweep-angle", asdict(cfg), rows, {"grid": grid, "max_min_ratio": ratios})


def run_param_sweep(cfg: StudyConfig, axis: str | None = None) -> StudyReport:
    """Errors against σ or γ (all three γ's together).

    A failed point is recorded with ``status="failed"`` and NaN errors; the
    sweep carries on.
    """
    axis = axis or cfg.sweep
    if axis not in ("sigma", "gamma"):
        raise ConfigError(f"parameter sweep axis must be 'sigma' or 'gamma', got {axis!r}")
    grid = sorted(cfg.grid or DEFAULT_PARAM_GRID)
    rows = []
    failures = 0
    for n in cfg.levels:
        for v in grid:
            changes = {"sigma": v} if axis == "sigma" else {"gamma_div": v, "gamma_u": v, "gamma_p": v}
            point = cfg.replace(**changes, sweep="none", grid=[])
            try:
                rows.append(solve_case(point, n))
            except StudyError as exc:
                failures += 1
                log.warning("sweep point %s=%g failed: %s", axis, v, exc)
                rows.append(_failed_row(point, n, str(exc)))
    return StudyReport("sweep-param", asdict(cfg), rows, {"axis": axis, "grid": grid, "failures": failures})


def _failed_row(cfg: StudyConfig, n: int, message: str) -> dict:
    case = cfg.make_case()
    nan = float("nan")
    row = {c: nan for c in CSV_COLUMNS}
    row.update(case=case.name, dim=case.dim, k=cfg.k, l=cfg.l, n=n,
               theta0=float(case.params.get("theta0", nan)), sigma=cfg.sigma, gamma_div=cfg.gamma_div,
               gamma_u=cfg.gamma_u, gamma_p=cfg.gamma_p, alpha=float(case.alpha),
               status="failed", message=message)
    return row


def run_condition_study(cfg: StudyConfig) -> StudyReport:
    """κ_2 per level and the slope of log κ against log(1/h)."""
    rows = [solve_case(cfg, n, cond=True) for n in cfg.levels]
    return StudyReport("condition", asdict(cfg), rows, {"cond_slope": _cond_slope(rows)})


def run_robin(cfg: StudyConfig) -> StudyReport:
    """Convergence and condition numbers for the Robin variant of case 1."""
    if cfg.case != "flower-robin":
        cfg = cfg.replace(case="flower-robin")
    rep = run_convergence(cfg.replace(cond=True))
    rep.kind = "robin"
    return rep


STUDIES = {
    "solve": run_solve,
    "convergence": run_convergence,
    "sweep-angle": run_angle_sweep,
    "sweep-param": run_param_sweep,
    "condition": run_condition_study,
    "robin": run_robin,
}
