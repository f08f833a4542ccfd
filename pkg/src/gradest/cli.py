"""Batch front-end: ``gradest {poisson,heat,identities,convergence}``.

Exit codes: 0 all checks pass, 1 a margin or residual check failed,
2 usage or configuration error, 3 runtime failure (positivity loss, solver
divergence).
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import calculus as dc
from . import elliptic as el
from . import mms
from . import parabolic as pa
from .config import SUBCOMMANDS, ConfigError, RunConfig, load_config
from .geometry import FlatTorus, build_flat_torus, build_unit_sphere_mesh, integrate
from .reporting import write_csv, write_json

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3
MARGIN_TOL = 1e-6

# residual tolerances at N = 64, dt = 1e-3
IDENTITY_TOLERANCES = {
    "bochner": 1e-8,
    "trace_margin": -1e-10,
    "q_identity": 1e-8,
    "quotient_laplacian": 1e-8,
    "w_heat[exact]": 1e-9,
    "quotient_evolution[exact]": 1e-8,
    "quotient_time_derivative[exact]": 1e-12,
    "w_heat[fd]": 1e-5,
    "wt_evolution[fd]": 1e-4,
    "quotient_evolution[fd]": 1e-4,
    "quotient_time_derivative[fd]": 1e-6,
    "F_evolution[fd]": 1e-3,
}


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""


@dataclass
class SuiteSummary:
    subcommand: str
    checks: list[Check] = field(default_factory=list)
    wall_time: float = 0.0
    files: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, passed, value, tolerance, detail=""):
        self.checks.append(Check(name, bool(passed), float(value), float(tolerance), detail))

    def as_dict(self) -> dict:
        return {
            "subcommand": self.subcommand,
            "overall": "pass" if self.passed else "fail",
            "wall_time": self.wall_time,
            "checks": [asdict(c) for c in self.checks],
            "files": self.files,
        }


class Outputs:
    def __init__(self, out: Path, fmt: str, summary: SuiteSummary):
        self.out, self.fmt, self.summary = out, fmt, summary

    def csv(self, name, columns, rows):
        if self.fmt in ("csv", "both"):
            self.summary.files.append(write_csv(self.out / f"{name}.csv", columns, rows).name)

    def json(self, name, payload):
        if self.fmt in ("json", "both"):
            self.summary.files.append(write_json(self.out / f"{name}.json", payload).name)


def _manifold(cfg: RunConfig):
    if cfg.manifold == "sphere":
        return build_unit_sphere_mesh(cfg.subdivision)
    return build_flat_torus(cfg.dimension, cfg.torus_lengths, cfg.torus_resolutions)


def _sup(f) -> float:
    return float(np.max(np.abs(f)))


# ---------------------------------------------------------------- poisson


def _elliptic_sources(cfg: RunConfig, m):
    names = cfg.scenario
    if names is None:
        pool = mms.ELLIPTIC_SPHERE if cfg.manifold == "sphere" else {
            k: v for k, v in mms.ELLIPTIC_TORUS.items() if v[1] <= m.dimension
        }
        names = ["zero", *pool]
    out = []
    for name in names:
        if name == "zero":
            out.append((name, np.zeros(m.shape)))
            continue
        try:
            out.append((name, mms.elliptic_mms(name, m).A))
        except mms.CatalogError as exc:
            raise ConfigError(f"field 'scenario': {exc}") from None
    return out


def run_poisson(cfg: RunConfig, outputs: Outputs, summary: SuiteSummary):
    m = _manifold(cfg)
    reports = []
    for name, A in _elliptic_sources(cfg, m):
        for delta in cfg.delta:
            for b in cfg.b:
                scen = el.EllipticScenario(
                    m, A, delta=delta, b=b, K=cfg.K, name=name, cg_maxiter=cfg.cg_maxiter
                )
                rep = el.verify_theorem1(scen)
                reports.append(rep)
                summary.add(
                    f"theorem1[{name},delta={delta},b={b}]", rep.holds, rep.margin,
                    -MARGIN_TOL * max(1.0, abs(rep.rhs_general_b)),
                    f"sup_Q={rep.sup_Q:.6g} rhs={rep.rhs_general_b:.6g} "
                    f"statement_rhs={rep.rhs_theorem_statement:.6g}",
                )
    outputs.csv("poisson", el.EllipticReport.CSV_COLUMNS, [r.csv_row() for r in reports])
    outputs.json("poisson", {"reports": [asdict(r) for r in reports]})


# ---------------------------------------------------------------- heat


def heat_scenario(name: str, m, cfg: RunConfig) -> pa.HeatRunConfig:
    """Build a heat run for a catalog entry or one of the built-ins ``constant``, ``bump``, ``sink``."""
    common = dict(T=cfg.T, dt=cfg.dt, a=cfg.a, K=cfg.K, stride=cfg.stride, name=name)
    if name == "constant":
        return pa.HeatRunConfig(m, np.ones(m.shape), pa.SpaceTimeSource.zero(m), **common)
    if name == "bump":
        if not isinstance(m, FlatTorus):
            raise ConfigError("field 'scenario': 'bump' needs a torus")
        x = m.coordinates[0] * (2 * math.pi / m.lengths[0])
        u0 = 0.1 + ((1 + np.cos(x)) / 2) ** 8
        return pa.HeatRunConfig(m, u0, pa.SpaceTimeSource.zero(m), **common)
    if name == "sink":
        ones = np.ones(m.shape)
        src = pa.SpaceTimeSource(m, value=lambda t: -2.0 * ones, kind="sampled")
        return pa.HeatRunConfig(m, ones.copy(), src, **common)
    try:
        sol = mms.parabolic_mms(name, m)
    except mms.CatalogError as exc:
        raise ConfigError(f"field 'scenario': {exc}") from None
    return pa.HeatRunConfig(m, sol.u(0.0), sol.source, exact=sol.u, **common)


def heat_checks(run: pa.HeatRun, summary: SuiteSummary, ref_tol: float):
    name = run.config.name
    recs = run.records
    s = run.summary
    summary.add(f"heat[{name}].sup_F_finite", math.isfinite(s["sup_F_spacetime"]), s["sup_F_spacetime"], math.inf)
    for key in ("young_margin", "trace_margin", "key1_margin", "liyau_margin"):
        vals = [(getattr(r, key), r.margin_scale) for r in recs if not math.isnan(getattr(r, key))]
        if not vals:
            continue
        worst = min(v / sc for v, sc in vals)
        summary.add(f"heat[{name}].{key}", worst >= -MARGIN_TOL, worst, -MARGIN_TOL)
    if not math.isnan(s["max_reference_error"]):
        err = s["max_reference_error"]
        summary.add(f"heat[{name}].reference_error", err <= ref_tol, err, ref_tol)


def run_heat(cfg: RunConfig, outputs: Outputs, summary: SuiteSummary):
    m = _manifold(cfg)
    for name in cfg.scenario or ["decay"]:
        run = pa.run_heat(heat_scenario(name, m, cfg))
        heat_checks(run, summary, cfg.ref_tol)
        outputs.csv(f"heat_{name}", pa.HeatTraceRecord.CSV_COLUMNS, [r.csv_row() for r in run.records])
        outputs.json(f"heat_{name}", {"summary": run.summary, "records": [asdict(r) for r in run.records]})


# ---------------------------------------------------------------- identities


def identity_rows(cfg: RunConfig, seed: int) -> list[dict]:
    """Every residual operation on the torus catalog (plus noise), at ``N = resolution[0]``."""
    N, dt = cfg.resolution[0], cfg.dt
    tol = IDENTITY_TOLERANCES
    rows = []

    def add(check, case, value, dt_used=None):
        t = tol[check]
        passed = value >= t if check == "trace_margin" else value <= t
        rows.append(dict(check=check, case=case, N=N, dt=dt_used if dt_used else "", residual=value,
                         tolerance=t, passed=passed))

    two = build_flat_torus(2, [2 * math.pi] * 2, [N, N])
    corpus = [(cid, mms.elliptic_mms(cid, two).u) for cid in mms.ELLIPTIC_TORUS]
    corpus += [(f"noise[{seed + i}]", mms.band_limited_noise(two, seed + i)) for i in range(cfg.noise_samples)]
    for case, f in corpus:
        add("bochner", case, _sup(dc.bochner_residual(two, f)))
        add("trace_margin", case, float(dc.hessian_trace_margin(two, f).min()))
    for cid, (_, dim) in mms.ELLIPTIC_TORUS.items():
        m = build_flat_torus(dim, [2 * math.pi] * dim, [N] * dim)
        u = mms.elliptic_mms(cid, m).u
        A = -dc.laplace_beltrami(m, u)
        add("q_identity", cid, _sup(el.q_identity_residual(m, u, A)))
        add("quotient_laplacian", cid, _sup(el.quotient_laplacian_residual(m, u, A)))
    t = 0.5
    for cid, (_, dim) in mms.PARABOLIC_TORUS.items():
        m = build_flat_torus(dim, [2 * math.pi] * dim, [N] * dim)
        try:
            sol = mms.parabolic_mms(cid, m)
        except pa.SourceConsistencyError:
            # grid too coarse to resolve the analytic source
            rows.append(dict(check="source_self_check", case=cid, N=N, dt="", residual=math.inf,
                             tolerance=0.0, passed=False))
            continue
        u, u_t, A, A_t = sol.u(t), sol.u_t(t), sol.A(t), sol.source.A_t(t)
        add("w_heat[exact]", cid, _sup(pa.w_heat_residual(m, u, u_t, A)))
        add("quotient_evolution[exact]", cid, _sup(pa.quotient_evolution_residual(m, u, u_t, A, A_t)))
        add("quotient_time_derivative[exact]", cid, _sup(
            pa.quotient_time_derivative_residual(u, u_t, A, A_t, sol.quotient_dt_complex_step(t))))
        win = sol.window(t, dt)
        ut_fd = win.ut(0)
        add("w_heat[fd]", cid, _sup(pa.w_heat_residual(m, u, ut_fd, A)), dt)
        add("wt_evolution[fd]", cid, _sup(pa.wt_evolution_residual(m, win)), dt)
        add("quotient_evolution[fd]", cid, _sup(pa.quotient_evolution_residual(m, u, ut_fd, A, A_t)), dt)
        add("quotient_time_derivative[fd]", cid, _sup(
            pa.quotient_time_derivative_residual(u, ut_fd, A, A_t, win.quotient_dt())), dt)
        add("F_evolution[fd]", cid, _sup(pa.F_evolution_residual(m, win, cfg.a)), dt)
    return rows


def sphere_rows(cfg: RunConfig, seed: int) -> list[dict]:
    m = build_unit_sphere_mesh(cfg.subdivision)
    rng = np.random.default_rng(seed)
    f, g = rng.normal(size=(2, m.node_count))
    fg = integrate(m, f * dc.laplace_beltrami(m, g))
    gf = integrate(m, g * dc.laplace_beltrami(m, f))
    scale = max(abs(fg), 1e-300)
    green = abs(fg + dc.dirichlet_form(m, f, g)) / scale
    A = mms.elliptic_mms("sph-l1", m).A
    v = el.solve_poisson_mean_zero(m, A, maxiter=cfg.cg_maxiter)
    rows = []
    for check, val, t in (
        ("self_adjoint", abs(fg - gf) / scale, 1e-6),
        ("green_identity", green, 1e-6),
        ("poisson_residual", _sup(el.poisson_residual(m, v, A)), 1e-8),
    ):
        rows.append(dict(check=check, case=f"icosphere-{cfg.subdivision}", N=m.node_count, dt="",
                         residual=val, tolerance=t, passed=val <= t))
    return rows


def run_identities(cfg: RunConfig, outputs: Outputs, summary: SuiteSummary, seed: int):
    rows = sphere_rows(cfg, seed) if cfg.manifold == "sphere" else identity_rows(cfg, seed)
    for r in rows:
        summary.add(f"{r['check']}[{r['case']}]", r["passed"], r["residual"], r["tolerance"])
    cols = ("check", "case", "N", "dt", "residual", "tolerance", "passed")
    outputs.csv("identities", cols, rows)
    outputs.json("identities", {"rows": rows})


# ---------------------------------------------------------------- convergence


def run_convergence(cfg: RunConfig, outputs: Outputs, summary: SuiteSummary):
    if cfg.check not in mms.CHECKS:
        raise ConfigError(f"field 'check': unknown check {cfg.check!r}; choose from {sorted(mms.CHECKS)}")
    _, order, variable = mms.CHECKS[cfg.check]
    if variable == "N":
        levels = [(N, None) for N in cfg.levels]
        default = "exp-cos"
    else:
        levels = [(cfg.resolution[0], dt) for dt in cfg.dt_levels]
        default = "decay"
    cid = (cfg.scenario or [default])[0]
    if cid not in (mms.ELLIPTIC_TORUS if variable == "N" else mms.PARABOLIC_TORUS):
        raise ConfigError(f"field 'scenario': {cid!r} is not a torus entry for check {cfg.check!r}")
    if len(levels) < 3:
        raise ConfigError("field 'levels'/'dt_levels': a convergence study needs >= 3 levels")
    rows = mms.convergence_study(cfg.check, levels, catalog_id=cid, expected_order=order)
    for r in rows[1:]:
        label = f"{cfg.check}[{cid}].order[{r.level - 1}->{r.level}]"
        summary.add(label, not r.flagged, r.order, order - 0.2, "round-off floor" if math.isnan(r.order) else "")
    table = [dict(r.csv_row(), dt="" if r.dt is None else r.dt) for r in rows]
    outputs.csv(f"convergence_{cfg.check}", mms.StudyRow.CSV_COLUMNS, table)
    outputs.json(f"convergence_{cfg.check}", {"check": cfg.check, "scenario": cid, "rows": table})


# ---------------------------------------------------------------- entry


def run_subcommand(cfg: RunConfig, out: Path, fmt: str = "both", seed: int = 0) -> SuiteSummary:
    """Run one subcommand, write its reports under ``out`` and return the summary."""
    summary = SuiteSummary(cfg.subcommand)
    out.mkdir(parents=True, exist_ok=True)
    outputs = Outputs(out, fmt, summary)
    start = time.perf_counter()
    if cfg.subcommand == "poisson":
        run_poisson(cfg, outputs, summary)
    elif cfg.subcommand == "heat":
        run_heat(cfg, outputs, summary)
    elif cfg.subcommand == "identities":
        run_identities(cfg, outputs, summary, seed)
    elif cfg.subcommand == "convergence":
        run_convergence(cfg, outputs, summary)
    else:
        raise ConfigError(f"field 'subcommand': must be one of {SUBCOMMANDS}")
    summary.wall_time = time.perf_counter() - start
    write_json(out / "summary.json", summary.as_dict())
    return summary


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gradest", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", nargs="?", choices=SUBCOMMANDS)
    p.add_argument("--config", type=Path, default=None, help="flat key = value config file")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--format", choices=("csv", "json", "both"), default="both")
    p.add_argument("--seed", type=int, default=0, help="seed for band-limited noise fields")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        if not 0 <= args.seed < 2**64:
            raise ConfigError(f"--seed must be an unsigned 64-bit integer, got {args.seed}")
        cfg = load_config(args.config) if args.config else RunConfig().validate()
        if args.subcommand and cfg.subcommand and args.subcommand != cfg.subcommand:
            raise ConfigError(
                f"field 'subcommand': config says {cfg.subcommand!r} but command line says {args.subcommand!r}"
            )
        cfg.subcommand = args.subcommand or cfg.subcommand
        if cfg.subcommand is None:
            raise ConfigError("no subcommand given (positional argument or 'subcommand' field)")
        summary = run_subcommand(cfg, args.out, args.format, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (pa.PositivityError, el.SolverError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for c in summary.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name} value={c.value:.6g} tol={c.tolerance:.3g}")
    print(f"overall: {'PASS' if summary.passed else 'FAIL'} ({len(summary.checks)} checks)")
    return EXIT_OK if summary.passed else EXIT_VIOLATION


if __name__ == "__main__":
    sys.exit(main())
