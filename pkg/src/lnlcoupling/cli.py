"""Command line entry point: ``lnlcoupling {solve,check,sweep} CONFIG``.

Exit status: 0 success, 2 configuration error, 3 admissibility failure
under ``--strict``, 4 solver non-convergence, 5 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path
from typing import Any

import numpy as np

from .config import ConfigError, RunConfig, build_model, format_value, load_config, write_report
from .dofs import CELL, norm
from .elastic_models import rigid_motion_basis
from .geometry import Label, check_admissibility
from .kernels import SeparableSine, check_J1
from .models import ModelConfig, ModelKind, assemble_system
from .solvers import ConvergenceError, coercivity_estimate, minimize_nonlinear, minimize_quadratic, nonlinear_energy
from .verify import Record, el_residual, gradient_check

EXIT_OK, EXIT_CONFIG, EXIT_ADMISSIBILITY, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4, 5


class RunResult:
    def __init__(self):
        self.code = EXIT_OK
        self.records: dict[str, Any] = {}
        self.checks: list[Record] = []

    def add(self, prefix: str, items: dict[str, Any]) -> None:
        for k, v in items.items():
            self.records[f"{prefix}.{k}"] = v

    def check(self, rec: Record) -> None:
        self.checks.append(rec)
        self.add(f"verify.{rec.name}", {"value": rec.value, "threshold": rec.threshold, "passed": rec.passed})

    def value(self, key: str):
        return self.records.get(key)


def _admissibility(model: ModelConfig, result: RunResult) -> bool:
    if model.kernel is None:
        result.add("admissibility", {"skipped": True})
        return True
    delta = model.kernel.delta
    rep = check_admissibility(model.grid, model.gamma, delta, model.kind.admissibility_mode)
    result.add("admissibility", rep.as_records())
    holds, c_est = check_J1(model.kernel, delta, dim=model.grid.dim)
    result.add("admissibility", {"J1": holds, "J1_C": c_est})
    return rep.ok and holds


def write_field(path: Path, model: ModelConfig, dofmap, values: np.ndarray) -> None:
    """One row per active dof: kind, coordinates, component, value (shortest round-trip floats)."""
    dim, blk = model.grid.dim, dofmap.block
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind"] + [f"x{k}" for k in range(dim)] + ["component", "value"])
        for node in range(dofmap.n):
            kind = "cell" if dofmap.node_kind[node] == CELL else "vertex"
            coords = [repr(float(c)) for c in dofmap.node_coords[node]]
            for comp in range(blk):
                w.writerow([kind] + coords + [comp, repr(float(values[node * blk + comp]))])


def _check_exact(model: ModelConfig) -> None:
    if not isinstance(model.source, SeparableSine) or model.kind.is_elastic:
        raise ConfigError("verify.exact = poisson_sine needs source.kind = separable_sine on a scalar model")
    if np.any(model.grid.flat_labels == Label.NONLOCAL):
        raise ConfigError("verify.exact = poisson_sine needs an empty nonlocal region")


def _exact_error(model: ModelConfig, dofmap, u: np.ndarray) -> float:
    exact = model.source.poisson_solution(dofmap.node_coords[: dofmap.n])
    return float(np.max(np.abs(u[: dofmap.n] - exact), initial=0.0))


def run(cfg: RunConfig, out_dir: Path, strict: bool = False) -> RunResult:
    """Check, assemble, solve and verify one configuration, writing its artifacts."""
    result = RunResult()
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        model = build_model(cfg)
        if cfg["verify.exact"] == "poisson_sine":
            _check_exact(model)
        admissible = _admissibility(model, result)
        if strict and not admissible:
            result.code = EXIT_ADMISSIBILITY
            return _finish(cfg, out_dir, result)
        system = assemble_system(model) if not _is_nonlinear(model) else None
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    seed = cfg["seed"]
    rng = np.random.default_rng(seed)
    try:
        if system is None:
            dm = model.dofmap()
            field, rep = minimize_nonlinear(model.grid, dm, model.p, model.r, model.kernel, model.source,
                                            tol=cfg["nonlinear.tol"], max_iter=cfg["nonlinear.max_iter"])
            u = field.values
        else:
            dm = system.dofmap
            result.add("system", system.stats())
            field, rep = minimize_quadratic(system, tol=cfg["solve.tol"], max_iter=cfg["solve.max_iter"],
                                            precond=cfg["solve.precond"])
            u = system.full_values(field.values)[: system.n]
    except ConvergenceError as exc:
        result.code = EXIT_SOLVER
        result.add("solve", {"converged": False, "message": str(exc)})
        if exc.report is not None:
            result.add("solve", {"iterations": exc.report.iterations, "residual": exc.report.residual})
        return _finish(cfg, out_dir, result)
    result.add("solve", {"converged": rep.converged, "iterations": rep.iterations,
                         "residual": rep.residual, "energy": rep.energy, "wall_time": rep.wall_time})
    write_field(out_dir / cfg["output.field"], model, dm, u)

    if system is not None:
        res = el_residual(model, system, field.values, margin=cfg["verify.flux_margin"])
        for region, vals in res.items():
            result.add(f"residual.{region}", vals)
        result.check(Record.upper("weak_residual", res["all"]["weak_max"], cfg["verify.residual_tol"]))
        if cfg["eig.enabled"]:
            deflate = None
            if cfg["eig.deflate"] == "constants":
                deflate = [np.ones(system.n)]
            elif cfg["eig.deflate"] == "rigid":
                deflate = list(rigid_motion_basis(dm))
            try:
                co = coercivity_estimate(system, eig_tol=cfg["eig.tol"], max_iter=cfg["eig.max_iter"],
                                         deflate=deflate, seed=seed)
            except ConvergenceError as exc:
                result.code = EXIT_SOLVER
                result.add("coercivity", {"message": str(exc)})
                return _finish(cfg, out_dir, result)
            result.add("coercivity", {"lambda_min": co.lambda_min, "iterations": co.iterations,
                                      "residual": co.residual})
            # strict lower bound: coercivity means lambda_min > eig.min
            result.check(Record("coercivity", co.lambda_min, cfg["eig.min"], co.lambda_min > cfg["eig.min"]))
        target = system
    else:
        target = nonlinear_energy(model.grid, dm, model.p, model.r, model.kernel, model.source)
        g = target.gradient(field.values)
        result.check(Record.upper("gradient_norm", norm(g), cfg["nonlinear.tol"]))

    if cfg["verify.gradient_probes"] > 0:
        probe = rng.standard_normal(dm.n_dofs)
        err = gradient_check(target, probe, cfg["verify.gradient_probes"], cfg["verify.h_fd"], seed)
        result.check(Record.upper("gradient_check", err, cfg["verify.gradient_tol"]))
    if cfg["verify.exact"] == "poisson_sine":
        h = model.grid.h
        err = _exact_error(model, dm, u)
        result.check(Record.upper("exact_error", err, cfg["verify.exact_factor"] * h * h))

    if not all(r.passed for r in result.checks):
        result.code = EXIT_VERIFY
    return _finish(cfg, out_dir, result)


def _is_nonlinear(model: ModelConfig) -> bool:
    return model.kind is ModelKind.SCALAR_PR and not (model.p == 2 and model.r == 2)


def _finish(cfg: RunConfig, out_dir: Path, result: RunResult) -> RunResult:
    result.records["exit_code"] = result.code
    write_report(out_dir / cfg["output.report"], result.records)
    return result


def run_check(cfg: RunConfig, out_dir: Path, strict: bool = False) -> RunResult:
    result = RunResult()
    out_dir.mkdir(parents=True, exist_ok=True)
    model = build_model(cfg)
    ok = _admissibility(model, result)
    if strict and not ok:
        result.code = EXIT_ADMISSIBILITY
    return _finish(cfg, out_dir, result)


SUMMARY_COLUMNS = ["value", "exit_code", "energy", "lambda_min", "weak_residual", "flux_residual",
                   "exact_error", "iterations"]


def run_sweep(cfg: RunConfig, param: str, values: list[str], out_dir: Path, strict: bool = False) -> int:
    """One run per value of ``param``; rows of the summary follow ``values``."""
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    code = EXIT_OK
    for i, text in enumerate(values):
        member = cfg.with_value(param, text)
        res = run(member, out_dir / f"run_{i:03d}", strict)
        rows.append([text, res.code, res.value("solve.energy"), res.value("coercivity.lambda_min"),
                     res.value("residual.all.weak_max"), res.value("residual.flux.max"),
                     res.value("verify.exact_error.value"), res.value("solve.iterations")])
        if res.code != EXIT_OK:
            code = res.code
            break
    with open(out_dir / cfg["output.summary"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for row in rows:
            w.writerow(["" if v is None else format_value(v) for v in row])
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lnlcoupling", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in [("solve", "check, assemble, solve and verify"), ("check", "admissibility only"),
                       ("sweep", "one solve per parameter value")]:
        p = sub.add_parser(name, help=text)
        p.add_argument("config", type=Path)
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--strict", action="store_true", help="exit 3 when admissibility fails")
        if name == "sweep":
            p.add_argument("--param", required=True, help="config key to vary")
            p.add_argument("--values", required=True, help="comma-separated values (may be empty)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "solve":
            res = run(cfg, args.out, args.strict)
            code = res.code
            print(f"solve: exit {code}, energy {res.value('solve.energy')}, "
                  f"residual {res.value('solve.residual')}")
        elif args.command == "check":
            res = run_check(cfg, args.out, args.strict)
            code = res.code
            print(f"check: ok={res.value('admissibility.ok')}, exit {code}")
        else:
            if args.param not in cfg.values:
                raise ConfigError(f"unknown config key {args.param!r}")
            values = [v.strip() for v in args.values.split(",") if v.strip()]
            code = run_sweep(cfg, args.param, values, args.out, args.strict)
            print(f"sweep: {len(values)} values, exit {code}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return code


if __name__ == "__main__":
    sys.exit(main())
