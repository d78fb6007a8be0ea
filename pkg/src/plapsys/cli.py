"""
Command-line driver.

Subcommands::

    solve     single p-Laplacian Dirichlet problem
    barriers  comparison functions and their distance constants for a spec
    fixpoint  rectangle selection and damped Picard iteration for a spec
    validate  admissibility, envelope and gradient-constant calibration
    sweep     fixpoint runs over a parameter grid, one row per cell

Every run writes ``manifest.json`` (input hash, parameters, package versions,
output hashes), ``report.txt`` and CSV outputs into ``--out``; ``--plots``
adds SVG figures under ``plots/``.

Exit status: 0 success, 1 internal error, 2 bad input, 3 inadmissible spec,
4 iteration limit, 5 no closing rectangle constant, 6 iterate left the
rectangle.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import itertools
import json
import logging
import platform
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .barriers import build_barriers, verify_lemma2
from .errors import (
    ClosureFailure,
    ConfigurationError,
    InadmissibleSpecError,
    IterationLimitError,
    PlapsysError,
    SpecInvalidError,
)
from .estimates import calibrate_kp, energy_chain_report, load_family, validate_kp
from .fixedpoint import closure_check, frozen_loads, iterate, make_rectangle, select_C
from .mesh import Mesh, build_mesh, norm_sup_grad, read_fields_csv, write_fields_csv
from .plap import PlapConfig, SingularLoad, load_norm, plap_solve
from .system import SystemSpec, check_envelope, parse_spec, validate_cdt

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_PARSE = 2
EXIT_INADMISSIBLE = 3
EXIT_ITERATION_LIMIT = 4
EXIT_CLOSURE = 5
EXIT_LEFT_SET = 6

STATUS_EXIT = {"converged": EXIT_OK, "iteration-limit": EXIT_ITERATION_LIMIT, "left-set": EXIT_LEFT_SET}
COMMANDS = ("solve", "barriers", "fixpoint", "validate", "sweep")


@dataclass
class RunConfig:
    """Everything a run depends on; serialized into the manifest."""

    command: str
    spec_path: str | None = None
    mesh_n: int | None = None
    tol: float = 1e-6
    solver_tol: float = 1e-9
    max_iter: int = 200
    damping: float = 0.5
    out: str = "out"
    plots: bool = False
    workers: int = 1
    seed: int = 0
    p: float = 2.0
    dim: int = 1
    load: tuple[float, float, float] = (1.0, 0.0, 0.0)
    load_csv: str | None = None
    grid: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigurationError(f"unknown command {self.command!r}")
        if self.tol <= 0 or self.solver_tol <= 0:
            raise ConfigurationError("tolerances must be positive")
        if self.max_iter < 1:
            raise ConfigurationError("max-iter must be at least 1")
        if not 0 < self.damping <= 1:
            raise ConfigurationError("damping must lie in (0, 1]")
        if self.workers < 1:
            raise ConfigurationError("workers must be at least 1")
        if self.mesh_n is not None and self.mesh_n < 3:
            raise ConfigurationError("mesh-n must be at least 3")


def _load_triple(text: str) -> tuple[float, float, float]:
    parts = [float(t) for t in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("load must be c0,c1,mu")
    return tuple(parts)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", dest="spec_path", help="system spec (INI)")
    common.add_argument("--mesh-n", type=int, help="nodes per axis (default 257 in 1D, 65 in 2D)")
    common.add_argument("--tol", type=float, default=1e-6, help="fixed-point tolerance")
    common.add_argument("--solver-tol", type=float, default=1e-9, help="p-Laplacian residual tolerance")
    common.add_argument("--max-iter", type=int, default=200)
    common.add_argument("--damping", type=float, default=0.5)
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--plots", action="store_true", help="write SVG figures")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--seed", type=int, default=0, help="seed of the calibration loads")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="plapsys", description=__doc__.split("\n\n")[0].strip())
    sub = parser.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", parents=[common], help="solve one Dirichlet problem")
    s.add_argument("--p", type=float, default=2.0)
    s.add_argument("--dim", type=int, choices=(1, 2), default=1)
    s.add_argument("--load", type=_load_triple, default=(1.0, 0.0, 0.0), help="c0,c1,mu for c0 + c1 d^mu")
    s.add_argument("--load-csv", help="nodal load from a field CSV (column 'g')")
    for name in ("barriers", "fixpoint", "validate"):
        sub.add_parser(name, parents=[common])
    w = sub.add_parser("sweep", parents=[common], help="fixpoint over a parameter grid")
    w.add_argument("--grid", action="append", default=[], metavar="KEY=V1,V2", help="e.g. gamma1=0.1,0.2")
    return parser


def _config_from_args(ns: argparse.Namespace) -> RunConfig:
    d = vars(ns).copy()
    d.pop("verbose", None)
    return RunConfig(**{k: v for k, v in d.items() if k in RunConfig.__dataclass_fields__})


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _versions() -> dict:
    import matplotlib
    import scipy

    from . import __version__

    return {
        "plapsys": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "matplotlib": matplotlib.__version__,
    }


def write_manifest(out: Path, cfg: RunConfig, spec_text: str | None, status: int, extra: dict | None = None) -> None:
    params = asdict(cfg)
    h = hashlib.sha256(json.dumps(params, sort_keys=True).encode())
    if spec_text is not None:
        h.update(spec_text.encode())
    outputs = {
        str(p.relative_to(out)): _sha256(p)
        for p in sorted(out.rglob("*"))
        if p.is_file() and p.name != "manifest.json" and "cells" not in p.relative_to(out).parts
    }
    manifest = {
        "command": cfg.command,
        "inputs_sha256": h.hexdigest(),
        "params": params,
        "spec": spec_text,
        "versions": _versions(),
        "exit_status": status,
        "outputs": outputs,
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _write_rows(path: Path, rows: list[dict]) -> None:
    if not rows:
        path.write_text("")
        return
    keys = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(v) for k, v in row.items()})


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _kv(d: dict) -> str:
    return "".join(f"{k} = {_fmt(v) if not isinstance(v, str) else repr(v)}\n" for k, v in d.items())


def _mesh_for(spec_or_dim, n: int | None) -> Mesh:
    if isinstance(spec_or_dim, SystemSpec):
        dim, extents = spec_or_dim.N, spec_or_dim.extents
    else:
        dim, extents = spec_or_dim, [(0.0, 1.0)] * spec_or_dim
    if n is None:
        n = 257 if dim == 1 else 65
    return build_mesh(dim, extents, n)


def _plots(out: Path):
    from . import plots

    (out / "plots").mkdir(exist_ok=True)
    return plots


def run_solve(cfg: RunConfig, out: Path) -> int:
    mesh = _mesh_for(cfg.dim, cfg.mesh_n)
    if cfg.load_csv:
        fields = read_fields_csv(cfg.load_csv, mesh)
        if "g" not in fields:
            raise ConfigurationError(f"{cfg.load_csv} has no column 'g'")
        g = fields["g"]
    else:
        g = SingularLoad(*cfg.load)
    hist: list = []
    u = plap_solve(mesh, cfg.p, g, PlapConfig(tol=cfg.solver_tol, max_iter=cfg.max_iter), history=hist)
    write_fields_csv(out / "fields" / "solution.csv", mesh, {"u": u})
    _write_rows(out / "history.csv", [{"k": k, "energy": e, "residual": r} for k, e, r in hist])
    report = {
        "p": cfg.p,
        "dim": mesh.dim,
        "n": mesh.n[0],
        "max_u": float(u.values.max()),
        "sup_grad": norm_sup_grad(u),
        "newton_iterations": len(hist),
        "final_residual": hist[-1][2] if hist else float("nan"),
    }
    (out / "report.txt").write_text(_kv(report))
    if cfg.plots:
        plots = _plots(out)
        plots.plot_fields(out / "plots" / "solution.svg", mesh, {"u": u})
        if hist:
            plots.plot_history(out / "plots" / "history.svg", [r for _, _, r in hist])
    return EXIT_OK


def run_barriers(cfg: RunConfig, spec: SystemSpec, out: Path) -> int:
    mesh = _mesh_for(spec, cfg.mesh_n)
    pcfg = PlapConfig(tol=cfg.solver_tol)
    bs = build_barriers(mesh, spec.p, spec.s, cfg=pcfg)
    order = verify_lemma2(bs)
    d = mesh.dist
    fields = {}
    for i in range(2):
        k = i + 1
        fields.update({f"z{k}": bs.z[i], f"y{k}": bs.y[i], f"w_hat{k}": bs.w_hat[i], f"w_sing{k}": bs.w_sing[i]})
    fields.update({"c0_d": bs.c0 * d, "c1_d": bs.c1 * d, "c2_d": bs.c2 * d, "c3_d": bs.c3 * d})
    write_fields_csv(out / "fields" / "barriers.csv", mesh, fields)
    (out / "report.txt").write_text(_kv(bs.report()) + order.as_text())
    if cfg.plots:
        plots = _plots(out)
        plots.plot_fields(
            out / "plots" / "barriers.svg",
            mesh,
            {"z1": bs.z[0], "y1": bs.y[0], "c0 d": bs.c0 * d, "c1 d": bs.c1 * d},
        )
    return EXIT_OK if order.passed else EXIT_INTERNAL


def calibrate_spec(spec: SystemSpec, mesh: Mesh, seed: int, pcfg: PlapConfig | None = None):
    """Per-component calibration on the seeded load family; returns reports."""
    return [calibrate_kp(mesh, spec.p[i], load_family(20, spec.r[i], seed), spec.r[i], cfg=pcfg) for i in range(2)]


def fixpoint_pipeline(spec: SystemSpec, cfg: RunConfig, out: Path) -> tuple[int, dict]:
    """Full fixpoint run; returns the exit status and a summary row."""
    row: dict = {}
    cdt = validate_cdt(spec)
    row["admissible"] = cdt.admissible
    for c in cdt.conditions:
        row[f"{c.name}{c.index}"] = c.passed
    lines = [cdt.as_text()]
    if not cdt.admissible:
        (out / "report.txt").write_text("".join(lines) + "status = 'inadmissible'\n")
        row.update(status="inadmissible", C=float("nan"), iterations=0, residual=float("nan"), kp_slack=float("nan"))
        return EXIT_INADMISSIBLE, row
    mesh = _mesh_for(spec, cfg.mesh_n)
    pcfg = PlapConfig(tol=cfg.solver_tol)
    reports = calibrate_spec(spec, mesh, cfg.seed, pcfg)
    k_p = max(r.k_p for r in reports)
    lines.append(_kv({"k_p": k_p}))
    bs = build_barriers(mesh, spec.p, spec.s, cfg=pcfg)
    try:
        C = select_C(spec, bs, k_p)
    except ClosureFailure as exc:
        lines.append(_kv({"status": "closure-failure", "blocking": ", ".join(exc.blocking)}))
        (out / "report.txt").write_text("".join(lines))
        row.update(status="closure-failure", C=float("nan"), iterations=0, residual=float("nan"), kp_slack=float("nan"))
        return EXIT_CLOSURE, row
    chk = closure_check(spec, bs, k_p, C)
    lines.append(_kv({"C": C, **{f"{n}{i + 1}_slack": getattr(chk, n)[i] for n in ("lower", "upper", "norm") for i in range(2)}}))
    rect = make_rectangle(bs, C)
    state = iterate(spec, mesh, rect, damping=cfg.damping, tol=cfg.tol, max_iter=cfg.max_iter, cfg=pcfg)
    u, v = state.iterate
    _write_rows(out / "history.csv", state.history)
    write_fields_csv(out / "fields" / "solution.csv", mesh, {"u": u, "v": v})
    loads = frozen_loads(spec, u, v)
    slack = min(
        k_p * load_norm(mesh, loads[i], spec.r[i]) ** (1.0 / (spec.p[i] - 1.0)) - norm_sup_grad(w)
        for i, w in enumerate((u, v))
    )
    summary = {
        "status": state.status,
        "iterations": state.k,
        "residual": state.residual_history[-1],
        "in_rectangle": state.in_rectangle,
        "grad_within_cap": state.grad_within_cap,
        "kp_slack": slack,
    }
    if state.certificate is not None:
        summary["certificate1"], summary["certificate2"] = state.certificate
    lines.append(_kv(summary))
    if state.status == "converged":
        lines.append(energy_chain_report(spec, mesh, u, v, pcfg).as_text())
    (out / "report.txt").write_text("".join(lines))
    if cfg.plots:
        plots = _plots(out)
        plots.plot_fields(out / "plots" / "solution.svg", mesh, {"u": u, "v": v})
        plots.plot_history(out / "plots" / "residual.svg", state.residual_history)
    row.update(C=C, **{k: summary[k] for k in ("status", "iterations", "residual", "kp_slack")})
    return STATUS_EXIT[state.status], row


def run_validate(cfg: RunConfig, spec: SystemSpec, out: Path) -> int:
    cdt = validate_cdt(spec)
    text = cdt.as_text()
    try:
        text += check_envelope(spec, seed=cfg.seed).as_text()
    except SpecInvalidError as exc:
        text += f"envelope_error = {str(exc)!r}\n"
        (out / "report.txt").write_text(text)
        return EXIT_INADMISSIBLE
    mesh = _mesh_for(spec, cfg.mesh_n)
    pcfg = PlapConfig(tol=cfg.solver_tol)
    rows = []
    for i, rep in enumerate(calibrate_spec(spec, mesh, cfg.seed, pcfg)):
        k = i + 1
        text += "".join(f"{line.split(' = ')[0]}{k} = {line.split(' = ')[1]}\n" for line in rep.as_text().splitlines())
        hold = validate_kp(mesh, spec.p[i], rep.k_p, load_family(10, spec.r[i], cfg.seed + 1), spec.r[i], pcfg)
        text += f"holdout_pass{k} = {all(h.holds for h in hold)}\n"
        text += f"holdout_min_slack{k} = {min(h.slack for h in hold)!r}\n"
        rows += [{"component": k, "set": "calibration", **s} for s in rep.sample_rows()]
        rows += [
            {"component": k, "set": "holdout", "problem_id": h.problem_id, "grad_sup": h.grad_sup,
             "load_norm": h.load_norm, "ratio": h.grad_sup / h.bound * rep.k_p}
            for h in hold
        ]
    (out / "report.txt").write_text(text)
    _write_rows(out / "samples.csv", rows)
    return EXIT_OK if cdt.admissible else EXIT_INADMISSIBLE


def _parse_grid(items: list[str]) -> list[dict]:
    axes = []
    for item in items:
        if "=" not in item:
            raise ConfigurationError(f"grid entry {item!r} is not KEY=V1,V2")
        key, vals = item.split("=", 1)
        try:
            axes.append([(key.strip(), float(v)) for v in vals.split(",") if v.strip()])
        except ValueError:
            raise ConfigurationError(f"non-numeric value in grid entry {item!r}") from None
    return [dict(c) for c in itertools.product(*axes)] if axes else [{}]


def _sweep_cell(args) -> dict:
    spec_text, params, cfg_dict, cell_dir = args
    cfg = RunConfig(**cfg_dict)
    cell = Path(cell_dir)
    (cell / "fields").mkdir(parents=True, exist_ok=True)
    row = dict(params)
    try:
        spec = parse_spec(spec_text).with_params(**params)
        code, info = fixpoint_pipeline(spec, cfg, cell)
        row.update(info)
        row["exit_status"] = code
        row["error"] = ""
        write_manifest(cell, cfg, spec_text, code, extra={"cell_params": params})
    except PlapsysError as exc:
        row.update(status="error", exit_status=_exit_for(exc), error=str(exc))
    except Exception as exc:  # noqa: BLE001 - a failing cell must not stop the sweep
        row.update(status="error", exit_status=EXIT_INTERNAL, error=f"{type(exc).__name__}: {exc}")
    return row


def run_sweep(cfg: RunConfig, spec_text: str, out: Path) -> int:
    cells = _parse_grid(cfg.grid)
    base = asdict(cfg)
    base.update(command="fixpoint", grid=[], plots=cfg.plots, workers=1)
    jobs = [(spec_text, params, base, str(out / "cells" / f"cell_{k:03d}")) for k, params in enumerate(cells)]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(_sweep_cell, jobs))
    else:
        rows = [_sweep_cell(j) for j in jobs]
    keys: list[str] = ["cell"]
    for k, row in enumerate(rows):
        row["cell"] = f"cell_{k:03d}"
        keys += [key for key in row if key not in keys]
    _write_rows(out / "sweep.csv", [{k: row.get(k, "") for k in keys} for row in rows])
    done = sum(r.get("status") == "converged" for r in rows)
    (out / "report.txt").write_text(_kv({"cells": len(rows), "converged": done}))
    return EXIT_OK


def _exit_for(exc: BaseException) -> int:
    if isinstance(exc, InadmissibleSpecError):
        return EXIT_INADMISSIBLE
    if isinstance(exc, ClosureFailure):
        return EXIT_CLOSURE
    if isinstance(exc, IterationLimitError):
        return EXIT_ITERATION_LIMIT
    if isinstance(exc, (ConfigurationError, SpecInvalidError, OSError)):
        return EXIT_PARSE
    return EXIT_INTERNAL


def run(cfg: RunConfig) -> int:
    """Dispatch one run and write its manifest; returns the exit status."""
    out = Path(cfg.out)
    spec_text = None
    try:
        (out / "fields").mkdir(parents=True, exist_ok=True)
        if cfg.command != "solve":
            if not cfg.spec_path:
                raise ConfigurationError(f"{cfg.command} requires --spec")
            spec_text = Path(cfg.spec_path).read_text()
            spec = parse_spec(spec_text)
        if cfg.command == "solve":
            status = run_solve(cfg, out)
        elif cfg.command == "barriers":
            status = run_barriers(cfg, spec, out)
        elif cfg.command == "fixpoint":
            status, _ = fixpoint_pipeline(spec, cfg, out)
            if status == EXIT_INADMISSIBLE:
                print("error: spec fails the admissibility conditions\n" + validate_cdt(spec).as_text(), file=sys.stderr)
        elif cfg.command == "validate":
            status = run_validate(cfg, spec, out)
        else:
            status = run_sweep(cfg, spec_text, out)
    except PlapsysError as exc:
        status = _exit_for(exc)
        print(f"error: {exc}", file=sys.stderr)
        if getattr(exc, "report", None) is not None:
            print(exc.report.as_text(), file=sys.stderr)
    except OSError as exc:
        status = EXIT_PARSE
        print(f"error: {exc}", file=sys.stderr)
    except Exception:  # noqa: BLE001
        traceback.print_exc()
        status = EXIT_INTERNAL
    if out.is_dir():
        write_manifest(out, cfg, spec_text, status)
    return status


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config_from_args(ns)
    except ConfigurationError as exc:
        parser.error(str(exc))
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
