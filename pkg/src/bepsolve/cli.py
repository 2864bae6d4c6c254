"""Command-line front end: ``bepsolve run | verify | oracle | demo-org | sweep``.

Exit codes: 0 success, 1 numerical failure (or a failed verification),
2 invalid input.  Errors go to stderr as one ``error: <kind>: <message>`` line.
Set ``BEPSOLVE_LOG`` to ``quiet``, ``info`` or ``trace`` for progress logging.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .bifunctions import explicit, from_objective, regularize, verify_standard_assumptions
from .bilevel import SolveReport, TraceRow, solve_bep
from .config import ExperimentConfig, load_config
from .distances import BUILDERS, pair_by_label, verify_proximal_pair
from .errors import BepError, DiagnosticError, InvalidInputError, NumericalError
from .geometry import FeasibleSet
from .oracle import MAX_DIM, GridSpec, brute_force_bep, brute_force_ep
from .orgmodel import detect_traps, worthwhile_delta
from .problems import PRESETS, Problem

EXIT_OK, EXIT_NUMERICAL, EXIT_INVALID = 0, 1, 2
LOG_LEVELS = {"quiet": logging.WARNING, "info": logging.INFO, "trace": logging.DEBUG}
TRAP_GRID_STEP = 0.01

log = logging.getLogger("bepsolve")


def _fmt(v) -> str:
    return format(float(v), ".17g")


def csv_header(n: int) -> list:
    return (["k", "eps_k", "lambda_k"] + [f"x_{i}" for i in range(n)]
            + ["step_norm", "inner_iters", "inner_residual", "D_ref"])


def csv_row(row: TraceRow) -> list:
    return ([str(row.k), _fmt(row.eps), _fmt(row.lam)] + [_fmt(v) for v in row.x]
            + [_fmt(row.step_norm), str(row.inner_iterations), _fmt(row.inner_residual),
               "" if row.D_ref is None else _fmt(row.D_ref)])


def read_trace(path) -> tuple:
    """Load a CSV trace: ``(header, rows)`` with rows as lists of strings."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _clean(obj):
    """JSON-safe copy: arrays to lists, non-finite floats to ``None``."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _trap_section(problem: Problem, cfg: ExperimentConfig, report: SolveReport, pair) -> dict | None:
    if problem.org is None or problem.K.dimension > MAX_DIM:
        return None
    grid = GridSpec(TRAP_GRID_STEP, problem.K)
    xi = 1.0 / cfg.schedule.lam(0)
    traps = detect_traps(problem.org, report.final_point, xi, pair, grid, report.iterates)
    out = traps.as_dict()
    out["xi"] = xi
    out["grid_step"] = TRAP_GRID_STEP
    return out


def vr_along_trace(problem: Problem, report: SolveReport, pair) -> list:
    """Worthwhile-change quantities of the move from each iterate to the final point.

    Row ``k`` uses the ``k``-th regularization (``eps_k``, ``xi = 1/lam_k``,
    anchor ``x^k``) and records the largest deviation from
    ``-fbar_k(x^(k+1), y) = Delta(x^(k+1), y)`` over the final point and a
    few fixed probe points.
    """
    org = problem.org
    pts = report.iterates
    probes = problem.K.sample(np.random.default_rng(0), 8, margin=0.0)
    rows = []
    for r, anchor, x in zip(report.trace, pts[:-1], pts[1:]):
        xi = 1.0 / r.lam
        vr = worthwhile_delta(org, x, report.final_point, xi, pair, anchor, eps=r.eps)
        fbar = regularize(problem.f, problem.h, r.eps, r.lam, anchor, pair)
        err = 0.0
        for y in np.vstack([report.final_point, probes]):
            d = worthwhile_delta(org, x, y, xi, pair, anchor, eps=r.eps).Delta
            err = max(err, abs(-fbar(x, y) - d))
        rows.append({"k": r.k, "x": x.tolist(), "A_e": vr.A_e, "I_e": vr.I_e,
                     "Delta": vr.Delta, "xi": xi, "identity_error": err})
    return rows


def run_experiment(cfg: ExperimentConfig, out_dir, *, with_vr: bool = False) -> tuple:
    """Run one experiment; write the CSV trace and JSON report into ``out_dir``.

    Returns ``(exit_code, report_dict)``.  The CSV is flushed row by row so a
    numerical failure leaves the partial trace on disk.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    problem = cfg.problem
    pair = pair_by_label(cfg.pair_label, problem.K)
    csv_path, json_path = out / cfg.csv_name, out / cfg.json_name
    result = {"config": cfg.name, "problem": problem.name, "pair": pair.label, "seed": cfg.seed,
              "x0": cfg.x0.tolist()}
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(csv_header(problem.K.dimension))
        fh.flush()

        def on_row(row):
            writer.writerow(csv_row(row))
            fh.flush()

        try:
            report = solve_bep(problem.f, problem.h, problem.K, pair, cfg.schedule, cfg.x0,
                               max_outer=cfg.max_outer, step_tol=cfg.step_tol,
                               residual_tol=cfg.residual_tol, inner=cfg.inner,
                               inner_tol_base=cfg.inner_tol_base, z_ref=cfg.reference,
                               on_row=on_row)
        except NumericalError as exc:
            result.update(termination="numerical_failure", error=str(exc))
            json_path.write_text(json.dumps(_clean(result), indent=2) + "\n")
            raise
    last = report.trace[-1]
    result.update(
        termination=report.termination,
        outer_iterations=len(report.trace),
        final_point=report.final_point,
        f_residual=report.f_residual,
        last_step_norm=last.step_norm,
        last_inner_residual=last.inner_residual,
        reference=cfg.reference,
        fejer_slack_sum=report.fejer_slack_sum,
        is_quasi_fejer=report.is_quasi_fejer,
        hypothesis_partial_sums=report.hypothesis_partial_sums,
        f_weighted_partial_sums=report.f_weighted_partial_sums,
    )
    traps = _trap_section(problem, cfg, report, pair)
    if traps is not None:
        result["traps"] = traps
    if with_vr and problem.org is not None:
        vr = vr_along_trace(problem, report, pair)
        result["vr_trace"] = vr
        result["vr_identity_max_error"] = max(r["identity_error"] for r in vr)
    json_path.write_text(json.dumps(_clean(result), indent=2) + "\n")
    code = EXIT_NUMERICAL if report.termination == "non_converged_inner" else EXIT_OK
    return code, result


# -- subcommands -------------------------------------------------------------

def _load(args) -> ExperimentConfig:
    if args.config is not None:
        cfg = load_config(args.config)
    elif getattr(args, "problem", None) is not None:
        cfg = ExperimentConfig.from_mapping({"problem": args.problem}, name=args.problem)
    else:
        raise InvalidInputError("either --config or --problem is required")
    if args.seed is not None:
        if args.seed < 0:
            raise InvalidInputError("seed must be nonnegative")
        cfg.seed = args.seed
        cfg.inner = type(cfg.inner)(**{**cfg.inner.__dict__, "seed": args.seed})
    if getattr(args, "max_outer", None) is not None:
        if args.max_outer < 1:
            raise InvalidInputError("--max-outer must be >= 1")
        cfg.max_outer = args.max_outer
    return cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    code, res = run_experiment(cfg, args.out_dir)
    print(f"termination={res['termination']} outer_iterations={res['outer_iterations']} "
          f"final_point={[round(v, 10) for v in res['final_point'].tolist()]}")
    return code


def l1_violator():
    """``psi(x, y) = 1 + |y|^2 - |x|^2``: monotone-looking but ``psi(x, x) = 1``."""
    def ev(x, y):
        return 1.0 + np.einsum("...i,...i->...", y, y) - np.einsum("...i,...i->...", x, x)

    return explicit(ev, lambda x, y: 2 * y + 0 * x, label="l1-violator")


def _bifunction_by_name(name: str):
    """Named bifunctions for ``verify``: ``rotation``, ``l1-violator``, ``<preset>.f|h``."""
    box2 = FeasibleSet.box([-1.0, -1.0], [1.0, 1.0])
    if name == "rotation":
        return PRESETS["rotation"]().f, box2
    if name == "l1-violator":
        return l1_violator(), box2
    if name == "square":
        return from_objective(lambda x: np.einsum("...i,...i->...", x, x), lambda x: 2 * x,
                              label="square"), box2
    preset, _, part = name.partition(".")
    if preset in PRESETS and part in ("f", "h"):
        p = PRESETS[preset]()
        return getattr(p, part), p.K
    raise InvalidInputError(f"unknown bifunction '{name}' (try rotation, l1-violator, square, p2.f)")


def cmd_verify(args) -> int:
    if args.pair is None and args.bifunction is None:
        raise InvalidInputError("verify needs --pair and/or --bifunction")
    if args.samples < 1:
        raise InvalidInputError("--samples must be >= 1")
    seed = args.seed or 0
    ok = True
    if args.pair is not None:
        if args.pair not in BUILDERS:
            raise InvalidInputError(f"unknown proximal pair '{args.pair}'")
        domain = FeasibleSet.simplex(args.dimension) if args.pair == "entropy" else \
            FeasibleSet.box(-np.ones(args.dimension), np.ones(args.dimension))
        rep = verify_proximal_pair(pair_by_label(args.pair, domain), args.samples, seed)
        for line in rep.lines():
            print(line)
        ok &= rep.passed
    if args.bifunction is not None:
        psi, K = _bifunction_by_name(args.bifunction)
        rep = verify_standard_assumptions(psi, K, args.samples, seed)
        for line in rep.lines():
            print(line)
        ok &= rep.passed
    print("verify: pass" if ok else "verify: FAIL")
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_oracle(args) -> int:
    cfg = _load(args)
    p = cfg.problem
    if not args.step > 0:
        raise InvalidInputError("--step must be positive")
    grid = GridSpec(args.step, p.K)
    inner = brute_force_ep(p.f, p.K, grid, args.tol)
    sols = brute_force_bep(p.f, p.h, p.K, grid, args.tol)
    res = {"problem": p.name, "step": args.step, "inner_count": int(inner.shape[0]),
           "bep_count": int(sols.shape[0]), "bep_points": sols}
    if args.out_dir is not None:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "oracle.json").write_text(json.dumps(_clean(res), indent=2) + "\n")
    print(f"inner grid solutions: {res['inner_count']}")
    print(f"bilevel grid solutions: {res['bep_count']}")
    for pt in sols[: args.show]:
        print("  " + " ".join(_fmt(v) for v in pt))
    if sols.shape[0] > args.show:
        print(f"  ... ({sols.shape[0] - args.show} more)")
    return EXIT_OK


def cmd_demo_org(args) -> int:
    if args.config is None and args.problem is None:
        args.problem = "demo-org"
    cfg = _load(args)
    if cfg.problem.org is None:
        raise InvalidInputError("demo-org needs an organization problem (demo-org or org-polynomial)")
    code, res = run_experiment(cfg, args.out_dir, with_vr=True)
    print(f"{'k':>4} {'x':>30} {'A_e':>12} {'I_e':>12} {'Delta':>12} {'|id err|':>10}")
    for r in res["vr_trace"]:
        x = "(" + ", ".join(f"{v:.6f}" for v in r["x"]) + ")"
        print(f"{r['k']:>4} {x:>30} {r['A_e']:>12.4e} {r['I_e']:>12.4e} {r['Delta']:>12.4e} "
              f"{r['identity_error']:>10.2e}")
    print(f"termination={res['termination']} final_point="
          f"{[round(v, 10) for v in res['final_point'].tolist()]}")
    traps = res.get("traps")
    if traps is not None:
        print(f"stationary={traps['stationary']} aspiration={traps['aspiration']} "
              f"variational={traps['variational']} margin={traps['margin']:.3e} k0={traps['k0']}")
    return code


def _sweep_one(path: str, out_dir: str, seed, max_outer) -> tuple:
    ns = argparse.Namespace(config=path, problem=None, seed=seed, max_outer=max_outer)
    try:
        cfg = _load(ns)
        code, res = run_experiment(cfg, Path(out_dir) / Path(path).stem)
        return path, code, res["termination"]
    except InvalidInputError as exc:
        return path, EXIT_INVALID, f"invalid input: {exc}"
    except BepError as exc:
        return path, EXIT_NUMERICAL, f"numerical failure: {exc}"


def cmd_sweep(args) -> int:
    configs = list(args.configs or []) + ([args.config] if args.config else [])
    if not configs:
        raise InvalidInputError("sweep needs at least one config")
    stems = [Path(c).stem for c in configs]
    if len(set(stems)) != len(stems):
        raise InvalidInputError("sweep configs must have distinct file names")
    if args.jobs < 1:
        raise InvalidInputError("--jobs must be >= 1")
    worst = EXIT_OK
    with ProcessPoolExecutor(max_workers=min(args.jobs, len(configs))) as pool:
        futs = [pool.submit(_sweep_one, c, args.out_dir, args.seed, args.max_outer) for c in configs]
        for fut in futs:
            path, code, msg = fut.result()
            print(f"{path}: exit={code} {msg}")
            worst = max(worst, code)
    return worst


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bepsolve", description="Proximal point solver for "
                                 "bilevel equilibrium problems.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out_default="."):
        p.add_argument("--config", help="experiment config file")
        p.add_argument("--problem", choices=sorted(PRESETS), help="preset problem instead of a config")
        p.add_argument("--out-dir", default=out_default, help="directory for output files")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--max-outer", type=int, help="override outer.max_outer")

    p = sub.add_parser("run", help="run one experiment")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="sample the pair / bifunction assumption suites")
    p.add_argument("--pair", help="euclidean | entropy")
    p.add_argument("--bifunction", help="rotation | l1-violator | square | <preset>.f | <preset>.h")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--dimension", type=int, default=3, help="dimension of the sampling domain")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("oracle", help="brute-force grid solve (dimension <= 3)")
    common(p, out_default=None)
    p.add_argument("--step", type=float, default=0.01)
    p.add_argument("--tol", type=float, help="grid feasibility slack (default: L_est * step)")
    p.add_argument("--show", type=int, default=10, help="number of points to print")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("demo-org", help="run the organization model end to end")
    common(p)
    p.set_defaults(func=cmd_demo_org)

    p = sub.add_parser("sweep", help="run several configs concurrently")
    p.add_argument("configs", nargs="*", help="config files")
    p.add_argument("--config", help="an additional config file")
    p.add_argument("--out-dir", default=".", help="each config writes to OUT_DIR/<config stem>/")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-outer", type=int)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.set_defaults(func=cmd_sweep)
    return ap


def _setup_logging():
    level = os.environ.get("BEPSOLVE_LOG", "quiet")
    if level not in LOG_LEVELS:
        raise InvalidInputError(f"BEPSOLVE_LOG must be one of {', '.join(LOG_LEVELS)}")
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(LOG_LEVELS[level])
    log.propagate = False


def _fail(kind: str, exc: Exception, code: int) -> int:
    msg = str(exc).replace("\n", " ")
    print(f"error: {kind}: {msg}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _setup_logging()
        return args.func(args)
    except InvalidInputError as exc:
        return _fail("invalid input", exc, EXIT_INVALID)
    except (NumericalError, DiagnosticError) as exc:
        return _fail("numerical failure", exc, EXIT_NUMERICAL)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
