"""Command-line front end: ``ttinv {invert,solve,certify,svd-decay,roundtrip}``.

Every command writes ``report.json`` (configuration, metrics and wall-clock
timings) plus deterministic CSV/TT files into ``--out``. Exit codes: 0
success, 2 usage error, 3 numeric failure, 4 resource cap.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import io as ttio
from .core import DEFAULT_DENSE_CAP, TTTensor, to_dense
from .exceptions import BudgetExceededError, SizeCapError, TTError
from .hadamard import InversionConfig, relative_residual
from .kron import (
    KroneckerSumOperator,
    accuracy_bound,
    assemble_inverse,
    hadamard_inverse,
    joint_diagonalize,
    lambda_tensor,
)
from .rank_analysis import (
    DEFAULT_BUDGET,
    empirical_sv_decay,
    magnitude_bounds,
    theorem_decay_factor,
    verify_condition,
)

logger = logging.getLogger("ttinv")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_CAP = 0, 2, 3, 4
TIMING_NOTE = "wall-clock seconds on this machine; not comparable to published timings"

CONFIG_KEYS = {
    "problem", "d", "n", "domain", "dt", "dt_over_h", "t_end", "tolerances", "bgk",
    "splits", "k", "eps", "method", "budget", "operator", "input", "record_every",
    "n_list", "reference_n", "initial_guess", "max_iter", "rank", "seed",
}
PROBLEMS = ("poisson", "fp", "bgk", "operator")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- configuration

def load_config(path):
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file {p} not found")
    text = p.read_text()
    if p.suffix.lower() in (".yaml", ".yml"):
        import yaml

        cfg = yaml.safe_load(text) or {}
    else:
        try:
            cfg = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {p} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config must be a mapping")
    unknown = sorted(set(cfg) - CONFIG_KEYS)
    if unknown:
        raise UsageError(f"unknown config key(s): {', '.join(unknown)}")
    cfg["_base"] = str(p.parent)
    return cfg


def _problem(cfg):
    prob = cfg.get("problem", "operator" if "operator" in cfg else "poisson")
    if prob not in PROBLEMS:
        raise UsageError(f"problem must be one of {PROBLEMS}, got {prob!r}")
    return prob


def inversion_config(cfg, args):
    prob = _problem(cfg)
    tol, eps = (1e-10, 1e-12) if prob in ("fp", "bgk") else (1e-6, 1e-8)
    tols = cfg.get("tolerances", {}) or {}
    if not isinstance(tols, dict) or set(tols) - {"tol", "round_eps"}:
        raise UsageError("tolerances must be a mapping with keys tol, round_eps")
    tol = args.tol if args.tol is not None else float(tols.get("tol", tol))
    eps = args.round_eps if args.round_eps is not None else float(tols.get("round_eps", eps))
    try:
        return InversionConfig(
            tol=tol, round_eps=eps, max_iter=int(cfg.get("max_iter", 100)), max_rank=args.max_rank
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _int(cfg, key, default=None):
    v = cfg.get(key, default)
    if v is None:
        raise UsageError(f"config key {key!r} is required")
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise UsageError(f"config key {key!r} must be a positive integer")
    return v


def _bgk_params(cfg, grid_x=None):
    from .pde.bgk import BGKParams

    extra = cfg.get("bgk", {}) or {}
    allowed = {"K", "mu", "Kn", "Bo"}
    if not isinstance(extra, dict) or set(extra) - allowed:
        raise UsageError(f"bgk parameters must be a mapping with keys {sorted(allowed)}")
    dt = cfg.get("dt", 0.0025)
    if "dt_over_h" in cfg:
        if grid_x is None:
            raise UsageError("dt_over_h needs a grid")
        dt = float(cfg["dt_over_h"]) * grid_x.h
    return BGKParams(Kn=extra.get("Kn", 1.0), Bo=extra.get("Bo", 3.65), K=extra.get("K", 1.0),
                     mu_exp=extra.get("mu", 0.5), dt=float(dt))


def build_operator(cfg):
    """Operator and metadata described by the configuration."""
    from .pde.bgk import bgk_operator
    from .pde.common import GridSpec
    from .pde.fokker_planck import fp_operator
    from .pde.poisson import poisson_operator

    prob = _problem(cfg)
    if prob == "operator":
        if "operator" not in cfg:
            raise UsageError("problem 'operator' needs the 'operator' key (path to a .ttj file)")
        path = Path(cfg.get("_base", ".")) / cfg["operator"]
        obj = ttio.load(path)
        if not isinstance(obj, KroneckerSumOperator):
            raise UsageError(f"{path} does not hold a Kronecker-sum operator")
        return obj, {"problem": prob, "path": str(path)}
    d, n = _int(cfg, "d", 3), _int(cfg, "n")
    if prob == "poisson":
        grid = GridSpec(d, n, tuple(cfg.get("domain", (-1.0, 1.0))), "dirichlet")
        return poisson_operator(grid), {"problem": prob, "h": grid.h}
    if prob == "fp":
        grid = GridSpec(d, n, tuple(cfg.get("domain", (-5.0, 5.0))), "dirichlet")
        dt = float(cfg.get("dt", 0.0025))
        return fp_operator(grid, dt), {"problem": prob, "h": grid.h, "dt": dt}
    if d not in (1, 2):
        raise UsageError("bgk supports d = 1 (1D1V) and d = 2 (2D2V)")
    dom = tuple(cfg.get("domain", (-np.pi, np.pi)))
    gx = GridSpec(d, n, dom, "periodic")
    params = _bgk_params(cfg, gx)
    return bgk_operator(gx, gx, params), {"problem": prob, "h": gx.h, "dt": params.dt,
                                          "dt_over_h": params.dt / gx.h}


# ---------------------------------------------------------------- output helpers

def _num(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_num(v) if not isinstance(v, str) else v for v in row])
    return str(path)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items() if not str(k).startswith("_")}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


# ---------------------------------------------------------------- commands

def _invert_pipeline(op, icfg, cfg):
    fact = joint_diagonalize(op)
    L, X, report = hadamard_inverse(fact, icfg, cfg.get("initial_guess", "auto"))
    return fact, L, X, report


def cmd_invert(args, cfg, out):
    icfg = inversion_config(cfg, args)
    op, meta = build_operator(cfg)
    fact, L, X, rep = _invert_pipeline(op, icfg, cfg)
    files = {"hadamard_inverse": str(ttio.save(X, out / "hadamard_inverse.ttj"))}
    metrics = {"operator": meta, "factorization": fact.summary(), "newton": rep.as_dict(),
               "averaged_rank": _avg(X)}
    lo, hi = magnitude_bounds(fact)
    kappa = hi / lo if lo > 0 else float("inf")
    metrics["kappa_bound"] = kappa
    metrics["accuracy_bound"] = accuracy_bound(fact, kappa, rep.final_residual) if np.isfinite(kappa) else None
    if max(n * n for n in op.mode_sizes) <= args.dense_cap:
        inv = assemble_inverse(fact, X, args.dense_cap)
        files["inverse"] = str(ttio.save(inv, out / "inverse.ttj"))
        N = int(np.prod(op.mode_sizes))
        if N * N <= args.dense_cap:
            A = op.to_dense(args.dense_cap)
            R = inv.to_dense(args.dense_cap) @ A - np.eye(N)
            metrics["dense_relative_residual"] = float(np.linalg.norm(R) / np.sqrt(N))
    status = EXIT_OK if rep.converged else EXIT_NUMERIC
    return status, metrics, files, []


def _avg(T):
    from .pde.common import averaged_rank

    return averaged_rank(T)


def cmd_solve(args, cfg, out):
    prob = _problem(cfg)
    icfg = inversion_config(cfg, args)
    if prob == "poisson":
        return _solve_poisson(cfg, icfg, out)
    if prob == "fp":
        return _solve_fp(cfg, icfg, out)
    if prob == "bgk":
        return _solve_bgk(cfg, icfg, out)
    raise UsageError("solve needs problem poisson, fp or bgk")


def _solve_poisson(cfg, icfg, out):
    from .pde.poisson import poisson_solve

    ns = cfg.get("n_list") or ([cfg["n"]] if "n" in cfg else None)
    if not ns:
        raise UsageError("poisson solve needs 'n' or 'n_list'")
    d = _int(cfg, "d", 3)
    rows, seconds, runs = [], {}, []
    for n in ns:
        r = poisson_solve(int(n), d, icfg, tuple(cfg.get("domain", (-1.0, 1.0))),
                          cfg.get("initial_guess", "auto"))
        rows.append([int(n), r.relative_error, r.averaged_rank, r.report.iterations])
        seconds[str(n)] = r.seconds
        runs.append({"n": int(n), "converged": r.report.converged, "final_ranks": list(r.Xinv.ranks),
                     "final_residual": r.report.final_residual})
    path = write_csv(out / "poisson.csv", ["n", "relative_error", "averaged_rank", "newton_iterations"], rows)
    errs = [r[1] for r in rows]
    metrics = {"runs": runs, "relative_errors": errs,
               "error_ratios": [a / b for a, b in zip(errs, errs[1:])], "seconds": seconds}
    status = EXIT_OK if all(r["converged"] for r in runs) else EXIT_NUMERIC
    return status, metrics, {"series": path}, []


def _solve_fp(cfg, icfg, out):
    from .pde.fokker_planck import fp_simulate

    n, d = _int(cfg, "n"), _int(cfg, "d", 3)
    dt, t_end = float(cfg.get("dt", 0.0025)), float(cfg.get("t_end", 1.0))
    run = fp_simulate(n, d, dt, t_end, icfg, tuple(cfg.get("domain", (-5.0, 5.0))),
                      int(cfg.get("record_every", 1)))
    rows = list(zip(run.times, run.errors, run.ranks))
    path = write_csv(out / "fp.csv", ["t", "relative_error", "solution_averaged_rank"], rows)
    metrics = {
        "final_relative_error": run.errors[-1], "max_relative_error": max(run.errors),
        "final_over_max": run.errors[-1] / max(run.errors),
        "inverse_averaged_rank": run.averaged_rank, "newton": run.ops.report.as_dict(),
        "seconds": run.seconds,
    }
    status = EXIT_OK if run.ops.report.converged else EXIT_NUMERIC
    return status, metrics, {"series": path}, []


def _solve_bgk(cfg, icfg, out):
    from .core import frobenius_norm
    from .pde.bgk import bgk_simulate, restrict
    from .pde.common import GridSpec, relative_error

    d = _int(cfg, "d", 1)
    if d not in (1, 2):
        raise UsageError("bgk supports d = 1 (1D1V) and d = 2 (2D2V)")
    dom = tuple(cfg.get("domain", (-np.pi, np.pi)))
    t_end = float(cfg.get("t_end", 1.0))
    every = int(cfg.get("record_every", 1))
    files, metrics = {}, {}
    if "n" in cfg:
        n = _int(cfg, "n")
        params = _bgk_params(cfg, GridSpec(d, n, dom, "periodic"))
        rows, state = [], {}

        def record(step, t, f):
            if step == 0:
                state["f0"] = f
            if step % every == 0:
                rows.append([t, relative_error(f, state["f0"]), _avg(f),
                             frobenius_norm(f) / frobenius_norm(state["f0"])])

        run = bgk_simulate(n, d, params, t_end, icfg, dom, callback=record)
        if run.steps % every:
            record(run.steps, run.steps * params.dt, run.f)
        files["series"] = write_csv(out / "bgk.csv", ["t", "relative_change", "averaged_rank", "norm_ratio"], rows)
        metrics.update({"inverse_averaged_rank": run.averaged_rank, "steps": run.steps,
                        "newton": run.ops.report.as_dict(), "seconds": run.seconds})
    if "n_list" in cfg:
        ref_n = _int(cfg, "reference_n")
        sols, secs = {}, {}
        for n in sorted({*map(int, cfg["n_list"]), ref_n}):
            params = _bgk_params(cfg, GridSpec(d, n, dom, "periodic"))
            run = bgk_simulate(n, d, params, t_end, icfg, dom)
            sols[n], secs[str(n)] = to_dense(run.f), run.seconds
        ref = sols[ref_n]
        rows = []
        for n in map(int, cfg["n_list"]):
            c = restrict(ref, ref_n, n, d)
            rows.append([n, float(np.linalg.norm(sols[n] - c) / np.linalg.norm(c))])
        files["convergence"] = write_csv(out / "bgk_convergence.csv", ["n", "relative_error"], rows)
        ns, errs = np.array([r[0] for r in rows], float), np.array([r[1] for r in rows])
        metrics["convergence_order"] = float(-np.polyfit(np.log(ns), np.log(errs), 1)[0]) if len(rows) > 1 else None
        metrics["convergence_seconds"] = secs
        metrics["comparison"] = "coincident coarse-grid nodes of the reference solution"
    if not files:
        raise UsageError("bgk solve needs 'n' or 'n_list' with 'reference_n'")
    return EXIT_OK, metrics, files, []


def _theorem_q(cfg, meta, fact, k):
    prob = meta.get("problem")
    d = fact.d
    if prob == "poisson":
        mu = np.asarray(fact.mu[0]).real
        return theorem_decay_factor("poisson", {"kappa": mu.max() / mu.min(), "k": k, "d": d}).q
    if prob == "bgk":
        z = np.concatenate([np.asarray(m) for m in fact.mu[:1]])
        # eigenvalues of V x (h grad) from those of (1/d) I + (dt/2) V x grad
        w = (z - 1.0 / d) * 2 * meta["h"] / meta["dt"] if meta["dt"] > 0 else np.zeros(1)
        return theorem_decay_factor("bgk", {
            "k": k, "dt_over_h": meta["dt_over_h"], "re_min": w.real.min(), "re_max": w.real.max(),
            "im_min": w.imag.min(), "im_max": w.imag.max()}).q
    return None


def _splits(cfg, d):
    ks = cfg.get("splits", cfg.get("k"))
    ks = list(range(1, d)) if ks is None else ([ks] if isinstance(ks, int) else list(ks))
    for k in ks:
        if isinstance(k, bool) or not isinstance(k, int) or not 1 <= k <= d - 1:
            raise UsageError(f"split {k!r} out of range 1..{d - 1}")
    return ks


def cmd_certify(args, cfg, out):
    op, meta = build_operator(cfg)
    ks = _splits(cfg, op.d)
    eps = float(cfg.get("eps", 1e-6))
    method = cfg.get("method", "exact")
    budget = int(cfg.get("budget", DEFAULT_BUDGET))
    fact = joint_diagonalize(op)
    certs, rows = [], []
    for k in ks:
        try:
            c = verify_condition(fact, k, method, budget, eps, args.seed)
        except BudgetExceededError as exc:
            raise BudgetExceededError(
                f"split {k}: {exc}; raise 'budget' or use method 'bound' or 'heuristic'"
            ) from exc
        tq = _theorem_q(cfg, meta, fact, k)
        doc = c.to_dict()
        doc["theorem_q"] = tq
        certs.append(doc)
        rows.append([k, c.condition_variant, c.method, c.sound, c.certified, c.decay_q,
                     c.rank_bound, c.min_C, c.radius, c.gap, tq])
    path = write_csv(out / "certificates.csv",
                     ["k", "variant", "method", "sound", "certified", "q", "rank_bound", "min_C",
                      "radius", "gap", "theorem_q"], rows)
    (out / "certificates.json").write_text(json.dumps(_jsonable(certs), indent=2))
    metrics = {"operator": meta, "eps": eps, "all_certified": all(r[4] for r in rows)}
    return EXIT_OK, metrics, {"certificates": path, "certificates_json": str(out / "certificates.json")}, certs


def cmd_svd_decay(args, cfg, out):
    op, meta = build_operator(cfg)
    k = _splits(cfg, op.d)[0] if ("k" in cfg or "splits" in cfg) else 1
    if op.d < 2:
        raise UsageError("svd-decay needs an operator with at least two factors")
    fact = joint_diagonalize(op)
    L = lambda_tensor(fact)
    sv = empirical_sv_decay(L, k, args.dense_cap)
    q = None
    try:
        cert = verify_condition(fact, k, "exact", int(cfg.get("budget", DEFAULT_BUDGET)))
        q = cert.decay_q
    except BudgetExceededError:
        cert = None
    rows = [[j, s / sv[0], (q ** (j - 1)) if q is not None else None] for j, s in enumerate(sv, start=1)]
    path = write_csv(out / "svd_decay.csv", ["j", "sigma_ratio", "envelope"], rows)
    within = None if q is None else bool(all(r[1] <= r[2] + 1e-12 for r in rows))
    metrics = {"operator": meta, "k": k, "q": q, "within_envelope": within, "n_values": len(rows)}
    return EXIT_OK, metrics, {"series": path}, [cert.to_dict()] if cert is not None else []


def cmd_roundtrip(args, cfg, out):
    src = args.input or cfg.get("input")
    if src:
        path = Path(src) if args.input else Path(cfg.get("_base", ".")) / src
        obj = ttio.load(path)
    else:
        d, n, r = _int(cfg, "d", 3), _int(cfg, "n", 4), _int(cfg, "rank", 2)
        rng = np.random.default_rng(args.seed)
        obj = TTTensor.random((n,) * d, (1,) + (r,) * (d - 1) + (1,), rng, complex=True)
        ttio.save(obj, out / "source.ttj")
    dst = ttio.save(obj, out / "roundtrip.ttj")
    back = ttio.load(dst)
    same = ttio.tt_to_dict(back) == ttio.tt_to_dict(obj)
    metrics = {"kind": ttio.tt_to_dict(obj)["kind"], "identical": same}
    return (EXIT_OK if same else EXIT_NUMERIC), metrics, {"roundtrip": str(dst)}, []


COMMANDS = {
    "invert": cmd_invert,
    "solve": cmd_solve,
    "certify": cmd_certify,
    "svd-decay": cmd_svd_decay,
    "roundtrip": cmd_roundtrip,
}


# ---------------------------------------------------------------- entry point

def build_parser():
    parser = argparse.ArgumentParser(prog="ttinv", description="TT-based inversion of Kronecker-sum operators")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON or YAML configuration file")
        p.add_argument("--out", default="ttinv_out", help="output directory")
        p.add_argument("--tol", type=float, help="Newton tolerance on the relative residual")
        p.add_argument("--round-eps", type=float, help="relative TT-rounding accuracy")
        p.add_argument("--max-rank", type=int, help="hard cap on TT ranks")
        p.add_argument("--dense-cap", type=int, default=DEFAULT_DENSE_CAP, help="largest dense array (entries)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, help="BLAS threads (TTINV_THREADS overrides)")
        if name == "roundtrip":
            p.add_argument("input", nargs="?", help=".ttj file to read back and rewrite")
    return parser


def resolve_threads(args):
    env = os.environ.get("TTINV_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise UsageError(f"TTINV_THREADS must be an integer, got {env!r}") from exc
    else:
        n = args.threads
    if n is not None and n < 1:
        raise UsageError("thread count must be positive")
    return n


def _thread_limit(n):
    if n is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    t0 = time.perf_counter()
    try:
        threads = resolve_threads(args)
        if args.max_rank is not None and args.max_rank < 1:
            raise UsageError("--max-rank must be positive")
        cfg = load_config(args.config)
        out.mkdir(parents=True, exist_ok=True)
        with _thread_limit(threads):
            status, metrics, files, certs = COMMANDS[args.command](args, cfg, out)
    except UsageError as exc:
        print(f"ttinv: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SizeCapError, BudgetExceededError, MemoryError) as exc:
        print(f"ttinv: resource cap: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (TTError, ArithmeticError, np.linalg.LinAlgError) as exc:
        if isinstance(exc, (ValueError, IndexError)) and not isinstance(exc, ArithmeticError):
            kind = type(exc).__name__
            if kind in ("ShapeMismatchError", "BoundsError", "UnsupportedBoundaryError"):
                print(f"ttinv: usage error: {exc}", file=sys.stderr)
                return EXIT_USAGE
        print(f"ttinv: numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, TypeError) as exc:
        print(f"ttinv: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    report = {
        "header": {
            "command": args.command,
            "argv": argv,
            "threads": threads,
            "threads_source": "TTINV_THREADS" if os.environ.get("TTINV_THREADS") else "--threads",
            "seconds": time.perf_counter() - t0,
            "timing_note": TIMING_NOTE,
        },
        "config": cfg,
        "flags": {"tol": args.tol, "round_eps": args.round_eps, "max_rank": args.max_rank,
                  "dense_cap": args.dense_cap, "seed": args.seed},
        "status": status,
        "metrics": metrics,
        "certificates": certs,
        "outputs": files,
    }
    (out / "report.json").write_text(json.dumps(_jsonable(report), indent=2))
    print(json.dumps(_jsonable({"command": args.command, "status": status, "outputs": files})))
    return status


if __name__ == "__main__":
    sys.exit(main())
