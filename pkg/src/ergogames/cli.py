"""Command-line entry point: reproducible drivers for every capability.

Subcommands: eval, viter, solve, ergodicity, scan-bias, plaplace, simulate,
reproduce-figure1.  Exit codes: 0 success, 1 input/usage error (no partial
output files), 2 computed-but-negative outcomes (not converged,
non-ergodic, inconclusive) with the result still written.  Identical argv
and seed give byte-identical result files; wall-clock metadata lives in a
sidecar manifest (`<out>.manifest.json`) that each result file references
by name.  ERGO_SEED serves as the seed fallback; precedence is
flag > config file > ERGO_SEED > default.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .bias import scan_plane
from .core import builtin_operator, load_game, operator_from_game
from .ergodicity import ergodicity_verdict
from .plaplace import DescentNotConverged, dirichlet_solve, load_problem
from .sim import extract_strategies, induced_chain, simulate
from .solvers import SolveConfig, mean_payoff_estimate, solve_ergodic, value_iteration

_BUILTIN_OPS = ("example1", "example2", "identity")


def _parse_vector(text: str, n: int, name: str) -> np.ndarray:
    try:
        vec = np.array([float(tok) for tok in text.split(",")], dtype=float)
    except ValueError:
        raise ValueError(f"{name}: expected comma-separated decimals, got {text!r}")
    if vec.shape != (n,):
        raise ValueError(f"{name}: expected {n} entries, got {vec.shape[0]}")
    if not np.all(np.isfinite(vec)):
        raise ValueError(f"{name}: non-finite entry")
    return vec


def _build_operator(args):
    sources = [s for s in ("op", "game", "chain") if getattr(args, s, None)]
    if len(sources) != 1:
        raise ValueError("exactly one of --op, --game, --chain must be given")
    if args.op:
        if args.op not in _BUILTIN_OPS:
            raise ValueError(f"--op: unknown operator {args.op!r}, "
                             f"choose from {', '.join(_BUILTIN_OPS)}")
        if args.op == "identity":
            if args.n is None:
                raise ValueError("--op identity needs --n")
            return builtin_operator("identity", n=args.n)
        return builtin_operator(args.op)
    if args.game:
        return operator_from_game(load_game(args.game), name=os.path.basename(args.game))
    with open(args.chain) as fh:
        data = json.load(fh)
    try:
        P, r = data["P"], data["r"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"chain file: missing field {exc}") from exc
    return builtin_operator("markov-chain", P=P, r=r)


def _resolve(args, key, default):
    val = getattr(args, key.replace("-", "_"), None)
    if val is not None:
        return val
    if args._config and key in args._config:
        return args._config[key]
    if key == "seed":
        env = os.environ.get("ERGO_SEED")
        if env is not None:
            return int(env)
    return default


def _solve_config(args) -> SolveConfig:
    return SolveConfig(
        tol=float(_resolve(args, "tol", 1e-9)),
        max_iter=int(_resolve(args, "max-iter", 1_000_000)),
        damping=float(_resolve(args, "damping", 0.5)),
        divergence_radius=float(_resolve(args, "divergence-radius", 1e8)),
        seed=_resolve(args, "seed", None),
        accelerate=not getattr(args, "no_accelerate", False),
    )


def _digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _atomic_write(path: str, data: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


class _Emitter:
    """Collects inputs/outputs and writes results plus the manifest."""

    def __init__(self, args, subcommand: str):
        self.args = args
        self.subcommand = subcommand
        self.t0 = time.perf_counter()
        self.inputs = {}
        for key in ("game", "chain", "problem", "config"):
            path = getattr(args, key, None)
            if path:
                self.inputs[path] = _digest(path)
        self.outputs = []

    def manifest_name(self, out: str) -> str:
        return os.path.basename(out) + ".manifest.json"

    def emit(self, record: dict, extra_files: dict | None = None) -> None:
        out = getattr(self.args, "out", None)
        if out:
            record = dict(record)
            record["manifest"] = self.manifest_name(out)
            _atomic_write(out, _json_text(record))
            self.outputs.append(out)
            for path, text in (extra_files or {}).items():
                _atomic_write(path, text)
                self.outputs.append(path)
            self._write_manifest(out)
        else:
            sys.stdout.write(_json_text(record))

    def emit_files(self, files: dict, out: str) -> None:
        for path, text in files.items():
            _atomic_write(path, text)
            self.outputs.append(path)
        self._write_manifest(out)

    def _write_manifest(self, out: str) -> None:
        manifest = {
            "tool": f"ergo {__version__}",
            "subcommand": self.subcommand,
            "argv": list(self.args._argv),
            "config": self.args._resolved,
            "inputs": self.inputs,
            "outputs": [os.path.basename(p) for p in self.outputs],
            "duration_s": time.perf_counter() - self.t0,
        }
        path = os.path.join(os.path.dirname(out) or ".", self.manifest_name(out))
        _atomic_write(path, _json_text(manifest))


def _record_config(args, cfg: SolveConfig | None = None, **extra) -> None:
    resolved = dict(extra)
    if cfg is not None:
        resolved.update(tol=cfg.tol, max_iter=cfg.max_iter, damping=cfg.damping,
                        divergence_radius=cfg.divergence_radius, seed=cfg.seed,
                        accelerate=cfg.accelerate)
    args._resolved = resolved


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------

def _cmd_eval(args) -> int:
    op = _build_operator(args)
    x = _parse_vector(args.x, op.n, "--x")
    _record_config(args)
    em = _Emitter(args, "eval")
    value = op.evaluate(x)
    em.emit({"status": "ok", "op": op.name, "x": x.tolist(), "value": value.tolist()})
    return 0


def _cmd_viter(args) -> int:
    op = _build_operator(args)
    g = _parse_vector(args.g, op.n, "--g")
    if args.k < 0:
        raise ValueError("--k must be nonnegative")
    _record_config(args, k=args.k)
    em = _Emitter(args, "viter")
    trace = value_iteration(op, g, args.k)
    record = {"status": "ok", "op": op.name, "k": args.k,
              "value": trace.final.tolist()}
    if args.k >= 1:
        est = mean_payoff_estimate(trace)
        record["mean_payoff"] = est.estimate.tolist()
        record["seminorm"] = est.seminorm
    em.emit(record)
    return 0


def _cmd_solve(args) -> int:
    op = _build_operator(args)
    g = _parse_vector(args.g, op.n, "--g")
    cfg = _solve_config(args)
    x0 = _parse_vector(args.x0, op.n, "--x0") if args.x0 else None
    _record_config(args, cfg)
    em = _Emitter(args, "solve")
    sol = solve_ergodic(op, g, cfg, x0)
    if sol.converged:
        em.emit({"status": "converged", "lambda": sol.lam,
                 "bias": sol.bias.vector.tolist(), "residual": sol.residual,
                 "iterations": sol.iterations})
        return 0
    em.emit({"status": "not-converged", "reason": sol.reason, "lambda": None,
             "bias": None, "last": sol.last.tolist(), "residual": sol.residual,
             "iterations": sol.iterations})
    return 2


def _cmd_ergodicity(args) -> int:
    op = _build_operator(args)
    cfg = _solve_config(args)
    _record_config(args, cfg, samples=args.samples, stab_tol=args.stab_tol,
                   vi_horizon=args.vi_horizon)
    em = _Emitter(args, "ergodicity")
    report = ergodicity_verdict(op, num_g_samples=args.samples, cfg=cfg,
                                stab_tol=args.stab_tol, vi_horizon=args.vi_horizon)
    em.emit(report.to_dict())
    return 0 if report.verdict == "ergodic-evidence" else 2


def _parse_fixed(items, n: int, axis1: int, axis2: int) -> dict:
    fixed = {}
    for item in items or ():
        try:
            key, val = item.split("=", 1)
            idx = int(key) - 1
            fixed[idx] = float(val)
        except ValueError:
            raise ValueError(f"--fix: expected INDEX=VALUE, got {item!r}")
        if not 0 <= idx < n:
            raise ValueError(f"--fix: coordinate {key} out of range 1..{n}")
        if idx in (axis1, axis2):
            raise ValueError(f"--fix: coordinate {key} is a scan axis")
    return fixed


def _parse_range(text: str, name: str) -> tuple[float, float]:
    try:
        lo, hi = (float(tok) for tok in text.split(":"))
    except ValueError:
        raise ValueError(f"{name}: expected LO:HI, got {text!r}")
    if hi < lo:
        raise ValueError(f"{name}: empty range {text!r}")
    return lo, hi


def _run_scan(args, op, axis1, axis2, range1, range2, step, fixed, subcommand) -> int:
    cfg = _solve_config(args)
    workers = int(_resolve(args, "workers", 1))
    _record_config(args, cfg, step=step, starts=args.starts,
                   explore=not args.no_explore, workers=workers)
    em = _Emitter(args, subcommand)
    result = scan_plane(op, axis1, axis2, range1, range2, step, fixed, cfg,
                        starts=args.starts, explore=not args.no_explore,
                        workers=workers)
    summary = result.summary()
    out = args.out
    stem, _ = os.path.splitext(out)
    summary_path = stem + "_summary.json"
    summary["manifest"] = em.manifest_name(out)
    summary["csv"] = os.path.basename(out)
    em.emit_files({out: result.csv_text(),
                   summary_path: _json_text(summary)}, out)
    sys.stdout.write(_json_text({
        "cells": len(result.cells),
        "counts": result.counts(),
        "multiple_fraction": result.multiple_fraction(),
        "out": out,
        "summary": summary_path,
    }))
    return 0


def _cmd_scan_bias(args) -> int:
    op = _build_operator(args)
    axis1, axis2 = args.axis1 - 1, args.axis2 - 1
    if not (0 <= axis1 < op.n and 0 <= axis2 < op.n) or axis1 == axis2:
        raise ValueError("--axis1/--axis2 must be distinct coordinates in 1..n")
    fixed = _parse_fixed(args.fix, op.n, axis1, axis2)
    range1 = _parse_range(args.range1, "--range1")
    range2 = _parse_range(args.range2, "--range2")
    if args.step <= 0:
        raise ValueError("--step must be positive")
    return _run_scan(args, op, axis1, axis2, range1, range2, args.step, fixed,
                     "scan-bias")


def _cmd_reproduce_figure1(args) -> int:
    op = builtin_operator("example2")
    if args.step <= 0:
        raise ValueError("--step must be positive")
    return _run_scan(args, op, 0, 1, (-5.0, 20.0), (-20.0, 7.0), args.step,
                     {2: 0.0}, "reproduce-figure1")


def _cmd_plaplace(args) -> int:
    problem = load_problem(args.problem)
    tol = float(_resolve(args, "tol", 1e-8))
    max_iter = int(_resolve(args, "max-iter", 100_000))
    _record_config(args, tol=tol, max_iter=max_iter, p=problem.p)
    em = _Emitter(args, "plaplace")
    try:
        v, info = dirichlet_solve(problem, tol=tol, max_iter=max_iter, full_output=True)
    except DescentNotConverged as exc:
        em.emit({"status": "not-converged", "vertices": list(problem.vertices),
                 "v": exc.v.tolist(), "residual": exc.residual,
                 "iterations": exc.iterations})
        return 2
    em.emit({"status": "ok", "vertices": list(problem.vertices), "v": v.tolist(),
             "residual": info["residual"], "iterations": info["iterations"]})
    return 0


def _cmd_simulate(args) -> int:
    game = load_game(args.game)
    op = operator_from_game(game, name=os.path.basename(args.game))
    g = _parse_vector(args.g, game.n, "--g")
    if not 1 <= args.state <= game.n:
        raise ValueError(f"--state must be in 1..{game.n}")
    if args.horizon < 1:
        raise ValueError("--horizon must be at least 1")
    if args.reps < 1:
        raise ValueError("--reps must be at least 1")
    cfg = _solve_config(args)
    seed = _resolve(args, "seed", 0) or 0
    _record_config(args, cfg, state=args.state, horizon=args.horizon,
                   reps=args.reps, seed=seed)
    em = _Emitter(args, "simulate")
    sol = solve_ergodic(op, g, cfg)
    if not sol.converged:
        em.emit({"status": "not-converged", "reason": sol.reason,
                 "residual": sol.residual, "iterations": sol.iterations})
        return 2
    strat = extract_strategies(game, sol.bias.vector, g)
    P, r = induced_chain(game, strat, g)
    rep_seeds = [int(s.generate_state(1)[0])
                 for s in np.random.SeedSequence(seed).spawn(args.reps)]
    reports = [simulate(game, strat, g, args.state - 1, args.horizon, s)
               for s in rep_seeds]
    averages = np.array([r.average for r in reports])
    em.emit({
        "status": "ok",
        "lambda": sol.lam,
        "bias": sol.bias.vector.tolist(),
        "strategies": {
            "min_action": list(strat.min_action),
            "max_option": [list(row) for row in strat.max_option],
        },
        "induced_chain": {"P": P.tolist(), "r": r.tolist()},
        "replications": [
            {"seed": rep.seed, "average": rep.average, "half_width": rep.half_width,
             "visits": rep.visits.tolist()}
            for rep in reports
        ],
        "mean_average": float(averages.mean()),
        "abs_gap_to_lambda": float(np.abs(averages - sol.lam).max()),
    })
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_operator_args(sub, game_only=False):
    if not game_only:
        sub.add_argument("--op", choices=_BUILTIN_OPS, help="built-in operator")
        sub.add_argument("--n", type=int, help="dimension for --op identity")
        sub.add_argument("--chain", help="JSON file {P, r} for a Markov chain operator")
    sub.add_argument("--game", help="game file (JSON)")


def _add_common(sub):
    sub.add_argument("--tol", type=float, default=None)
    sub.add_argument("--max-iter", type=int, default=None)
    sub.add_argument("--damping", type=float, default=None)
    sub.add_argument("--divergence-radius", type=float, default=None)
    sub.add_argument("--no-accelerate", action="store_true",
                     help="pure damped iteration, no acceleration bursts")
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--config", help="JSON config file (flag > config > default)")
    sub.add_argument("--out", help="write the result to this path (JSON)")
    sub.add_argument("--format", choices=("json", "csv"), default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ergo",
        description="Mean-payoff stochastic games: ergodic equation, ergodicity "
                    "tests, bias scans, p-Laplacian problems, simulation.")
    parser.add_argument("--version", action="version", version=f"ergo {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    s = subs.add_parser("eval", help="evaluate an operator at a point")
    _add_operator_args(s)
    s.add_argument("--x", required=True, help="comma-separated vector")
    _add_common(s)
    s.set_defaults(func=_cmd_eval)

    s = subs.add_parser("viter", help="finite-horizon value iteration")
    _add_operator_args(s)
    s.add_argument("--g", required=True)
    s.add_argument("--k", type=int, required=True)
    _add_common(s)
    s.set_defaults(func=_cmd_viter)

    s = subs.add_parser("solve", help="solve the ergodic equation")
    _add_operator_args(s)
    s.add_argument("--g", required=True)
    s.add_argument("--x0", default=None)
    _add_common(s)
    s.set_defaults(func=_cmd_solve)

    s = subs.add_parser("ergodicity", help="layered ergodicity verdict")
    _add_operator_args(s)
    s.add_argument("--samples", type=int, default=25)
    s.add_argument("--stab-tol", type=float, default=1e-4)
    s.add_argument("--vi-horizon", type=int, default=100_000)
    _add_common(s)
    s.set_defaults(func=_cmd_ergodicity)

    s = subs.add_parser("scan-bias", help="bias-uniqueness scan over a perturbation plane")
    _add_operator_args(s)
    s.add_argument("--axis1", type=int, required=True, help="1-based coordinate")
    s.add_argument("--axis2", type=int, required=True)
    s.add_argument("--range1", required=True, help="LO:HI")
    s.add_argument("--range2", required=True)
    s.add_argument("--step", type=float, required=True)
    s.add_argument("--fix", action="append", help="INDEX=VALUE for fixed coordinates")
    s.add_argument("--starts", type=int, default=12)
    s.add_argument("--no-explore", action="store_true")
    s.add_argument("--workers", type=int, default=None)
    _add_common(s)
    s.set_defaults(func=_cmd_scan_bias, out_required=True)

    s = subs.add_parser("reproduce-figure1",
                        help="acceptance-grade bias-uniqueness scan of the "
                             "built-in polyhedral game")
    s.add_argument("--step", type=float, default=0.5)
    s.add_argument("--starts", type=int, default=12)
    s.add_argument("--no-explore", action="store_true")
    s.add_argument("--workers", type=int, default=None)
    _add_common(s)
    s.set_defaults(func=_cmd_reproduce_figure1, out_required=True)

    s = subs.add_parser("plaplace", help="solve a p-Laplacian boundary problem")
    s.add_argument("--problem", required=True, help="problem file (JSON)")
    s.add_argument("--tol", type=float, default=None)
    s.add_argument("--max-iter", type=int, default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--config", help="JSON config file")
    s.add_argument("--out")
    s.add_argument("--format", choices=("json", "csv"), default=None)
    s.set_defaults(func=_cmd_plaplace)

    s = subs.add_parser("simulate", help="extract strategies and simulate mean payoff")
    _add_operator_args(s, game_only=True)
    s.add_argument("--g", required=True)
    s.add_argument("--state", type=int, required=True, help="1-based initial state")
    s.add_argument("--horizon", type=int, required=True)
    s.add_argument("--reps", type=int, default=1)
    _add_common(s)
    s.set_defaults(func=_cmd_simulate)

    return parser


def run(argv=None) -> int:
    """Entry point returning the exit code (0 ok, 1 input error, 2 negative)."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    args._argv = argv
    args._resolved = {}
    args._config = None
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            with open(config_path) as fh:
                args._config = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: --config: {exc}", file=sys.stderr)
            return 1
        if not isinstance(args._config, dict):
            print("error: --config: expected a JSON object", file=sys.stderr)
            return 1
    if getattr(args, "format", None) == "csv" and args.command not in (
            "scan-bias", "reproduce-figure1"):
        print(f"error: --format csv is not supported for {args.command}",
              file=sys.stderr)
        return 1
    if getattr(args, "out_required", False) and not args.out:
        print(f"error: {args.command} requires --out", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FloatingPointError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    raise SystemExit(run())
