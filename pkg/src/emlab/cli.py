"""Command-line experiment runner: ``emlab run <experiment> --config c.json``.

The configuration is a single JSON document; unknown keys are rejected so
typos fail loudly.  Each run writes ``trace.csv`` (one row per iterate)
and ``summary.json`` into the output directory and exits 0 whenever the
run completed, whatever the verdict.
"""

from __future__ import annotations

import argparse
import ast
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .bregman import ConstraintSet
from .errors import ConfigError, EmlabError
from .experiments import EXPERIMENTS, ExperimentResult
from .proximal import IterateTrace

__all__ = [
    "main",
    "run_from_config",
    "constraint_from_config",
    "dataset_from_config",
    "write_trace_csv",
    "read_trace_csv",
]


# ---------------------------------------------------------------------------
# Safe scalar expressions for curve declarations, e.g. "(u, -u^2/4)"
# ---------------------------------------------------------------------------

_ALLOWED_FUNCS = {
    "sin": math.sin, "cos": math.cos, "tan": math.tan,
    "exp": math.exp, "log": math.log, "sqrt": math.sqrt, "abs": abs,
}
_ALLOWED_NAMES = {"pi": math.pi, "e": math.e}


def _compile_expr(node: ast.AST):
    if isinstance(node, ast.Expression):
        return _compile_expr(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        val = float(node.value)
        return lambda u: val
    if isinstance(node, ast.Name):
        if node.id == "u":
            return lambda u: u
        if node.id in _ALLOWED_NAMES:
            val = _ALLOWED_NAMES[node.id]
            return lambda u: val
        raise ConfigError(f"unknown name {node.id!r} in curve expression")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _compile_expr(node.operand)
        sign = -1.0 if isinstance(node.op, ast.USub) else 1.0
        return lambda u: sign * inner(u)
    if isinstance(node, ast.BinOp) and isinstance(
        node.op, (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.BitXor)
    ):
        left = _compile_expr(node.left)
        right = _compile_expr(node.right)
        op = type(node.op)
        if op is ast.Add:
            return lambda u: left(u) + right(u)
        if op is ast.Sub:
            return lambda u: left(u) - right(u)
        if op is ast.Mult:
            return lambda u: left(u) * right(u)
        if op is ast.Div:
            return lambda u: left(u) / right(u)
        return lambda u: left(u) ** right(u)  # Pow and the ^ alias
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
        if node.func.id not in _ALLOWED_FUNCS or node.keywords:
            raise ConfigError(f"unsupported function {node.func.id!r} in curve expression")
        fn = _ALLOWED_FUNCS[node.func.id]
        args = [_compile_expr(a) for a in node.args]
        return lambda u: fn(*(a(u) for a in args))
    raise ConfigError(f"unsupported syntax in curve expression: {ast.dump(node)}")


def parse_curve_expression(text: str):
    """Compile "(u, -u^2/4)" into a callable u -> ndarray."""
    src = text.strip().replace("^", "**")
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse curve expression {text!r}: {exc}") from exc
    body = tree.body
    if not isinstance(body, ast.Tuple):
        raise ConfigError("curve expression must be a tuple like (u, -u^2/4)")
    comps = [_compile_expr(el) for el in body.elts]

    def theta(u: float) -> np.ndarray:
        return np.array([c(float(u)) for c in comps], dtype=float)

    return theta


def _check_keys(cfg: dict, allowed: set[str], where: str) -> None:
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} in {where}")


def constraint_from_config(cfg: dict) -> ConstraintSet:
    """Constraint grammar: kind in {all, point, affine, curve, sublevel-strip}."""
    if not isinstance(cfg, dict) or "kind" not in cfg:
        raise ConfigError("constraint config must be a mapping with a 'kind'")
    kind = cfg["kind"]
    if kind == "all":
        _check_keys(cfg, {"kind", "dim"}, "constraint")
        return ConstraintSet.everything(int(cfg.get("dim", 2)))
    if kind == "point":
        _check_keys(cfg, {"kind", "value"}, "constraint")
        return ConstraintSet.point(np.asarray(cfg["value"], dtype=float))
    if kind == "affine":
        _check_keys(cfg, {"kind", "matrix", "offset"}, "constraint")
        return ConstraintSet.affine(
            np.asarray(cfg["matrix"], dtype=float), np.asarray(cfg["offset"], dtype=float)
        )
    if kind == "curve":
        _check_keys(cfg, {"kind", "theta", "u_range", "grid"}, "constraint")
        theta = parse_curve_expression(cfg["theta"])
        lo, hi = (float(v) for v in cfg["u_range"])

        def dtheta(u: float, h: float = 1e-6) -> np.ndarray:
            return (theta(u + h) - theta(u - h)) / (2.0 * h)

        return ConstraintSet.curve(theta, (lo, hi), dtheta_fn=dtheta, grid=int(cfg.get("grid", 512)))
    raise ConfigError(f"unknown constraint kind {kind!r}")


def dataset_from_config(cfg: dict):
    """Data-set grammar: {"observed": "eta[0]" | [indices], "value": y | [y...]}."""
    from .geometry import DataSetSpec

    _check_keys(cfg, {"observed", "value"}, "data set")
    obs = cfg["observed"]
    if isinstance(obs, str):
        if not (obs.startswith("eta[") and obs.endswith("]")):
            raise ConfigError(f"observed must look like 'eta[0]', got {obs!r}")
        idx = (int(obs[4:-1]),)
    else:
        idx = tuple(int(i) for i in obs)
    return DataSetSpec(observed_indices=idx, y_obs=np.atleast_1d(np.asarray(cfg["value"], dtype=float)))


# ---------------------------------------------------------------------------
# Experiment config schemas
# ---------------------------------------------------------------------------

_SCHEMAS: dict[str, set[str]] = {
    "gaussian-curved": {"y", "theta0", "max_iter", "step_tol", "u_range"},
    "gaussian-unconstrained": {"y", "theta0", "iterations"},
    "missing-data": {"y", "rho", "theta0", "iterations"},
    "kl-arc": {"p", "q", "starts", "max_iter", "step_tol"},
    "mexican-hat": {"r0", "steps", "x0"},
    "ppm-em": {"x0", "steps", "objective", "lam"},
}


def _validate_numbers(obj, where: str) -> None:
    if isinstance(obj, bool):
        return
    if isinstance(obj, (int, float)):
        if not math.isfinite(obj):
            raise ConfigError(f"non-finite number in {where}")
        return
    if isinstance(obj, (list, tuple)):
        for v in obj:
            _validate_numbers(v, where)
    if isinstance(obj, dict):
        for v in obj.values():
            _validate_numbers(v, where)


def run_from_config(experiment: str, cfg: dict) -> ExperimentResult:
    if experiment not in EXPERIMENTS:
        raise ConfigError(
            f"unknown experiment {experiment!r}; choose from {sorted(EXPERIMENTS)}"
        )
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys(cfg, _SCHEMAS[experiment], f"{experiment} config")
    _validate_numbers(cfg, f"{experiment} config")
    kwargs = dict(cfg)
    if "u_range" in kwargs:
        kwargs["u_range"] = tuple(float(v) for v in kwargs["u_range"])
    if "starts" in kwargs:
        kwargs["starts"] = tuple(float(v) for v in kwargs["starts"])
    return EXPERIMENTS[experiment](**kwargs)


# ---------------------------------------------------------------------------
# Trace and summary files
# ---------------------------------------------------------------------------


def write_trace_csv(trace: IterateTrace, path) -> None:
    """Write the trace; floats go through repr so re-reading is lossless."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(trace.column_names())
        for row in trace.rows():
            writer.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])


def read_trace_csv(path) -> IterateTrace:
    """Reload a trace written by write_trace_csv."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    if not rows:
        raise ConfigError(f"trace file {path} has no data rows")
    dim = sum(1 for name in header if name.startswith("x") and name[1:].isdigit())
    base = 1 + dim
    trace = IterateTrace()
    extra_names = header[base + 7:]
    for name in extra_names:
        trace.extras[name] = []
    for row in rows:
        trace.append(
            np.array(row[1:base]),
            f=row[base], psi=row[base + 1], step=row[base + 2], proj_step=row[base + 3],
            residual=row[base + 4], lam=row[base + 5], margin=row[base + 6],
        )
        for j, name in enumerate(extra_names):
            trace.extras[name].append(row[base + 7 + j])
    return trace


def write_summary_json(summary: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="emlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run one experiment from a JSON config")
    run_p.add_argument("experiment", choices=sorted(EXPERIMENTS))
    run_p.add_argument("--config", required=True, help="path to the JSON config")
    run_p.add_argument("--out-dir", required=True, help="directory for trace.csv and summary.json")
    args = parser.parse_args(argv)

    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"emlab: cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        result = run_from_config(args.experiment, cfg)
    except (EmlabError, ValueError) as exc:
        print(f"emlab: {exc}", file=sys.stderr)
        return 1
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trace_csv(result.trace, out / "trace.csv")
    write_summary_json(result.summary, out / "summary.json")
    print(
        f"emlab: {args.experiment} finished with verdict "
        f"{result.summary['verdict']!r}; outputs in {out}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
