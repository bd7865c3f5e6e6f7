"""Command-line interface.

Subcommands::

    structot solve PROBLEM.json [--algorithm spmp] [--out-dir out] ...
    structot generate --clusters 3 --per-cluster 10 --out-dir data
    structot distance PROBLEM.json
    structot adapt PROBLEM.json
    structot gapcheck COUPLING.csv DUAL.csv PROBLEM.json

Exit codes: 0 for a certified result, 2 for a best-effort (non-certified)
result, 1 for invalid input. Set ``SOT_LOG_LEVEL`` to ``error``, ``info``
or ``debug`` for diagnostics on stderr.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import jsonschema
import numpy as np

from . import io as sio
from .exceptions import InputError, NotCertifiedWarning
from .harness import (MethodSpec, SyntheticSpec, adapt_and_score, class_groups,
                      default_methods, generate, knn_groups, method_cost, ngram_groups,
                      sot_distance, structured_cost)
from .measures import CostMatrix, DiscreteMeasure, EdgeIndex, GroupStructure, build_cost
from .solvers import SolverConfig, saddle_gap, solve, write_history_csv
from .submodular import ConcaveFn, Modular, SubmodularCost

log = logging.getLogger("structot")

EXIT_OK, EXIT_INPUT, EXIT_UNCERTIFIED = 0, 1, 2

_MEASURE = {
    "type": "object",
    "oneOf": [
        {"required": ["points"]},
        {"required": ["file"]},
    ],
    "properties": {
        "points": {"type": "array", "minItems": 1,
                   "items": {"oneOf": [{"type": "number"},
                                       {"type": "array", "items": {"type": "number"}}]}},
        "weights": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "labels": {"type": "array", "items": {"type": "integer"}},
        "file": {"type": "string"},
        "allow_duplicates": {"type": "boolean"},
    },
    "additionalProperties": False,
}

_G = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["identity", "sqrt", "threshold_sqrt", "power"]},
        "alpha": {"type": "number", "exclusiveMinimum": 0},
        "p": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
    },
    "additionalProperties": False,
}

PROBLEM_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["source", "target"],
    "properties": {
        "source": _MEASURE,
        "target": _MEASURE,
        "test": _MEASURE,
        "cost": {
            "type": "object",
            "properties": {
                "metric": {"enum": ["euclidean", "squared_euclidean", "precomputed"]},
                "file": {"type": "string"},
                "matrix": {"type": "array", "items": {"type": "array",
                                                      "items": {"type": "number", "minimum": 0}}},
            },
            "additionalProperties": False,
        },
        "structure": {
            "type": "object",
            "required": ["type"],
            "properties": {
                "type": {"enum": ["modular", "concave_of_sum"]},
                "g": _G,
                "groups": {"oneOf": [
                    {"enum": ["from_labels", "from_source_labels"]},
                    {"type": "object", "properties": {"knn": {"type": "integer", "minimum": 0}},
                     "required": ["knn"], "additionalProperties": False},
                    {"type": "object", "properties": {"ngram": {"type": "integer", "minimum": 1}},
                     "required": ["ngram"], "additionalProperties": False},
                    {"type": "array", "items": {"type": "array",
                                                "items": {"type": "integer", "minimum": 0}}},
                ]},
            },
            "additionalProperties": False,
        },
        "solver": {
            "type": "object",
            "properties": {
                "algorithm": {"enum": ["mda", "spmd", "spmp", "emd", "sinkhorn_ot"]},
                "eta0": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "step_rule": {"enum": ["inv_sqrt_t", "constant", None]},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
                "gap_every": {"type": "integer", "minimum": 1},
                "entropic_lambda": {"type": "number", "exclusiveMinimum": 0},
                "seed": {"type": "integer"},
                "averaging": {"enum": ["leader", "corrector"]},
                "dual_scale": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "stop_rule": {"enum": ["auto", "gap", "decrease"]},
                "sinkhorn": {
                    "type": "object",
                    "properties": {
                        "inner_tol": {"type": "number", "exclusiveMinimum": 0},
                        "max_inner": {"type": "integer", "minimum": 1},
                        "underflow_floor": {"type": "number", "exclusiveMinimum": 0},
                    },
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
        "methods": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name"],
                "properties": {
                    "name": {"type": "string"},
                    "structure": {"enum": ["modular", "class"]},
                    "g": _G,
                    "solver": {"type": "object"},
                },
                "additionalProperties": False,
            },
        },
        "output": {
            "type": "object",
            "properties": {k: {"type": "string"} for k in
                           ("dir", "coupling", "dual", "result", "history")},
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

_OUTPUT_DEFAULTS = {"dir": ".", "coupling": "coupling.csv", "dual": "dual.csv",
                    "result": "result.json", "history": "history.csv"}


@dataclass
class Problem:
    """A loaded, validated problem file."""

    path: Path
    raw: dict
    source: DiscreteMeasure
    target: DiscreteMeasure
    cost: CostMatrix
    F: SubmodularCost
    solver: SolverConfig
    output: dict
    test: DiscreteMeasure | None = None

    def output_path(self, key: str, out_dir=None) -> Path:
        base = Path(out_dir) if out_dir else self.path.parent / self.output["dir"]
        return base / self.output[key]


def _pointer(error: jsonschema.ValidationError) -> str:
    return "/" + "/".join(str(p) for p in error.absolute_path)


def validate_problem(raw) -> None:
    """Raise :class:`InputError` listing every schema violation by JSON pointer."""
    validator = jsonschema.Draft202012Validator(PROBLEM_SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        msgs = [f"{_pointer(e)}: {e.message}" for e in errors]
        raise InputError("problem file is invalid:\n  " + "\n  ".join(msgs))


def _g_from(d: dict | None, alpha: float | None) -> ConcaveFn:
    if d is None:
        d = {"kind": "threshold_sqrt", "alpha": 1.0}
    g = ConcaveFn.from_dict(d)
    if alpha is not None:
        if g.kind != "threshold_sqrt":
            raise InputError("--alpha applies only to threshold_sqrt structures")
        g = ConcaveFn.threshold_sqrt(alpha)
    return g


def _groups_from(spec, src, tgt) -> GroupStructure:
    if spec is None or spec == "from_labels":
        if src.labels is None:
            raise InputError("/structure/groups: from_labels needs source labels")
        if spec == "from_labels" and tgt.labels is not None:
            return class_groups(src.labels, tgt.labels)
        return class_groups(src.labels, n_targets=tgt.size)
    if spec == "from_source_labels":
        if src.labels is None:
            raise InputError("/structure/groups: from_source_labels needs source labels")
        return class_groups(src.labels, n_targets=tgt.size)
    if isinstance(spec, dict) and "knn" in spec:
        return knn_groups(src.points, tgt.points, int(spec["knn"]))
    if isinstance(spec, dict) and "ngram" in spec:
        return ngram_groups(src.size, tgt.size, int(spec["ngram"]))
    return GroupStructure(EdgeIndex(src.size, tgt.size), tuple(spec), "cover",
                          singleton_remainder=True)


def load_problem(path, alpha: float | None = None) -> Problem:
    """Read, validate and assemble a problem file."""
    path = Path(path)
    raw = sio.read_json(path)
    validate_problem(raw)
    base = path.parent
    src = sio.measure_from_dict(raw["source"], base)
    tgt = sio.measure_from_dict(raw["target"], base)
    test = sio.measure_from_dict(raw["test"], base) if "test" in raw else None
    cblock = raw.get("cost", {"metric": "euclidean"})
    metric = cblock.get("metric", "euclidean")
    if metric == "precomputed":
        if "matrix" in cblock:
            M = np.asarray(cblock["matrix"], dtype=float)
        elif "file" in cblock:
            p = Path(cblock["file"])
            M = sio.read_matrix_csv(p if p.is_absolute() else base / p)
        else:
            raise InputError("/cost: precomputed cost needs 'matrix' or 'file'")
        if M.shape != (src.size, tgt.size):
            raise InputError(f"/cost: matrix shape {M.shape} does not match measures "
                             f"({src.size}, {tgt.size})")
        cost = CostMatrix(M, "precomputed")
    else:
        cost = build_cost(src, tgt, metric)
    sblock = raw.get("structure", {"type": "modular"})
    if sblock["type"] == "modular":
        if alpha is not None:
            raise InputError("--alpha needs a concave_of_sum structure")
        F = Modular(cost.flat())
    else:
        g = _g_from(sblock.get("g"), alpha)
        F = structured_cost(_groups_from(sblock.get("groups"), src, tgt), cost.entries, g)
    try:
        solver = SolverConfig.from_dict(raw.get("solver", {}))
    except TypeError as exc:
        raise InputError(f"/solver: {exc}") from None
    output = dict(_OUTPUT_DEFAULTS)
    output.update(raw.get("output", {}))
    return Problem(path, raw, src, tgt, cost, F, solver, output, test)


def _overrides(args, cfg: SolverConfig) -> SolverConfig:
    upd = {}
    for key in ("algorithm", "eta0", "tol", "max_iter", "seed"):
        val = getattr(args, key, None)
        if val is not None:
            upd[key] = val
    if getattr(args, "lam", None) is not None:
        upd["entropic_lambda"] = args.lam
    return replace(cfg, **upd) if upd else cfg


# -- commands -------------------------------------------------------------------


def cmd_solve(args) -> int:
    prob = load_problem(args.problem, alpha=args.alpha)
    cfg = _overrides(args, prob.solver)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NotCertifiedWarning)
        res = solve(prob.source, prob.target, prob.F, cfg, cost=prob.cost.entries)
    paths = {k: prob.output_path(k, args.out_dir) for k in ("coupling", "dual", "result", "history")}
    for p in paths.values():
        p.parent.mkdir(parents=True, exist_ok=True)
    sio.write_matrix_csv(res.coupling.gamma, paths["coupling"])
    sio.write_matrix_csv(res.dual.matrix(prob.cost.shape), paths["dual"])
    write_history_csv(res.history, paths["history"])
    out = res.to_dict()
    out["solver"] = cfg.to_dict()
    out["files"] = {k: str(v) for k, v in paths.items()}
    sio.write_json(out, paths["result"])
    status = "certified" if res.certified else "NOT certified"
    print(f"value {res.primal_value!r} gap {res.gap!r} iterations {res.iterations} ({status})")
    return EXIT_OK if res.certified else EXIT_UNCERTIFIED


def cmd_generate(args) -> int:
    try:
        shift = tuple(float(x) for x in args.shift.split(",")) if args.shift else ()
    except ValueError:
        raise InputError(f"--shift must be comma-separated numbers, got {args.shift!r}") from None
    clusters = args.clusters if args.clusters is not None else (2 if args.shape == "two_moons" else 3)
    spec = SyntheticSpec(seed=args.seed, clusters=clusters, per_cluster=args.per_cluster,
                         dim=args.dim, spread=args.spread, separation=args.separation,
                         shift=shift, shape=args.shape, swap_nearest=args.swap_nearest)
    src, tgt, _ = generate(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sio.write_measure_csv(src, out / "source.csv", with_weights=False)
    sio.write_measure_csv(tgt, out / "target.csv", with_weights=False)
    problem = {
        "source": {"file": "source.csv"},
        "target": {"file": "target.csv"},
        "cost": {"metric": "euclidean"},
        "structure": {"type": "concave_of_sum",
                      "g": {"kind": "threshold_sqrt", "alpha": args.alpha or 1.0},
                      "groups": "from_source_labels"},
        "solver": {"algorithm": "spmp", "tol": 1e-3},
        "output": {"dir": "results"},
    }
    if spec.spread == 0:
        problem["source"]["allow_duplicates"] = True
        problem["target"]["allow_duplicates"] = True
    sio.write_json(problem, out / "problem.json")
    print(f"wrote {src.size} source and {tgt.size} target points to {out}")
    return EXIT_OK


def cmd_distance(args) -> int:
    prob = load_problem(args.problem, alpha=args.alpha)
    cfg = _overrides(args, prob.solver)
    metric = prob.cost.metric_tag
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        d = sot_distance(prob.source, prob.target, prob.F, cfg, cost=prob.cost.entries,
                         metric_tag=metric)
    print(f"distance {d.value!r}")
    print(f"gap {d.gap!r}")
    if not d.hypotheses_ok:
        print("warning: " + "; ".join(d.issues), file=sys.stderr)
    return EXIT_OK if d.certified else EXIT_UNCERTIFIED


def _methods_from(raw, args) -> list[MethodSpec]:
    if "methods" not in raw:
        kw = {}
        if args.alpha is not None:
            kw["alpha"] = args.alpha
        if args.lam is not None:
            kw["entropic_lambda"] = args.lam
        return default_methods(**kw)
    out = []
    for m in raw["methods"]:
        cfg = SolverConfig.from_dict(m.get("solver", {}))
        g = ConcaveFn.from_dict(m["g"]) if "g" in m else ConcaveFn.threshold_sqrt(1.0)
        out.append(MethodSpec(m["name"], cfg, m.get("structure", "modular"), g))
    return out


def cmd_adapt(args) -> int:
    prob = load_problem(args.problem)
    if prob.source.labels is None:
        raise InputError("/source: adaptation needs source labels")
    test = prob.test if prob.test is not None else prob.target
    if test.labels is None:
        raise InputError("/test: adaptation needs a labeled test set (or labeled target)")
    methods = _methods_from(prob.raw, args)
    metric = prob.cost.metric_tag
    if metric == "precomputed":
        raise InputError("/cost: adaptation needs a metric cost built from the points")
    width = max(len(m.name) for m in methods)
    print(f"{'method':<{width}}  accuracy")
    for m in methods:
        F = method_cost(m, prob.source, prob.target, prob.cost.entries)
        acc = adapt_and_score(prob.source, prob.target, test, F, m.cfg, cost=prob.cost.entries)
        print(f"{m.name:<{width}}  {acc:.4f}")
    return EXIT_OK


def cmd_gapcheck(args) -> int:
    prob = load_problem(args.problem, alpha=args.alpha)
    gamma = sio.read_matrix_csv(args.coupling)
    kappa = sio.read_matrix_csv(args.dual)
    shape = prob.cost.shape
    if gamma.shape != shape or kappa.shape != shape:
        raise InputError(f"coupling {gamma.shape} / dual {kappa.shape} do not match {shape}")
    gap = saddle_gap(gamma, kappa.ravel(), prob.F, prob.source, prob.target)
    print(f"gap {gap!r}")
    tol = args.tol if args.tol is not None else prob.solver.tol
    return EXIT_OK if gap <= tol else EXIT_UNCERTIFIED


# -- entry point ----------------------------------------------------------------


def _add_solver_flags(p):
    p.add_argument("--algorithm", choices=["mda", "spmd", "spmp", "emd", "sinkhorn_ot"])
    p.add_argument("--eta0", type=float, help="initial step size")
    p.add_argument("--tol", type=float, help="stopping tolerance")
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--alpha", type=float, help="threshold of threshold_sqrt groups")
    p.add_argument("--lambda", dest="lam", type=float, help="entropic inverse temperature")
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="structot",
                                     description="Optimal transport solver for submodular edge costs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a problem file and write the results")
    p.add_argument("problem")
    _add_solver_flags(p)
    p.add_argument("--out-dir", dest="out_dir")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("generate", help="write a seeded synthetic problem")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--clusters", type=int)
    p.add_argument("--per-cluster", dest="per_cluster", type=int, default=10)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--spread", type=float, default=0.4)
    p.add_argument("--separation", type=float, default=2.0)
    p.add_argument("--shift", default="", help="comma-separated target translation")
    p.add_argument("--shape", choices=["gaussian_blobs", "two_moons"], default="gaussian_blobs")
    p.add_argument("--swap-nearest", dest="swap_nearest", action="store_true")
    p.add_argument("--alpha", type=float)
    p.add_argument("--out-dir", dest="out_dir", default=".")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("distance", help="print the structured transport distance and gap")
    p.add_argument("problem")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_distance)

    p = sub.add_parser("adapt", help="1-NN domain adaptation accuracy per method")
    p.add_argument("problem")
    p.add_argument("--alpha", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("gapcheck", help="recertify a stored coupling and dual point")
    p.add_argument("coupling")
    p.add_argument("dual")
    p.add_argument("problem")
    p.add_argument("--alpha", type=float)
    p.add_argument("--tol", type=float)
    p.set_defaults(func=cmd_gapcheck)
    return parser


def _setup_logging():
    level = os.environ.get("SOT_LOG_LEVEL", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        level = "error"
    logging.basicConfig(level=levels[level], format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
