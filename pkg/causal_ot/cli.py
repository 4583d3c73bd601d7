"""
Command-line interface: ``causal-ot <subcommand> [options]``.

Reports are JSON on stdout (or --out); a one-line summary goes to stderr.
Exit codes: 0 success, 1 invalid input or solver failure, 2 a certified
check failed.
"""

import argparse
import logging
import sys
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from . import __version__
from .config import SolverConfig
from .exceptions import CausalOTAssertionError, CausalOTError, CausalOTFileError, CausalOTValidationError
from .fixtures import random_ate_pairs
from .inference import AteSpec, InferenceManager, ate, propensity_gate
from .interpolation import InterpolationManager, default_grid, examples_to_dict, path_nodes_frame
from .metric import CoordinateMetric, GroundCost, load_matrix_csv, metric_repair, validate_metric
from .model import Dag, is_g_compatible
from .model_io import ModelBundle, load_graph, load_model, write_report
from .solver import Solver
from .wasserstein import WassersteinManager

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_ASSERTION = 2


# ==========================================================================
# ARGUMENTS
# ==========================================================================

def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--graph", help="graph file or preset (full, empty, linear, markov)")
    common.add_argument("--n", type=int, help="vertex count for a graph preset")
    common.add_argument("--p", type=float, help="order of the distance (default: the cost's exponent)")
    common.add_argument("--exact", action="store_true", default=None, help="rational arithmetic where feasible")
    common.add_argument("--restarts", type=int, help="block-coordinate descent restarts")
    common.add_argument("--seed", type=int, help="random seed (default 0)")
    common.add_argument("--max-enum", dest="max_enum", type=int, help="cap on exhaustive enumeration")
    common.add_argument("--tol", type=float, help="numerical tolerance")
    common.add_argument("--workers", type=int, help="worker threads (env CAUSAL_OT_WORKERS)")
    common.add_argument("--config", help="TOML or JSON solver configuration file")
    common.add_argument("--out", help="write the report here instead of stdout")
    common.add_argument("--emit-plan", dest="emit_plan", action="store_true", help="include couplings in reports")
    common.add_argument("--format", choices=["json", "csv"], default="json", help="report format")
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="causal-ot",
        description="Causal and bicausal optimal transport between discrete measures.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dist", parents=[common], help="distance between two measures of a model")
    p.add_argument("--model", required=True)
    p.add_argument("--mu", default="mu")
    p.add_argument("--nu", default="nu")
    p.add_argument("--mode", choices=["causal", "bicausal", "standard"], default="bicausal")

    p = sub.add_parser("suite", parents=[common], help="semimetric and triangle checks on a model's measures")
    p.add_argument("--model", required=True)
    p.add_argument("--measures", help="comma-separated measure names (default: all)")

    p = sub.add_parser("appendix-b", parents=[common], help="bundled triangle-inequality counterexample")
    p.add_argument("--repair", action="store_true", help="apply metric repair to the cost matrix first")

    p = sub.add_parser("ate", parents=[common], help="average treatment effect of a measure")
    p.add_argument("--model", required=True)
    p.add_argument("--measure", default="mu")
    p.add_argument("--treatment", type=int)
    p.add_argument("--outcome", type=int)
    p.add_argument("--delta", type=float)

    p = sub.add_parser("ate-experiment", parents=[common], help="treatment-effect continuity bound")
    p.add_argument("--model", help="model whose 'pairs' list the measure pairs")
    p.add_argument("--pairs", type=int, default=50, help="number of generated pairs without --model")
    p.add_argument("--treatment", type=int)
    p.add_argument("--outcome", type=int)
    p.add_argument("--delta", type=float)

    p = sub.add_parser("perturb", parents=[common], help="structural causal model perturbation bound")
    p.add_argument("--model", required=True)
    p.add_argument("--scm-a", dest="scm_a", default="A")
    p.add_argument("--scm-b", dest="scm_b", default="B")

    p = sub.add_parser("interpolate", parents=[common], help="interpolation path between two measures")
    p.add_argument("--model", required=True)
    p.add_argument("--mu", default="mu")
    p.add_argument("--nu", default="nu")
    p.add_argument("--mode", choices=["bicausal", "standard"], default="bicausal")
    p.add_argument("--lambdas", help="comma-separated grid (decimals or p/q)")
    p.add_argument("--steps", type=int, default=11)
    p.add_argument("--nodes-csv", dest="nodes_csv", help="write plot nodes here")

    p = sub.add_parser("examples", parents=[common], help="bundled interpolation examples")
    p.add_argument("--nodes-csv", dest="nodes_csv", help="write trajectory nodes here")

    p = sub.add_parser("check", parents=[common], help="graph compatibility of measures")
    p.add_argument("--measure", required=True, help="model file holding the measures")
    p.add_argument("--name", help="measure name (default: all)")

    p = sub.add_parser("repair-metric", parents=[common], help="metric validation and triangle repair")
    p.add_argument("--matrix", required=True, help="headerless CSV distance matrix")
    return parser


def resolve_config(args: argparse.Namespace) -> SolverConfig:
    """Defaults < config file < environment < flags."""
    config = SolverConfig()
    if args.config:
        config = SolverConfig.from_file(args.config, config)
    config = SolverConfig.from_env(config)
    return config.replace(
        seed=args.seed,
        restarts=args.restarts,
        max_enum=args.max_enum,
        tol=args.tol,
        exact=args.exact,
        workers=args.workers,
    )


def _graph(args: argparse.Namespace, bundle: Optional[ModelBundle]) -> Dag:
    if args.graph:
        n = args.n or (len(bundle.spaces) if bundle is not None else None)
        return load_graph(args.graph, n)
    if bundle is not None and bundle.dag is not None:
        return bundle.dag
    raise CausalOTValidationError("no graph given: pass --graph or declare one in the model")


def _cost(bundle: ModelBundle) -> GroundCost:
    if bundle.cost is None:
        raise CausalOTValidationError("model declares no cost")
    return bundle.cost


def _lambdas(args: argparse.Namespace) -> List[Fraction]:
    if not args.lambdas:
        return default_grid(args.steps)
    try:
        return [Fraction(s.strip()) for s in args.lambdas.split(',') if s.strip()]
    except (ValueError, ZeroDivisionError) as e:
        raise CausalOTValidationError(f"malformed --lambdas: {args.lambdas!r}") from e


def _summary(text: str) -> None:
    print(text, file=sys.stderr)


# ==========================================================================
# SUBCOMMANDS
# ==========================================================================

def cmd_dist(args: argparse.Namespace, solver: Solver) -> Dict[str, Any]:
    bundle = load_model(args.model)
    mu, nu = bundle.measure(args.mu), bundle.measure(args.nu)
    dag = None if args.mode == 'standard' else _graph(args, bundle)
    report = WassersteinManager(solver).distance(dag, mu, nu, _cost(bundle), args.p, args.mode)
    _summary(f"{args.mode} distance {args.mu}-{args.nu}: {report.value:.12g} ({report.status})")
    return {'distance': report.to_dict(args.emit_plan), 'graph': dag.to_dict() if dag else None}


def cmd_suite(args: argparse.Namespace, solver: Solver) -> Dict[str, Any]:
    bundle = load_model(args.model)
    names = [s.strip() for s in args.measures.split(',')] if args.measures else sorted(bundle.measures)
    measures = {name: bundle.measure(name) for name in names}
    report = WassersteinManager(solver).semimetric_suite(measures, _graph(args, bundle), _cost(bundle), args.p)
    _summary(f"triangle inequality: {'holds' if report.triangle_holds else 'VIOLATED'}")
    return {'suite': report.to_dict()}


def cmd_appendix_b(args: argparse.Namespace, solver: Solver) -> Dict[str, Any]:
    report = WassersteinManager(solver).reproduce_appendix_b(repair=args.repair, graph=args.graph or 'markov')
    values = ", ".join(f"W({a},{b})={report.reference_value((a, b)):.6g}" for a, b in report.distances)
    _summary(f"{values}; triangle inequality: {'VIOLATED' if report.violated else 'holds'}")
    return {'appendix_b': report.to_dict(args.emit_plan)}


def _ate_spec(args: argparse.Namespace, bundle: ModelBundle) -> AteSpec:
    declared = bundle.ate or {}
    treatment = args.treatment if args.treatment is not None else declared.get('treatment')
    outcome = args.outcome if args.outcome is not None else declared.get('outcome')
    delta = args.delta if args.delta is not None else declared.get('delta', 0.2)
    if treatment is None or outcome is None:
        raise CausalOTValidationError("treatment and outcome vertices are required (flags or the model's 'ate')")
    return AteSpec(dag=_graph(args, bundle), treatment=int(treatment), outcome=int(outcome), delta=float(delta))


def cmd_ate(args: argparse.Namespace, solver: Solver) -> Dict[str, Any]:
    bundle = load_model(args.model)
    spec = _ate_spec(args, bundle)
    m = bundle.measure(args.measure)
    result = ate(m, spec)
    gate = propensity_gate(m, spec)
    _summary(f"ATE of {args.measure}: {float(result.psi):.12g}; propensity gate: {'pass' if gate.in_set else 'fail'}")
    return {'ate': result.to_dict(), 'propensity': gate.to_dict()}


def cmd_ate_experiment(args: argparse.Namespace, solver: Solver):
    cost = None
    if args.model:
        bundle = load_model(args.model)
        spec = _ate_spec(args, bundle)
        pairs = [(bundle.measure(a), bundle.measure(b)) for a, b in bundle.pairs]
        if not pairs:
            raise CausalOTValidationError("model lists no 'pairs'")
        cost = bundle.cost
    else:
        pairs, spec = random_ate_pairs(
            np.random.default_rng(solver.config.seed), args.pairs, args.delta if args.delta is not None else 0.2)
    table = InferenceManager(solver).ate_continuity_experiment(pairs, spec, cost)
    _summary(f"continuity bound holds on {int(table['holds'].sum())}/{len(table)} pairs")
    if args.format == 'csv':
        return table
    return {
        'pairs': table.to_dict(orient='records'),
        'constant_note': 'certified, not minimal',
    }


def cmd_perturb(args: argparse.Namespace, solver: Solver) -> Dict[str, Any]:
    bundle = load_model(args.model)
    sa, sb = bundle.scm(args.scm_a), bundle.scm(args.scm_b)
    metrics = None
    if bundle.cost is not None and bundle.cost.kind == 'additive':
        m = bundle.cost.metrics
        metrics = [m] * sa.dag.n if isinstance(m, CoordinateMetric) else list(m)
    report = InferenceManager(solver).scm_perturbation_bound(sa, sb, metrics)
    _summary(f"perturbation bound: {report.lhs:.12g} <= {report.rhs:.12g}")
    return {'perturbation': report.to_dict()}


def cmd_interpolate(args: argparse.Namespace, solver: Solver) -> Dict[str, Any]:
    bundle = load_model(args.model)
    path = InterpolationManager(solver).interpolation_path(
        _graph(args, bundle), bundle.measure(args.mu), bundle.measure(args.nu), _cost(bundle),
        args.p, _lambdas(args), args.mode,
    )
    if args.nodes_csv:
        _write_csv(path_nodes_frame(path), args.nodes_csv)
    _summary(f"compatible at {sum(path.compatible)}/{len(path.compatible)} grid points; "
             f"exception set {[str(x) for x in path.exception_set]}")
    return {'path': path.to_dict(args.emit_plan)}


def cmd_examples(args: argparse.Namespace, solver: Solver) -> Dict[str, Any]:
    bundle = InterpolationManager(solver).reproduce_examples()
    if args.nodes_csv:
        frames = [nodes.assign(measure=label) for label, (nodes, _) in bundle['walks']['frames'].items()]
        _write_csv(pd.concat(frames, ignore_index=True), args.nodes_csv)
    member = bundle['walks']['standard_membership'].member
    _summary(f"standard plan bicausal: {str(member).lower()}; "
             f"exception set {[str(x) for x in bundle['markov'].exception_set]}")
    return {'examples': examples_to_dict(bundle, args.emit_plan)}


def cmd_check(args: argparse.Namespace, solver: Solver) -> Dict[str, Any]:
    bundle = load_model(args.measure)
    dag = _graph(args, bundle)
    names = [args.name] if args.name else sorted(bundle.measures)
    results = {}
    for name in names:
        result = is_g_compatible(bundle.measure(name), dag)
        results[name] = {
            'compatible': result.compatible,
            'max_residual': result.max_residual,
            'vertex': result.vertex,
        }
    _summary(f"G-compatible: {str(all(r['compatible'] for r in results.values())).lower()}")
    return {'graph': dag.to_dict(), 'graph_class': dag.graph_class, 'measures': results}


def cmd_repair_metric(args: argparse.Namespace, solver: Solver):
    matrix = load_matrix_csv(args.matrix)
    before = validate_metric(matrix)
    repaired = metric_repair(matrix)
    changed = not np.array_equal(np.asarray(repaired, dtype=float), np.asarray(matrix, dtype=float))
    _summary(f"metric repair: {'changed' if changed else 'unchanged'}")
    if args.format == 'csv':
        return pd.DataFrame(np.asarray(repaired, dtype=float))
    return {'validation': before.to_dict(), 'changed': changed,
            'matrix': np.asarray(repaired, dtype=float).tolist()}


COMMANDS: Dict[str, Callable[[argparse.Namespace, Solver], Any]] = {
    'dist': cmd_dist,
    'suite': cmd_suite,
    'appendix-b': cmd_appendix_b,
    'ate': cmd_ate,
    'ate-experiment': cmd_ate_experiment,
    'perturb': cmd_perturb,
    'interpolate': cmd_interpolate,
    'examples': cmd_examples,
    'check': cmd_check,
    'repair-metric': cmd_repair_metric,
}


# ==========================================================================
# ENTRY POINT
# ==========================================================================

def _write_csv(frame: pd.DataFrame, path: Optional[str]) -> str:
    text = frame.to_csv(index=False, header=not all(isinstance(c, int) for c in frame.columns))
    if path:
        try:
            with open(path, 'w', encoding='utf-8', newline='') as f:
                f.write(text)
        except OSError as e:
            raise CausalOTFileError(f"Failed to write CSV '{path}': {e}") from e
    return text


def _configure_logging(verbose: int) -> None:
    level = logging.WARNING if verbose <= 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(name)s: %(message)s")


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse arguments, run one subcommand and emit its report.

    Returns:
        Exit code (0 success, 1 input or solver error, 2 failed certified check)
    """
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)
    try:
        config = resolve_config(args)
        solver = Solver(config)
        result = COMMANDS[args.command](args, solver)
        if isinstance(result, pd.DataFrame):
            text = _write_csv(result, args.out)
        else:
            payload = {'command': args.command, 'config': config.to_dict(), **result}
            text = write_report(payload, args.out)
        if not args.out:
            sys.stdout.write(text)
    except CausalOTAssertionError as e:
        print(f"causal-ot: check failed: {e}", file=sys.stderr)
        return EXIT_ASSERTION
    except CausalOTError as e:
        print(f"causal-ot: error: {e}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
