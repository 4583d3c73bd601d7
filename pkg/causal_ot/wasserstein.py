"""
G-Wasserstein distances.

Distances over standard, causal and bicausal couplings, the semimetric
property suite, edge monotonicity between nested graphs, and the bundled
triangle-inequality counterexample.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np

from .constants import (
    APPENDIX_B_REFERENCE,
    APPENDIX_B_REFERENCE_SCALE,
    APPENDIX_B_TOLERANCE,
    BICAUSAL,
    CAUSAL,
    EMPTY,
    FULL,
    GLOBAL_OPTIMAL,
    METHOD_LP,
    WEIGHT_TOLERANCE,
)
from .exceptions import (
    BoundViolationError,
    CausalOTValidationError,
    MarginalNotCompatibleError,
    NonGlobalStatusError,
    NotASubgraphError,
    ReproductionMismatchError,
)
from .metric import GroundCost, metric_repair
from .model import Dag, DiscreteMeasure, is_g_compatible, marginal
from .programs import Coupling
from .solver import SolveReport, Solver
from .validators import validate_positive_float

logger = logging.getLogger(__name__)


@dataclass
class DistanceReport:
    """
    One distance evaluation.

    ``value`` is the distance (cost ** (1/p)); ``cost`` the optimal p-th
    power objective.
    """

    value: float
    cost: float
    p: float
    status: str
    method: str
    graph_class: Optional[str]
    coupling: Coupling
    lower_bound: Optional[float] = None
    solve: Optional[SolveReport] = field(default=None, repr=False)

    @property
    def is_global(self) -> bool:
        return self.status == GLOBAL_OPTIMAL

    def to_dict(self, emit_plan: bool = False) -> Dict[str, Any]:
        out = {
            'value': self.value,
            'cost': self.cost,
            'p': self.p,
            'status': self.status,
            'method': self.method,
            'graph_class': self.graph_class,
            'lower_bound': self.lower_bound,
        }
        if self.solve is not None:
            out['residuals'] = dict(self.solve.residuals)
            out['iterations'] = self.solve.iterations
        if emit_plan:
            out['coupling'] = self.coupling.to_dict()
        return out


@dataclass
class SemimetricReport:
    """Pairwise distances with symmetry, identity and triangle checks."""

    names: List[str]
    values: Dict[Tuple[str, str], float]
    statuses: Dict[Tuple[str, str], str]
    symmetry_defects: List[Tuple[str, str, float]] = field(default_factory=list)
    identity_defects: List[Tuple[str, str, float]] = field(default_factory=list)
    negative: List[Tuple[str, str, float]] = field(default_factory=list)
    triangle_violations: List[Tuple[str, str, str, float]] = field(default_factory=list)

    @property
    def is_semimetric(self) -> bool:
        return not (self.symmetry_defects or self.identity_defects or self.negative)

    @property
    def triangle_holds(self) -> bool:
        return not self.triangle_violations

    def to_dict(self) -> Dict[str, Any]:
        return {
            'measures': list(self.names),
            'distances': [
                {'a': a, 'b': b, 'value': v, 'status': self.statuses[(a, b)]}
                for (a, b), v in sorted(self.values.items())
            ],
            'semimetric': self.is_semimetric,
            'symmetry_defects': [list(d) for d in self.symmetry_defects],
            'identity_defects': [list(d) for d in self.identity_defects],
            'negative': [list(d) for d in self.negative],
            'triangle_holds': self.triangle_holds,
            'triangle_violations': [
                {'a': a, 'b': b, 'c': c, 'margin': margin} for a, b, c, margin in self.triangle_violations
            ],
        }


@dataclass
class MonotonicityReport:
    sub_edges: List[Tuple[int, int]]
    super_edges: List[Tuple[int, int]]
    sub: DistanceReport
    super: DistanceReport
    holds: bool
    certified: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            'sub_edges': [list(e) for e in self.sub_edges],
            'super_edges': [list(e) for e in self.super_edges],
            'sub': self.sub.to_dict(),
            'super': self.super.to_dict(),
            'holds': self.holds,
            'certified': self.certified,
        }


@dataclass
class AppendixBReport:
    """Distances of the bundled triangle counterexample."""

    graph: str
    repaired: bool
    distances: Dict[Tuple[str, str], DistanceReport]
    violated: bool
    margin: float
    matrix_unchanged: Optional[bool] = None

    def reference_value(self, pair: Tuple[str, str]) -> float:
        return APPENDIX_B_REFERENCE_SCALE * self.distances[pair].value

    def to_dict(self, emit_plan: bool = False) -> Dict[str, Any]:
        return {
            'graph': self.graph,
            'repaired': self.repaired,
            'matrix_unchanged': self.matrix_unchanged,
            'distances': [
                {
                    'a': a,
                    'b': b,
                    'value': report.value,
                    'reference_value': self.reference_value((a, b)),
                    'status': report.status,
                    'method': report.method,
                    **({'coupling': report.coupling.to_dict()} if emit_plan else {}),
                }
                for (a, b), report in self.distances.items()
            ],
            'triangle_violated': self.violated,
            'margin': self.margin,
            'reference_margin': APPENDIX_B_REFERENCE_SCALE * self.margin,
            'reference_scale': APPENDIX_B_REFERENCE_SCALE,
            'scale_note': (
                'value is the distance between probability measures (atom weights 1/4); '
                'reference_value = reference_scale * value is the unnormalized scale 0.585 / 2.24 / 2.925'
            ),
        }


def _root(cost: float, p: float) -> float:
    return max(float(cost), 0.0) ** (1.0 / p)


class WassersteinManager:
    """Manager for distance computations on top of a Solver."""

    def __init__(self, solver: Optional[Solver] = None) -> None:
        """
        Initialize the distance manager.

        Args:
            solver: Solver engine (default: Solver with environment config)
        """
        self.solver = solver if solver is not None else Solver()

    @property
    def tol(self) -> float:
        return self.solver.config.tol

    def _distance(self, report: SolveReport, p: float, graph_class: Optional[str]) -> DistanceReport:
        return DistanceReport(
            value=_root(report.value, p),
            cost=report.value,
            p=p,
            status=report.status,
            method=report.method,
            graph_class=graph_class,
            coupling=report.coupling,
            lower_bound=_root(report.lower_bound, p) if report.lower_bound is not None else None,
            solve=report,
        )

    @staticmethod
    def _with_p(cost: GroundCost, p: Optional[float]) -> Tuple[GroundCost, float]:
        if p is None:
            return cost, cost.p
        validate_positive_float(p, "p")
        return (cost if cost.p == p else cost.with_p(p)), p

    def wasserstein_p(self, mu: DiscreteMeasure, nu: DiscreteMeasure, cost: GroundCost,
                      p: Optional[float] = None) -> DistanceReport:
        """
        Standard p-Wasserstein distance (all couplings).

        Args:
            mu, nu: Measures
            cost: Ground cost; p overrides its exponent when given
            p: Order

        Returns:
            DistanceReport with status GlobalOptimal
        """
        cost, p = self._with_p(cost, p)
        return self._distance(self.solver.solve_standard_ot(mu, nu, cost), p, None)

    def _empty_decomposition(self, dag: Dag, mu: DiscreteMeasure, nu: DiscreteMeasure,
                             cost: GroundCost, p: float) -> DistanceReport:
        """Sum of per-coordinate optima for product measures under a separable cost."""
        total = 0.0
        factors = []
        iterations = 0
        for i in range(1, dag.n + 1):
            mi, ni = marginal(mu, [i]), marginal(nu, [i])
            full = cost.coordinate_cost(i, mu.spaces[i - 1], nu.spaces[i - 1])
            rows = [t[0] for t in mi.support]
            cols = [t[0] for t in ni.support]
            report = self.solver.solve_standard_ot(mi, ni, full[np.ix_(rows, cols)])
            total += report.value
            iterations += report.iterations
            position_x = {a: r for r, a in enumerate(rows)}
            position_y = {b: c for c, b in enumerate(cols)}
            factors.append((position_x, position_y, report.coupling.weights))

        weights = np.ones((len(mu), len(nu)), dtype=object if all(f[2].dtype == object for f in factors) else float)
        for a, ta in enumerate(mu.support):
            for b, tb in enumerate(nu.support):
                w = 1
                for i, (px, py, kernel) in enumerate(factors):
                    w = w * kernel[px[ta[i]], py[tb[i]]]
                weights[a, b] = w
        coupling = Coupling(mu=mu, nu=nu, weights=weights)
        report = SolveReport(value=total, coupling=coupling, status=GLOBAL_OPTIMAL,
                             method=METHOD_LP, iterations=iterations)
        report = self.solver.finish(report, dag, mu, nu, BICAUSAL)
        logger.info("Empty graph: distance decomposes over %s coordinates (cost=%s)", dag.n, total)
        return self._distance(report, p, EMPTY)

    def g_wasserstein_p(
        self,
        dag: Dag,
        mu: DiscreteMeasure,
        nu: DiscreteMeasure,
        cost: GroundCost,
        p: Optional[float] = None,
        mode: str = BICAUSAL
    ) -> DistanceReport:
        """
        G-Wasserstein distance: optimal transport over bicausal (or causal) couplings.

        The Full graph reduces to wasserstein_p. The Empty graph with a
        separable cost decomposes into per-coordinate problems.

        Args:
            dag: Graph
            mu, nu: Measures compatible with dag
            cost: Ground cost
            p: Order (default: the cost's exponent)
            mode: 'bicausal' or 'causal'

        Returns:
            DistanceReport carrying the solver status

        Raises:
            MarginalNotCompatibleError: If mu or nu is not compatible with dag
        """
        cost, p = self._with_p(cost, p)
        graph_class = dag.graph_class
        if dag.complete:
            report = self.wasserstein_p(mu, nu, cost, p)
            report.graph_class = FULL
            return report
        key = mode.lower()
        if key == CAUSAL.lower():
            return self._distance(self.solver.solve_causal(dag, mu, nu, cost), p, graph_class)
        if key != BICAUSAL.lower():
            raise CausalOTValidationError(f"mode must be 'bicausal' or 'causal', got {mode!r}")
        if graph_class == EMPTY and cost.separable:
            for name, m in (('mu', mu), ('nu', nu)):
                if not is_g_compatible(m, dag).compatible:
                    raise MarginalNotCompatibleError(f"{name} is not a product measure")
            return self._empty_decomposition(dag, mu, nu, cost, p)
        return self._distance(self.solver.solve_bicausal(dag, mu, nu, cost), p, graph_class)

    def distance(self, dag: Optional[Dag], mu: DiscreteMeasure, nu: DiscreteMeasure, cost: GroundCost,
                 p: Optional[float] = None, mode: str = BICAUSAL) -> DistanceReport:
        """Distance for a mode name ('standard', 'causal' or 'bicausal')."""
        if mode.lower() in ('standard', 'any'):
            return self.wasserstein_p(mu, nu, cost, p)
        if dag is None:
            raise CausalOTValidationError(f"{mode} distance needs a graph")
        return self.g_wasserstein_p(dag, mu, nu, cost, p, mode)

    def semimetric_suite(
        self,
        measures: Mapping[str, DiscreteMeasure],
        dag: Dag,
        cost: GroundCost,
        p: Optional[float] = None,
        require_global: bool = True
    ) -> SemimetricReport:
        """
        Check the semimetric axioms and the triangle inequality on a set of measures.

        Every ordered pair is solved (pairs run through the solver's worker
        pool). A triangle violation (a, b, c, margin) means
        d(a, c) - d(a, b) - d(b, c) = margin > tol.

        Raises:
            NonGlobalStatusError: If a pair is only an upper bound and
                require_global is set
        """
        names = list(measures)
        ordered = [(a, b) for a in names for b in names if a != b]

        def solve(pair: Tuple[str, str]) -> DistanceReport:
            return self.g_wasserstein_p(dag, measures[pair[0]], measures[pair[1]], cost, p)

        reports = dict(zip(ordered, self.solver.map_tasks(solve, ordered)))
        if require_global:
            loose = [pair for pair, r in reports.items() if not r.is_global]
            if loose:
                raise NonGlobalStatusError(
                    f"distances {loose} are upper bounds only; the suite needs global optima"
                )
        values = {pair: r.value for pair, r in reports.items()}
        out = SemimetricReport(
            names=names,
            values=values,
            statuses={pair: r.status for pair, r in reports.items()},
        )
        tol = self.tol
        for a, b in itertools.combinations(names, 2):
            gap = abs(values[(a, b)] - values[(b, a)])
            if gap > tol:
                out.symmetry_defects.append((a, b, gap))
            same = measures[a].same_distribution(measures[b], WEIGHT_TOLERANCE)
            if same != (values[(a, b)] <= tol):
                out.identity_defects.append((a, b, values[(a, b)]))
        for (a, b), v in values.items():
            if v < -tol:
                out.negative.append((a, b, v))
        for a, b, c in itertools.permutations(names, 3):
            margin = values[(a, c)] - values[(a, b)] - values[(b, c)]
            if margin > tol:
                out.triangle_violations.append((a, b, c, margin))
        logger.info("Semimetric suite on %s measures: %s triangle violations",
                    len(names), len(out.triangle_violations))
        return out

    def edge_monotonicity(
        self,
        dag_sub: Dag,
        dag_super: Dag,
        mu: DiscreteMeasure,
        nu: DiscreteMeasure,
        cost: GroundCost,
        p: Optional[float] = None
    ) -> MonotonicityReport:
        """
        Check that adding edges cannot increase the distance.

        Raises:
            NotASubgraphError: If dag_sub is not a subgraph of dag_super
            BoundViolationError: If both values are global and the super-graph value is larger
        """
        if not dag_sub.is_subgraph_of(dag_super):
            raise NotASubgraphError("first graph is not a subgraph of the second")
        sub = self.g_wasserstein_p(dag_sub, mu, nu, cost, p)
        sup = self.g_wasserstein_p(dag_super, mu, nu, cost, p)
        holds = sup.value <= sub.value + self.tol
        certified = sub.is_global and sup.is_global
        if certified and not holds:
            logger.error("Edge monotonicity failed: %s > %s", sup.value, sub.value)
            raise BoundViolationError(
                f"distance on the larger graph ({sup.value}) exceeds the subgraph distance ({sub.value})"
            )
        return MonotonicityReport(
            sub_edges=sorted(dag_sub.edges),
            super_edges=sorted(dag_super.edges),
            sub=sub,
            super=sup,
            holds=holds,
            certified=certified,
        )

    def reproduce_appendix_b(self, repair: bool = False, graph: str = 'markov') -> AppendixBReport:
        """
        Distances of the bundled three-measure counterexample.

        Atom weights are 1/4, so the reference values are
        APPENDIX_B_REFERENCE_SCALE times the computed distances.

        Args:
            repair: Run metric_repair on the cost matrix first
            graph: 'markov' (the counterexample) or 'full'

        Raises:
            ReproductionMismatchError: If on the Markov graph a reference value
                is missed or the triangle inequality is not violated
        """
        from .fixtures import appendix_b

        bundle = appendix_b()
        cost = bundle.cost
        matrix_unchanged = None
        if repair:
            repaired = metric_repair(cost.matrix)
            matrix_unchanged = bool(np.array_equal(np.asarray(repaired, dtype=float), cost.matrix))
            cost = GroundCost.joint_from_matrix(repaired, cost.labels, p=cost.p)
        dag = bundle.dag if graph.lower() == 'markov' else Dag.preset(graph, bundle.dag.n)

        pairs = [('mu', 'nu'), ('nu', 'eta'), ('mu', 'eta')]
        distances = {
            (a, b): self.g_wasserstein_p(dag, bundle.measure(a), bundle.measure(b), cost, 1)
            for a, b in pairs
        }
        margin = distances[('mu', 'eta')].value - distances[('mu', 'nu')].value - distances[('nu', 'eta')].value
        report = AppendixBReport(
            graph=dag.graph_class,
            repaired=repair,
            distances=distances,
            violated=margin > self.tol,
            margin=margin,
            matrix_unchanged=matrix_unchanged,
        )
        if graph.lower() == 'markov':
            for pair, expected in APPENDIX_B_REFERENCE.items():
                got = report.reference_value(pair)
                if abs(got - expected) > APPENDIX_B_TOLERANCE or not distances[pair].is_global:
                    logger.error("Reference distance %s: expected %s, got %s (%s)",
                                 pair, expected, got, distances[pair].status)
                    raise ReproductionMismatchError(
                        f"distance {pair[0]}-{pair[1]} is {got} ({distances[pair].status}), expected {expected}"
                    )
            if not report.violated:
                logger.error("Counterexample margin %s does not violate the triangle inequality", margin)
                raise ReproductionMismatchError("triangle inequality was not violated")
        logger.info("Triangle counterexample on %s graph: margin %s", report.graph, margin)
        return report
