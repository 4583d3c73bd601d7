"""
Treatment effects and continuity bounds.

Back-door average treatment effects under discrete models, the
propensity-score gate, the certified Lipschitz bound of the treatment
effect in the G-Wasserstein distance, and the perturbation bound for
structural causal models.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, Hashable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import wasserstein_distance

from .constants import METRIC_ABSDIFF
from .exceptions import (
    BoundViolationError,
    CausalOTValidationError,
    DagMismatchError,
    GateFailedError,
    MissingArmError,
    NonGlobalStatusError,
    NotCompatibleError,
)
from .metric import CoordinateMetric, GroundCost
from .model import (
    Dag,
    DiscreteMeasure,
    NoiseDistribution,
    Scm,
    is_g_compatible,
    lipschitz_estimate,
    reachable_inputs,
    scm_pushforward,
)
from .programs import Coupling
from .solver import Solver
from .utils import Number, json_number, jsonable_atom
from .validators import validate_list_not_empty, validate_non_negative_float
from .wasserstein import DistanceReport, WassersteinManager

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AteSpec:
    """
    Treatment j (binary atoms {0, 1}) and real outcome k on a graph.

    Attributes:
        dag: Graph
        treatment: Vertex j
        outcome: Vertex k, after j in the topological order
        delta: Propensity bound in (0, 1/2]
    """

    dag: Dag
    treatment: int
    outcome: int
    delta: float = 0.2

    def __post_init__(self) -> None:
        n = self.dag.n
        for name, v in (('treatment', self.treatment), ('outcome', self.outcome)):
            if not 1 <= v <= n:
                raise CausalOTValidationError(f"{name} vertex must be in 1..{n}, got {v}")
        if self.dag.rank(self.treatment) >= self.dag.rank(self.outcome):
            raise CausalOTValidationError("treatment must come before the outcome in the graph order")
        if not 0 < self.delta <= 0.5:
            raise CausalOTValidationError(f"delta must be in (0, 1/2], got {self.delta}")

    @property
    def parents(self) -> Tuple[int, ...]:
        return self.dag.pa(self.treatment)

    def validate_measure(self, m: DiscreteMeasure) -> None:
        """
        Raises:
            CausalOTValidationError: If the treatment space is not {0, 1} or the outcome is not real
        """
        space = m.spaces[self.treatment - 1]
        if set(space.atoms) != {0, 1}:
            raise CausalOTValidationError(
                f"treatment space {space.name!r} must have atoms {{0, 1}}, got {list(space.atoms)}"
            )
        outcome = m.spaces[self.outcome - 1]
        if outcome.has_embedding:
            if outcome.dim != 1:
                raise CausalOTValidationError(f"outcome space {outcome.name!r} must be one-dimensional")
        elif not all(isinstance(a, (int, float, Fraction)) for a in outcome.atoms):
            raise CausalOTValidationError(f"outcome space {outcome.name!r} has no real embedding")

    def outcome_value(self, m: DiscreteMeasure, atom: int) -> Number:
        space = m.spaces[self.outcome - 1]
        if space.has_embedding:
            return space.embedding[atom][0]
        return space.atoms[atom]


@dataclass
class AteResult:
    """Treatment effect with the per-stratum arm means."""

    psi: Number
    strata: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'psi': json_number(self.psi),
            'strata': [{k: json_number(v) if not isinstance(v, list) else v for k, v in s.items()}
                       for s in self.strata],
        }


@dataclass
class PropensityGate:
    in_set: bool
    min_p: Number
    max_p: Number
    delta: float
    propensities: Dict[Tuple[Hashable, ...], Number] = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.in_set

    def to_dict(self) -> Dict[str, Any]:
        return {
            'in_set': self.in_set,
            'min_p': json_number(self.min_p),
            'max_p': json_number(self.max_p),
            'delta': self.delta,
        }


@dataclass
class PerturbationReport:
    """Both sides of the SCM perturbation bound."""

    lhs: float
    rhs: float
    constant: float
    witness_cost: float
    holds: bool
    status: str
    vertices: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'lhs': self.lhs,
            'rhs': self.rhs,
            'constant': self.constant,
            'witness_cost': self.witness_cost,
            'holds': self.holds,
            'status': self.status,
            'vertices': self.vertices,
        }


def _strata(m: DiscreteMeasure, spec: AteSpec):
    """(parent tuple) -> {'weight', arm -> (mass, outcome mass)}."""
    pa = spec.parents
    j, k = spec.treatment - 1, spec.outcome - 1
    t_space = m.spaces[j]
    strata: Dict[Tuple[int, ...], Dict[Any, Any]] = {}
    for t, w in zip(m.support, m.weights):
        key = tuple(t[u - 1] for u in pa)
        arm = t_space.atoms[t[j]]
        entry = strata.setdefault(key, {'weight': 0, 0: [0, 0], 1: [0, 0]})
        entry['weight'] += w
        entry[arm][0] += w
        entry[arm][1] += w * spec.outcome_value(m, t[k])
    return strata


def _parent_ids(m: DiscreteMeasure, pa: Sequence[int], key: Tuple[int, ...]) -> List[Any]:
    return [jsonable_atom(m.spaces[u - 1].atoms[a]) for u, a in zip(pa, key)]


def ate(m: DiscreteMeasure, spec: AteSpec) -> AteResult:
    """
    Back-door average treatment effect.

    psi = sum over x_pa of [E(x_k | x_j = 1, x_pa) - E(x_k | x_j = 0, x_pa)] * m(x_pa),
    with pa the parents of the treatment.

    Raises:
        NotCompatibleError: If m does not factorize along the graph
        MissingArmError: If a parent tuple of positive mass lacks a treatment arm
    """
    spec.validate_measure(m)
    if not is_g_compatible(m, spec.dag).compatible:
        raise NotCompatibleError("measure is not compatible with the graph")
    psi: Number = 0
    rows = []
    for key, entry in sorted(_strata(m, spec).items()):
        (m1, y1), (m0, y0) = entry[1], entry[0]
        if m1 == 0 or m0 == 0:
            raise MissingArmError(
                f"parents {_parent_ids(m, spec.parents, key)} have no mass on treatment arm {0 if m0 == 0 else 1}"
            )
        mean1, mean0 = y1 / m1, y0 / m0
        psi += (mean1 - mean0) * entry['weight']
        rows.append({
            'parents': _parent_ids(m, spec.parents, key),
            'weight': entry['weight'],
            'mean_treated': mean1,
            'mean_control': mean0,
        })
    return AteResult(psi=psi, strata=rows)


def propensity_gate(m: DiscreteMeasure, spec: AteSpec) -> PropensityGate:
    """Range of m(x_j = 1 | x_pa) over parent tuples of positive mass."""
    spec.validate_measure(m)
    propensities = {}
    for key, entry in sorted(_strata(m, spec).items()):
        propensities[tuple(m.spaces[u - 1].atoms[a] for u, a in zip(spec.parents, key))] = entry[1][0] / entry['weight']
    values = list(propensities.values())
    lo, hi = min(values), max(values)
    in_set = lo >= spec.delta - 1e-12 and hi <= 1 - spec.delta + 1e-12
    return PropensityGate(in_set=bool(in_set), min_p=lo, max_p=hi, delta=spec.delta, propensities=propensities)


def ate_lipschitz_constant(delta: float, outcome_bound: float) -> float:
    """
    Certified (not minimal) constant C with |psi_mu - psi_nu| <= C * W_{G,1}(mu, nu).

    C = 2 * K * (1 + 1 / delta^2) with K = max(B, 1) / delta.
    """
    validate_non_negative_float(outcome_bound, "outcome_bound")
    if not 0 < delta <= 0.5:
        raise CausalOTValidationError(f"delta must be in (0, 1/2], got {delta}")
    k = max(float(outcome_bound), 1.0) / delta
    return 2 * k * (1 + 1 / delta ** 2)


def outcome_bound(spec: AteSpec, *measures: DiscreteMeasure) -> float:
    """Largest |outcome| charged by any of the measures."""
    k = spec.outcome - 1
    best = 0.0
    for m in measures:
        for t in m.support:
            best = max(best, abs(float(spec.outcome_value(m, t[k]))))
    return best


def _quantile_coupling(a: NoiseDistribution, b: NoiseDistribution) -> List[Tuple[Number, Number, Number]]:
    """Monotone coupling of two 1-d laws as (u, v, mass) triples."""
    xa = sorted(zip(a.values, a.weights), key=lambda p: float(p[0]))
    xb = sorted(zip(b.values, b.weights), key=lambda p: float(p[0]))
    out = []
    i = j = 0
    ra, rb = xa[0][1], xb[0][1]
    while i < len(xa) and j < len(xb):
        mass = min(ra, rb)
        if mass > 0:
            out.append((xa[i][0], xb[j][0], mass))
        ra -= mass
        rb -= mass
        if ra <= 1e-15 and i < len(xa):
            i += 1
            ra = xa[i][1] if i < len(xa) else 0
        if rb <= 1e-15 and j < len(xb):
            j += 1
            rb = xb[j][1] if j < len(xb) else 0
    return out


def scm_coupling(sa: Scm, sb: Scm, mu: Optional[DiscreteMeasure] = None,
                 nu: Optional[DiscreteMeasure] = None) -> Coupling:
    """
    Synchronous coupling of two SCMs on the same graph.

    Noises are coupled vertex by vertex with the monotone (quantile)
    coupling, independently across vertices; both models are then driven
    by the coupled noises. The result is a bicausal coupling of the two
    pushforwards.
    """
    mu = mu if mu is not None else scm_pushforward(sa)
    nu = nu if nu is not None else scm_pushforward(sb)
    dag = sa.dag
    n = dag.n
    pairs = [_quantile_coupling(sa.noises[v - 1], sb.noises[v - 1]) for v in range(1, n + 1)]
    partial: Dict[Tuple[Tuple[int, ...], Tuple[int, ...]], Number] = {((-1,) * n, (-1,) * n): 1}
    for v in dag.order:
        pa = dag.pa(v)
        grown: Dict[Tuple[Tuple[int, ...], Tuple[int, ...]], Number] = {}
        for (x, y), weight in partial.items():
            px = tuple(sa.spaces[u - 1].atoms[x[u - 1]] for u in pa)
            py = tuple(sb.spaces[u - 1].atoms[y[u - 1]] for u in pa)
            for u, w, mass in pairs[v - 1]:
                xv = sa.spaces[v - 1].index(sa.evaluate(v, px, u))
                yv = sb.spaces[v - 1].index(sb.evaluate(v, py, w))
                key = (x[:v - 1] + (xv,) + x[v:], y[:v - 1] + (yv,) + y[v:])
                grown[key] = grown.get(key, 0) + weight * mass
        partial = grown
    row = {t: a for a, t in enumerate(mu.support)}
    col = {t: b for b, t in enumerate(nu.support)}
    exact = all(isinstance(w, (int, Fraction)) for w in partial.values())
    weights = np.zeros((len(mu), len(nu)), dtype=object if exact else float)
    if exact:
        weights[:] = Fraction(0)
    for (x, y), w in partial.items():
        weights[row[x], col[y]] += w
    return Coupling(mu=mu, nu=nu, weights=weights)


class InferenceManager:
    """Manager for treatment-effect and perturbation experiments."""

    def __init__(self, solver: Optional[Solver] = None, distances: Optional[WassersteinManager] = None) -> None:
        """
        Initialize the inference manager.

        Args:
            solver: Solver engine
            distances: Optional WassersteinManager sharing the solver
        """
        self.solver = solver if solver is not None else Solver()
        self._distances = distances

    @property
    def distances(self) -> WassersteinManager:
        """Lazy-loaded distance manager."""
        if self._distances is None:
            self._distances = WassersteinManager(self.solver)
        return self._distances

    def ate(self, m: DiscreteMeasure, spec: AteSpec) -> AteResult:
        return ate(m, spec)

    def propensity_gate(self, m: DiscreteMeasure, spec: AteSpec) -> PropensityGate:
        return propensity_gate(m, spec)

    def ate_lipschitz_constant(self, spec: AteSpec, outcome_bound: float) -> float:
        return ate_lipschitz_constant(spec.delta, outcome_bound)

    def _require_global(self, report: DistanceReport, what: str) -> None:
        if not report.is_global:
            raise NonGlobalStatusError(f"{what} is only an upper bound ({report.status})")

    def ate_continuity_experiment(
        self,
        pairs: Sequence[Tuple[DiscreteMeasure, DiscreteMeasure]],
        spec: AteSpec,
        cost: Optional[GroundCost] = None,
        strict: bool = True
    ) -> pd.DataFrame:
        """
        Compare treatment-effect gaps with W_{G,1} and W_1 on a list of pairs.

        Args:
            pairs: (mu, nu) pairs in the propensity-bounded class
            spec: Treatment and outcome vertices
            cost: Ground cost (default: additive |a - b| per coordinate)
            strict: Raise when a certified bound fails

        Returns:
            DataFrame with columns pair, psi_mu, psi_nu, d_psi, w_g1, w_1,
            constant, bound, holds, w1_ratio

        Raises:
            GateFailedError: If a measure violates the propensity bound
            NonGlobalStatusError: If W_{G,1} is not solved globally
            BoundViolationError: If strict and |d_psi| > C * W_{G,1}
        """
        pairs = list(pairs)
        validate_list_not_empty(pairs, "pairs")
        cost = cost if cost is not None else GroundCost.additive(CoordinateMetric(METRIC_ABSDIFF), p=1)

        def row(item: Tuple[int, Tuple[DiscreteMeasure, DiscreteMeasure]]) -> Dict[str, Any]:
            index, (mu, nu) = item
            for name, m in (('mu', mu), ('nu', nu)):
                gate = propensity_gate(m, spec)
                if not gate.in_set:
                    raise GateFailedError(
                        f"pair {index}: {name} has propensities in [{float(gate.min_p)}, {float(gate.max_p)}], "
                        f"outside [{spec.delta}, {1 - spec.delta}]"
                    )
            psi_mu = float(ate(mu, spec).psi)
            psi_nu = float(ate(nu, spec).psi)
            wg = self.distances.g_wasserstein_p(spec.dag, mu, nu, cost, 1)
            self._require_global(wg, f"W_G,1 of pair {index}")
            w1 = self.distances.wasserstein_p(mu, nu, cost, 1)
            constant = ate_lipschitz_constant(spec.delta, outcome_bound(spec, mu, nu))
            d_psi = abs(psi_mu - psi_nu)
            bound = constant * wg.value
            return {
                'pair': index,
                'psi_mu': psi_mu,
                'psi_nu': psi_nu,
                'd_psi': d_psi,
                'w_g1': wg.value,
                'w_1': w1.value,
                'constant': constant,
                'bound': bound,
                'holds': bool(d_psi <= bound + self.solver.config.tol),
                'w1_ratio': d_psi / w1.value if w1.value > 0 else (0.0 if d_psi == 0 else float('inf')),
            }

        rows = self.solver.map_tasks(row, list(enumerate(pairs)))
        table = pd.DataFrame(rows, columns=['pair', 'psi_mu', 'psi_nu', 'd_psi', 'w_g1', 'w_1',
                                            'constant', 'bound', 'holds', 'w1_ratio'])
        failed = table[~table['holds']]
        logger.info("Treatment-effect continuity on %s pairs: %s bound failures", len(table), len(failed))
        if strict and len(failed):
            logger.error("Certified treatment-effect bound failed on pairs %s", list(failed['pair']))
            raise BoundViolationError(f"|d_psi| exceeds C * W_G,1 on pairs {list(failed['pair'])}")
        return table

    def scm_perturbation_bound(
        self,
        sa: Scm,
        sb: Scm,
        metrics: Optional[Sequence[CoordinateMetric]] = None,
        strict: bool = True
    ) -> PerturbationReport:
        """
        Check W_{G,1}(law(A), law(B)) <= C * sum_i (|f_i - g_i|_inf + W_1(U_i, V_i)).

        C = sum_i C_i with C_i = max(L_i * sum_{j in pa_i} C_j, L_i, 1)
        in topological order. L_i is A's declared constant, or the empirical
        constant over both models' realized inputs. Sup norms run over the
        same union of inputs.

        Raises:
            DagMismatchError: If the models differ in graph or spaces
            NonGlobalStatusError: If the left-hand side is not solved globally
            BoundViolationError: If strict and the bound fails
        """
        if sa.dag.n != sb.dag.n or sa.dag.edges != sb.dag.edges:
            raise DagMismatchError("models are defined on different graphs")
        if sa.spaces != sb.spaces:
            raise DagMismatchError("models are defined on different coordinate spaces")
        dag = sa.dag
        n = dag.n
        metrics = list(metrics) if metrics is not None else [CoordinateMetric(METRIC_ABSDIFF)] * n
        cost = GroundCost.additive(metrics, p=1)
        mu, nu = scm_pushforward(sa), scm_pushforward(sb)

        lhs = self.distances.g_wasserstein_p(dag, mu, nu, cost, 1)
        self._require_global(lhs, "W_G,1 of the two models")

        inputs = {v: sorted(set(reachable_inputs(sa, v, mu)) | set(reachable_inputs(sb, v, nu)),
                            key=repr)
                  for v in range(1, n + 1)}
        estimated = lipschitz_estimate(sa, metrics, extra_inputs=inputs, law=mu)
        declared = sa.lipschitz or (None,) * n
        lipschitz = [float(d) if d is not None else float(e) for d, e in zip(declared, estimated)]

        c: Dict[int, float] = {}
        vertices = []
        total = 0.0
        for v in dag.order:
            space = sa.spaces[v - 1]
            sup = max((metrics[v - 1].distance_ids(space, sa.evaluate(v, p, u), sb.evaluate(v, p, u))
                       for p, u in inputs[v]), default=0.0)
            na, nb = sa.noises[v - 1], sb.noises[v - 1]
            w1 = float(wasserstein_distance([float(x) for x in na.values], [float(x) for x in nb.values],
                                            [float(w) for w in na.weights], [float(w) for w in nb.weights]))
            li = lipschitz[v - 1]
            c[v] = max(li * sum(c[u] for u in dag.pa(v)), li, 1.0)
            total += sup + w1
            vertices.append({'vertex': v, 'lipschitz': li, 'sup_norm': sup, 'noise_w1': w1, 'c': c[v]})
        constant = sum(c.values())
        rhs = constant * total

        witness = scm_coupling(sa, sb, mu, nu)
        witness_cost = float(witness.cost(self.solver.cost_matrix(cost, mu, nu)))
        tol = self.solver.config.tol
        holds = lhs.value <= rhs + tol
        if lhs.value > witness_cost + tol:
            logger.warning("Global value %s exceeds the synchronous coupling's cost %s", lhs.value, witness_cost)
        if witness_cost > rhs + tol:
            logger.warning("Synchronous coupling cost %s exceeds the bound %s", witness_cost, rhs)
        report = PerturbationReport(
            lhs=lhs.value,
            rhs=rhs,
            constant=constant,
            witness_cost=witness_cost,
            holds=bool(holds),
            status=lhs.status,
            vertices=sorted(vertices, key=lambda r: r['vertex']),
        )
        logger.info("SCM perturbation bound: lhs=%s rhs=%s (C=%s)", lhs.value, rhs, constant)
        if strict and not holds:
            logger.error("SCM perturbation bound failed: %s > %s", lhs.value, rhs)
            raise BoundViolationError(f"W_G,1 = {lhs.value} exceeds the perturbation bound {rhs}")
        return report
