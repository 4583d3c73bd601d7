"""
Displacement interpolation between discrete measures.

A coupling pi of mu and nu is pushed through (x, y) -> (1 - lam) x + lam y.
For bicausal couplings the interpolants stay compatible with the graph
except at the finitely many lam where two distinct parent pairs collide.
"""

import itertools
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Dict, Hashable, List, Optional, Sequence, Tuple

import pandas as pd

from .constants import BICAUSAL, COLLISION_TOLERANCE
from .exceptions import (
    CausalOTValidationError,
    InterpolationCompatibilityError,
    NoEmbeddingError,
    ShapeMismatchError,
)
from .metric import GroundCost
from .model import CoordinateSpace, Dag, DiscreteMeasure, is_g_compatible, project_weights
from .programs import Coupling, check_membership
from .solver import Solver
from .utils import Number, is_exact_number, json_number
from .validators import validate_unit_interval
from .wasserstein import WassersteinManager

logger = logging.getLogger(__name__)


@dataclass
class InterpolationPath:
    """Interpolants on a grid of lam values with their compatibility flags."""

    lambdas: List[Number]
    measures: List[DiscreteMeasure]
    compatible: List[bool]
    exception_set: List[Number]
    coupling: Coupling
    mode: str
    status: str
    value: float

    def flags(self) -> List[Tuple[Number, bool, bool]]:
        """(lam, compatible, lam in the exception set) per grid point."""
        return [(lam, ok, _in_set(lam, self.exception_set)) for lam, ok in zip(self.lambdas, self.compatible)]

    def to_dict(self, emit_plan: bool = False) -> Dict[str, Any]:
        out = {
            'mode': self.mode,
            'status': self.status,
            'value': self.value,
            'exception_set': [json_number(x) for x in self.exception_set],
            'grid': [
                {'lambda': json_number(lam), 'compatible': ok, 'exception': exc}
                for lam, ok, exc in self.flags()
            ],
        }
        if emit_plan:
            out['coupling'] = self.coupling.to_dict()
        return out


def _in_set(lam: Number, values: Sequence[Number], tol: float = COLLISION_TOLERANCE) -> bool:
    return any(abs(float(lam) - float(v)) <= tol for v in values)


def _embedded(m: DiscreteMeasure, name: str) -> None:
    for space in m.spaces:
        if not space.has_embedding:
            raise NoEmbeddingError(f"{name} coordinate {space.name!r} has no real embedding")


def _check_embeddings(pi: Coupling) -> None:
    _embedded(pi.mu, "mu")
    _embedded(pi.nu, "nu")
    if pi.mu.n != pi.nu.n:
        raise ShapeMismatchError(f"measures have {pi.mu.n} and {pi.nu.n} coordinates")
    for sx, sy in zip(pi.mu.spaces, pi.nu.spaces):
        if sx.dim != sy.dim:
            raise ShapeMismatchError(f"coordinates {sx.name!r} and {sy.name!r} differ in dimension")


def _mix(x: Sequence[Number], y: Sequence[Number], lam: Number) -> Tuple[Number, ...]:
    return tuple(_tidy((1 - lam) * a + lam * b) for a, b in zip(x, y))


def _tidy(value: Number) -> Number:
    if isinstance(value, Fraction) and value.denominator == 1:
        return int(value)
    return value


def _cluster(values: List[Tuple[Number, ...]], exact: bool) -> Dict[Tuple[Number, ...], Tuple[Number, ...]]:
    """Map each vector to its representative (equal in exact mode, within tolerance otherwise)."""
    if exact:
        return {v: v for v in values}
    reps: List[Tuple[Number, ...]] = []
    out = {}
    for v in sorted(set(values), key=lambda t: tuple(float(c) for c in t)):
        for r in reps:
            if max(abs(float(a) - float(b)) for a, b in zip(v, r)) <= COLLISION_TOLERANCE:
                out[v] = r
                break
        else:
            reps.append(v)
            out[v] = v
    return out


def _atom(vector: Tuple[Number, ...]) -> Hashable:
    return vector[0] if len(vector) == 1 else vector


def displacement(pi: Coupling, lam: Number) -> DiscreteMeasure:
    """
    Law of (1 - lam) X + lam Y under pi.

    Atoms of coordinate i are the interpolated vectors (scalars when
    one-dimensional); colliding atoms merge by adding weight, on equality
    with exact inputs and within 1e-9 otherwise.

    Raises:
        NoEmbeddingError: If a coordinate has no real embedding
    """
    validate_unit_interval(float(lam), "lambda")
    _check_embeddings(pi)
    mu, nu = pi.mu, pi.nu
    n = mu.n
    exact = is_exact_number(lam) and all(
        all(is_exact_number(c) for vec in space.embedding for c in vec)
        for space in mu.spaces + nu.spaces
    )
    points = []
    for a, b, w in pi.pairs():
        ta, tb = mu.support[a], nu.support[b]
        points.append(([_mix(mu.spaces[i].embedding[ta[i]], nu.spaces[i].embedding[tb[i]], lam)
                        for i in range(n)], w))
    spaces = []
    maps = []
    for i in range(n):
        rep = _cluster([p[i] for p, _ in points], exact)
        vectors = sorted(set(rep.values()), key=lambda t: tuple(float(c) for c in t))
        spaces.append(CoordinateSpace(name=mu.spaces[i].name, atoms=tuple(_atom(v) for v in vectors),
                                      embedding=tuple(vectors)))
        maps.append(rep)
    entries = [(tuple(_atom(maps[i][p[i]]) for i in range(n)), w) for p, w in points]
    return DiscreteMeasure.from_atoms(spaces, entries, normalize=not all(is_exact_number(w) for _, w in entries))


def _vector(m: DiscreteMeasure, t: Tuple[int, ...], coords: Sequence[int]) -> Tuple[Number, ...]:
    return tuple(c for u in coords for c in m.spaces[u - 1].embedding[t[u - 1]])


def exception_lambdas(pi: Coupling, dag: Dag) -> List[Number]:
    """
    lam values in [0, 1] where two distinct parent pairs of pi collide.

    For each vertex and each two support pairs with different
    (x_pa, y_pa), solves (1 - lam)(x_pa - x'_pa) = lam (y'_pa - y_pa).

    Returns:
        Sorted list (Fractions when embeddings are exact)

    Raises:
        NoEmbeddingError: If a coordinate has no real embedding
    """
    _check_embeddings(pi)
    mu, nu = pi.mu, pi.nu
    found: Dict[Any, Number] = {}
    pairs = pi.pairs()
    for v in dag.order:
        pa = dag.pa(v)
        if not pa:
            continue
        keys = sorted({(tuple(mu.support[a][u - 1] for u in pa), tuple(nu.support[b][u - 1] for u in pa),
                        a, b) for a, b, _ in pairs})
        parent_pairs = sorted({(kx, ky): (a, b) for kx, ky, a, b in keys}.items())
        for ((kx, ky), (a, b)), ((kx2, ky2), (a2, b2)) in itertools.combinations(parent_pairs, 2):
            dx = [p - q for p, q in zip(_vector(mu, mu.support[a], pa), _vector(mu, mu.support[a2], pa))]
            dy = [q - p for p, q in zip(_vector(nu, nu.support[b], pa), _vector(nu, nu.support[b2], pa))]
            lam = _collision(dx, dy)
            if lam is not None:
                key = lam if isinstance(lam, Fraction) else round(float(lam), 12)
                found.setdefault(key, lam)
    return sorted(found.values(), key=float)


def _collision(dx: Sequence[Number], dy: Sequence[Number]) -> Optional[Number]:
    """Unique lam in [0, 1] with dx = lam (dx + dy), if any."""
    exact = all(is_exact_number(c) for c in list(dx) + list(dy))
    tol = 0 if exact else COLLISION_TOLERANCE
    lam = None
    for cx, cy in zip(dx, dy):
        den = cx + cy
        if abs(den) > tol:
            lam = Fraction(cx) / Fraction(den) if exact else float(cx) / float(den)
            break
    if lam is None:
        return None
    if not all(abs(cx - lam * (cx + cy)) <= tol for cx, cy in zip(dx, dy)):
        return None
    if lam < -tol or lam > 1 + tol:
        return None
    return _tidy(lam) if exact else min(max(lam, 0.0), 1.0)


def lifted_triple(pi: Coupling, lam: Number) -> DiscreteMeasure:
    """
    Law of (X_i, Y_i, (1 - lam) X_i + lam Y_i)_i under pi.

    Coordinate i has atoms (x atom id, y atom id, interpolated atom).
    """
    validate_unit_interval(float(lam), "lambda")
    _check_embeddings(pi)
    mu, nu = pi.mu, pi.nu
    n = mu.n
    entries = []
    atoms: List[set] = [set() for _ in range(n)]
    for a, b, w in pi.pairs():
        ta, tb = mu.support[a], nu.support[b]
        point = []
        for i in range(n):
            z = _mix(mu.spaces[i].embedding[ta[i]], nu.spaces[i].embedding[tb[i]], lam)
            atom = (mu.spaces[i].atoms[ta[i]], nu.spaces[i].atoms[tb[i]], _atom(z))
            atoms[i].add(atom)
            point.append(atom)
        entries.append((tuple(point), w))
    spaces = [CoordinateSpace(name=f"{mu.spaces[i].name}|{nu.spaces[i].name}", atoms=tuple(sorted(atoms[i], key=repr)))
              for i in range(n)]
    return DiscreteMeasure.from_atoms(spaces, entries, normalize=not all(is_exact_number(w) for _, w in entries))


def trajectory_frames(m: DiscreteMeasure, lam: Optional[Number] = None) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Plot data for a measure on one-dimensional coordinates.

    Returns:
        (nodes, edges): nodes with columns step, value, weight, lambda;
        edges with columns step, value, next_value, weight, lambda
    """
    _embedded(m, "measure")
    lam_value = float(lam) if lam is not None else None

    def value(step: int, atom: int) -> float:
        return float(m.spaces[step - 1].embedding[atom][0])

    nodes = []
    for step in range(1, m.n + 1):
        for (atom,), w in sorted(project_weights(m, [step]).items()):
            nodes.append({'step': step, 'value': value(step, atom), 'weight': float(w), 'lambda': lam_value})
    edges = []
    for step in range(1, m.n):
        for (a, b), w in sorted(project_weights(m, [step, step + 1]).items()):
            edges.append({'step': step, 'value': value(step, a), 'next_value': value(step + 1, b),
                          'weight': float(w), 'lambda': lam_value})
    return (pd.DataFrame(nodes, columns=['step', 'value', 'weight', 'lambda']),
            pd.DataFrame(edges, columns=['step', 'value', 'next_value', 'weight', 'lambda']))


def default_grid(steps: int = 11) -> List[Fraction]:
    """steps evenly spaced exact values from 0 to 1."""
    if steps < 2:
        raise CausalOTValidationError(f"a lambda grid needs at least 2 points, got {steps}")
    return [Fraction(k, steps - 1) for k in range(steps)]


class InterpolationManager:
    """Manager for interpolation paths and the bundled interpolation examples."""

    def __init__(self, solver: Optional[Solver] = None, distances: Optional[WassersteinManager] = None) -> None:
        self.solver = solver if solver is not None else Solver()
        self._distances = distances

    @property
    def distances(self) -> WassersteinManager:
        """Lazy-loaded distance manager."""
        if self._distances is None:
            self._distances = WassersteinManager(self.solver)
        return self._distances

    def displacement(self, pi: Coupling, lam: Number) -> DiscreteMeasure:
        return displacement(pi, lam)

    def exception_lambdas(self, pi: Coupling, dag: Dag) -> List[Number]:
        return exception_lambdas(pi, dag)

    def interpolation_path(
        self,
        dag: Dag,
        mu: DiscreteMeasure,
        nu: DiscreteMeasure,
        cost: GroundCost,
        p: Optional[float] = None,
        lambdas: Optional[Sequence[Number]] = None,
        mode: str = BICAUSAL
    ) -> InterpolationPath:
        """
        Interpolants of an optimal coupling on a grid of lam values.

        Args:
            dag: Graph
            mu, nu: Embedded measures compatible with dag
            cost: Ground cost
            p: Order (default: the cost's exponent)
            lambdas: Grid (default: 11 exact points)
            mode: 'bicausal' (optimal bicausal coupling) or 'standard'

        Raises:
            InterpolationCompatibilityError: In bicausal mode, if an interpolant
                off the exception set is not compatible with the graph
        """
        lambdas = list(lambdas) if lambdas is not None else default_grid()
        for lam in lambdas:
            validate_unit_interval(float(lam), "lambda")
        key = mode.lower()
        if key == 'standard':
            report = self.distances.wasserstein_p(mu, nu, cost, p)
        elif key == BICAUSAL.lower():
            report = self.distances.g_wasserstein_p(dag, mu, nu, cost, p)
        else:
            raise CausalOTValidationError(f"mode must be 'bicausal' or 'standard', got {mode!r}")
        coupling = report.coupling
        exceptions = exception_lambdas(coupling, dag)
        measures = self.solver.map_tasks(lambda lam: displacement(coupling, lam), lambdas)
        flags = [bool(is_g_compatible(m, dag).compatible) for m in measures]
        path = InterpolationPath(
            lambdas=lambdas,
            measures=measures,
            compatible=flags,
            exception_set=exceptions,
            coupling=coupling,
            mode=key,
            status=report.status,
            value=report.value,
        )
        if key == BICAUSAL.lower():
            broken = [lam for lam, ok, exc in path.flags() if not ok and not exc]
            if broken:
                logger.error("Interpolants at %s are not compatible with the graph", [float(x) for x in broken])
                raise InterpolationCompatibilityError(
                    f"interpolants at lambda {[float(x) for x in broken]} are not compatible with the graph"
                )
        logger.info("Interpolation path (%s): %s/%s grid points compatible, exception set %s",
                    key, sum(flags), len(flags), [float(x) for x in exceptions])
        return path

    def reproduce_examples(self, steps: int = 11) -> Dict[str, Any]:
        """
        Interpolation examples.

        Returns a bundle with
            markov: the {0,1}^3 pair (value, exception set, flags on a
                five-point grid)
            walks: binomial vs trinomial walks; trajectory frames for mu, nu
                and the 1/3 interpolant, the standard plan's membership
                result with its conditional probabilities, and flags along
                a grid for both the standard and the bicausal path
        """
        from .fixtures import example_markov, random_walk_measures

        bundle = example_markov()
        markov = self.interpolation_path(
            bundle.dag, bundle.measure('mu'), bundle.measure('nu'), bundle.cost, 2,
            [Fraction(k, 4) for k in range(5)],
        )

        dag, mu, nu = random_walk_measures(3)
        cost = GroundCost.euclidean(p=2)
        grid = default_grid(steps)
        bicausal = self.interpolation_path(dag, mu, nu, cost, 2, grid)
        standard = self.interpolation_path(dag, mu, nu, cost, 2, grid, mode='standard')
        third = displacement(bicausal.coupling, Fraction(1, 3))
        membership = check_membership(standard.coupling, dag, mu, nu, BICAUSAL)

        frames = {}
        for label, m, lam in (('mu', mu, 0), ('nu', nu, 1), ('kappa_1_3', third, Fraction(1, 3))):
            frames[label] = trajectory_frames(m, lam)

        return {
            'markov': markov,
            'walks': {
                'bicausal': bicausal,
                'standard': standard,
                'frames': frames,
                'standard_membership': membership,
                'conditionals': standard_conditionals(standard.coupling),
                'kappa_1_3': third,
            },
        }


def standard_conditionals(pi: Coupling) -> List[Dict[str, Any]]:
    """
    pi((X3, Y3) = (1, 0) | (X1, Y1) = (s, 0), (X2, Y2) = (0, 0)) for s = -1, 1.

    A plan that is Markov on the pair process gives equal values; None
    marks a conditioning event of zero mass.
    """
    mu, nu = pi.mu, pi.nu
    out = []
    for s in (-1, 1):
        event = target = 0
        for a, b, w in pi.pairs():
            x, y = mu.atom_ids(mu.support[a]), nu.atom_ids(nu.support[b])
            if (x[0], y[0], x[1], y[1]) == (s, 0, 0, 0):
                event += w
                if (x[2], y[2]) == (1, 0):
                    target += w
        out.append({
            'x1': s,
            'event_mass': float(event),
            'probability': float(target / event) if event > 0 else None,
        })
    return out


def path_nodes_frame(path: InterpolationPath) -> pd.DataFrame:
    """Nodes of every interpolant on a path, stacked."""
    frames = [trajectory_frames(m, lam)[0] for lam, m in zip(path.lambdas, path.measures)]
    return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=['step', 'value', 'weight', 'lambda'])


def examples_to_dict(bundle: Dict[str, Any], emit_plan: bool = False) -> Dict[str, Any]:
    walks = bundle['walks']
    return {
        'markov': bundle['markov'].to_dict(emit_plan),
        'walks': {
            'bicausal': walks['bicausal'].to_dict(emit_plan),
            'standard': walks['standard'].to_dict(emit_plan),
            'standard_membership': walks['standard_membership'].to_dict(),
            'conditionals': walks['conditionals'],
            'kappa_1_3': walks['kappa_1_3'].to_dict(),
        },
    }
