"""
Bundled models and seeded instance generators.

Bundled files live in ``causal_ot/data``. Generators take a
``numpy.random.Generator`` so every instance is reproducible from a seed.
"""

import itertools
import logging
from fractions import Fraction
from importlib import resources
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .constants import APPENDIX_B_MODEL, ATE_DISCONTINUITY_MODEL, EXAMPLE_MARKOV_MODEL
from .exceptions import CausalOTValidationError
from .model import (
    AffineMechanism,
    CoordinateSpace,
    Dag,
    DiscreteMeasure,
    NoiseDistribution,
    Scm,
    TableMechanism,
    scm_pushforward,
    validate_dag,
)
from .model_io import ModelBundle, load_model
from .validators import (
    validate_list_not_empty,
    validate_non_negative_int,
    validate_positive_int,
    validate_unit_interval,
)

logger = logging.getLogger(__name__)


# ==========================================================================
# BUNDLED MODELS
# ==========================================================================

def load_bundled(name: str) -> ModelBundle:
    """Load a model file shipped in causal_ot/data."""
    ref = resources.files('causal_ot') / 'data' / name
    with resources.as_file(ref) as path:
        return load_model(str(path))


def appendix_b() -> ModelBundle:
    """Markov-chain counterexample to the triangle inequality (measures mu, nu, eta)."""
    return load_bundled(APPENDIX_B_MODEL)


def example_markov() -> ModelBundle:
    """Two Markov measures on {0,1}^3 with an interpolation exception at 1/2."""
    return load_bundled(EXAMPLE_MARKOV_MODEL)


def ate_discontinuity_pair():
    """
    Confounded pair with equal-looking laws but different treatment effects.

    Returns:
        Tuple (mu, nu, AteSpec)
    """
    from .inference import AteSpec

    bundle = load_bundled(ATE_DISCONTINUITY_MODEL)
    spec = AteSpec(
        dag=bundle.dag,
        treatment=int(bundle.ate['treatment']),
        outcome=int(bundle.ate['outcome']),
        delta=float(bundle.ate['delta']),
    )
    return bundle.measure('mu'), bundle.measure('nu'), spec


# ==========================================================================
# RANDOM WALKS
# ==========================================================================

def walk_spaces(n: int) -> Tuple[CoordinateSpace, ...]:
    """Spaces X_i = {-i, ..., i} embedded in R."""
    return tuple(CoordinateSpace.real_line(f"X{i}", range(-i, i + 1)) for i in range(1, n + 1))


def random_walk_scm(steps: Sequence[int], n: int = 3, name: str = '') -> Scm:
    """
    Walk X_1 = U_1, X_i = X_{i-1} + U_i with i.i.d. uniform steps.

    Args:
        steps: Step values (e.g. (-1, 1) or (-1, 0, 1))
        n: Number of time points
        name: Report label
    """
    validate_positive_int(n, "n")
    weight = Fraction(1, len(steps))
    noise = NoiseDistribution.from_pairs((s, weight) for s in steps)
    mechanisms = [AffineMechanism()] + [AffineMechanism(coefficients=(1,)) for _ in range(n - 1)]
    return Scm(
        dag=Dag.preset('markov', n),
        spaces=walk_spaces(n),
        mechanisms=tuple(mechanisms),
        noises=tuple([noise] * n),
        lipschitz=tuple([1.0] * n),
        name=name,
    )


def binomial_walk(n: int = 3) -> Scm:
    return random_walk_scm((-1, 1), n, name='binomial')


def trinomial_walk(n: int = 3) -> Scm:
    return random_walk_scm((-1, 0, 1), n, name='trinomial')


def random_walk_measures(n: int = 3) -> Tuple[Dag, DiscreteMeasure, DiscreteMeasure]:
    """Markov chain with the binomial (mu) and trinomial (nu) walk laws."""
    mu = scm_pushforward(binomial_walk(n))
    nu = scm_pushforward(trinomial_walk(n))
    return Dag.preset('markov', n), mu, nu


# ==========================================================================
# RANDOM COMPATIBLE INSTANCES
# ==========================================================================

def _random_row(rng: np.random.Generator, k: int, max_support: Optional[int] = None) -> np.ndarray:
    size = int(rng.integers(1, (max_support or k) + 1))
    chosen = rng.choice(k, size=size, replace=False)
    row = np.zeros(k)
    row[chosen] = rng.dirichlet(np.ones(size))
    return row


def random_compatible_measure(
    rng: np.random.Generator,
    dag: Dag,
    spaces: Sequence[CoordinateSpace],
    max_row_support: Optional[int] = None
) -> DiscreteMeasure:
    """
    Random measure that factorizes along the graph.

    Each mechanism row is a Dirichlet draw on a random subset of atoms, so
    supports stay sparse when max_row_support is small.
    """
    n = dag.n
    rows: Dict[Tuple[int, Tuple[int, ...]], np.ndarray] = {}
    partial: Dict[Tuple[int, ...], float] = {tuple([-1] * n): 1.0}
    for v in dag.order:
        k = len(spaces[v - 1])
        grown: Dict[Tuple[int, ...], float] = {}
        for assignment, weight in partial.items():
            key = (v, tuple(assignment[u - 1] for u in dag.pa(v)))
            if key not in rows:
                rows[key] = _random_row(rng, k, max_row_support)
            for a in np.flatnonzero(rows[key]):
                t = assignment[:v - 1] + (int(a),) + assignment[v:]
                grown[t] = grown.get(t, 0.0) + weight * float(rows[key][a])
        partial = grown
    return DiscreteMeasure.from_indices(spaces, partial, normalize=True)


def integer_spaces(n: int, k: int) -> Tuple[CoordinateSpace, ...]:
    return tuple(CoordinateSpace.real_line(f"X{i}", range(k)) for i in range(1, n + 1))


def random_instance(
    rng: np.random.Generator,
    dag: Dag,
    atoms: int = 3,
    max_row_support: Optional[int] = 2
) -> Tuple[DiscreteMeasure, DiscreteMeasure]:
    """Pair of random measures on {0..atoms-1}^n, both compatible with dag."""
    spaces = integer_spaces(dag.n, atoms)
    return (random_compatible_measure(rng, dag, spaces, max_row_support),
            random_compatible_measure(rng, dag, spaces, max_row_support))


def random_product_instance(
    rng: np.random.Generator,
    n: int,
    atoms: int = 3
) -> Tuple[DiscreteMeasure, DiscreteMeasure]:
    """Pair of random product measures (compatible with every graph on n vertices)."""
    return random_instance(rng, Dag.preset('empty', n), atoms, None)


# ==========================================================================
# TREATMENT-EFFECT PAIRS
# ==========================================================================

def ate_dag() -> Dag:
    """Confounder 1 -> treatment 2, confounder 1 -> outcome 3, treatment 2 -> outcome 3."""
    return validate_dag(3, [(1, 2), (1, 3), (2, 3)])


def _random_ate_measure(rng: np.random.Generator, spaces: Sequence[CoordinateSpace], delta: float) -> DiscreteMeasure:
    confounder = rng.dirichlet(np.ones(len(spaces[0])))
    weights: Dict[Tuple[int, ...], float] = {}
    for c, pc in enumerate(confounder):
        propensity = float(rng.uniform(delta, 1 - delta))
        for t, pt in ((0, 1 - propensity), (1, propensity)):
            outcome = _random_row(rng, len(spaces[2]))
            for y, py in enumerate(outcome):
                if py > 0:
                    weights[(c, t, y)] = float(pc) * pt * float(py)
    return DiscreteMeasure.from_indices(spaces, weights, normalize=True)


def random_ate_pairs(
    rng: np.random.Generator,
    count: int,
    delta: float = 0.2,
    confounder_atoms: int = 2,
    outcome_atoms: int = 2
):
    """
    Random pairs in the propensity-bounded class for the treatment-effect bound.

    Returns:
        Tuple (pairs, AteSpec); every measure has propensities in [delta, 1 - delta]
    """
    from .inference import AteSpec

    validate_positive_int(count, "count")
    validate_unit_interval(delta, "delta")
    spaces = (
        CoordinateSpace.real_line('confounder', range(confounder_atoms)),
        CoordinateSpace.real_line('treatment', (0, 1)),
        CoordinateSpace.real_line('outcome', range(outcome_atoms)),
    )
    pairs = [(_random_ate_measure(rng, spaces, delta), _random_ate_measure(rng, spaces, delta))
             for _ in range(count)]
    return pairs, AteSpec(dag=ate_dag(), treatment=2, outcome=3, delta=delta)


# ==========================================================================
# LIPSCHITZ SCM PAIRS
# ==========================================================================

SCM_SHAPES = {
    'chain': (3, [(1, 2), (2, 3)], 3, 3),
    'diamond': (4, [(1, 2), (1, 3), (2, 4), (3, 4)], 2, 2),
}


def _random_noise(rng: np.random.Generator, max_atoms: int) -> NoiseDistribution:
    size = int(rng.integers(1, max_atoms + 1))
    values = sorted(int(v) for v in rng.choice(np.arange(-2, 3), size=size, replace=False))
    raw = [int(w) for w in rng.integers(1, 5, size=size)]
    total = sum(raw)
    return NoiseDistribution.from_pairs((v, Fraction(w, total)) for v, w in zip(values, raw))


def _random_table(rng: np.random.Generator, parent_atoms: Sequence[Sequence[int]],
                  noise_values: Sequence[int], k: int) -> Dict:
    table = {}
    for parents in itertools.product(*parent_atoms):
        for u in noise_values:
            table[(tuple(parents), u)] = int(rng.integers(0, k))
    return table


def random_scm_pair(
    rng: np.random.Generator,
    shape: str = 'chain',
    perturb: Optional[bool] = None
) -> Tuple[Scm, Scm]:
    """
    Random pair of SCMs on a chain or diamond graph.

    Model B copies model A and (unless perturb is False) changes one
    mechanism entry or one noise law. Mechanism tables are defined on the
    union of both models' noise values so either model's inputs can be
    evaluated by the other. Lipschitz constants are left to estimation.

    Args:
        rng: Random generator
        shape: 'chain' (3 vertices, 3 atoms) or 'diamond' (4 vertices, 2 atoms)
        perturb: Force (True) or suppress (False) the perturbation; random when None
    """
    try:
        n, edges, k, max_noise = SCM_SHAPES[shape]
    except KeyError as e:
        raise CausalOTValidationError(f"shape must be one of {sorted(SCM_SHAPES)}, got {shape!r}") from e
    dag = validate_dag(n, edges)
    spaces = integer_spaces(n, k)
    noises_a = [_random_noise(rng, max_noise) for _ in range(n)]
    noises_b = list(noises_a)
    if perturb is None:
        perturb = bool(rng.random() < 0.8)
    target = int(rng.integers(1, n + 1))
    perturb_noise = perturb and bool(rng.random() < 0.5)
    if perturb_noise:
        noises_b[target - 1] = _random_noise(rng, max_noise)

    tables_a, tables_b = [], []
    for v in range(1, n + 1):
        values = sorted(set(noises_a[v - 1].values) | set(noises_b[v - 1].values))
        parent_atoms = [spaces[u - 1].atoms for u in dag.pa(v)]
        table = _random_table(rng, parent_atoms, values, k)
        tables_a.append(table)
        tables_b.append(dict(table))
    if perturb and not perturb_noise:
        keys = sorted(tables_b[target - 1])
        key = keys[int(rng.integers(0, len(keys)))]
        tables_b[target - 1][key] = (tables_b[target - 1][key] + 1) % k

    model_a = Scm(dag=dag, spaces=spaces, mechanisms=tuple(TableMechanism(t) for t in tables_a),
                  noises=tuple(noises_a), name='A')
    model_b = Scm(dag=dag, spaces=spaces, mechanisms=tuple(TableMechanism(t) for t in tables_b),
                  noises=tuple(noises_b), name='B')
    logger.debug("Random %s SCM pair: perturbed=%s (noise=%s, vertex %s)", shape, perturb, perturb_noise, target)
    return model_a, model_b


def random_scm_pairs(rng: np.random.Generator, count: int, shapes: Sequence[str] = ('chain', 'diamond')) -> List[Tuple[Scm, Scm]]:
    """count pairs cycling through shapes."""
    validate_non_negative_int(count, "count")
    validate_list_not_empty(list(shapes), "shapes")
    return [random_scm_pair(rng, shapes[i % len(shapes)]) for i in range(count)]
