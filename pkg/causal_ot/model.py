"""
Causal graphs, discrete measures on product spaces and structural causal models.

Vertices are labelled 1..n in the caller's labelling; coordinate v of a
measure is stored at position v - 1. Topological sorting is internal
(``Dag.order``): every result is reported in the caller's labels.
"""

import itertools
import logging
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import (
    TYPE_CHECKING,
    Any,
    Callable,
    Dict,
    FrozenSet,
    Hashable,
    Iterable,
    List,
    Mapping,
    Optional,
    Sequence,
    Set,
    Tuple,
)

import networkx as nx

from .constants import (
    DEFAULT_TOLERANCE,
    EMPTY,
    FULL,
    GENERAL,
    GRAPH_PRESETS,
    LINEAR,
    MARKOV,
    MAX_SUPPORT,
    WEIGHT_TOLERANCE,
)
from .exceptions import (
    CausalOTValidationError,
    CycleDetectedError,
    EmptySubsetError,
    InvalidVertexError,
    MechanismDomainError,
    ShapeMismatchError,
    SupportExplosionError,
)
from .utils import Number, all_exact, atom_sort_key, to_exact
from .validators import validate_positive_int, validate_probability_vector

if TYPE_CHECKING:
    from .metric import CoordinateMetric

logger = logging.getLogger(__name__)


# ==========================================================================
# GRAPHS
# ==========================================================================

@dataclass(frozen=True)
class Dag:
    """
    Directed acyclic graph on vertices 1..n.

    Attributes:
        n: Vertex count
        edges: Edge set in the caller's labels
        order: Topological order (deterministic, smallest label first)
        parents: parents[v - 1] is pa_v sorted by position in ``order``
        complete: True for the complete directed graph, the one cyclic
            edge set accepted (it imposes no constraint beyond marginals)
    """

    n: int
    edges: FrozenSet[Tuple[int, int]]
    order: Tuple[int, ...]
    parents: Tuple[Tuple[int, ...], ...]
    complete: bool = False

    @cached_property
    def _ranks(self) -> Dict[int, int]:
        return {v: r for r, v in enumerate(self.order)}

    def rank(self, v: int) -> int:
        """Zero-based position of v in the sorted labelling."""
        return self._ranks[v]

    def pa(self, v: int) -> Tuple[int, ...]:
        return self.parents[v - 1]

    def prefix(self, v: int) -> Tuple[int, ...]:
        """Vertices preceding v in the sorted labelling (X_{1:i-1})."""
        return self.order[:self.rank(v)]

    def children(self, v: int) -> Tuple[int, ...]:
        kids = [j for (i, j) in self.edges if i == v]
        return tuple(sorted(kids, key=self.rank))

    def is_subgraph_of(self, other: 'Dag') -> bool:
        return self.n == other.n and self.edges <= other.edges

    @property
    def graph_class(self) -> str:
        return classify_structure(self)

    def to_dict(self) -> Dict[str, Any]:
        return {'n': self.n, 'edges': [list(e) for e in sorted(self.edges)]}

    @classmethod
    def preset(cls, kind: str, n: int) -> 'Dag':
        """
        Build one of the named special graphs.

        Args:
            kind: 'full', 'empty', 'linear' or 'markov'
            n: Vertex count

        Returns:
            Validated Dag

        Raises:
            CausalOTValidationError: If kind is unknown
        """
        validate_positive_int(n, "n")
        kind = kind.lower()
        if kind not in GRAPH_PRESETS:
            raise CausalOTValidationError(
                f"graph preset must be one of {sorted(GRAPH_PRESETS)}, got {kind!r}"
            )
        vertices = range(1, n + 1)
        if kind == 'full':
            edges = {(i, j) for i in vertices for j in vertices if i != j}
        elif kind == 'empty':
            edges = set()
        elif kind == 'linear':
            edges = {(i, j) for i in vertices for j in vertices if i < j}
        else:
            edges = {(i, i + 1) for i in range(1, n)}
        return validate_dag(n, edges)


def validate_dag(n: int, edges: Iterable[Sequence[int]]) -> Dag:
    """
    Validate a directed graph and sort it topologically.

    Args:
        n: Vertex count (vertices are 1..n)
        edges: Ordered vertex pairs (i, j)

    Returns:
        Dag carrying a topological order and sorted parent lists

    Raises:
        InvalidVertexError: If an endpoint is outside 1..n or an edge is a self-loop
        CycleDetectedError: If the graph has a directed cycle (other than the
            complete graph)
    """
    validate_positive_int(n, "n")
    edge_set: Set[Tuple[int, int]] = set()
    for edge in edges:
        if len(edge) != 2:
            raise InvalidVertexError(f"edge must be a pair, got {edge!r}")
        i, j = int(edge[0]), int(edge[1])
        if not (1 <= i <= n and 1 <= j <= n):
            raise InvalidVertexError(f"edge ({i}, {j}) has an endpoint outside 1..{n}")
        if i == j:
            raise InvalidVertexError(f"self-loop at vertex {i}")
        edge_set.add((i, j))

    vertices = tuple(range(1, n + 1))
    full_edges = {(i, j) for i in vertices for j in vertices if i != j}
    if n >= 2 and edge_set == full_edges:
        parents = tuple(tuple(u for u in vertices if u != v) for v in vertices)
        return Dag(n=n, edges=frozenset(edge_set), order=vertices, parents=parents, complete=True)

    g = nx.DiGraph()
    g.add_nodes_from(vertices)
    g.add_edges_from(edge_set)
    try:
        cycle = nx.find_cycle(g)
    except nx.NetworkXNoCycle:
        cycle = None
    if cycle:
        edges_on_cycle = [(int(u), int(v)) for u, v in cycle]
        raise CycleDetectedError(
            f"graph has a directed cycle: {edges_on_cycle}", cycle=edges_on_cycle
        )

    order = tuple(nx.lexicographical_topological_sort(g))
    rank = {v: r for r, v in enumerate(order)}
    parents = tuple(
        tuple(sorted((u for u, _ in g.in_edges(v)), key=rank.__getitem__))
        for v in vertices
    )
    dag = Dag(n=n, edges=frozenset(edge_set), order=order, parents=parents)
    logger.debug("Validated DAG n=%s edges=%s order=%s", n, sorted(edge_set), order)
    return dag


def classify_structure(dag: Dag) -> str:
    """
    Classify a graph as Full, Empty, Linear, Markov or General.

    The test is made in the sorted labelling; ties for tiny graphs resolve
    in that order of priority.
    """
    if dag.complete:
        return FULL
    if not dag.edges:
        return EMPTY
    sorted_edges = {(dag.rank(i) + 1, dag.rank(j) + 1) for i, j in dag.edges}
    n = dag.n
    if sorted_edges == {(a, b) for a in range(1, n + 1) for b in range(a + 1, n + 1)}:
        return LINEAR
    if sorted_edges == {(a, a + 1) for a in range(1, n)}:
        return MARKOV
    return GENERAL


# ==========================================================================
# SPACES AND MEASURES
# ==========================================================================

@dataclass(frozen=True)
class CoordinateSpace:
    """
    Finite set of atoms for one coordinate, optionally embedded in R^d.
    """

    name: str
    atoms: Tuple[Hashable, ...]
    embedding: Optional[Tuple[Tuple[Number, ...], ...]] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, 'atoms', tuple(self.atoms))
        if not self.atoms:
            raise CausalOTValidationError(f"space {self.name!r} has no atoms")
        if len(set(self.atoms)) != len(self.atoms):
            raise CausalOTValidationError(f"space {self.name!r} has duplicate atom ids")
        if self.embedding is not None:
            vectors = tuple(tuple(vec) for vec in self.embedding)
            if len(vectors) != len(self.atoms):
                raise CausalOTValidationError(
                    f"space {self.name!r}: {len(vectors)} embedding vectors for {len(self.atoms)} atoms"
                )
            dims = {len(vec) for vec in vectors}
            if len(dims) != 1 or 0 in dims:
                raise CausalOTValidationError(
                    f"space {self.name!r}: embedding vectors must share a positive dimension"
                )
            object.__setattr__(self, 'embedding', vectors)

    @cached_property
    def _index(self) -> Dict[Hashable, int]:
        return {atom: i for i, atom in enumerate(self.atoms)}

    def index(self, atom: Hashable) -> int:
        try:
            return self._index[atom]
        except (KeyError, TypeError) as e:
            raise CausalOTValidationError(
                f"space {self.name!r} has no atom {atom!r}"
            ) from e

    def __contains__(self, atom: Hashable) -> bool:
        try:
            return atom in self._index
        except TypeError:
            return False

    def __len__(self) -> int:
        return len(self.atoms)

    @property
    def has_embedding(self) -> bool:
        return self.embedding is not None

    @property
    def dim(self) -> Optional[int]:
        return len(self.embedding[0]) if self.embedding is not None else None

    def vector(self, index: int) -> Tuple[Number, ...]:
        if self.embedding is None:
            raise CausalOTValidationError(f"space {self.name!r} has no embedding")
        return self.embedding[index]

    @classmethod
    def real_line(cls, name: str, values: Iterable[Number]) -> 'CoordinateSpace':
        """Space whose atoms are real numbers embedded in R."""
        values = tuple(values)
        return cls(name=name, atoms=values, embedding=tuple((v,) for v in values))


@dataclass(frozen=True)
class DiscreteMeasure:
    """
    Finitely supported probability measure on a product of coordinate spaces.

    ``support`` holds atom-index tuples (one index per coordinate) in
    canonical sorted order; ``weights`` are positive and sum to one.
    """

    spaces: Tuple[CoordinateSpace, ...]
    support: Tuple[Tuple[int, ...], ...]
    weights: Tuple[Number, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, 'spaces', tuple(self.spaces))
        object.__setattr__(self, 'support', tuple(tuple(int(a) for a in t) for t in self.support))
        object.__setattr__(self, 'weights', tuple(self.weights))
        n = len(self.spaces)
        if n == 0:
            raise CausalOTValidationError("measure needs at least one coordinate")
        if not self.support or len(self.support) != len(self.weights):
            raise CausalOTValidationError(
                f"measure support ({len(self.support)}) and weights ({len(self.weights)}) must be non-empty and aligned"
            )
        if len(set(self.support)) != len(self.support):
            raise CausalOTValidationError("measure support tuples must be distinct")
        for t in self.support:
            if len(t) != n:
                raise ShapeMismatchError(f"support tuple {t} does not have {n} coordinates")
            for k, a in enumerate(t):
                if not 0 <= a < len(self.spaces[k].atoms):
                    raise CausalOTValidationError(
                        f"atom index {a} out of range for space {self.spaces[k].name!r}"
                    )
        for w in self.weights:
            if not w > 0:
                raise CausalOTValidationError(f"support weights must be positive, got {w}")
        validate_probability_vector(self.weights, "measure weights", WEIGHT_TOLERANCE)

    @classmethod
    def from_atoms(
        cls,
        spaces: Sequence[CoordinateSpace],
        entries: Iterable[Tuple[Sequence[Hashable], Number]],
        normalize: bool = False
    ) -> 'DiscreteMeasure':
        """
        Build a measure from (atom-id tuple, weight) entries.

        Duplicate tuples are merged, zero weights dropped and the support
        sorted canonically.

        Args:
            spaces: Coordinate spaces
            entries: Atom-id tuples with weights
            normalize: Rescale weights to sum to one (for derived float measures)
        """
        spaces = tuple(spaces)
        merged: Dict[Tuple[int, ...], Number] = {}
        for atoms, weight in entries:
            if len(atoms) != len(spaces):
                raise ShapeMismatchError(
                    f"atom tuple {tuple(atoms)!r} does not have {len(spaces)} coordinates"
                )
            key = tuple(space.index(a) for space, a in zip(spaces, atoms))
            merged[key] = merged.get(key, 0) + weight
        return cls.from_indices(spaces, merged, normalize=normalize)

    @classmethod
    def from_indices(
        cls,
        spaces: Sequence[CoordinateSpace],
        weights: Mapping[Tuple[int, ...], Number],
        normalize: bool = False
    ) -> 'DiscreteMeasure':
        """Build a measure from a mapping of atom-index tuples to weights."""
        items = sorted((k, w) for k, w in weights.items() if w > 0)
        if normalize:
            total = sum(w for _, w in items)
            items = [(k, w / total) for k, w in items]
        return cls(
            spaces=tuple(spaces),
            support=tuple(k for k, _ in items),
            weights=tuple(w for _, w in items),
        )

    @property
    def n(self) -> int:
        return len(self.spaces)

    def __len__(self) -> int:
        return len(self.support)

    @cached_property
    def is_exact(self) -> bool:
        return all_exact(self.weights)

    @cached_property
    def weight_map(self) -> Dict[Tuple[int, ...], Number]:
        return dict(zip(self.support, self.weights))

    def atom_ids(self, atoms: Tuple[int, ...]) -> Tuple[Hashable, ...]:
        return tuple(space.atoms[a] for space, a in zip(self.spaces, atoms))

    def to_float(self) -> 'DiscreteMeasure':
        if not self.is_exact:
            return self
        return DiscreteMeasure(self.spaces, self.support, tuple(float(w) for w in self.weights))

    def to_exact(self) -> 'DiscreteMeasure':
        if self.is_exact:
            return self
        return DiscreteMeasure.from_indices(
            self.spaces, {t: to_exact(w) for t, w in self.weight_map.items()}, normalize=True
        )

    def points(self) -> List[Tuple[Tuple[Any, ...], Number]]:
        """
        Canonical weighted points.

        Coordinates with an embedding contribute their vector, others their
        atom id; the list is sorted so equal distributions compare equal.
        """
        pts = []
        for t, w in zip(self.support, self.weights):
            coords = tuple(
                space.embedding[a] if space.embedding is not None else space.atoms[a]
                for space, a in zip(self.spaces, t)
            )
            pts.append((coords, w))
        return sorted(pts, key=lambda p: atom_sort_key(_deep_tuple(p[0])))

    def same_distribution(self, other: 'DiscreteMeasure', tol: float = DEFAULT_TOLERANCE) -> bool:
        """Compare two measures as canonical weighted point lists."""
        if self.n != other.n or len(self) != len(other):
            return False
        for (pa, wa), (pb, wb) in zip(self.points(), other.points()):
            if not _points_close(pa, pb, tol) or abs(float(wa) - float(wb)) > tol:
                return False
        return True

    def to_dict(self) -> Dict[str, Any]:
        from .utils import json_number, jsonable_atom
        return {
            'support': [
                {'atoms': [jsonable_atom(a) for a in self.atom_ids(t)], 'weight': json_number(w)}
                for t, w in zip(self.support, self.weights)
            ]
        }


def _deep_tuple(value: Any) -> Any:
    if isinstance(value, (tuple, list)):
        return tuple(_deep_tuple(v) for v in value)
    return value


def _points_close(a: Any, b: Any, tol: float) -> bool:
    if isinstance(a, tuple) and isinstance(b, tuple):
        return len(a) == len(b) and all(_points_close(x, y, tol) for x, y in zip(a, b))
    if isinstance(a, (int, float, Fraction)) and isinstance(b, (int, float, Fraction)):
        return abs(float(a) - float(b)) <= tol
    return a == b


def product_measure(
    spaces: Sequence[CoordinateSpace],
    marginals: Sequence[Sequence[Number]]
) -> DiscreteMeasure:
    """
    Product of one-dimensional marginals.

    Args:
        spaces: Coordinate spaces
        marginals: For each coordinate, weights aligned with the space's atoms
    """
    if len(spaces) != len(marginals):
        raise ShapeMismatchError("one marginal per space is required")
    for space, weights in zip(spaces, marginals):
        if len(weights) != len(space.atoms):
            raise ShapeMismatchError(f"marginal for {space.name!r} must have {len(space.atoms)} weights")
        validate_probability_vector(list(weights), f"marginal of {space.name!r}", WEIGHT_TOLERANCE)
    weights: Dict[Tuple[int, ...], Number] = {}
    for combo in itertools.product(*[range(len(s.atoms)) for s in spaces]):
        w: Number = 1
        for k, a in enumerate(combo):
            w = w * marginals[k][a]
        if w > 0:
            weights[combo] = w
    return DiscreteMeasure.from_indices(spaces, weights)


def project_weights(m: DiscreteMeasure, coords: Sequence[int]) -> Dict[Tuple[int, ...], Number]:
    """Weights of the pushforward under projection onto coords (1-based, ordered)."""
    positions = [c - 1 for c in coords]
    out: Dict[Tuple[int, ...], Number] = {}
    for t, w in zip(m.support, m.weights):
        key = tuple(t[p] for p in positions)
        out[key] = out.get(key, 0) + w
    return out


def _validate_coords(m: DiscreteMeasure, coords: Sequence[int]) -> Tuple[int, ...]:
    coords = tuple(int(c) for c in coords)
    if not coords:
        raise EmptySubsetError("coordinate subset cannot be empty")
    for c in coords:
        if not 1 <= c <= m.n:
            raise InvalidVertexError(f"coordinate {c} outside 1..{m.n}")
    if len(set(coords)) != len(coords):
        raise CausalOTValidationError(f"coordinate subset has duplicates: {coords}")
    return coords


def marginal(m: DiscreteMeasure, coords: Sequence[int]) -> DiscreteMeasure:
    """
    Marginal of m on an ordered subset of coordinates.

    Args:
        m: Measure
        coords: Ordered, non-empty subset of 1..n

    Returns:
        Pushforward under the coordinate projection (collapsing atoms add)

    Raises:
        EmptySubsetError: If coords is empty
        InvalidVertexError: If a coordinate is outside 1..n
    """
    coords = _validate_coords(m, coords)
    spaces = tuple(m.spaces[c - 1] for c in coords)
    return DiscreteMeasure.from_indices(spaces, project_weights(m, coords))


# ==========================================================================
# MECHANISMS AND COMPATIBILITY
# ==========================================================================

@dataclass(frozen=True)
class ConditionalTable:
    """
    Causal mechanism mu(dx_i | x_pa_i).

    ``rows`` maps each parent atom-index tuple of positive mass to a
    probability vector over the target space's atoms.
    """

    vertex: int
    conditioning: Tuple[int, ...]
    space: CoordinateSpace
    rows: Mapping[Tuple[int, ...], Tuple[Number, ...]]

    def row(self, parents: Tuple[int, ...]) -> Tuple[Number, ...]:
        try:
            return self.rows[parents]
        except KeyError as e:
            raise CausalOTValidationError(
                f"vertex {self.vertex}: parent tuple {parents} has no mass"
            ) from e

    def row_support(self, parents: Tuple[int, ...]) -> Tuple[int, ...]:
        return tuple(a for a, p in enumerate(self.row(parents)) if p > 0)


def mechanism(m: DiscreteMeasure, dag: Dag, i: int) -> ConditionalTable:
    """
    Disintegrate m into the mechanism of vertex i given its parents.

    Zero-mass parent tuples get no row. A vertex without parents has a
    single row (keyed by the empty tuple) equal to its marginal.
    """
    if m.n != dag.n:
        raise ShapeMismatchError(f"measure has {m.n} coordinates, graph has {dag.n} vertices")
    if not 1 <= i <= dag.n:
        raise InvalidVertexError(f"vertex {i} outside 1..{dag.n}")
    pa = dag.pa(i)
    joint = project_weights(m, pa + (i,))
    parent_mass = project_weights(m, pa) if pa else {(): sum(m.weights)}
    size = len(m.spaces[i - 1].atoms)
    rows: Dict[Tuple[int, ...], Tuple[Number, ...]] = {}
    for parents, mass in parent_mass.items():
        rows[parents] = tuple(joint.get(parents + (a,), 0) / mass for a in range(size))
    return ConditionalTable(vertex=i, conditioning=pa, space=m.spaces[i - 1], rows=rows)


@dataclass(frozen=True)
class CompatibilityResult:
    """Outcome of a G-compatibility check with the worst equation as witness."""

    compatible: bool
    max_residual: float
    vertex: Optional[int] = None
    conditioning: Optional[Tuple[Hashable, ...]] = None
    residual: Optional[Number] = None

    def __bool__(self) -> bool:
        return self.compatible


def is_g_compatible(m: DiscreteMeasure, dag: Dag, tol: Optional[float] = None) -> CompatibilityResult:
    """
    Check that m factorizes along the graph.

    Verifies X_v independent of X_{prefix(v)} given X_pa_v for every vertex,
    i.e. mu(x_v | x_prefix) = mu(x_v | x_pa) for every prefix tuple of
    positive mass and every atom of X_v. Exact weights are compared exactly
    when tol is None.

    Args:
        m: Measure on the graph's product space
        dag: Graph
        tol: Residual tolerance (default 0 for exact weights, 1e-9 otherwise)

    Returns:
        CompatibilityResult; on failure the witness is the worst equation
        (vertex, parent atom ids, residual)
    """
    if m.n != dag.n:
        raise ShapeMismatchError(f"measure has {m.n} coordinates, graph has {dag.n} vertices")
    if tol is None:
        tol = 0 if m.is_exact else DEFAULT_TOLERANCE
    if dag.complete:
        return CompatibilityResult(compatible=True, max_residual=0.0)

    worst: Number = 0
    witness: Tuple[Optional[int], Optional[Tuple[Hashable, ...]], Optional[Number]] = (None, None, None)
    for v in dag.order:
        prefix = dag.prefix(v)
        pa = dag.pa(v)
        if set(prefix) == set(pa):
            continue
        table = mechanism(m, dag, v)
        joint = project_weights(m, prefix + (v,))
        prefix_mass = project_weights(m, prefix)
        pa_positions = [prefix.index(u) for u in pa]
        size = len(m.spaces[v - 1].atoms)
        for w, mass in prefix_mass.items():
            parents = tuple(w[k] for k in pa_positions)
            row = table.rows[parents]
            for a in range(size):
                residual = abs(joint.get(w + (a,), 0) / mass - row[a])
                if residual > worst:
                    worst = residual
                    ids = tuple(m.spaces[u - 1].atoms[p] for u, p in zip(pa, parents))
                    witness = (v, ids, residual)

    compatible = worst <= tol
    if not compatible:
        logger.debug("Measure not compatible: vertex %s residual %s", witness[0], worst)
    return CompatibilityResult(
        compatible=compatible,
        max_residual=float(worst),
        vertex=witness[0],
        conditioning=witness[1],
        residual=witness[2],
    )


# ==========================================================================
# STRUCTURAL CAUSAL MODELS
# ==========================================================================

Mechanism = Callable[[Tuple[Hashable, ...], Number], Hashable]


@dataclass(frozen=True, eq=False)
class TableMechanism:
    """
    Mechanism given as a function table (parent atom ids, noise value) -> atom id.
    """

    table: Mapping[Tuple[Tuple[Hashable, ...], Number], Hashable]

    def __call__(self, parents: Tuple[Hashable, ...], noise: Number) -> Hashable:
        try:
            return self.table[(tuple(parents), noise)]
        except KeyError as e:
            raise MechanismDomainError(
                f"mechanism table has no entry for parents={parents!r}, noise={noise!r}"
            ) from e


@dataclass(frozen=True, eq=False)
class AffineMechanism:
    """
    Mechanism offset + sum_k coefficients[k] * parent_k + noise_coefficient * noise.

    Parent atom ids must be numbers; integral results are returned as ints
    so they match integer atom ids.
    """

    coefficients: Tuple[Number, ...] = ()
    noise_coefficient: Number = 1
    offset: Number = 0

    def __call__(self, parents: Tuple[Hashable, ...], noise: Number) -> Hashable:
        if len(parents) != len(self.coefficients):
            raise MechanismDomainError(
                f"affine mechanism has {len(self.coefficients)} coefficients for {len(parents)} parents"
            )
        value = self.offset + self.noise_coefficient * noise
        for c, p in zip(self.coefficients, parents):
            value = value + c * p
        if isinstance(value, float) and value.is_integer():
            return int(value)
        if isinstance(value, Fraction) and value.denominator == 1:
            return int(value)
        return value


@dataclass(frozen=True)
class NoiseDistribution:
    """Finitely supported real-valued noise law."""

    values: Tuple[Number, ...]
    weights: Tuple[Number, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, 'values', tuple(self.values))
        object.__setattr__(self, 'weights', tuple(self.weights))
        if len(self.values) != len(self.weights):
            raise ShapeMismatchError("noise values and weights must align")
        if len(set(self.values)) != len(self.values):
            raise CausalOTValidationError("noise values must be distinct")
        validate_probability_vector(self.weights, "noise weights", WEIGHT_TOLERANCE)

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[Number, Number]]) -> 'NoiseDistribution':
        pairs = list(pairs)
        return cls(values=tuple(v for v, _ in pairs), weights=tuple(w for _, w in pairs))

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True, eq=False)
class Scm:
    """
    Structural causal model X_v = f_v(X_pa_v, U_v) with independent noises.

    Attributes:
        dag: Graph (must be acyclic)
        spaces: Coordinate spaces of X_1..X_n
        mechanisms: mechanisms[v - 1] maps (parent atom ids, noise value) to an atom id
        noises: noises[v - 1] is the law of U_v
        lipschitz: Declared Lipschitz constants (None entries are estimated)
        name: Label used in reports
    """

    dag: Dag
    spaces: Tuple[CoordinateSpace, ...]
    mechanisms: Tuple[Mechanism, ...]
    noises: Tuple[NoiseDistribution, ...]
    lipschitz: Optional[Tuple[Optional[float], ...]] = None
    name: str = ''

    def __post_init__(self) -> None:
        object.__setattr__(self, 'spaces', tuple(self.spaces))
        object.__setattr__(self, 'mechanisms', tuple(self.mechanisms))
        object.__setattr__(self, 'noises', tuple(self.noises))
        if self.dag.complete:
            raise CycleDetectedError("structural causal models need an acyclic graph")
        n = self.dag.n
        if not (len(self.spaces) == len(self.mechanisms) == len(self.noises) == n):
            raise ShapeMismatchError(f"an SCM on {n} vertices needs {n} spaces, mechanisms and noises")
        if self.lipschitz is not None:
            object.__setattr__(self, 'lipschitz', tuple(self.lipschitz))
            if len(self.lipschitz) != n:
                raise ShapeMismatchError(f"expected {n} Lipschitz constants")

    @classmethod
    def from_functions(
        cls,
        dag: Dag,
        spaces: Sequence[CoordinateSpace],
        functions: Sequence[Mechanism],
        noises: Sequence[Any],
        lipschitz: Optional[Sequence[Optional[float]]] = None,
        name: str = ''
    ) -> 'Scm':
        """
        Build an SCM from Python callables.

        Args:
            dag: Graph
            spaces: Coordinate spaces
            functions: f_v(parent_atom_ids, noise_value) -> atom id, one per vertex
            noises: NoiseDistribution or (value, weight) pairs per vertex
            lipschitz: Optional declared constants
            name: Report label
        """
        laws = tuple(
            nd if isinstance(nd, NoiseDistribution) else NoiseDistribution.from_pairs(nd)
            for nd in noises
        )
        return cls(
            dag=dag,
            spaces=tuple(spaces),
            mechanisms=tuple(functions),
            noises=laws,
            lipschitz=tuple(lipschitz) if lipschitz is not None else None,
            name=name,
        )

    @property
    def noise_combinations(self) -> int:
        total = 1
        for nd in self.noises:
            total *= len(nd)
        return total

    def evaluate(self, v: int, parents: Tuple[Hashable, ...], noise: Number) -> Hashable:
        """Evaluate f_v and check the output is an atom of X_v."""
        out = self.mechanisms[v - 1](tuple(parents), noise)
        if out not in self.spaces[v - 1]:
            raise MechanismDomainError(
                f"mechanism of vertex {v} returned {out!r}, not an atom of {self.spaces[v - 1].name!r}"
            )
        return out


def scm_pushforward(s: Scm, max_support: int = MAX_SUPPORT) -> DiscreteMeasure:
    """
    Exact law of (X_1, ..., X_n) under an SCM.

    Noise atoms are enumerated in topological order, accumulating product
    weights; equal partial assignments are merged as they arise.

    Raises:
        SupportExplosionError: If the noise-combination count exceeds max_support
        MechanismDomainError: If a mechanism is undefined on a reachable input
    """
    combos = s.noise_combinations
    if combos > max_support:
        raise SupportExplosionError(
            f"SCM has {combos} noise combinations, above the cap of {max_support}"
        )
    n = s.dag.n
    partial: Dict[Tuple[int, ...], Number] = {tuple([-1] * n): 1}
    for v in s.dag.order:
        space = s.spaces[v - 1]
        pa = s.dag.pa(v)
        noise = s.noises[v - 1]
        grown: Dict[Tuple[int, ...], Number] = {}
        for assignment, weight in partial.items():
            parent_ids = tuple(s.spaces[u - 1].atoms[assignment[u - 1]] for u in pa)
            for u_value, u_weight in zip(noise.values, noise.weights):
                out = space.index(s.evaluate(v, parent_ids, u_value))
                key = assignment[:v - 1] + (out,) + assignment[v:]
                grown[key] = grown.get(key, 0) + weight * u_weight
        partial = grown
    logger.debug("Pushforward of SCM %r: %s support points from %s noise combinations",
                 s.name, len(partial), combos)
    return DiscreteMeasure.from_indices(s.spaces, partial, normalize=not all_exact(partial.values()))


def reachable_inputs(
    s: Scm,
    v: int,
    law: Optional[DiscreteMeasure] = None
) -> List[Tuple[Tuple[Hashable, ...], Number]]:
    """
    Realized (parent atom ids, noise value) inputs of f_v.

    Args:
        s: SCM
        v: Vertex
        law: Pushforward of s (computed when omitted)
    """
    law = law if law is not None else scm_pushforward(s)
    pa = s.dag.pa(v)
    parent_tuples = sorted(project_weights(law, pa)) if pa else [()]
    out = []
    for pt in parent_tuples:
        ids = tuple(s.spaces[u - 1].atoms[a] for u, a in zip(pa, pt))
        for u_value in s.noises[v - 1].values:
            out.append((ids, u_value))
    return out


def lipschitz_estimate(
    s: Scm,
    metrics: Sequence['CoordinateMetric'],
    extra_inputs: Optional[Mapping[int, Iterable[Tuple[Tuple[Hashable, ...], Number]]]] = None,
    law: Optional[DiscreteMeasure] = None
) -> Tuple[float, ...]:
    """
    Empirical Lipschitz constant of each mechanism on its realized inputs.

    The input metric is additive: sum of parent-coordinate distances plus
    the absolute noise difference.

    Args:
        s: SCM
        metrics: One coordinate metric per vertex
        extra_inputs: Additional inputs per vertex (e.g. another model's)
        law: Pushforward of s (computed when omitted)

    Returns:
        Per-vertex constants (0 for constant mechanisms)
    """
    if len(metrics) != s.dag.n:
        raise ShapeMismatchError(f"expected {s.dag.n} coordinate metrics, got {len(metrics)}")
    law = law if law is not None else scm_pushforward(s)
    constants = []
    for v in range(1, s.dag.n + 1):
        pa = s.dag.pa(v)
        inputs = set(reachable_inputs(s, v, law))
        if extra_inputs and v in extra_inputs:
            inputs.update((tuple(p), u) for p, u in extra_inputs[v])
        inputs_sorted = sorted(inputs, key=lambda item: (atom_sort_key(item[0]), float(item[1])))
        outputs = [s.evaluate(v, p, u) for p, u in inputs_sorted]
        best = 0.0
        for (x, y) in itertools.combinations(range(len(inputs_sorted)), 2):
            (p1, u1), (p2, u2) = inputs_sorted[x], inputs_sorted[y]
            num = metrics[v - 1].distance_ids(s.spaces[v - 1], outputs[x], outputs[y])
            if num == 0:
                continue
            den = abs(float(u1) - float(u2))
            for k, u in enumerate(pa):
                den += metrics[u - 1].distance_ids(s.spaces[u - 1], p1[k], p2[k])
            if den > 0:
                best = max(best, float(num) / den)
        constants.append(best)
    return tuple(constants)
