"""
Ground costs between support points and metric utilities.

A GroundCost evaluates d_X(x, y)^p between support tuples of two measures,
either additively over coordinate metrics, as a Euclidean norm on the
concatenated embeddings, or by lookup in an explicit joint matrix.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, Hashable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .constants import (
    COST_ADDITIVE,
    COST_EUCLIDEAN,
    COST_JOINT,
    COST_KINDS,
    METRIC_ABSDIFF,
    METRIC_EUCLIDEAN,
    METRIC_KINDS,
    METRIC_MATRIX,
    METRIC_TOLERANCE,
)
from .exceptions import (
    AsymmetricInputError,
    CausalOTFileError,
    CausalOTValidationError,
    MissingPairError,
    NegativeEntryError,
    NoEmbeddingError,
    ShapeMismatchError,
)
from .model import CoordinateSpace, DiscreteMeasure
from .utils import is_exact_number, to_exact
from .validators import validate_choice, validate_file_exists, validate_square_matrix

logger = logging.getLogger(__name__)


# ==========================================================================
# METRIC VALIDATION AND REPAIR
# ==========================================================================

@dataclass
class MetricValidation:
    """
    Result of checking a distance matrix against the metric axioms.

    Index triples and pairs are 1-based. A triangle violation (i, j, k, margin)
    means M[i,j] exceeds M[i,k] + M[k,j] by margin.
    """

    triangle_violations: List[Tuple[int, int, int, float]] = field(default_factory=list)
    asymmetries: List[Tuple[int, int]] = field(default_factory=list)
    nonzero_diagonal: List[int] = field(default_factory=list)
    negative_entries: List[Tuple[int, int]] = field(default_factory=list)
    identical_points: List[Tuple[int, int]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.triangle_violations or self.asymmetries
                    or self.nonzero_diagonal or self.negative_entries)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'ok': self.ok,
            'triangle_violations': [list(v) for v in self.triangle_violations],
            'asymmetries': [list(v) for v in self.asymmetries],
            'nonzero_diagonal': list(self.nonzero_diagonal),
            'negative_entries': [list(v) for v in self.negative_entries],
            'identical_points': [list(v) for v in self.identical_points],
        }


def validate_metric(matrix: Any, tol: float = METRIC_TOLERANCE) -> MetricValidation:
    """
    Report every metric-axiom defect of a square distance matrix.

    Pseudometrics are accepted: distinct points at distance zero are listed
    under ``identical_points`` and logged as a warning.

    Args:
        matrix: Square matrix
        tol: Slack allowed in the triangle inequality and symmetry checks

    Returns:
        MetricValidation
    """
    validate_square_matrix(matrix, "matrix")
    m = np.asarray(matrix)
    size = m.shape[0]
    report = MetricValidation()
    for i in range(size):
        if m[i, i] != 0:
            report.nonzero_diagonal.append(i + 1)
        for j in range(size):
            if m[i, j] < 0:
                report.negative_entries.append((i + 1, j + 1))
    for i in range(size):
        for j in range(i + 1, size):
            if abs(m[i, j] - m[j, i]) > tol:
                report.asymmetries.append((i + 1, j + 1))
            if m[i, j] == 0 and m[j, i] == 0:
                report.identical_points.append((i + 1, j + 1))

    # M[i,j] > M[i,k] + M[k,j] + tol, vectorized over k
    for i in range(size):
        for j in range(size):
            if i == j:
                continue
            via = m[i, :] + m[:, j]
            for k in np.flatnonzero(m[i, j] > via + tol):
                if k in (i, j):
                    continue
                report.triangle_violations.append((i + 1, j + 1, int(k) + 1, float(m[i, j] - via[k])))

    if report.identical_points:
        logger.warning("Distance matrix is a pseudometric: %s pairs of distinct points at distance 0",
                       len(report.identical_points))
    return report


def _as_distance_array(matrix: Any) -> np.ndarray:
    """Object array of Fractions for exact input, float64 otherwise."""
    values = np.asarray(matrix, dtype=object)
    if all(is_exact_number(v) for v in values.flat):
        return np.vectorize(to_exact, otypes=[object])(values)
    return np.asarray(matrix, dtype=float)


def metric_repair(matrix: Any, tol: float = METRIC_TOLERANCE) -> np.ndarray:
    """
    Enforce the triangle inequality by repeated min-plus sweeps.

    Each sweep sets M_ij = min(M_ij, min_m M_im + M_mj) for all entries
    simultaneously; sweeps repeat until no entry changes. Exact input
    (ints and Fractions) is repaired exactly. In float mode an entry is only
    lowered when a path is shorter by more than tol, so matrices whose
    triangle inequalities are tight in decimal are left untouched.

    Args:
        matrix: Square, symmetric, nonnegative matrix with zero diagonal
        tol: Float-mode slack (ignored for exact input)

    Returns:
        Repaired matrix (entrywise no larger than the input)

    Raises:
        AsymmetricInputError: If the matrix is not symmetric
        NegativeEntryError: If an entry is negative
    """
    validate_square_matrix(matrix, "matrix")
    current = _as_distance_array(matrix)
    if current.dtype == object:
        tol = 0
    if np.any(current < 0):
        raise NegativeEntryError("distance matrix has negative entries")
    if not np.array_equal(current, current.T):
        raise AsymmetricInputError("distance matrix is not symmetric")
    if np.any(np.diag(current) != 0):
        raise CausalOTValidationError("distance matrix must have a zero diagonal")

    sweeps = 0
    while True:
        via = np.min(current[:, :, None] + current[None, :, :], axis=1)
        lower = np.asarray(via < current - tol, dtype=bool)
        sweeps += 1
        if not lower.any():
            break
        current = np.where(lower, via, current)
    logger.debug("Metric repair reached a fixpoint after %s sweeps", sweeps)
    return current


def load_matrix_csv(path: str, exact: bool = False) -> np.ndarray:
    """
    Read a headerless, comma-separated square matrix.

    Args:
        path: CSV file
        exact: Parse entries as Fractions (decimal text is kept exact)

    Raises:
        CausalOTFileError: If the file is missing or not a numeric square matrix
    """
    try:
        validate_file_exists(path, "matrix path")
        if exact:
            frame = pd.read_csv(path, header=None, dtype=str)
            matrix = np.array(
                [[Fraction(v.strip()) for v in row] for row in frame.to_numpy()], dtype=object
            )
        else:
            matrix = pd.read_csv(path, header=None).to_numpy(dtype=float)
    except CausalOTValidationError as e:
        raise CausalOTFileError(str(e)) from e
    except (OSError, ValueError, ZeroDivisionError, AttributeError,
            pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise CausalOTFileError(f"Cannot read matrix file {path}: {e}") from e
    try:
        validate_square_matrix(matrix, "matrix")
    except CausalOTValidationError as e:
        raise CausalOTFileError(f"{path}: {e}") from e
    return matrix


def write_matrix_csv(matrix: Any, path: str) -> None:
    """Write a matrix as headerless CSV."""
    try:
        pd.DataFrame(np.asarray(matrix, dtype=float)).to_csv(path, header=False, index=False)
    except OSError as e:
        raise CausalOTFileError(f"Cannot write matrix file {path}: {e}") from e


def _require_metric(matrix: np.ndarray, tol: float) -> None:
    report = validate_metric(matrix, tol)
    if report.negative_entries:
        raise NegativeEntryError(f"distance matrix has negative entries at {report.negative_entries[:3]}")
    if report.asymmetries:
        raise AsymmetricInputError(f"distance matrix is asymmetric at {report.asymmetries[:3]}")
    if report.nonzero_diagonal:
        raise CausalOTValidationError(f"distance matrix has nonzero diagonal at {report.nonzero_diagonal[:3]}")
    if report.triangle_violations:
        raise CausalOTValidationError(
            f"distance matrix violates the triangle inequality: {report.triangle_violations[:3]}"
        )


# ==========================================================================
# COORDINATE METRICS
# ==========================================================================

@dataclass(frozen=True, eq=False)
class CoordinateMetric:
    """
    Metric on the atoms of one coordinate.

    Kinds:
        euclidean: Euclidean distance between embedding vectors
        absdiff: |a - b| on the first embedding component
        matrix: explicit distance matrix, indexed by ``labels`` (atom ids)
            or, without labels, by atom position in the space
    """

    kind: str = METRIC_EUCLIDEAN
    matrix: Optional[np.ndarray] = None
    labels: Optional[Tuple[Hashable, ...]] = None

    def __post_init__(self) -> None:
        validate_choice(self.kind, METRIC_KINDS, "metric kind")
        if self.kind == METRIC_MATRIX:
            if self.matrix is None:
                raise CausalOTValidationError("matrix metric needs a distance matrix")
            matrix = np.asarray(self.matrix, dtype=float)
            _require_metric(matrix, METRIC_TOLERANCE)
            object.__setattr__(self, 'matrix', matrix)
            if self.labels is not None:
                labels = tuple(self.labels)
                if len(labels) != matrix.shape[0]:
                    raise ShapeMismatchError(
                        f"{len(labels)} labels for a {matrix.shape[0]}x{matrix.shape[0]} matrix"
                    )
                object.__setattr__(self, 'labels', labels)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'CoordinateMetric':
        kind = data.get('kind', METRIC_EUCLIDEAN)
        matrix = data.get('matrix')
        labels = data.get('labels')
        return cls(
            kind=kind,
            matrix=np.asarray(matrix, dtype=float) if matrix is not None else None,
            labels=tuple(labels) if labels is not None else None,
        )

    def _matrix_index(self, space: CoordinateSpace, atom: Hashable) -> int:
        if self.labels is not None:
            try:
                return self.labels.index(atom)
            except ValueError as e:
                raise MissingPairError(f"metric matrix has no label {atom!r}") from e
        index = space.index(atom)
        if index >= self.matrix.shape[0]:
            raise MissingPairError(f"metric matrix has no row for atom {atom!r}")
        return index

    def distance_ids(self, space: CoordinateSpace, a: Hashable, b: Hashable,
                     space_b: Optional[CoordinateSpace] = None) -> float:
        """Distance between atom ids a (of space) and b (of space_b, default space)."""
        space_b = space_b or space
        if self.kind == METRIC_MATRIX:
            return float(self.matrix[self._matrix_index(space, a), self._matrix_index(space_b, b)])
        va = np.asarray(_embedding(space).vector(space.index(a)), dtype=float)
        vb = np.asarray(_embedding(space_b).vector(space_b.index(b)), dtype=float)
        if self.kind == METRIC_ABSDIFF:
            return float(abs(va[0] - vb[0]))
        return float(np.linalg.norm(va - vb))

    def pairwise(self, space_x: CoordinateSpace, space_y: CoordinateSpace) -> np.ndarray:
        """|X| x |Y| matrix of distances between the atoms of two spaces."""
        if self.kind == METRIC_MATRIX:
            rows = [self._matrix_index(space_x, a) for a in space_x.atoms]
            cols = [self._matrix_index(space_y, b) for b in space_y.atoms]
            return self.matrix[np.ix_(rows, cols)]
        ex = np.asarray(_embedding(space_x).embedding, dtype=float)
        ey = np.asarray(_embedding(space_y).embedding, dtype=float)
        if self.kind == METRIC_ABSDIFF:
            return np.abs(ex[:, None, 0] - ey[None, :, 0])
        if ex.shape[1] != ey.shape[1]:
            raise ShapeMismatchError(
                f"embeddings of {space_x.name!r} and {space_y.name!r} differ in dimension"
            )
        return np.linalg.norm(ex[:, None, :] - ey[None, :, :], axis=2)


def _embedding(space: CoordinateSpace) -> CoordinateSpace:
    if not space.has_embedding:
        raise NoEmbeddingError(f"space {space.name!r} has no real embedding")
    return space


# ==========================================================================
# GROUND COSTS
# ==========================================================================

@dataclass(frozen=True, eq=False)
class GroundCost:
    """
    Cost d_X(x, y)^p between support tuples.

    Kinds:
        additive: d_X = sum_i d_{X_i}(x_i, y_i) over coordinate metrics
        euclidean: d_X = Euclidean norm of the concatenated embeddings
        joint: d_X read from a matrix whose rows and columns are labelled
            by atom-id tuples
    """

    kind: str
    p: float = 1
    metrics: Optional[Union[CoordinateMetric, Tuple[CoordinateMetric, ...]]] = None
    matrix: Optional[np.ndarray] = None
    labels: Optional[Tuple[Tuple[Hashable, ...], ...]] = None

    def __post_init__(self) -> None:
        validate_choice(self.kind, COST_KINDS, "cost kind")
        if not isinstance(self.p, (int, float)) or isinstance(self.p, bool) or self.p < 1:
            raise CausalOTValidationError(f"p must be a real number >= 1, got {self.p!r}")
        if self.kind == COST_ADDITIVE:
            metrics = self.metrics if self.metrics is not None else CoordinateMetric()
            if not isinstance(metrics, CoordinateMetric):
                metrics = tuple(metrics)
            object.__setattr__(self, 'metrics', metrics)
        if self.kind == COST_JOINT:
            if self.matrix is None or self.labels is None:
                raise CausalOTValidationError("joint cost needs a matrix and row labels")
            matrix = np.asarray(self.matrix, dtype=float)
            validate_square_matrix(matrix, "joint cost matrix")
            labels = tuple(tuple(label) for label in self.labels)
            if len(labels) != matrix.shape[0]:
                raise ShapeMismatchError(f"{len(labels)} labels for a {matrix.shape[0]}-row matrix")
            if len(set(labels)) != len(labels):
                raise CausalOTValidationError("joint cost labels must be distinct")
            object.__setattr__(self, 'matrix', matrix)
            object.__setattr__(self, 'labels', labels)

    @classmethod
    def additive(cls, metrics: Union[CoordinateMetric, Sequence[CoordinateMetric], None] = None,
                 p: float = 1) -> 'GroundCost':
        return cls(kind=COST_ADDITIVE, p=p, metrics=metrics)

    @classmethod
    def euclidean(cls, p: float = 2) -> 'GroundCost':
        return cls(kind=COST_EUCLIDEAN, p=p)

    @classmethod
    def joint_from_matrix(cls, matrix: Any, labels: Sequence[Sequence[Hashable]], p: float = 1) -> 'GroundCost':
        """Joint cost from a square matrix labelled by atom-id tuples."""
        return cls(kind=COST_JOINT, p=p, matrix=np.asarray(matrix, dtype=float),
                   labels=tuple(tuple(label) for label in labels))

    @property
    def separable(self) -> bool:
        """True when d_X^p is a sum of per-coordinate terms."""
        return (self.kind == COST_ADDITIVE and self.p == 1) or (self.kind == COST_EUCLIDEAN and self.p == 2)

    def with_p(self, p: float) -> 'GroundCost':
        return GroundCost(kind=self.kind, p=p, metrics=self.metrics, matrix=self.matrix, labels=self.labels)

    def metric(self, i: int) -> CoordinateMetric:
        """Coordinate metric of vertex i (1-based) for additive costs."""
        if isinstance(self.metrics, CoordinateMetric):
            return self.metrics
        if not 1 <= i <= len(self.metrics):
            raise ShapeMismatchError(f"additive cost has no metric for coordinate {i}")
        return self.metrics[i - 1]

    def coordinate_cost(self, i: int, space_x: CoordinateSpace, space_y: CoordinateSpace) -> np.ndarray:
        """
        Per-coordinate term matrix of a separable cost.

        Raises:
            CausalOTValidationError: If the cost is not separable
        """
        if not self.separable:
            raise CausalOTValidationError(f"{self.kind} cost with p={self.p} is not separable")
        if self.kind == COST_ADDITIVE:
            return self.metric(i).pairwise(space_x, space_y)
        ex = np.asarray(_embedding(space_x).embedding, dtype=float)
        ey = np.asarray(_embedding(space_y).embedding, dtype=float)
        return np.sum((ex[:, None, :] - ey[None, :, :]) ** 2, axis=2)

    def _joint_index(self) -> Dict[Tuple[Hashable, ...], int]:
        return {label: r for r, label in enumerate(self.labels)}

    def distances(self, mu: DiscreteMeasure, nu: DiscreteMeasure) -> np.ndarray:
        """Matrix of d_X between the support tuples of mu and nu (not raised to p)."""
        if mu.n != nu.n and self.kind != COST_JOINT:
            raise ShapeMismatchError(f"measures have {mu.n} and {nu.n} coordinates")
        rows = np.asarray(mu.support, dtype=int)
        cols = np.asarray(nu.support, dtype=int)
        if self.kind == COST_ADDITIVE:
            total = np.zeros((len(rows), len(cols)))
            for k in range(mu.n):
                per = self.metric(k + 1).pairwise(mu.spaces[k], nu.spaces[k])
                total += per[np.ix_(rows[:, k], cols[:, k])]
            return total
        if self.kind == COST_EUCLIDEAN:
            ex = _stacked_embedding(mu)
            ey = _stacked_embedding(nu)
            if ex.shape[1] != ey.shape[1]:
                raise ShapeMismatchError("measures have embeddings of different total dimension")
            return np.linalg.norm(ex[:, None, :] - ey[None, :, :], axis=2)
        index = self._joint_index()
        out = np.zeros((len(rows), len(cols)))
        for a, ta in enumerate(mu.support):
            ida = mu.atom_ids(ta)
            for b, tb in enumerate(nu.support):
                idb = nu.atom_ids(tb)
                if ida not in index or idb not in index:
                    raise MissingPairError(f"joint cost matrix has no entry for ({ida!r}, {idb!r})")
                out[a, b] = self.matrix[index[ida], index[idb]]
        return out


def _stacked_embedding(m: DiscreteMeasure) -> np.ndarray:
    for space in m.spaces:
        _embedding(space)
    return np.asarray(
        [[c for k, a in enumerate(t) for c in m.spaces[k].embedding[a]] for t in m.support],
        dtype=float,
    )


def cost_matrix(cost: GroundCost, mu: DiscreteMeasure, nu: DiscreteMeasure) -> np.ndarray:
    """
    Matrix of d_X(a, b)^p over supp(mu) x supp(nu).

    Raises:
        MissingPairError: If a joint matrix lacks an entry
        NoEmbeddingError: If a metric needs an embedding that a space lacks
    """
    d = cost.distances(mu, nu)
    return d if cost.p == 1 else d ** cost.p
