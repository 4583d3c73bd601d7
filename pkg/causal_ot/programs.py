"""
Constraint systems for causal and bicausal couplings.

Couplings are indexed by support pairs: variable k = a * |supp nu| + b
holds pi(x^a, y^b). Conditional independences S _|_ W | Z between X and Y
coordinates are written as cross-product equations

    pi(s, w, z) * pi(z) = pi(s, z) * pi(w, z)

which are linear when one side's factors are fixed by a marginal
(S and Z inside the X coordinates, or inside the Y coordinates) and
bilinear otherwise.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, Hashable, List, Optional, Sequence, Tuple

import numpy as np

from .constants import (
    ANY,
    BICAUSAL,
    CAUSAL,
    COUPLING_CLASSES,
    FAMILY_ADAPTED_CAUSALITY,
    FAMILY_CAUSAL_MECHANISM,
    FAMILY_CONDITIONAL_INDEPENDENCE,
    FAMILY_JOINT_COMPATIBILITY,
    FAMILY_MARGINAL,
    FAMILY_MARGINAL_COLUMN,
    FAMILY_MARGINAL_ROW,
    FAMILY_NONNEGATIVITY,
    MEMBERSHIP_TOLERANCE,
    WEIGHT_TOLERANCE,
)
from .exceptions import (
    CausalOTValidationError,
    InfeasibleKernelError,
    MarginalNotCompatibleError,
    MuNotCompatibleError,
    ShapeMismatchError,
)
from .lp import LinearProgram
from .model import Dag, DiscreteMeasure, is_g_compatible, mechanism, project_weights
from .utils import Number, all_exact, json_number, jsonable_atom, to_exact
from .validators import validate_choice

logger = logging.getLogger(__name__)

Coordinate = Tuple[str, int]


# ==========================================================================
# COUPLINGS
# ==========================================================================

@dataclass(frozen=True, eq=False)
class Coupling:
    """
    Transport plan between two discrete measures.

    ``weights[a, b]`` is the mass sent from mu's a-th support tuple to
    nu's b-th support tuple.
    """

    mu: DiscreteMeasure
    nu: DiscreteMeasure
    weights: np.ndarray

    def __post_init__(self) -> None:
        weights = np.asarray(self.weights)
        if weights.dtype != object:
            weights = weights.astype(float)
        if weights.shape != (len(self.mu), len(self.nu)):
            raise ShapeMismatchError(
                f"coupling weights have shape {weights.shape}, expected ({len(self.mu)}, {len(self.nu)})"
            )
        if np.any(weights < -WEIGHT_TOLERANCE):
            raise CausalOTValidationError("coupling weights must be nonnegative")
        object.__setattr__(self, 'weights', weights)

    @property
    def is_exact(self) -> bool:
        return self.weights.dtype == object and all_exact(self.weights.flat)

    @property
    def flat(self) -> np.ndarray:
        return self.weights.reshape(-1)

    @classmethod
    def from_flat(cls, mu: DiscreteMeasure, nu: DiscreteMeasure, values: Sequence[Number]) -> 'Coupling':
        arr = np.asarray(values)
        return cls(mu=mu, nu=nu, weights=arr.reshape(len(mu), len(nu)))

    @classmethod
    def product(cls, mu: DiscreteMeasure, nu: DiscreteMeasure) -> 'Coupling':
        """The independent coupling mu (x) nu."""
        exact = mu.is_exact and nu.is_exact
        a = np.array(mu.weights, dtype=object if exact else float)
        b = np.array(nu.weights, dtype=object if exact else float)
        return cls(mu=mu, nu=nu, weights=np.outer(a, b))

    @classmethod
    def identity(cls, mu: DiscreteMeasure) -> 'Coupling':
        """Diagonal plan of mu with itself."""
        exact = mu.is_exact
        weights = np.zeros((len(mu), len(mu)), dtype=object if exact else float)
        if exact:
            weights[:] = Fraction(0)
        for a, w in enumerate(mu.weights):
            weights[a, a] = w
        return cls(mu=mu, nu=mu, weights=weights)

    def transpose(self) -> 'Coupling':
        return Coupling(mu=self.nu, nu=self.mu, weights=self.weights.T.copy())

    def cost(self, matrix: np.ndarray) -> Number:
        """Integral of a cost matrix against the plan."""
        if self.weights.dtype == object:
            return sum((w * float(c) for w, c in zip(self.weights.flat, np.asarray(matrix).flat) if w != 0), 0.0)
        return float(np.sum(self.weights * matrix))

    def to_float(self) -> 'Coupling':
        if self.weights.dtype != object:
            return self
        return Coupling(self.mu, self.nu, self.weights.astype(float))

    def marginal_residual(self) -> float:
        rows = self.weights.sum(axis=1)
        cols = self.weights.sum(axis=0)
        res_rows = max(abs(float(r - w)) for r, w in zip(rows, self.mu.weights))
        res_cols = max(abs(float(c - w)) for c, w in zip(cols, self.nu.weights))
        return max(res_rows, res_cols)

    def pairs(self) -> List[Tuple[int, int, Number]]:
        """Support pairs (a, b, weight) with positive weight, row-major."""
        return [(a, b, self.weights[a, b])
                for a in range(self.weights.shape[0])
                for b in range(self.weights.shape[1])
                if self.weights[a, b] > 0]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'pairs': [
                {
                    'x': [jsonable_atom(v) for v in self.mu.atom_ids(self.mu.support[a])],
                    'y': [jsonable_atom(v) for v in self.nu.atom_ids(self.nu.support[b])],
                    'weight': json_number(w),
                }
                for a, b, w in self.pairs()
            ]
        }


# ==========================================================================
# CONDITIONAL-INDEPENDENCE STATEMENTS
# ==========================================================================

def _coord_name(coord: Coordinate) -> str:
    return f"{coord[0].upper()}{coord[1]}"


@dataclass(frozen=True)
class CIStatement:
    """
    Structural statement S _|_ W | Z over X ('x', v) and Y ('y', v) coordinates.

    ``linear_in`` is 'mu' or 'nu' when S and Z lie in one side's coordinates
    (so pi(z) and pi(s, z) are marginal constants), else None.
    """

    vertex: int
    label: str
    s: Tuple[Coordinate, ...]
    w: Tuple[Coordinate, ...]
    z: Tuple[Coordinate, ...]
    linear_in: Optional[str] = None

    @property
    def vacuous(self) -> bool:
        return not self.s or not self.w

    @property
    def bilinear(self) -> bool:
        return self.linear_in is None

    def describe(self) -> str:
        s = ', '.join(_coord_name(c) for c in self.s)
        w = ', '.join(_coord_name(c) for c in self.w)
        text = f"({s}) _|_ ({w})"
        if self.z:
            text += " | (" + ', '.join(_coord_name(c) for c in self.z) + ")"
        return text


def _statement(vertex: int, label: str, s, w, z) -> CIStatement:
    s, w, z = tuple(s), tuple(w), tuple(z)
    for side, name in (('x', 'mu'), ('y', 'nu')):
        if all(c[0] == side for c in s + z):
            return CIStatement(vertex, label, s, w, z, name)
        if all(c[0] == side for c in w + z):
            return CIStatement(vertex, label, w, s, z, name)
    return CIStatement(vertex, label, s, w, z, None)


def _xs(vertices: Sequence[int]) -> List[Coordinate]:
    return [('x', v) for v in vertices]


def _ys(vertices: Sequence[int]) -> List[Coordinate]:
    return [('y', v) for v in vertices]


def causal_statements(dag: Dag) -> List[CIStatement]:
    """
    Non-vacuous conditional independences characterizing causal couplings.

    For each vertex i in topological order:
        X_i _|_ (X_prefix, Y_prefix) | X_pa            (linear in mu)
        Y_i _|_ (X_prefix\\pa, Y_prefix\\pa) | (X_i, X_pa, Y_pa)
    """
    if dag.complete:
        return []
    out = []
    for v in dag.order:
        pa = dag.pa(v)
        prefix = dag.prefix(v)
        rest = [u for u in prefix if u not in pa]
        first = _statement(v, FAMILY_CAUSAL_MECHANISM, _xs([v]), _xs(rest) + _ys(prefix), _xs(pa))
        second = _statement(v, FAMILY_CONDITIONAL_INDEPENDENCE, _ys([v]), _xs(rest) + _ys(rest),
                            _xs([v]) + _xs(pa) + _ys(pa))
        out.extend(st for st in (first, second) if not st.vacuous)
    return out


def bicausal_statements(dag: Dag) -> List[CIStatement]:
    """
    Non-vacuous conditional independences characterizing bicausal couplings.

    For each vertex i after the first in topological order:
        (X_i, Y_i) _|_ (X_prefix\\pa, Y_prefix\\pa) | (X_pa, Y_pa)
        X_i _|_ Y_pa | X_pa                              (linear in mu)
        Y_i _|_ X_pa | Y_pa                              (linear in nu)
    """
    if dag.complete:
        return []
    out = []
    for v in dag.order:
        pa = dag.pa(v)
        prefix = dag.prefix(v)
        rest = [u for u in prefix if u not in pa]
        joint = _statement(v, FAMILY_JOINT_COMPATIBILITY, [('x', v), ('y', v)], _xs(rest) + _ys(rest),
                           _xs(pa) + _ys(pa))
        mu_side = _statement(v, FAMILY_ADAPTED_CAUSALITY, _xs([v]), _ys(pa), _xs(pa))
        nu_side = _statement(v, FAMILY_ADAPTED_CAUSALITY, _ys([v]), _xs(pa), _ys(pa))
        out.extend(st for st in (joint, mu_side, nu_side) if not st.vacuous)
    return out


# ==========================================================================
# CONSTRAINT FAMILIES
# ==========================================================================

@dataclass(frozen=True)
class LinearEquation:
    """sum_k coefficient_k * pi_k = rhs."""

    coefficients: Tuple[Tuple[int, Number], ...]
    rhs: Number = 0
    event: str = ''


@dataclass(frozen=True)
class LinearConstraintFamily:
    label: str
    equations: Tuple[LinearEquation, ...]
    vertex: Optional[int] = None
    statement: Optional[CIStatement] = None

    def __len__(self) -> int:
        return len(self.equations)

    def matrix(self, n_variables: int, exact: bool = False) -> Tuple[np.ndarray, np.ndarray]:
        """Dense (A, b) rows of the family."""
        dtype = object if exact else float
        A = np.zeros((len(self.equations), n_variables), dtype=dtype)
        b = np.zeros(len(self.equations), dtype=dtype)
        if exact:
            A[:] = Fraction(0)
        for r, eq in enumerate(self.equations):
            for k, coef in eq.coefficients:
                A[r, k] += to_exact(coef) if exact else float(coef)
            b[r] = to_exact(eq.rhs) if exact else float(eq.rhs)
        return A, b


@dataclass(frozen=True)
class BilinearEquation:
    """
    pi(swz) * pi(z) = pi(sz) * pi(wz), each factor a sum of variables.
    """

    swz: Tuple[int, ...]
    z: Tuple[int, ...]
    sz: Tuple[int, ...]
    wz: Tuple[int, ...]
    event: str = ''


@dataclass(frozen=True)
class BilinearConstraintFamily:
    label: str
    equations: Tuple[BilinearEquation, ...]
    vertex: Optional[int] = None
    statement: Optional[CIStatement] = None

    def __len__(self) -> int:
        return len(self.equations)


class _PairIndex:
    """Projections of the support-pair variables onto X/Y coordinates."""

    def __init__(self, mu: DiscreteMeasure, nu: DiscreteMeasure) -> None:
        self.mu = mu
        self.nu = nu
        self.n_mu = len(mu)
        self.n_nu = len(nu)
        self.mu_support = np.asarray(mu.support, dtype=int)
        self.nu_support = np.asarray(nu.support, dtype=int)
        self.xa = np.repeat(np.arange(self.n_mu), self.n_nu)
        self.yb = np.tile(np.arange(self.n_nu), self.n_mu)

    @property
    def n_variables(self) -> int:
        return self.n_mu * self.n_nu

    def keys(self, coords: Sequence[Coordinate], variables: Optional[np.ndarray] = None) -> List[Tuple[int, ...]]:
        xa = self.xa if variables is None else self.xa[variables]
        yb = self.yb if variables is None else self.yb[variables]
        columns = [
            self.mu_support[xa, v - 1] if side == 'x' else self.nu_support[yb, v - 1]
            for side, v in coords
        ]
        if not columns:
            return [()] * len(xa)
        return [tuple(int(c) for c in row) for row in zip(*columns)]

    def groups(self, coords: Sequence[Coordinate]) -> Dict[Tuple[int, ...], List[int]]:
        out: Dict[Tuple[int, ...], List[int]] = {}
        for k, key in enumerate(self.keys(coords)):
            out.setdefault(key, []).append(k)
        return out

    def atom_ids(self, coords: Sequence[Coordinate], key: Tuple[int, ...]) -> Tuple[Hashable, ...]:
        return tuple(
            (self.mu if side == 'x' else self.nu).spaces[v - 1].atoms[a]
            for (side, v), a in zip(coords, key)
        )

    def describe(self, coords: Sequence[Coordinate], key: Tuple[int, ...]) -> str:
        ids = self.atom_ids(coords, key)
        return ', '.join(f"{_coord_name(c)}={a!r}" for c, a in zip(coords, ids))


def compile_marginals(mu: DiscreteMeasure, nu: DiscreteMeasure) -> LinearConstraintFamily:
    """
    Row and column sum equations of Pi(mu, nu).

    Returns |supp mu| + |supp nu| equations over |supp mu| * |supp nu| variables.
    """
    n_nu = len(nu)
    equations = []
    for a, w in enumerate(mu.weights):
        equations.append(LinearEquation(
            tuple((a * n_nu + b, 1) for b in range(n_nu)), w, f"{FAMILY_MARGINAL_ROW} {a}"
        ))
    for b, w in enumerate(nu.weights):
        equations.append(LinearEquation(
            tuple((a * n_nu + b, 1) for a in range(len(mu))), w, f"{FAMILY_MARGINAL_COLUMN} {b}"
        ))
    return LinearConstraintFamily(label=FAMILY_MARGINAL, equations=tuple(equations))


def _compile_statement(st: CIStatement, index: _PairIndex):
    swz = index.groups(st.s + st.w + st.z)
    sz = index.groups(st.s + st.z)
    wz = index.groups(st.w + st.z)
    zz = index.groups(st.z)
    ns, nw = len(st.s), len(st.w)
    s_keys = sorted({k[:ns] for k in sz})
    w_keys = sorted({k[:nw] for k in wz})
    z_keys = sorted(zz)

    if st.linear_in is not None:
        m = index.mu if st.linear_in == 'mu' else index.nu
        vz = [v for _, v in st.z]
        vs = [v for _, v in st.s]
        mass_z = project_weights(m, vz) if vz else {(): 1}
        mass_sz = project_weights(m, vs + vz)
        equations = []
        for z in z_keys:
            for s in s_keys:
                for w in w_keys:
                    coefficients: Dict[int, Number] = {}
                    for k in swz.get(s + w + z, []):
                        coefficients[k] = coefficients.get(k, 0) + mass_z.get(z, 0)
                    c_sz = mass_sz.get(s + z, 0)
                    if c_sz:
                        for k in wz.get(w + z, []):
                            coefficients[k] = coefficients.get(k, 0) - c_sz
                    coefficients = {k: c for k, c in coefficients.items() if c != 0}
                    if not coefficients:
                        continue
                    event = (f"s=({index.describe(st.s, s)}) w=({index.describe(st.w, w)})"
                             f" z=({index.describe(st.z, z)})")
                    equations.append(LinearEquation(tuple(sorted(coefficients.items())), 0, event))
        return LinearConstraintFamily(st.label, tuple(equations), st.vertex, st)

    equations = []
    for z in z_keys:
        for s in s_keys:
            if s + z not in sz:
                continue
            for w in w_keys:
                if w + z not in wz:
                    continue
                event = (f"s=({index.describe(st.s, s)}) w=({index.describe(st.w, w)})"
                         f" z=({index.describe(st.z, z)})")
                equations.append(BilinearEquation(
                    swz=tuple(swz.get(s + w + z, [])),
                    z=tuple(zz[z]),
                    sz=tuple(sz[s + z]),
                    wz=tuple(wz[w + z]),
                    event=event,
                ))
    return BilinearConstraintFamily(st.label, tuple(equations), st.vertex, st)


def _compile(statements: List[CIStatement], mu: DiscreteMeasure, nu: DiscreteMeasure):
    index = _PairIndex(mu, nu)
    linear: List[LinearConstraintFamily] = []
    bilinear: List[BilinearConstraintFamily] = []
    for st in statements:
        family = _compile_statement(st, index)
        if isinstance(family, LinearConstraintFamily):
            linear.append(family)
        else:
            bilinear.append(family)
    return linear, bilinear


def _require_compatible(m: DiscreteMeasure, dag: Dag, error, name: str) -> None:
    result = is_g_compatible(m, dag)
    if not result.compatible:
        raise error(
            f"{name} is not compatible with the graph (vertex {result.vertex}, "
            f"conditioning {result.conditioning}, residual {float(result.residual):.3g})"
        )


def compile_causal(dag: Dag, mu: DiscreteMeasure, nu: DiscreteMeasure):
    """
    Compile the causal-coupling conditions beyond marginals.

    Returns:
        (linear families, bilinear families)

    Raises:
        MuNotCompatibleError: If mu does not factorize along the graph
    """
    _check_shapes(dag, mu, nu)
    _require_compatible(mu, dag, MuNotCompatibleError, "mu")
    linear, bilinear = _compile(causal_statements(dag), mu, nu)
    logger.debug("Compiled causal program: %s linear, %s bilinear families", len(linear), len(bilinear))
    return linear, bilinear


def compile_bicausal(dag: Dag, mu: DiscreteMeasure, nu: DiscreteMeasure):
    """
    Compile the bicausal-coupling conditions beyond marginals.

    Returns:
        (linear families, bilinear families)

    Raises:
        MarginalNotCompatibleError: If mu or nu does not factorize along the graph
    """
    _check_shapes(dag, mu, nu)
    _require_compatible(mu, dag, MarginalNotCompatibleError, "mu")
    _require_compatible(nu, dag, MarginalNotCompatibleError, "nu")
    linear, bilinear = _compile(bicausal_statements(dag), mu, nu)
    logger.debug("Compiled bicausal program: %s linear, %s bilinear families", len(linear), len(bilinear))
    return linear, bilinear


def _check_shapes(dag: Dag, mu: DiscreteMeasure, nu: DiscreteMeasure) -> None:
    if mu.n != dag.n or nu.n != dag.n:
        raise ShapeMismatchError(
            f"graph has {dag.n} vertices but measures have {mu.n} and {nu.n} coordinates"
        )


# ==========================================================================
# PROGRAMS AND EXPORT
# ==========================================================================

@dataclass(frozen=True, eq=False)
class CouplingProgram:
    """Compiled optimization problem over support-pair variables."""

    dag: Dag
    mu: DiscreteMeasure
    nu: DiscreteMeasure
    coupling_class: str
    variables: Tuple[str, ...]
    objective: Optional[np.ndarray]
    linear: Tuple[LinearConstraintFamily, ...]
    bilinear: Tuple[BilinearConstraintFamily, ...]
    linear_only_vertices: Tuple[int, ...] = ()

    @property
    def is_linear(self) -> bool:
        return not self.bilinear

    def linear_program(self, exact: bool = False) -> LinearProgram:
        """LP over the linear families (bilinear families dropped)."""
        n = len(self.variables)
        blocks = [family.matrix(n, exact) for family in self.linear]
        A = np.vstack([a for a, _ in blocks]) if blocks else np.zeros((0, n))
        b = np.concatenate([b for _, b in blocks]) if blocks else np.zeros(0)
        c = self.objective if self.objective is not None else np.zeros(n)
        if exact:
            c = np.array([to_exact(v) for v in c], dtype=object)
        return LinearProgram(c=c, A_eq=A, b_eq=b, names=list(self.variables))

    def to_lp_format(self) -> str:
        """CPLEX LP text of the objective, linear rows and bounds."""
        lines = [f"\\ {self.coupling_class} coupling program, {len(self.variables)} variables",
                 "Minimize"]
        objective = self.objective if self.objective is not None else np.zeros(len(self.variables))
        terms = [f"{_lp_number(c)} {name}" for c, name in zip(objective, self.variables) if c != 0]
        lines.append(" obj: " + (" + ".join(terms) if terms else f"0 {self.variables[0]}"))
        lines.append("Subject To")
        row = 0
        for family in self.linear:
            for eq in family.equations:
                lhs = " + ".join(f"{_lp_number(c)} {self.variables[k]}" for k, c in eq.coefficients)
                lines.append(f" c{row}: {lhs} = {_lp_number(eq.rhs)}")
                row += 1
        lines.append("Bounds")
        lines.extend(f" {name} >= 0" for name in self.variables)
        lines.append("End")
        return "\n".join(lines).replace("+ -", "- ") + "\n"

    def bilinear_sidecar(self) -> Dict[str, Any]:
        """JSON-ready listing of the bilinear equations by variable name."""
        def names(ks):
            return [self.variables[k] for k in ks]
        return {
            'coupling_class': self.coupling_class,
            'form': 'sum(swz) * sum(z) = sum(sz) * sum(wz)',
            'families': [
                {
                    'label': family.label,
                    'vertex': family.vertex,
                    'statement': family.statement.describe() if family.statement else None,
                    'equations': [
                        {'swz': names(eq.swz), 'z': names(eq.z), 'sz': names(eq.sz),
                         'wz': names(eq.wz), 'event': eq.event}
                        for eq in family.equations
                    ],
                }
                for family in self.bilinear
            ],
        }


def _lp_number(value: Number) -> str:
    return f"{float(value):.17g}"


def variable_names(mu: DiscreteMeasure, nu: DiscreteMeasure) -> Tuple[str, ...]:
    return tuple(f"pi_{a}_{b}" for a in range(len(mu)) for b in range(len(nu)))


def build_program(
    dag: Dag,
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    cls: str = BICAUSAL,
    cost: Optional[np.ndarray] = None
) -> CouplingProgram:
    """
    Compile the full program (marginals plus class conditions) for a coupling class.

    Args:
        dag: Graph
        mu, nu: Marginals
        cls: 'Any', 'Causal' or 'Bicausal'
        cost: Optional cost matrix over support pairs (objective)
    """
    validate_choice(cls, COUPLING_CLASSES, "coupling class")
    if cls == ANY:
        linear, bilinear = [], []
        statements: List[CIStatement] = []
    elif cls == CAUSAL:
        linear, bilinear = compile_causal(dag, mu, nu)
        statements = causal_statements(dag)
    else:
        linear, bilinear = compile_bicausal(dag, mu, nu)
        statements = bicausal_statements(dag)
    bilinear_vertices = {st.vertex for st in statements if st.bilinear}
    objective = None
    if cost is not None:
        objective = np.asarray(cost, dtype=float).reshape(-1)
        if objective.shape[0] != len(mu) * len(nu):
            raise ShapeMismatchError("cost matrix does not match the support sizes")
    return CouplingProgram(
        dag=dag,
        mu=mu,
        nu=nu,
        coupling_class=cls,
        variables=variable_names(mu, nu),
        objective=objective,
        linear=(compile_marginals(mu, nu), *linear),
        bilinear=tuple(bilinear),
        linear_only_vertices=tuple(v for v in dag.order if v not in bilinear_vertices),
    )


# ==========================================================================
# KERNEL BLOCKS
# ==========================================================================

@dataclass(frozen=True, eq=False)
class KernelBlock:
    """
    Transportation polytope of one vertex and one (x_pa, y_pa) parent pair.

    Rows are the atoms of X_v charged by mu(. | x_pa), columns the atoms of
    Y_v charged by nu(. | y_pa).
    """

    block_id: int
    vertex: int
    x_parents: Tuple[int, ...]
    y_parents: Tuple[int, ...]
    rows: Tuple[int, ...]
    cols: Tuple[int, ...]
    row_margins: np.ndarray
    col_margins: np.ndarray

    @property
    def shape(self) -> Tuple[int, int]:
        return len(self.rows), len(self.cols)

    @property
    def n_cells(self) -> int:
        return len(self.rows) * len(self.cols)

    def product_kernel(self) -> np.ndarray:
        return np.outer(self.row_margins, self.col_margins)


@dataclass(frozen=True, eq=False)
class KernelBlocks:
    """
    Kernel parametrization of bicausal couplings.

    ``block_of[v - 1][k]`` is the block used by variable k at vertex v and
    ``cell_of[v - 1][k]`` its flat cell (row position * ncols + col position).
    """

    dag: Dag
    mu: DiscreteMeasure
    nu: DiscreteMeasure
    blocks: Tuple[KernelBlock, ...]
    by_vertex: Dict[int, Tuple[int, ...]]
    block_of: np.ndarray
    cell_of: np.ndarray
    exact: bool = False

    def __len__(self) -> int:
        return len(self.blocks)

    @property
    def n_variables(self) -> int:
        return len(self.mu) * len(self.nu)

    def product_selection(self) -> List[np.ndarray]:
        return [block.product_kernel() for block in self.blocks]


def kernel_blocks(dag: Dag, mu: DiscreteMeasure, nu: DiscreteMeasure) -> KernelBlocks:
    """
    One transportation polytope per vertex and parent-tuple pair.

    Blocks exist for every (x_pa, y_pa) in supp(mu_pa) x supp(nu_pa), whether
    or not a given selection reaches them.

    Raises:
        MarginalNotCompatibleError: If mu or nu does not factorize along the graph
    """
    _check_shapes(dag, mu, nu)
    _require_compatible(mu, dag, MarginalNotCompatibleError, "mu")
    _require_compatible(nu, dag, MarginalNotCompatibleError, "nu")
    exact = mu.is_exact and nu.is_exact
    index = _PairIndex(mu, nu)
    blocks: List[KernelBlock] = []
    by_vertex: Dict[int, Tuple[int, ...]] = {}
    block_of = np.full((dag.n, index.n_variables), -1, dtype=int)
    cell_of = np.full((dag.n, index.n_variables), -1, dtype=int)

    for v in dag.order:
        pa = dag.pa(v)
        mech_mu = mechanism(mu, dag, v)
        mech_nu = mechanism(nu, dag, v)
        lookup: Dict[Tuple[Tuple[int, ...], Tuple[int, ...]], KernelBlock] = {}
        ids = []
        for x_pa in sorted(mech_mu.rows):
            for y_pa in sorted(mech_nu.rows):
                rows = mech_mu.row_support(x_pa)
                cols = mech_nu.row_support(y_pa)
                dtype = object if exact else float
                block = KernelBlock(
                    block_id=len(blocks),
                    vertex=v,
                    x_parents=x_pa,
                    y_parents=y_pa,
                    rows=rows,
                    cols=cols,
                    row_margins=np.array([mech_mu.rows[x_pa][a] for a in rows], dtype=dtype),
                    col_margins=np.array([mech_nu.rows[y_pa][b] for b in cols], dtype=dtype),
                )
                lookup[(x_pa, y_pa)] = block
                blocks.append(block)
                ids.append(block.block_id)
        by_vertex[v] = tuple(ids)

        x_keys = index.keys(_xs(pa))
        y_keys = index.keys(_ys(pa))
        xv = index.mu_support[index.xa, v - 1]
        yv = index.nu_support[index.yb, v - 1]
        for k in range(index.n_variables):
            block = lookup[(x_keys[k], y_keys[k])]
            block_of[v - 1, k] = block.block_id
            cell_of[v - 1, k] = block.rows.index(int(xv[k])) * len(block.cols) + block.cols.index(int(yv[k]))

    logger.debug("Kernel parametrization: %s blocks over %s vertices", len(blocks), dag.n)
    return KernelBlocks(
        dag=dag, mu=mu, nu=nu, blocks=tuple(blocks), by_vertex=by_vertex,
        block_of=block_of, cell_of=cell_of, exact=exact,
    )


def validate_kernel(block: KernelBlock, kernel: np.ndarray, tol: float = WEIGHT_TOLERANCE) -> None:
    """
    Raises:
        InfeasibleKernelError: If kernel is not a coupling of the block's margins
    """
    kernel = np.asarray(kernel)
    if kernel.shape != block.shape:
        raise InfeasibleKernelError(
            f"block {block.block_id}: kernel shape {kernel.shape}, expected {block.shape}"
        )
    exact = kernel.dtype == object and all_exact(kernel.flat) and block.row_margins.dtype == object
    slack = 0 if exact else max(tol, 1e-9)
    if np.any(kernel < -slack):
        raise InfeasibleKernelError(f"block {block.block_id}: kernel has negative entries")
    row_gap = max(abs(float(r - m)) for r, m in zip(kernel.sum(axis=1), block.row_margins))
    col_gap = max(abs(float(c - m)) for c, m in zip(kernel.sum(axis=0), block.col_margins))
    if exact:
        bad = any(r != m for r, m in zip(kernel.sum(axis=1), block.row_margins)) or \
            any(c != m for c, m in zip(kernel.sum(axis=0), block.col_margins))
    else:
        bad = max(row_gap, col_gap) > slack
    if bad:
        raise InfeasibleKernelError(
            f"block {block.block_id} (vertex {block.vertex}): kernel margins off by {max(row_gap, col_gap):.3g}"
        )


def flatten_selection(blocks: KernelBlocks, selection: Sequence[np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    """Concatenate block kernels into one flat table with per-block offsets."""
    offsets = np.zeros(len(blocks.blocks), dtype=int)
    total = 0
    for i, block in enumerate(blocks.blocks):
        offsets[i] = total
        total += block.n_cells
    dtype = object if any(np.asarray(k).dtype == object for k in selection) else float
    table = np.concatenate([np.asarray(k, dtype=dtype).reshape(-1) for k in selection]) if selection \
        else np.zeros(0, dtype=dtype)
    return table, offsets


def assemble(blocks: KernelBlocks, selection: Sequence[np.ndarray], validate: bool = True) -> Coupling:
    """
    Multiply per-block kernels along the graph into a coupling.

    pi(x, y) = prod_v kernel_{v, x_pa, y_pa}(x_v, y_v)

    Raises:
        InfeasibleKernelError: If a kernel is not a coupling of its block's margins
    """
    if len(selection) != len(blocks.blocks):
        raise ShapeMismatchError(f"selection has {len(selection)} kernels for {len(blocks.blocks)} blocks")
    if validate:
        for block, kernel in zip(blocks.blocks, selection):
            validate_kernel(block, kernel)
    table, offsets = flatten_selection(blocks, selection)
    positions = offsets[blocks.block_of] + blocks.cell_of
    weights = np.prod(table[positions], axis=0)
    return Coupling.from_flat(blocks.mu, blocks.nu, weights)


# ==========================================================================
# MEMBERSHIP
# ==========================================================================

@dataclass
class MembershipResult:
    """
    Outcome of evaluating a coupling class's conditions on a plan.

    ``family`` and ``vertex`` name the first violated family; ``detail``
    carries the conditioning event and the two conditional probabilities
    that should agree.
    """

    member: bool
    max_residual: float
    family: Optional[str] = None
    vertex: Optional[int] = None
    detail: Dict[str, Any] = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.member

    def to_dict(self) -> Dict[str, Any]:
        return {
            'member': self.member,
            'max_residual': self.max_residual,
            'family': self.family,
            'vertex': self.vertex,
            'detail': {k: json_number(v) if not isinstance(v, (str, dict, list)) else v
                       for k, v in self.detail.items()},
        }


def _statement_residual(st: CIStatement, index: _PairIndex, flat: np.ndarray):
    """Worst scale-normalized residual of one statement on a plan, with its event."""
    positive = np.flatnonzero(np.asarray(flat > 0, dtype=bool))
    weights = flat[positive]
    keys = index.keys(st.s + st.w + st.z, positive)
    ns, nw = len(st.s), len(st.w)
    m_swz: Dict[Tuple, Number] = {}
    m_sz: Dict[Tuple, Number] = {}
    m_wz: Dict[Tuple, Number] = {}
    m_z: Dict[Tuple, Number] = {}
    for key, w in zip(keys, weights):
        s, ww, z = key[:ns], key[ns:ns + nw], key[ns + nw:]
        m_swz[key] = m_swz.get(key, 0) + w
        m_sz[s + z] = m_sz.get(s + z, 0) + w
        m_wz[ww + z] = m_wz.get(ww + z, 0) + w
        m_z[z] = m_z.get(z, 0) + w

    s_by_z: Dict[Tuple, List[Tuple]] = {}
    for sz in m_sz:
        s_by_z.setdefault(sz[ns:], []).append(sz[:ns])
    w_by_z: Dict[Tuple, List[Tuple]] = {}
    for wz in m_wz:
        w_by_z.setdefault(wz[nw:], []).append(wz[:nw])

    worst: Any = 0
    event = None
    for z in sorted(m_z):
        pz = m_z[z]
        for s in sorted(s_by_z.get(z, [])):
            psz = m_sz[s + z]
            for w in sorted(w_by_z.get(z, [])):
                pwz = m_wz[w + z]
                pswz = m_swz.get(s + w + z, 0)
                lhs = pswz * pz
                rhs = psz * pwz
                scale = max(lhs, rhs)
                residual = abs(lhs - rhs) / scale if scale else 0
                if residual > worst:
                    worst = residual
                    event = {
                        'statement': st.describe(),
                        's': index.describe(st.s, s),
                        'w': index.describe(st.w, w),
                        'z': index.describe(st.z, z) if st.z else '',
                        'p_s_given_wz': pswz / pwz,
                        'p_s_given_z': psz / pz,
                    }
    return worst, event


def check_membership(
    pi: Coupling,
    dag: Dag,
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    cls: str = BICAUSAL,
    tol: Optional[float] = None
) -> MembershipResult:
    """
    Evaluate the conditions of a coupling class on a concrete plan.

    Marginal residuals are absolute; conditional-independence residuals are
    |lhs - rhs| / max(lhs, rhs) over events of positive mass.

    Args:
        pi: Plan on supp(mu) x supp(nu)
        dag: Graph
        mu, nu: Marginals
        cls: 'Any', 'Causal' or 'Bicausal'
        tol: Residual tolerance (default 0 for exact plans, 1e-8 otherwise)

    Returns:
        MembershipResult

    Raises:
        ShapeMismatchError: If the plan's supports differ from mu and nu
        MuNotCompatibleError: For 'Causal' when mu is not compatible
        MarginalNotCompatibleError: For 'Bicausal' when mu or nu is not compatible
    """
    validate_choice(cls, COUPLING_CLASSES, "coupling class")
    if pi.mu.support != mu.support or pi.nu.support != nu.support:
        raise ShapeMismatchError("coupling supports do not match the given measures")
    exact = pi.is_exact and mu.is_exact and nu.is_exact
    if tol is None:
        tol = 0 if exact else MEMBERSHIP_TOLERANCE

    flat = pi.flat
    worst = 0.0
    first: Optional[MembershipResult] = None

    negative = float(-min(0, min(flat))) if len(flat) else 0.0
    if negative > tol:
        first = MembershipResult(False, negative, FAMILY_NONNEGATIVITY, None, {'min_weight': -negative})
    worst = max(worst, negative)

    rows = pi.weights.sum(axis=1)
    cols = pi.weights.sum(axis=0)
    for label, sums, target, m in ((FAMILY_MARGINAL_ROW, rows, mu.weights, mu),
                                   (FAMILY_MARGINAL_COLUMN, cols, nu.weights, nu)):
        for idx, (got, want) in enumerate(zip(sums, target)):
            gap = abs(got - want)
            worst = max(worst, float(gap))
            if gap > tol and first is None:
                first = MembershipResult(False, float(gap), label, None, {
                    'atom': [jsonable_atom(a) for a in m.atom_ids(m.support[idx])],
                    'expected': want,
                    'got': got,
                })

    if cls != ANY and not dag.complete:
        if cls == CAUSAL:
            _require_compatible(mu, dag, MuNotCompatibleError, "mu")
            statements = causal_statements(dag)
        else:
            _require_compatible(mu, dag, MarginalNotCompatibleError, "mu")
            _require_compatible(nu, dag, MarginalNotCompatibleError, "nu")
            statements = bicausal_statements(dag)
        index = _PairIndex(mu, nu)
        for st in statements:
            residual, event = _statement_residual(st, index, flat)
            worst = max(worst, float(residual))
            if residual > tol and first is None:
                first = MembershipResult(False, float(residual), st.label, st.vertex, event or {})

    if first is not None:
        first.max_residual = worst
        logger.debug("Coupling fails %s membership: %s at vertex %s (residual %.3g)",
                     cls, first.family, first.vertex, worst)
        return first
    return MembershipResult(True, worst)
