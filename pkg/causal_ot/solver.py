"""
Optimal transport solvers over standard, causal and bicausal couplings.

The Solver engine holds a SolverConfig and dispatches each problem to the
cheapest method that certifies it:

    standard OT          -> LP over the marginal polytope
    linear programs      -> LP over the compiled linear families
    bicausal (bilinear)  -> backward elimination over kernel blocks, with an
                            exhaustive kernel-vertex search on what remains
    beyond caps          -> multi-start block-coordinate descent (upper bound)
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .config import SolverConfig
from .constants import (
    ANY,
    BICAUSAL,
    CAUSAL,
    ENUMERATION_CELLS,
    ENUMERATION_CHUNK,
    GLOBAL_OPTIMAL,
    LOCAL_UPPER_BOUND,
    MAX_BLOCK_DIM,
    MAX_EXACT_VARIABLES,
    METHOD_BCD,
    METHOD_ELIMINATION,
    METHOD_EXHAUSTIVE,
    METHOD_IDENTITY,
    METHOD_LP,
    TIE_TOLERANCE,
    WEIGHT_TOLERANCE,
)
from .exceptions import (
    CausalOTSolverError,
    CausalOTValidationError,
    DimensionCapError,
    EnumerationCapError,
    MarginalNotCompatibleError,
    MuNotCompatibleError,
)
from .lp import LinearProgram, solve_lp
from .metric import GroundCost, cost_matrix
from .model import Dag, DiscreteMeasure, is_g_compatible
from .programs import (
    Coupling,
    KernelBlock,
    KernelBlocks,
    assemble,
    build_program,
    check_membership,
    compile_marginals,
    kernel_blocks,
    variable_names,
)
from .utils import Number, chunked, first_min_index, to_exact

logger = logging.getLogger(__name__)

CostLike = Union[GroundCost, np.ndarray]


@dataclass
class SolveReport:
    """
    Result of an optimal transport solve.

    ``value`` is the transport cost (the p-th power objective). For
    LocalUpperBound results ``lower_bound`` holds a certified lower bound
    when one is available.
    """

    value: float
    coupling: Coupling
    status: str
    method: str
    iterations: int = 0
    residuals: Dict[str, float] = field(default_factory=dict)
    seed: Optional[int] = None
    lower_bound: Optional[float] = None
    restarts: int = 0
    evaluated: int = 0
    selection: Optional[List[np.ndarray]] = field(default=None, repr=False)

    @property
    def is_global(self) -> bool:
        return self.status == GLOBAL_OPTIMAL

    def to_dict(self, emit_plan: bool = False) -> Dict[str, Any]:
        out = {
            'value': self.value,
            'status': self.status,
            'method': self.method,
            'iterations': self.iterations,
            'residuals': dict(self.residuals),
            'seed': self.seed,
            'lower_bound': self.lower_bound,
            'restarts': self.restarts,
            'evaluated': self.evaluated,
        }
        if emit_plan:
            out['coupling'] = self.coupling.to_dict()
        return out


# ==========================================================================
# TRANSPORTATION POLYTOPE VERTICES
# ==========================================================================

Entry = Tuple[int, int, Number]


@lru_cache(maxsize=8192)
def _vertex_supports(rows: Tuple[Tuple[int, Number], ...], cols: Tuple[Tuple[int, Number], ...],
                     tol: float) -> Tuple[Tuple[Entry, ...], ...]:
    """
    Sparse vertices of the transportation polytope with the given margins.

    A vertex has a forest support, so some row or column node is a leaf
    carrying its whole margin in one cell; recursing on every possible leaf
    reaches every vertex. Vertices are keyed by support, which determines them.
    """
    if not rows and not cols:
        return ((),)
    if not rows or not cols:
        return ()
    if len(rows) == 1:
        i = rows[0][0]
        return (tuple((i, j, c) for j, c in cols),)
    if len(cols) == 1:
        j = cols[0][0]
        return (tuple((i, j, r) for i, r in rows),)

    found: Dict[frozenset, Tuple[Entry, ...]] = {}

    def extend(entry: Entry, tails: Iterable[Tuple[Entry, ...]]) -> None:
        for tail in tails:
            vertex = tuple(sorted((entry,) + tail, key=lambda e: (e[0], e[1])))
            key = frozenset((e[0], e[1]) for e in vertex)
            found.setdefault(key, vertex)

    for ri, (i, r) in enumerate(rows):
        rest_rows = rows[:ri] + rows[ri + 1:]
        for cj, (j, c) in enumerate(cols):
            if r <= c + tol:
                left = c - r
                rest_cols = cols[:cj] + (((j, left),) if left > tol else ()) + cols[cj + 1:]
                extend((i, j, r), _vertex_supports(rest_rows, rest_cols, tol))
            if c < r - tol:
                left = r - c
                rest_cols = cols[:cj] + cols[cj + 1:]
                shrunk = rows[:ri] + ((i, left),) + rows[ri + 1:]
                extend((i, j, c), _vertex_supports(shrunk, rest_cols, tol))
    return tuple(found[key] for key in sorted(found, key=lambda s: sorted(s)))


def enumerate_vertices(
    row_margins: Sequence[Number],
    col_margins: Sequence[Number],
    max_dim: int = MAX_BLOCK_DIM,
    tol: float = WEIGHT_TOLERANCE
) -> List[np.ndarray]:
    """
    All vertices of the transportation polytope T(row_margins, col_margins).

    Each vertex has at most rows + cols - 1 nonzero entries. Exact margins
    (Fractions) give exact vertices.

    Args:
        row_margins: Row sums
        col_margins: Column sums (same total)
        max_dim: Largest allowed number of rows or columns

    Returns:
        Vertices as dense arrays, in a deterministic order

    Raises:
        DimensionCapError: If the polytope exceeds max_dim in either direction
        CausalOTValidationError: If the margins have different totals
    """
    rows = tuple(row_margins)
    cols = tuple(col_margins)
    if len(rows) > max_dim or len(cols) > max_dim:
        raise DimensionCapError(
            f"transportation polytope {len(rows)}x{len(cols)} exceeds the {max_dim}x{max_dim} cap"
        )
    exact = all(not isinstance(v, float) for v in rows + cols)
    slack = 0 if exact else tol
    if abs(sum(rows) - sum(cols)) > max(slack, 1e-9 if not exact else 0):
        raise CausalOTValidationError(
            f"margins have different totals: {float(sum(rows))} vs {float(sum(cols))}"
        )
    sparse = _vertex_supports(
        tuple((i, r) for i, r in enumerate(rows) if r > slack),
        tuple((j, c) for j, c in enumerate(cols) if c > slack),
        slack,
    )
    out = []
    for vertex in sparse:
        dense = np.zeros((len(rows), len(cols)), dtype=object if exact else float)
        if exact:
            dense[:] = Fraction(0)
        for i, j, value in vertex:
            dense[i, j] = value
        out.append(dense)
    return out


# ==========================================================================
# COST TERMS FOR ELIMINATION
# ==========================================================================

@dataclass
class _Term:
    """Cost term over the X/Y atoms of a vertex scope, keyed by (x atoms, y atoms)."""

    scope: Tuple[int, ...]
    table: Dict[Tuple[Tuple[int, ...], Tuple[int, ...]], float]

    def value(self, x: Dict[int, int], y: Dict[int, int]) -> float:
        key = (tuple(x[v] for v in self.scope), tuple(y[v] for v in self.scope))
        return self.table[key]


def _cost_terms(cost: Optional[GroundCost], dag: Dag, mu: DiscreteMeasure, nu: DiscreteMeasure,
                matrix: np.ndarray) -> List[_Term]:
    if cost is not None and cost.separable:
        terms = []
        for v in range(1, dag.n + 1):
            per = cost.coordinate_cost(v, mu.spaces[v - 1], nu.spaces[v - 1])
            table = {((a,), (b,)): float(per[a, b]) for a in range(per.shape[0]) for b in range(per.shape[1])}
            terms.append(_Term((v,), table))
        return terms
    scope = tuple(range(1, dag.n + 1))
    table = {
        (tx, ty): float(matrix[a, b])
        for a, tx in enumerate(mu.support)
        for b, ty in enumerate(nu.support)
    }
    return [_Term(scope, table)]


# ==========================================================================
# SOLVER
# ==========================================================================

class Solver:
    """Engine for standard, causal and bicausal optimal transport."""

    def __init__(self, config: Optional[SolverConfig] = None) -> None:
        """
        Initialize the solver.

        Args:
            config: Solver settings (default: built-in defaults layered with
                CAUSAL_OT_* environment variables)
        """
        self.config = config if config is not None else SolverConfig.from_env()

    # ----------------------------------------------------------------------
    # helpers
    # ----------------------------------------------------------------------

    def map_tasks(self, fn: Callable[[Any], Any], items: Sequence[Any]) -> List[Any]:
        if self.config.workers <= 1 or len(items) <= 1:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
            return list(pool.map(fn, items))

    def _arithmetic(self, mu: DiscreteMeasure, nu: DiscreteMeasure) -> Tuple[DiscreteMeasure, DiscreteMeasure]:
        if self.config.exact:
            if len(mu) * len(nu) <= MAX_EXACT_VARIABLES:
                return mu.to_exact(), nu.to_exact()
            logger.warning("Exact mode requested for %s variables (> %s); using floating point",
                           len(mu) * len(nu), MAX_EXACT_VARIABLES)
        return mu.to_float(), nu.to_float()

    @staticmethod
    def cost_matrix(cost: CostLike, mu: DiscreteMeasure, nu: DiscreteMeasure) -> np.ndarray:
        if isinstance(cost, GroundCost):
            return cost_matrix(cost, mu, nu)
        matrix = np.asarray(cost, dtype=float)
        if matrix.shape != (len(mu), len(nu)):
            raise CausalOTValidationError(
                f"cost matrix has shape {matrix.shape}, expected ({len(mu)}, {len(nu)})"
            )
        return matrix

    def finish(self, report: SolveReport, dag: Optional[Dag], mu: DiscreteMeasure,
                nu: DiscreteMeasure, cls: str) -> SolveReport:
        report.residuals['marginal'] = float(report.coupling.marginal_residual())
        if dag is not None:
            membership = check_membership(report.coupling, dag, mu, nu, cls)
            report.residuals['membership'] = float(membership.max_residual)
            if not membership.member:
                logger.warning("%s solve returned a plan failing %s membership (%s at vertex %s, residual %.3g)",
                               cls, cls, membership.family, membership.vertex, membership.max_residual)
        logger.info("Solved %s problem: value=%s status=%s method=%s",
                    cls, report.value, report.status, report.method)
        return report

    def _solve_program_lp(self, lp: LinearProgram, mu: DiscreteMeasure, nu: DiscreteMeasure,
                          matrix: np.ndarray) -> Tuple[Coupling, int]:
        result = solve_lp(lp, exact=self.config.exact, tol=self.config.tol,
                          max_iterations=self.config.lp_max_iterations)
        x = result.x
        if not result.exact:
            x = np.maximum(np.asarray(x, dtype=float), 0.0)
        pi = Coupling.from_flat(mu, nu, x)
        return pi, result.iterations

    # ----------------------------------------------------------------------
    # standard OT
    # ----------------------------------------------------------------------

    def solve_standard_ot(self, mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostLike) -> SolveReport:
        """
        Optimal transport over all couplings of mu and nu.

        Returns:
            SolveReport with status GlobalOptimal

        Raises:
            LPInfeasibleError: If the marginal LP has no feasible point
        """
        mu, nu = self._arithmetic(mu, nu)
        matrix = self.cost_matrix(cost, mu, nu)
        exact = self.config.exact and mu.is_exact and nu.is_exact
        A, b = compile_marginals(mu, nu).matrix(len(mu) * len(nu), exact)
        c = matrix.reshape(-1)
        lp = LinearProgram(c=np.array([to_exact(v) for v in c], dtype=object) if exact else c,
                           A_eq=A, b_eq=b, names=list(variable_names(mu, nu)))
        pi, iterations = self._solve_program_lp(lp, mu, nu, matrix)
        report = SolveReport(
            value=float(pi.cost(matrix)),
            coupling=pi,
            status=GLOBAL_OPTIMAL,
            method=METHOD_LP,
            iterations=iterations,
        )
        return self.finish(report, None, mu, nu, ANY)

    # ----------------------------------------------------------------------
    # kernel-vertex machinery
    # ----------------------------------------------------------------------

    def enumerate_vertices(self, row_margins: Sequence[Number], col_margins: Sequence[Number]) -> List[np.ndarray]:
        """Vertices of a transportation polytope under the configured dimension cap."""
        return enumerate_vertices(row_margins, col_margins, max_dim=self.config.max_block_dim)

    def _block_vertices(self, block: KernelBlock) -> List[np.ndarray]:
        return self.enumerate_vertices(list(block.row_margins), list(block.col_margins))

    def _minimize_block(self, block: KernelBlock, gradient: np.ndarray) -> Tuple[float, np.ndarray]:
        """Minimize a linear objective over a block's transportation polytope."""
        rows, cols = block.shape
        if max(rows, cols) <= self.config.max_block_dim:
            vertices = self._block_vertices(block)
            values = [float(np.sum(gradient * v.astype(float))) for v in vertices]
            best = first_min_index(values)
            return values[best], vertices[best]
        return self._block_lp(block, gradient)

    def _block_lp(self, block: KernelBlock, gradient: np.ndarray,
                  extra_rows: Optional[np.ndarray] = None,
                  extra_rhs: Optional[np.ndarray] = None,
                  free_columns: bool = False) -> Tuple[float, np.ndarray]:
        rows, cols = block.shape
        n = rows * cols
        A = []
        b = []
        for r in range(rows):
            row = np.zeros(n)
            row[r * cols:(r + 1) * cols] = 1
            A.append(row)
            b.append(block.row_margins[r])
        if not free_columns:
            for c in range(cols):
                row = np.zeros(n)
                row[c::cols] = 1
                A.append(row)
                b.append(block.col_margins[c])
        if extra_rows is not None and len(extra_rows):
            A.extend(list(extra_rows))
            b.extend(list(extra_rhs))
        exact = self.config.exact and all(not isinstance(v, float) for v in b)
        if exact:
            A_arr = np.array([[to_exact(v) for v in row] for row in A], dtype=object)
            b_arr = np.array([to_exact(v) for v in b], dtype=object)
        else:
            A_arr = np.asarray(A, dtype=float)
            b_arr = np.asarray([float(v) for v in b], dtype=float)
        lp = LinearProgram(c=gradient.reshape(-1).astype(float), A_eq=A_arr, b_eq=b_arr)
        result = solve_lp(lp, exact=exact, tol=self.config.tol, max_iterations=self.config.lp_max_iterations)
        return float(result.value), np.asarray(result.x).reshape(rows, cols)

    def _vertex_layout(self, blocks: KernelBlocks) -> List[Tuple[int, int, np.ndarray, np.ndarray]]:
        """(vertex, block, variables, cells) for every block that carries variables."""
        layout = []
        for v in blocks.dag.order:
            for beta in blocks.by_vertex[v]:
                ks = np.flatnonzero(blocks.block_of[v - 1] == beta)
                if ks.size:
                    layout.append((v, beta, ks, blocks.cell_of[v - 1, ks]))
        return layout

    def _search(
        self,
        blocks: KernelBlocks,
        c: np.ndarray,
        fixed: Optional[Dict[int, np.ndarray]] = None
    ) -> Tuple[List[np.ndarray], int]:
        """
        Exhaustive minimization over per-block vertex selections.

        Blocks in ``fixed`` keep their kernel. Ties go to the lexicographically
        smallest selection index (first free block most significant).

        Returns:
            (selection, number of selections evaluated)

        Raises:
            EnumerationCapError: If the number of selections exceeds max_enum
            DimensionCapError: If a free block exceeds the dimension cap
        """
        fixed = fixed or {}
        free = [beta for beta in range(len(blocks.blocks)) if beta not in fixed]
        counts: List[int] = []
        total = 1
        for beta in free:
            block = blocks.blocks[beta]
            if max(block.shape) > self.config.max_block_dim:
                raise DimensionCapError(
                    f"block {beta} ({block.shape[0]}x{block.shape[1]}) exceeds the dimension cap"
                )
        vertices = {beta: self._block_vertices(blocks.blocks[beta]) for beta in free}
        for beta in free:
            counts.append(len(vertices[beta]))
            total *= len(vertices[beta])
            if total > self.config.max_enum:
                raise EnumerationCapError(
                    f"kernel-vertex selections exceed the cap of {self.config.max_enum}"
                )
        position = {beta: j for j, beta in enumerate(free)}
        tables = {beta: np.array([v.astype(float).reshape(-1) for v in vertices[beta]]) for beta in free}
        fixed_flat = {beta: np.asarray(k).astype(float).reshape(-1) for beta, k in fixed.items()}
        layout = self._vertex_layout(blocks)
        n_vars = blocks.n_variables
        radix = np.array(counts, dtype=np.int64)
        c = np.asarray(c, dtype=float).reshape(-1)

        def evaluate(bounds: Tuple[int, int]) -> Tuple[float, int]:
            start, stop = bounds
            rem = np.arange(start, stop, dtype=np.int64)
            digits = np.empty((rem.size, len(free)), dtype=np.int64)
            for j in range(len(free) - 1, -1, -1):
                digits[:, j] = rem % radix[j]
                rem = rem // radix[j]
            weights = np.ones((stop - start, n_vars))
            for _, beta, ks, cells in layout:
                if beta in fixed_flat:
                    weights[:, ks] *= fixed_flat[beta][cells]
                else:
                    weights[:, ks] *= tables[beta][digits[:, position[beta]]][:, cells]
            values = weights @ c
            best = first_min_index(values)
            return float(values[best]), start + best

        size = max(1, min(ENUMERATION_CHUNK, ENUMERATION_CELLS // max(n_vars, 1)))
        results = self.map_tasks(evaluate, chunked(total, size))
        best_value = min(value for value, _ in results)
        winner = min(index for value, index in results if value <= best_value + TIE_TOLERANCE)

        digits = []
        rem = winner
        for count in reversed(counts):
            digits.append(rem % count)
            rem //= count
        digits.reverse()
        selection = []
        for beta in range(len(blocks.blocks)):
            if beta in fixed:
                selection.append(fixed[beta])
            else:
                selection.append(vertices[beta][digits[position[beta]]])
        logger.debug("Exhaustive search: %s selections over %s free blocks, best=%s",
                     total, len(free), best_value)
        return selection, total

    def _report(self, blocks: KernelBlocks, selection: List[np.ndarray], matrix: np.ndarray,
                status: str, method: str, **kwargs: Any) -> SolveReport:
        pi = assemble(blocks, selection)
        return SolveReport(
            value=float(pi.cost(matrix)),
            coupling=pi,
            status=status,
            method=method,
            selection=selection,
            **kwargs,
        )

    # ----------------------------------------------------------------------
    # bicausal solvers
    # ----------------------------------------------------------------------

    def solve_bicausal_exhaustive(self, blocks: KernelBlocks, cost: CostLike) -> SolveReport:
        """
        Global bicausal optimum by evaluating every per-block vertex selection.

        The objective is multilinear in the block kernels, so some selection
        of block vertices is optimal.

        Returns:
            SolveReport with status GlobalOptimal

        Raises:
            EnumerationCapError: If the selection count exceeds max_enum
        """
        matrix = self.cost_matrix(cost, blocks.mu, blocks.nu)
        selection, evaluated = self._search(blocks, matrix)
        report = self._report(blocks, selection, matrix, GLOBAL_OPTIMAL, METHOD_EXHAUSTIVE,
                              evaluated=evaluated)
        return self.finish(report, blocks.dag, blocks.mu, blocks.nu, BICAUSAL)

    def solve_bicausal_elimination(self, blocks: KernelBlocks, cost: CostLike) -> SolveReport:
        """
        Global bicausal optimum by backward elimination over sink vertices.

        A sink whose cost terms only involve itself and its parents is solved
        block by block; the block optima become a cost term on the parents.
        Vertices that cannot be eliminated are searched exhaustively with the
        eliminated kernels fixed.

        Returns:
            SolveReport with status GlobalOptimal

        Raises:
            EnumerationCapError: If the remaining search exceeds max_enum
        """
        dag, mu, nu = blocks.dag, blocks.mu, blocks.nu
        matrix = self.cost_matrix(cost, mu, nu)
        terms = _cost_terms(cost if isinstance(cost, GroundCost) else None, dag, mu, nu, matrix)
        remaining = list(dag.order)
        chosen: Dict[int, np.ndarray] = {}

        while remaining:
            target = None
            for v in reversed(remaining):
                if any(child in remaining for child in dag.children(v)):
                    continue
                allowed = set(dag.pa(v)) | {v}
                if all(set(t.scope) <= allowed for t in terms if v in t.scope):
                    target = v
                    break
            if target is None:
                break
            v = target
            pa = dag.pa(v)
            involved = [t for t in terms if v in t.scope]
            terms = [t for t in terms if v not in t.scope]
            table = {}
            for beta in blocks.by_vertex[v]:
                block = blocks.blocks[beta]
                x = dict(zip(pa, block.x_parents))
                y = dict(zip(pa, block.y_parents))
                gradient = np.zeros(block.shape)
                for r, a in enumerate(block.rows):
                    x[v] = a
                    for col, b in enumerate(block.cols):
                        y[v] = b
                        gradient[r, col] = sum(t.value(x, y) for t in involved)
                value, kernel = self._minimize_block(block, gradient)
                chosen[beta] = kernel
                table[(tuple(block.x_parents), tuple(block.y_parents))] = value
            terms.append(_Term(pa, table))
            remaining.remove(v)
            logger.debug("Eliminated vertex %s (%s blocks)", v, len(blocks.by_vertex[v]))

        if remaining:
            logger.debug("Elimination stopped with %s vertices left; searching exhaustively", len(remaining))
            selection, evaluated = self._search(blocks, matrix, fixed=chosen)
            method = METHOD_EXHAUSTIVE if not chosen else METHOD_ELIMINATION
        else:
            selection = [chosen[beta] for beta in range(len(blocks.blocks))]
            evaluated = 1
            method = METHOD_ELIMINATION
        report = self._report(blocks, selection, matrix, GLOBAL_OPTIMAL, method, evaluated=evaluated)
        return self.finish(report, dag, mu, nu, BICAUSAL)

    def _random_selection(self, blocks: KernelBlocks, rng: np.random.Generator) -> List[np.ndarray]:
        selection = []
        for block in blocks.blocks:
            if max(block.shape) <= self.config.max_block_dim:
                vertices = self._block_vertices(block)
                selection.append(vertices[int(rng.integers(len(vertices)))])
            else:
                selection.append(block.product_kernel())
        return selection

    def _factors(self, blocks: KernelBlocks, selection: Sequence[np.ndarray]) -> np.ndarray:
        """Per-vertex kernel factors of every variable, shape (n, variables)."""
        factors = np.ones((blocks.dag.n, blocks.n_variables))
        for v, beta, ks, cells in self._vertex_layout(blocks):
            factors[v - 1, ks] = np.asarray(selection[beta]).astype(float).reshape(-1)[cells]
        return factors

    def _descend(
        self,
        blocks: KernelBlocks,
        c: np.ndarray,
        selection: List[np.ndarray],
        step: Callable[[KernelBlock, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray],
                       Optional[Tuple[float, np.ndarray]]]
    ) -> Tuple[float, List[np.ndarray], int]:
        """
        Block-coordinate descent sweeps in topological order.

        ``step(block, gradient, factors, ks, cells, others)`` returns an
        improved (value, kernel) for one block or None.
        """
        selection = list(selection)
        factors = self._factors(blocks, selection)
        layout = self._vertex_layout(blocks)
        sweeps = 0
        for sweeps in range(1, self.config.bcd_max_sweeps + 1):
            improved = False
            for v, beta, ks, cells in layout:
                block = blocks.blocks[beta]
                others = np.prod(np.delete(factors, v - 1, axis=0), axis=0)
                gradient = np.zeros(block.n_cells)
                np.add.at(gradient, cells, c[ks] * others[ks])
                current = float(gradient @ np.asarray(selection[beta]).astype(float).reshape(-1))
                proposal = step(block, gradient.reshape(block.shape), factors, ks, cells, others)
                if proposal is None:
                    continue
                value, kernel = proposal
                if value < current - self.config.bcd_improvement:
                    selection[beta] = kernel
                    factors[v - 1, ks] = np.asarray(kernel).astype(float).reshape(-1)[cells]
                    improved = True
            if not improved:
                break
        value = float(np.prod(factors, axis=0) @ c)
        return value, selection, sweeps

    def solve_bicausal_bcd(
        self,
        blocks: KernelBlocks,
        cost: CostLike,
        restarts: Optional[int] = None,
        seed: Optional[int] = None
    ) -> SolveReport:
        """
        Upper bound on the bicausal optimum by multi-start block-coordinate descent.

        Restart 0 starts from the product kernels, the others from seeded
        uniform choices of block vertices. Each sweep visits the blocks in
        topological order and replaces a kernel by the best vertex of its
        polytope with all other kernels fixed.

        Args:
            blocks: Kernel parametrization
            cost: Ground cost or cost matrix
            restarts: Number of starts (default from config)
            seed: Seed for the random starts (default from config)

        Returns:
            SolveReport with status LocalUpperBound
        """
        restarts = self.config.restarts if restarts is None else restarts
        seed = self.config.seed if seed is None else seed
        matrix = self.cost_matrix(cost, blocks.mu, blocks.nu)
        c = matrix.reshape(-1)
        streams = np.random.SeedSequence(seed).spawn(restarts)

        def step(block, gradient, *_):
            return self._minimize_block(block, gradient)

        def run(index: int) -> Tuple[float, List[np.ndarray], int]:
            if index == 0:
                start = [block.product_kernel() for block in blocks.blocks]
            else:
                start = self._random_selection(blocks, np.random.default_rng(streams[index]))
            value, selection, sweeps = self._descend(blocks, c, start, step)
            logger.debug("BCD restart %s: value=%s after %s sweeps", index, value, sweeps)
            return value, selection, sweeps

        runs = self.map_tasks(run, list(range(restarts)))
        best = first_min_index([value for value, _, _ in runs])
        _, selection, _ = runs[best]
        report = self._report(
            blocks, selection, matrix, LOCAL_UPPER_BOUND, METHOD_BCD,
            iterations=sum(sweeps for _, _, sweeps in runs),
            seed=seed, restarts=restarts, evaluated=restarts,
        )
        return self.finish(report, blocks.dag, blocks.mu, blocks.nu, BICAUSAL)

    def _require_compatible(self, dag: Dag, m: DiscreteMeasure, error: type, name: str) -> None:
        result = is_g_compatible(m, dag)
        if not result.compatible:
            raise error(f"{name} is not compatible with the graph (vertex {result.vertex})")

    def solve_bicausal(self, dag: Dag, mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostLike) -> SolveReport:
        """
        Optimal transport over bicausal couplings.

        Identical measures give the diagonal plan; the Full graph is standard
        OT; programs without bilinear families are solved as LPs; otherwise
        elimination with an exhaustive remainder, and block-coordinate descent
        when the enumeration caps are exceeded.

        Raises:
            MarginalNotCompatibleError: If mu or nu is not compatible with the graph
        """
        mu, nu = self._arithmetic(mu, nu)
        if dag.complete:
            report = self.solve_standard_ot(mu, nu, cost)
            return self.finish(report, dag, report.coupling.mu, report.coupling.nu, BICAUSAL)
        self._require_compatible(dag, mu, MarginalNotCompatibleError, "mu")
        self._require_compatible(dag, nu, MarginalNotCompatibleError, "nu")
        matrix = self.cost_matrix(cost, mu, nu)

        if mu.spaces == nu.spaces and mu.support == nu.support and mu.weights == nu.weights \
                and np.all(np.diag(matrix) == 0):
            pi = Coupling.identity(mu)
            pi = Coupling(mu=mu, nu=nu, weights=pi.weights)
            report = SolveReport(value=float(pi.cost(matrix)), coupling=pi,
                                 status=GLOBAL_OPTIMAL, method=METHOD_IDENTITY)
            return self.finish(report, dag, mu, nu, BICAUSAL)

        program = build_program(dag, mu, nu, BICAUSAL, matrix)
        if program.is_linear:
            pi, iterations = self._solve_program_lp(program.linear_program(self.config.exact), mu, nu, matrix)
            report = SolveReport(value=float(pi.cost(matrix)), coupling=pi, status=GLOBAL_OPTIMAL,
                                 method=METHOD_LP, iterations=iterations)
            return self.finish(report, dag, mu, nu, BICAUSAL)

        blocks = kernel_blocks(dag, mu, nu)
        try:
            return self.solve_bicausal_elimination(blocks, cost if isinstance(cost, GroundCost) else matrix)
        except (EnumerationCapError, DimensionCapError) as e:
            logger.warning("Global bicausal solve out of reach (%s); falling back to block-coordinate descent", e)
            return self.solve_bicausal_bcd(blocks, matrix)

    # ----------------------------------------------------------------------
    # causal solver
    # ----------------------------------------------------------------------

    def _causal_step(self, blocks: KernelBlocks, c: np.ndarray):
        """One-sided block step: free column law, nu-marginal kept as equalities."""
        yb = np.tile(np.arange(len(blocks.nu)), len(blocks.mu))
        nu_weights = np.array([float(w) for w in blocks.nu.weights])

        def step(block, gradient, factors, ks, cells, others):
            pi = np.prod(factors, axis=0)
            in_block = np.zeros(blocks.n_variables, dtype=bool)
            in_block[ks] = True
            rows, rhs = [], []
            for b in np.unique(yb[ks]):
                mine = ks[yb[ks] == b]
                row = np.zeros(block.n_cells)
                np.add.at(row, blocks.cell_of[block.vertex - 1, mine], others[mine])
                rest = pi[(yb == b) & ~in_block].sum()
                rows.append(row)
                rhs.append(nu_weights[b] - rest)
            try:
                return self._block_lp(block, gradient, np.array(rows), np.array(rhs), free_columns=True)
            except CausalOTSolverError as e:
                logger.debug("Causal block step skipped for block %s: %s", block.block_id, e)
                return None

        return step

    def solve_causal(self, dag: Dag, mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostLike) -> SolveReport:
        """
        Optimal transport over causal couplings from mu to nu.

        Without bilinear families (Full and Linear graphs, or vacuous
        conditions) the problem is an LP and is solved globally. Otherwise
        the report carries an upper bound from one-sided kernel descent,
        started at the bicausal optimum, and the LP relaxation value as
        ``lower_bound``; the status becomes GlobalOptimal when they meet.

        Raises:
            MuNotCompatibleError: If mu is not compatible with the graph
            MarginalNotCompatibleError: If the upper-bound path needs a
                compatible nu and it is not
        """
        mu, nu = self._arithmetic(mu, nu)
        if dag.complete:
            report = self.solve_standard_ot(mu, nu, cost)
            return self.finish(report, dag, report.coupling.mu, report.coupling.nu, CAUSAL)
        self._require_compatible(dag, mu, MuNotCompatibleError, "mu")
        matrix = self.cost_matrix(cost, mu, nu)
        program = build_program(dag, mu, nu, CAUSAL, matrix)
        pi, iterations = self._solve_program_lp(program.linear_program(self.config.exact), mu, nu, matrix)
        relaxed = float(pi.cost(matrix))
        if program.is_linear:
            report = SolveReport(value=relaxed, coupling=pi, status=GLOBAL_OPTIMAL,
                                 method=METHOD_LP, iterations=iterations)
            return self.finish(report, dag, mu, nu, CAUSAL)

        bicausal = self.solve_bicausal(dag, mu, nu, cost)
        if bicausal.value <= relaxed + self.config.tol or bicausal.selection is None:
            status = GLOBAL_OPTIMAL if bicausal.value <= relaxed + self.config.tol else LOCAL_UPPER_BOUND
            report = SolveReport(value=bicausal.value, coupling=bicausal.coupling, status=status,
                                 method=bicausal.method, iterations=bicausal.iterations,
                                 lower_bound=relaxed, evaluated=bicausal.evaluated)
            return self.finish(report, dag, mu, nu, CAUSAL)

        blocks = kernel_blocks(dag, mu, nu)
        c = matrix.reshape(-1)
        step = self._causal_step(blocks, c)
        restarts = self.config.causal_restarts
        streams = np.random.SeedSequence(self.config.seed).spawn(restarts)

        def run(index: int) -> Tuple[float, List[np.ndarray], int]:
            if index == 0:
                start = list(bicausal.selection)
            else:
                start = self._random_selection(blocks, np.random.default_rng(streams[index]))
            return self._descend(blocks, c, start, step)

        runs = self.map_tasks(run, list(range(restarts)))
        best = first_min_index([value for value, _, _ in runs])
        _, selection, _ = runs[best]
        coupling = assemble(blocks, selection, validate=False)
        value = float(coupling.cost(matrix))
        status = GLOBAL_OPTIMAL if value <= relaxed + self.config.tol else LOCAL_UPPER_BOUND
        report = SolveReport(
            value=value,
            coupling=coupling,
            status=status,
            method=METHOD_BCD,
            iterations=sum(sweeps for _, _, sweeps in runs),
            seed=self.config.seed,
            lower_bound=relaxed,
            restarts=restarts,
            evaluated=restarts,
        )
        return self.finish(report, dag, mu, nu, CAUSAL)

    def solve(self, dag: Optional[Dag], mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostLike,
              mode: str = BICAUSAL) -> SolveReport:
        """Dispatch on a coupling class ('Any'/'standard', 'Causal', 'Bicausal')."""
        key = mode.lower()
        if key in ('any', 'standard'):
            return self.solve_standard_ot(mu, nu, cost)
        if dag is None:
            raise CausalOTValidationError(f"{mode} transport needs a graph")
        if key == 'causal':
            return self.solve_causal(dag, mu, nu, cost)
        if key == 'bicausal':
            return self.solve_bicausal(dag, mu, nu, cost)
        raise CausalOTValidationError(f"mode must be one of standard, causal, bicausal; got {mode!r}")
