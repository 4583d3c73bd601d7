"""
Dense two-phase revised simplex for equality-form linear programs.

    minimize    c @ x
    subject to  A_eq @ x = b_eq,  x >= 0

The basis inverse is kept explicitly and updated by elementary row
operations. Pivoting follows Bland's rule (smallest-index entering column,
smallest-index leaving variable on ratio ties), so solves are deterministic
and cannot cycle. Exact mode runs the same pivots on Fraction object arrays.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .constants import (
    DEFAULT_TOLERANCE,
    LP_MAX_ITERATIONS,
    LP_REFACTOR_EVERY,
    MAX_EXACT_VARIABLES,
)
from .exceptions import (
    IterationLimitError,
    LPInfeasibleError,
    LPUnboundedError,
    ShapeMismatchError,
)
from .utils import Number, to_exact

logger = logging.getLogger(__name__)


@dataclass
class LinearProgram:
    """
    Equality-form LP with nonnegative variables.

    Attributes:
        c: Objective vector (n,)
        A_eq: Constraint matrix (m, n)
        b_eq: Right-hand side (m,)
        names: Optional variable names (used by LP-format export)
    """

    c: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    names: Optional[List[str]] = None

    def __post_init__(self) -> None:
        self.c = np.asarray(self.c, dtype=object if _is_object(self.c) else float)
        n = self.c.shape[0]
        A = np.asarray(self.A_eq, dtype=object if _is_object(self.A_eq) else float)
        if A.size == 0:
            A = A.reshape(0, n)
        self.A_eq = A
        self.b_eq = np.asarray(self.b_eq, dtype=object if _is_object(self.b_eq) else float).reshape(-1)
        if self.A_eq.ndim != 2 or self.A_eq.shape[1] != n:
            raise ShapeMismatchError(f"A_eq has shape {self.A_eq.shape}, expected (m, {n})")
        if self.A_eq.shape[0] != self.b_eq.shape[0]:
            raise ShapeMismatchError(
                f"A_eq has {self.A_eq.shape[0]} rows but b_eq has {self.b_eq.shape[0]} entries"
            )
        if self.names is not None and len(self.names) != n:
            raise ShapeMismatchError(f"{len(self.names)} names for {n} variables")
        for arr, label in ((self.c, 'c'), (self.A_eq, 'A_eq'), (self.b_eq, 'b_eq')):
            if arr.dtype != object and not np.all(np.isfinite(arr)):
                raise ShapeMismatchError(f"{label} has non-finite entries")

    @property
    def n_variables(self) -> int:
        return self.c.shape[0]

    @property
    def n_constraints(self) -> int:
        return self.A_eq.shape[0]


@dataclass
class LinearProgramResult:
    """Optimal basic solution."""

    value: Number
    x: np.ndarray
    iterations: int
    basis: Tuple[int, ...] = field(default_factory=tuple)
    exact: bool = False


def _is_object(values) -> bool:
    arr = np.asarray(values)
    return arr.dtype == object


class _Simplex:
    """Revised simplex state over an extended matrix [A | I]."""

    def __init__(self, A: np.ndarray, b: np.ndarray, exact: bool, tol: float,
                 max_iterations: int) -> None:
        self.A = A
        self.b = b
        self.exact = exact
        self.tol = 0 if exact else tol
        self.max_iterations = max_iterations
        m = A.shape[0]
        if exact:
            self.B_inv = np.array([[to_exact(int(i == j)) for j in range(m)] for i in range(m)], dtype=object)
        else:
            self.B_inv = np.eye(m)
        self.basis: List[int] = []
        self.x_B = b.copy()
        self.iterations = 0
        self._since_refactor = 0

    def refactor(self) -> None:
        if self.exact:
            return
        B = self.A[:, self.basis]
        self.B_inv = np.linalg.inv(B)
        self.x_B = self.B_inv @ self.b
        self._since_refactor = 0

    def pivot(self, r: int, j: int, u: np.ndarray) -> None:
        pivot_row = self.B_inv[r, :] / u[r]
        self.B_inv = self.B_inv - np.outer(u, pivot_row)
        self.B_inv[r, :] = pivot_row
        x_r = self.x_B[r] / u[r]
        self.x_B = self.x_B - u * x_r
        self.x_B[r] = x_r
        self.basis[r] = j
        self.iterations += 1
        self._since_refactor += 1
        if self.iterations > self.max_iterations:
            raise IterationLimitError(f"simplex exceeded {self.max_iterations} iterations")
        if not self.exact and self._since_refactor >= LP_REFACTOR_EVERY:
            self.refactor()

    def run(self, c: np.ndarray, allowed: int) -> None:
        """Iterate to optimality for costs c, entering only columns below ``allowed``."""
        while True:
            y = c[self.basis] @ self.B_inv
            reduced = c[:allowed] - y @ self.A[:, :allowed]
            in_basis = set(self.basis)
            entering = None
            for j in np.flatnonzero(reduced < -self.tol):
                if int(j) not in in_basis:
                    entering = int(j)
                    break
            if entering is None:
                return
            u = self.B_inv @ self.A[:, entering]
            candidates = np.flatnonzero(u > self.tol)
            if candidates.size == 0:
                raise LPUnboundedError(f"LP is unbounded along column {entering}")
            ratios = [self.x_B[i] / u[i] for i in candidates]
            best = min(ratios)
            ties = [int(i) for i, ratio in zip(candidates, ratios) if ratio <= best + self.tol]
            leave = min(ties, key=lambda i: self.basis[i])
            logger.debug("Pivot %s: column %s enters, basis row %s leaves", self.iterations, entering, leave)
            self.pivot(leave, entering, u)


def solve_lp(
    lp: LinearProgram,
    exact: bool = False,
    tol: float = DEFAULT_TOLERANCE,
    max_iterations: int = LP_MAX_ITERATIONS
) -> LinearProgramResult:
    """
    Solve a linear program to an optimal basic solution.

    Args:
        lp: Program in equality form
        exact: Pivot on Fractions (programs with at most 500 variables)
        tol: Float-mode pivot and feasibility tolerance
        max_iterations: Total pivot limit over both phases

    Returns:
        LinearProgramResult

    Raises:
        LPInfeasibleError: If no feasible point exists
        LPUnboundedError: If the objective is unbounded below
        IterationLimitError: If the pivot limit is reached
    """
    n = lp.n_variables
    m = lp.n_constraints
    if exact and n > MAX_EXACT_VARIABLES:
        logger.warning("LP has %s variables (> %s); solving in floating point", n, MAX_EXACT_VARIABLES)
        exact = False

    if exact:
        convert = np.vectorize(to_exact, otypes=[object])
        c = convert(lp.c) if n else np.zeros(0, dtype=object)
        A = convert(lp.A_eq) if lp.A_eq.size else lp.A_eq.astype(object)
        b = convert(lp.b_eq) if m else np.zeros(0, dtype=object)
    else:
        c = lp.c.astype(float)
        A = lp.A_eq.astype(float)
        b = lp.b_eq.astype(float)

    if m == 0:
        if np.any(c < (0 if exact else -tol)):
            raise LPUnboundedError("LP without constraints has a negative cost coefficient")
        x = np.zeros(n, dtype=object if exact else float)
        return LinearProgramResult(value=0 if exact else 0.0, x=x, iterations=0, exact=exact)

    # rows with negative right-hand side are flipped so artificials start feasible
    sign = np.where(b < 0, -1, 1)
    A = A * sign[:, None]
    b = b * sign

    if exact:
        identity = np.array([[to_exact(int(i == j)) for j in range(m)] for i in range(m)], dtype=object)
    else:
        identity = np.eye(m)
    extended = np.hstack([A, identity])
    simplex = _Simplex(extended, b, exact, tol, max_iterations)
    simplex.basis = list(range(n, n + m))

    zero = to_exact(0) if exact else 0.0
    one = to_exact(1) if exact else 1.0
    phase_one = np.array([zero] * n + [one] * m, dtype=object if exact else float)
    simplex.run(phase_one, allowed=n + m)
    infeasibility = sum(simplex.x_B[r] for r, j in enumerate(simplex.basis) if j >= n)
    threshold = 0 if exact else tol * max(1.0, float(np.max(np.abs(b))))
    if infeasibility > threshold:
        raise LPInfeasibleError(f"LP is infeasible (phase-one residual {float(infeasibility):.3g})")

    # drive artificials out of the basis; rows where none can leave are redundant
    for r in range(m):
        if simplex.basis[r] < n:
            continue
        in_basis = set(simplex.basis)
        row = simplex.B_inv[r, :] @ A
        for j in range(n):
            if j not in in_basis and abs(row[j]) > (0 if exact else tol):
                u = simplex.B_inv @ extended[:, j]
                simplex.pivot(r, j, u)
                break
        else:
            logger.debug("Constraint row %s is redundant", r)

    phase_two = np.concatenate([c, np.array([zero] * m, dtype=object if exact else float)])
    simplex.run(phase_two, allowed=n)

    x = np.array([zero] * n, dtype=object if exact else float)
    for r, j in enumerate(simplex.basis):
        if j < n:
            x[j] = simplex.x_B[r]
    if not exact:
        x[np.abs(x) < tol] = 0.0
        x = np.maximum(x, 0.0)
    value = sum((c[j] * x[j] for j in range(n)), zero)
    logger.debug("LP solved: %s variables, %s rows, %s pivots, value=%s", n, m, simplex.iterations, value)
    return LinearProgramResult(
        value=value if exact else float(value),
        x=x,
        iterations=simplex.iterations,
        basis=tuple(simplex.basis),
        exact=exact,
    )
