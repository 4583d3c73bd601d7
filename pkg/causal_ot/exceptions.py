"""
Custom exception classes for the causal-ot package.

These exceptions provide clear, structured error handling for invalid
models, unmet compatibility preconditions, solver failures and
certified checks that did not hold.
"""

from typing import Optional, Sequence


class CausalOTError(Exception):
    """Base exception for all causal-ot errors."""
    pass


# ==========================================================================
# INPUT VALIDATION
# ==========================================================================

class CausalOTValidationError(CausalOTError):
    """
    Input validation errors.

    Raised when method parameters fail validation checks
    (e.g., empty subsets, out-of-range vertices, malformed matrices).
    """
    pass


class InvalidVertexError(CausalOTValidationError):
    """Raised when an edge or coordinate references a vertex outside 1..n."""
    pass


class EmptySubsetError(CausalOTValidationError):
    """Raised when a coordinate subset is required to be non-empty."""
    pass


class CycleDetectedError(CausalOTValidationError):
    """
    Directed cycle in a graph that must be acyclic.

    Raised by DAG validation; ``cycle`` holds the offending edges
    in the caller's labels.
    """

    def __init__(self, message: str, cycle: Optional[Sequence] = None) -> None:
        super().__init__(message)
        self.cycle = list(cycle or [])


class ShapeMismatchError(CausalOTValidationError):
    """
    Dimension or support mismatch.

    Raised when a coupling's supports do not match the measures it is
    checked against, or when matrix shapes disagree.
    """
    pass


class NoEmbeddingError(CausalOTValidationError):
    """Raised when an operation needs real embeddings that a space lacks."""
    pass


class AsymmetricInputError(CausalOTValidationError):
    """Raised when a distance matrix is not symmetric."""
    pass


class NegativeEntryError(CausalOTValidationError):
    """Raised when a distance matrix has negative entries."""
    pass


class MissingPairError(CausalOTValidationError):
    """Raised when a joint cost matrix lacks an entry for a pair of tuples."""
    pass


class NotASubgraphError(CausalOTValidationError):
    """Raised when an edge-monotonicity check gets graphs that are not nested."""
    pass


class DagMismatchError(CausalOTValidationError):
    """Raised when two structural causal models live on different graphs or spaces."""
    pass


class MechanismDomainError(CausalOTValidationError):
    """
    Mechanism evaluated outside its domain.

    Raised when a tabulated mechanism has no entry for a
    (parent tuple, noise atom) input, or returns an unknown atom.
    """
    pass


# ==========================================================================
# COMPATIBILITY PRECONDITIONS
# ==========================================================================

class CausalOTCompatibilityError(CausalOTError):
    """
    G-compatibility precondition errors.

    Raised when an operation requires a measure that factorizes
    along the graph and the supplied one does not.
    """
    pass


class MuNotCompatibleError(CausalOTCompatibilityError):
    """Raised when the source measure is not G-compatible."""
    pass


class MarginalNotCompatibleError(CausalOTCompatibilityError):
    """Raised when either marginal is not G-compatible."""
    pass


class NotCompatibleError(CausalOTCompatibilityError):
    """Raised when a single model measure is not G-compatible."""
    pass


# ==========================================================================
# SOLVER
# ==========================================================================

class CausalOTSolverError(CausalOTError):
    """
    Solver errors.

    Raised when an optimization problem cannot be solved or
    exceeds a configured cap.
    """
    pass


class LPInfeasibleError(CausalOTSolverError):
    """Raised when a linear program has no feasible point."""
    pass


class LPUnboundedError(CausalOTSolverError):
    """Raised when a linear program is unbounded below."""
    pass


class IterationLimitError(CausalOTSolverError):
    """Raised when the simplex method exceeds its iteration limit."""
    pass


class EnumerationCapError(CausalOTSolverError):
    """Raised when exhaustive kernel-vertex enumeration exceeds the configured cap."""
    pass


class DimensionCapError(CausalOTSolverError):
    """Raised when a transportation polytope is too large to enumerate."""
    pass


class SupportExplosionError(CausalOTSolverError):
    """Raised when an SCM pushforward would enumerate too many noise combinations."""
    pass


class InfeasibleKernelError(CausalOTSolverError):
    """Raised when a selected kernel is not a coupling of its block's margins."""
    pass


class NonGlobalStatusError(CausalOTSolverError):
    """
    Non-certified solver status.

    Raised when a check needs globally optimal values but a solve
    only produced an upper bound.
    """
    pass


# ==========================================================================
# INFERENCE
# ==========================================================================

class CausalOTInferenceError(CausalOTError):
    """Base exception for treatment-effect computations."""
    pass


class MissingArmError(CausalOTInferenceError):
    """
    Undefined interventional mean.

    Raised when a parent tuple of the treatment has positive mass
    but one treatment arm has none.
    """
    pass


class GateFailedError(CausalOTInferenceError):
    """Raised when a model's propensity score leaves [delta, 1 - delta]."""
    pass


# ==========================================================================
# CERTIFIED CHECKS
# ==========================================================================

class CausalOTAssertionError(CausalOTError):
    """
    Certified check failures.

    Raised when an inequality that must hold, or a reference value
    that must be reproduced, does not.
    """
    pass


class BoundViolationError(CausalOTAssertionError):
    """Raised when a certified upper bound is exceeded."""
    pass


class ReproductionMismatchError(CausalOTAssertionError):
    """Raised when a bundled reference value is not reproduced."""
    pass


class InterpolationCompatibilityError(CausalOTAssertionError):
    """Raised when an interpolant outside the exception set is not G-compatible."""
    pass


# ==========================================================================
# CONFIGURATION AND FILES
# ==========================================================================

class CausalOTConfigError(CausalOTError):
    """
    Configuration errors.

    Raised when a configuration file or environment variable
    holds a malformed value.
    """
    pass


class CausalOTFileError(CausalOTError):
    """
    File operation errors.

    Raised when model, graph or matrix files are missing or
    cannot be parsed.
    """
    pass
