"""
Utility functions for the causal-ot package.

Provides numeric helpers shared by the model, solver and report code:
weight parsing, exact/float conversion, tie-aware minimum selection
and JSON-friendly number rendering.
"""

from fractions import Fraction
from numbers import Real
from typing import Any, Hashable, Iterable, List, Sequence, Tuple, Union

import numpy as np

from .constants import TIE_TOLERANCE
from .exceptions import CausalOTValidationError

Number = Union[int, float, Fraction]


def parse_weight(value: Any, param_name: str = "weight") -> Number:
    """
    Parse a probability weight.

    Decimal strings and "p/q" rationals become exact Fractions; ints become
    Fractions; floats are kept as floats.

    Args:
        value: Raw weight (str, int, float or Fraction)
        param_name: Parameter name for error message

    Returns:
        Parsed weight

    Raises:
        CausalOTValidationError: If the value cannot be parsed or is negative
    """
    if isinstance(value, bool):
        raise CausalOTValidationError(f"{param_name} must be a number, got bool")
    if isinstance(value, str):
        try:
            parsed: Number = Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as e:
            raise CausalOTValidationError(
                f"{param_name} is not a decimal or p/q rational: {value!r}"
            ) from e
    elif isinstance(value, (Fraction, int, np.integer)):
        parsed = Fraction(int(value)) if not isinstance(value, Fraction) else value
    elif isinstance(value, Real):
        parsed = float(value)
    else:
        raise CausalOTValidationError(
            f"{param_name} must be a number, got {type(value).__name__}"
        )
    if parsed < 0:
        raise CausalOTValidationError(f"{param_name} must be non-negative, got {value}")
    return parsed


def is_exact_number(value: Any) -> bool:
    """Return True for ints and Fractions (not floats)."""
    return isinstance(value, (Fraction, int, np.integer)) and not isinstance(value, bool)


def all_exact(values: Iterable[Any]) -> bool:
    """Return True when every value is an exact number."""
    return all(is_exact_number(v) for v in values)


def to_exact(value: Number) -> Fraction:
    """Convert a number to a Fraction (floats are converted exactly)."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    return Fraction(float(value))


def first_min_index(values: Sequence[float], tol: float = TIE_TOLERANCE) -> int:
    """
    Index of the first value within tol of the minimum.

    Gives a deterministic lexicographic tie-break for float objectives.

    Raises:
        CausalOTValidationError: If values is empty
    """
    if len(values) == 0:
        raise CausalOTValidationError("values cannot be empty")
    arr = np.asarray(values, dtype=float)
    best = arr.min()
    return int(np.flatnonzero(arr <= best + tol)[0])


def json_number(value: Any) -> Any:
    """
    Render a number for JSON output.

    Fractions with non-unit denominators become "p/q" strings so exact
    results survive serialization; numpy scalars become Python scalars.
    """
    if isinstance(value, Fraction):
        if value.denominator == 1:
            return int(value.numerator)
        return f"{value.numerator}/{value.denominator}"
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def atom_sort_key(atom: Hashable) -> Tuple[int, Any]:
    """
    Sort key for heterogeneous atom ids.

    Numbers sort before strings, tuples after both; keeps canonical orders
    deterministic when spaces mix numeric and symbolic atoms.
    """
    if isinstance(atom, (int, float, Fraction, np.integer, np.floating)) and not isinstance(atom, bool):
        return (0, float(atom))
    if isinstance(atom, str):
        return (1, atom)
    if isinstance(atom, tuple):
        return (2, tuple(atom_sort_key(a) for a in atom))
    return (3, repr(atom))


def jsonable_atom(atom: Hashable) -> Any:
    """Convert an atom id to a JSON-serializable value."""
    if isinstance(atom, tuple):
        return [jsonable_atom(a) for a in atom]
    return json_number(atom)


def normalize_atom(value: Any) -> Hashable:
    """
    Normalize an atom id read from JSON.

    Lists become tuples so ids are hashable; numbers are kept.
    """
    if isinstance(value, list):
        return tuple(normalize_atom(v) for v in value)
    return value


def chunked(total: int, size: int) -> List[Tuple[int, int]]:
    """Split range(total) into consecutive (start, stop) chunks of at most size."""
    return [(start, min(start + size, total)) for start in range(0, total, size)]
