"""
Input validation utilities for the causal-ot package.

Provides reusable validation functions that raise descriptive
CausalOTValidationError exceptions when validation fails.
"""

import os
from numbers import Real
from typing import Any, List, Sequence

import numpy as np

from .exceptions import CausalOTValidationError


def validate_positive_int(value: Any, param_name: str) -> None:
    """
    Validate that a value is a positive integer.

    Args:
        value: Value to validate
        param_name: Parameter name for error message

    Raises:
        CausalOTValidationError: If value is not a positive integer
    """
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
        raise CausalOTValidationError(
            f"{param_name} must be an integer, got {type(value).__name__}"
        )
    if value <= 0:
        raise CausalOTValidationError(
            f"{param_name} must be positive, got {value}"
        )


def validate_non_negative_int(value: Any, param_name: str) -> None:
    """
    Validate that a value is a non-negative integer.

    Args:
        value: Value to validate
        param_name: Parameter name for error message

    Raises:
        CausalOTValidationError: If value is not a non-negative integer
    """
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
        raise CausalOTValidationError(
            f"{param_name} must be an integer, got {type(value).__name__}"
        )
    if value < 0:
        raise CausalOTValidationError(
            f"{param_name} must be non-negative, got {value}"
        )


def validate_positive_float(value: Any, param_name: str) -> None:
    """
    Validate that a value is a positive real number.

    Args:
        value: Value to validate
        param_name: Parameter name for error message

    Raises:
        CausalOTValidationError: If value is not a positive number
    """
    if not isinstance(value, Real) or isinstance(value, bool):
        raise CausalOTValidationError(
            f"{param_name} must be a number, got {type(value).__name__}"
        )
    if not value > 0:
        raise CausalOTValidationError(
            f"{param_name} must be positive, got {value}"
        )


def validate_non_negative_float(value: Any, param_name: str) -> None:
    """
    Validate that a value is a non-negative real number.

    Args:
        value: Value to validate
        param_name: Parameter name for error message

    Raises:
        CausalOTValidationError: If value is not a non-negative number
    """
    if not isinstance(value, Real) or isinstance(value, bool):
        raise CausalOTValidationError(
            f"{param_name} must be a number, got {type(value).__name__}"
        )
    if not value >= 0:
        raise CausalOTValidationError(
            f"{param_name} must be non-negative, got {value}"
        )


def validate_unit_interval(value: Any, param_name: str) -> None:
    """
    Validate that a value lies in [0, 1].

    Raises:
        CausalOTValidationError: If value is not a number in [0, 1]
    """
    validate_non_negative_float(value, param_name)
    if value > 1:
        raise CausalOTValidationError(
            f"{param_name} must be at most 1, got {value}"
        )


def validate_list_not_empty(value: Any, param_name: str) -> None:
    """
    Validate that a value is a non-empty list or tuple.

    Args:
        value: Value to validate
        param_name: Parameter name for error message

    Raises:
        CausalOTValidationError: If value is not a non-empty sequence
    """
    if not isinstance(value, (list, tuple)):
        raise CausalOTValidationError(
            f"{param_name} must be a list, got {type(value).__name__}"
        )
    if not value:
        raise CausalOTValidationError(f"{param_name} cannot be empty")


def validate_file_exists(file_path: str, param_name: str = "file_path") -> None:
    """
    Validate that a file exists at the given path.

    Args:
        file_path: Path to file
        param_name: Parameter name for error message

    Raises:
        CausalOTValidationError: If file does not exist
    """
    if not isinstance(file_path, (str, os.PathLike)):
        raise CausalOTValidationError(
            f"{param_name} must be a path, got {type(file_path).__name__}"
        )
    if not os.path.isfile(file_path):
        raise CausalOTValidationError(
            f"{param_name} does not exist: {file_path}"
        )


def validate_probability_vector(
    values: Sequence[Any],
    param_name: str,
    tol: float = 1e-12
) -> None:
    """
    Validate that values are non-negative and sum to one.

    Exact (Fraction) inputs must sum to exactly one; floats within tol.

    Raises:
        CausalOTValidationError: If an entry is negative or the sum is off
    """
    if len(values) == 0:
        raise CausalOTValidationError(f"{param_name} cannot be empty")
    for v in values:
        if v < 0:
            raise CausalOTValidationError(
                f"{param_name} has a negative entry: {v}"
            )
    total = sum(values)
    if all(not isinstance(v, float) for v in values):
        if total != 1:
            raise CausalOTValidationError(
                f"{param_name} must sum to 1, got {total}"
            )
    elif abs(float(total) - 1.0) > tol:
        raise CausalOTValidationError(
            f"{param_name} must sum to 1, got {float(total)!r}"
        )


def validate_square_matrix(matrix: Any, param_name: str) -> None:
    """
    Validate that a value is a non-empty square two-dimensional array.

    Raises:
        CausalOTValidationError: If the array is not square
    """
    shape = np.shape(matrix)
    if len(shape) != 2 or shape[0] != shape[1] or shape[0] == 0:
        raise CausalOTValidationError(
            f"{param_name} must be a non-empty square matrix, got shape {shape}"
        )


def validate_choice(value: Any, choices: List[Any], param_name: str) -> None:
    """
    Validate that a value is one of the allowed choices.

    Raises:
        CausalOTValidationError: If value is not in choices
    """
    if value not in choices:
        raise CausalOTValidationError(
            f"{param_name} must be one of {choices}, got {value!r}"
        )
