"""
Solver configuration.

Settings are resolved from, in increasing precedence: built-in defaults,
an optional TOML or JSON configuration file, environment variables and
explicit overrides (the CLI flags).

Environment variables:
    CAUSAL_OT_WORKERS   - Worker threads for enumeration, restarts and suites
    CAUSAL_OT_SEED      - Seed for randomized restarts
    CAUSAL_OT_RESTARTS  - Bicausal BCD restarts
    CAUSAL_OT_MAX_ENUM  - Cap on kernel-vertex combinations
    CAUSAL_OT_TOL       - Solver tolerance
    CAUSAL_OT_EXACT     - Exact rational arithmetic ("1", "true", "yes")
"""

import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass
from typing import Any, Callable, Dict, Mapping, Optional

from .constants import (
    BCD_IMPROVEMENT,
    BCD_MAX_SWEEPS,
    CONFIG_SECTION,
    DEFAULT_CAUSAL_RESTARTS,
    DEFAULT_RESTARTS,
    DEFAULT_SEED,
    DEFAULT_TOLERANCE,
    DEFAULT_WORKERS,
    ENV_EXACT,
    ENV_MAX_ENUM,
    ENV_RESTARTS,
    ENV_SEED,
    ENV_TOL,
    ENV_WORKERS,
    LP_MAX_ITERATIONS,
    MAX_BLOCK_DIM,
    MAX_ENUMERATION,
    MAX_SUPPORT,
    MEMBERSHIP_TOLERANCE,
)
from .exceptions import CausalOTConfigError, CausalOTFileError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)


def _parse_bool(raw: str) -> bool:
    value = raw.strip().lower()
    if value in ('1', 'true', 'yes', 'on'):
        return True
    if value in ('0', 'false', 'no', 'off', ''):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


_ENV_FIELDS: Dict[str, tuple] = {
    ENV_WORKERS: ('workers', int),
    ENV_SEED: ('seed', int),
    ENV_RESTARTS: ('restarts', int),
    ENV_MAX_ENUM: ('max_enum', int),
    ENV_TOL: ('tol', float),
    ENV_EXACT: ('exact', _parse_bool),
}


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances, caps and randomization settings shared by every solver."""

    tol: float = DEFAULT_TOLERANCE
    membership_tol: float = MEMBERSHIP_TOLERANCE
    exact: bool = False
    max_enum: int = MAX_ENUMERATION
    max_block_dim: int = MAX_BLOCK_DIM
    max_support: int = MAX_SUPPORT
    restarts: int = DEFAULT_RESTARTS
    causal_restarts: int = DEFAULT_CAUSAL_RESTARTS
    seed: int = DEFAULT_SEED
    workers: int = DEFAULT_WORKERS
    bcd_improvement: float = BCD_IMPROVEMENT
    bcd_max_sweeps: int = BCD_MAX_SWEEPS
    lp_max_iterations: int = LP_MAX_ITERATIONS

    def __post_init__(self) -> None:
        for name in ('tol', 'membership_tol', 'bcd_improvement'):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or value <= 0:
                raise CausalOTConfigError(f"{name} must be a positive number, got {value!r}")
        for name in ('max_enum', 'max_block_dim', 'max_support', 'restarts',
                     'causal_restarts', 'workers', 'bcd_max_sweeps', 'lp_max_iterations'):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
                raise CausalOTConfigError(f"{name} must be a positive integer, got {value!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise CausalOTConfigError(f"seed must be a non-negative integer, got {self.seed!r}")

    def replace(self, **overrides: Any) -> 'SolverConfig':
        """Return a copy with the non-None overrides applied."""
        changes = {k: v for k, v in overrides.items() if v is not None}
        unknown = set(changes) - {f.name for f in dataclasses.fields(self)}
        if unknown:
            raise CausalOTConfigError(f"Unknown configuration keys: {', '.join(sorted(unknown))}")
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], base: Optional['SolverConfig'] = None) -> 'SolverConfig':
        """
        Build a configuration from a mapping of field names.

        A nested ``causal_ot`` section is used when present.

        Raises:
            CausalOTConfigError: If a key is unknown or a value is malformed
        """
        if CONFIG_SECTION in data and isinstance(data[CONFIG_SECTION], Mapping):
            data = data[CONFIG_SECTION]
        return (base or cls()).replace(**dict(data))

    @classmethod
    def from_file(cls, path: str, base: Optional['SolverConfig'] = None) -> 'SolverConfig':
        """
        Load configuration from a TOML (.toml) or JSON file.

        Args:
            path: Configuration file path
            base: Configuration the file values are layered onto

        Returns:
            Resolved configuration

        Raises:
            CausalOTFileError: If the file cannot be read or parsed
            CausalOTConfigError: If it holds unknown keys or bad values
        """
        loader: Callable[[Any], Dict[str, Any]]
        mode = 'rb' if path.endswith('.toml') else 'r'
        loader = tomllib.load if path.endswith('.toml') else json.load
        try:
            with open(path, mode) as f:
                data = loader(f)
        except OSError as e:
            raise CausalOTFileError(f"Cannot read configuration file {path}: {e}") from e
        except (ValueError, tomllib.TOMLDecodeError) as e:
            raise CausalOTFileError(f"Malformed configuration file {path}: {e}") from e
        if not isinstance(data, Mapping):
            raise CausalOTFileError(f"Configuration file {path} must hold a table/object")
        logger.info("Loaded solver configuration from %s", path)
        return cls.from_mapping(data, base)

    @classmethod
    def from_env(
        cls,
        base: Optional['SolverConfig'] = None,
        environ: Optional[Mapping[str, str]] = None
    ) -> 'SolverConfig':
        """
        Layer CAUSAL_OT_* environment variables onto a configuration.

        Raises:
            CausalOTConfigError: If an environment value is malformed
        """
        environ = os.environ if environ is None else environ
        overrides: Dict[str, Any] = {}
        for var, (field_name, parse) in _ENV_FIELDS.items():
            raw = environ.get(var)
            if raw is None or raw == '':
                continue
            try:
                overrides[field_name] = parse(raw)
            except ValueError as e:
                raise CausalOTConfigError(f"Invalid value for {var}: {raw!r}") from e
        return (base or cls()).replace(**overrides)
