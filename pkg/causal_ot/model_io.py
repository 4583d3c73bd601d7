"""
Model file I/O.

A model file is JSON:

    {
      "spaces": [{"name": "X1", "atoms": [...], "embedding": [[...], ...]}, ...],
      "graph": {"n": 3, "edges": [[1, 2], [2, 3]]}    or  {"preset": "markov", "n": 3},
      "measures": {"mu": {"support": [{"atoms": [...], "weight": "1/4"}, ...]}, ...},
      "scms": {"A": {"mechanisms": [...], "noises": [...], "lipschitz": [...]}, ...},
      "cost": {"kind": "joint", "p": 1, "matrix": "m.csv", "labels": [[...], ...]},
      "pairs": [["mu", "nu"], ...],
      "ate": {"treatment": 2, "outcome": 3, "delta": 0.2}
    }

Weights accept decimal strings and "p/q" rationals (exact) or JSON numbers
(float). Matrix paths are resolved relative to the model file.

Mechanism entries:
    {"table": [{"parents": [...], "noise": u, "value": atom}, ...]}
    {"affine": {"coefficients": [...], "noise_coefficient": 1, "offset": 0}}
    {"constant": atom}
"""

import json
import logging
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .constants import COST_ADDITIVE, COST_EUCLIDEAN, COST_JOINT, GRAPH_PRESETS
from .exceptions import CausalOTFileError, CausalOTValidationError
from .metric import CoordinateMetric, GroundCost, load_matrix_csv
from .model import (
    AffineMechanism,
    CoordinateSpace,
    Dag,
    DiscreteMeasure,
    NoiseDistribution,
    Scm,
    TableMechanism,
    validate_dag,
)
from .utils import json_number, normalize_atom, parse_weight
from .validators import validate_file_exists

logger = logging.getLogger(__name__)


@dataclass
class ModelBundle:
    """Everything declared in one model file."""

    spaces: Tuple[CoordinateSpace, ...]
    dag: Optional[Dag] = None
    measures: Dict[str, DiscreteMeasure] = field(default_factory=dict)
    scms: Dict[str, Scm] = field(default_factory=dict)
    cost: Optional[GroundCost] = None
    pairs: List[Tuple[str, str]] = field(default_factory=list)
    ate: Optional[Dict[str, Any]] = None
    description: str = ''
    path: Optional[str] = None

    def measure(self, name: str) -> DiscreteMeasure:
        try:
            return self.measures[name]
        except KeyError as e:
            raise CausalOTValidationError(
                f"model has no measure {name!r} (available: {', '.join(sorted(self.measures))})"
            ) from e

    def scm(self, name: str) -> Scm:
        try:
            return self.scms[name]
        except KeyError as e:
            raise CausalOTValidationError(
                f"model has no SCM {name!r} (available: {', '.join(sorted(self.scms))})"
            ) from e


def _parse_number(value: Any, param_name: str) -> Any:
    """Real number that may be negative; strings become Fractions."""
    if isinstance(value, bool):
        raise CausalOTValidationError(f"{param_name} must be a number, got bool")
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as e:
            raise CausalOTValidationError(f"{param_name} is not a number: {value!r}") from e
    if isinstance(value, (int, float, Fraction)):
        return value
    raise CausalOTValidationError(f"{param_name} must be a number, got {type(value).__name__}")


def parse_spaces(data: Sequence[Mapping[str, Any]]) -> Tuple[CoordinateSpace, ...]:
    spaces = []
    for k, entry in enumerate(data):
        embedding = entry.get('embedding')
        spaces.append(CoordinateSpace(
            name=str(entry.get('name', f"X{k + 1}")),
            atoms=tuple(normalize_atom(a) for a in entry['atoms']),
            embedding=tuple(tuple(_parse_number(c, "embedding") for c in vec) for vec in embedding)
            if embedding is not None else None,
        ))
    return tuple(spaces)


def parse_graph(data: Any, n: Optional[int] = None) -> Dag:
    """
    Graph from {"n", "edges"}, {"preset", "n"} or a bare preset name.

    Raises:
        CausalOTValidationError: If the description is incomplete
        CycleDetectedError: If the graph has a directed cycle
    """
    if isinstance(data, str):
        if n is None:
            raise CausalOTValidationError(f"graph preset {data!r} needs a vertex count")
        return Dag.preset(data, n)
    if 'preset' in data:
        return Dag.preset(data['preset'], int(data.get('n', n or 0)))
    return validate_dag(int(data['n']), [tuple(e) for e in data.get('edges', [])])


def parse_measure(spaces: Sequence[CoordinateSpace], data: Mapping[str, Any], name: str = 'measure') -> DiscreteMeasure:
    entries = []
    for entry in data['support']:
        atoms = tuple(normalize_atom(a) for a in entry['atoms'])
        entries.append((atoms, parse_weight(entry['weight'], f"weight of {name}")))
    return DiscreteMeasure.from_atoms(spaces, entries)


def parse_cost(data: Mapping[str, Any], base_dir: str = '.') -> GroundCost:
    kind = data.get('kind', COST_ADDITIVE)
    p = data.get('p', 1)
    if kind == COST_JOINT:
        matrix = data['matrix']
        if isinstance(matrix, str):
            matrix = load_matrix_csv(os.path.join(base_dir, matrix))
        labels = [tuple(normalize_atom(a) for a in label) for label in data['labels']]
        return GroundCost.joint_from_matrix(matrix, labels, p=p)
    if kind == COST_EUCLIDEAN:
        return GroundCost.euclidean(p=p)
    metrics = data.get('metrics')
    if metrics is None:
        return GroundCost.additive(p=p)
    if isinstance(metrics, Mapping):
        return GroundCost.additive(_parse_metric(metrics, base_dir), p=p)
    return GroundCost.additive([_parse_metric(m, base_dir) for m in metrics], p=p)


def _parse_metric(data: Mapping[str, Any], base_dir: str) -> CoordinateMetric:
    data = dict(data)
    if isinstance(data.get('matrix'), str):
        data['matrix'] = load_matrix_csv(os.path.join(base_dir, data['matrix']))
    if data.get('labels') is not None:
        data['labels'] = [normalize_atom(a) for a in data['labels']]
    return CoordinateMetric.from_dict(data)


def _parse_mechanism(data: Mapping[str, Any], vertex: int):
    if 'table' in data:
        table = {}
        for row in data['table']:
            parents = tuple(normalize_atom(a) for a in row.get('parents', []))
            noise = _parse_number(row.get('noise', 0), f"noise of vertex {vertex}")
            table[(parents, noise)] = normalize_atom(row['value'])
        return TableMechanism(table)
    if 'affine' in data:
        spec = data['affine']
        return AffineMechanism(
            coefficients=tuple(_parse_number(c, "coefficient") for c in spec.get('coefficients', [])),
            noise_coefficient=_parse_number(spec.get("noise_coefficient", spec.get("noise", 1)), "noise coefficient"),
            offset=_parse_number(spec.get('offset', 0), "offset"),
        )
    if 'constant' in data:
        value = normalize_atom(data['constant'])
        return lambda parents, noise: value
    raise CausalOTValidationError(f"vertex {vertex}: mechanism needs 'table', 'affine' or 'constant'")


def parse_scm(dag: Dag, spaces: Sequence[CoordinateSpace], data: Mapping[str, Any], name: str = '') -> Scm:
    mechanisms = [_parse_mechanism(m, v + 1) for v, m in enumerate(data['mechanisms'])]
    noises = []
    for v, pairs in enumerate(data['noises']):
        noises.append(NoiseDistribution.from_pairs(
            (_parse_number(value, f"noise value of vertex {v + 1}"), parse_weight(weight, "noise weight"))
            for value, weight in pairs
        ))
    lipschitz = data.get('lipschitz')
    return Scm(
        dag=dag,
        spaces=tuple(spaces),
        mechanisms=tuple(mechanisms),
        noises=tuple(noises),
        lipschitz=tuple(None if c is None else float(c) for c in lipschitz) if lipschitz is not None else None,
        name=name,
    )


def parse_model(data: Mapping[str, Any], base_dir: str = '.', path: Optional[str] = None) -> ModelBundle:
    """
    Build a ModelBundle from a parsed model document.

    Raises:
        CausalOTValidationError: If a section is malformed
    """
    try:
        spaces = parse_spaces(data['spaces'])
        n = len(spaces)
        dag = parse_graph(data['graph'], n) if 'graph' in data else None
        measures = {name: parse_measure(spaces, m, name) for name, m in data.get('measures', {}).items()}
        scms = {}
        if data.get('scms'):
            if dag is None:
                raise CausalOTValidationError("SCMs need a graph")
            scms = {name: parse_scm(dag, spaces, s, name) for name, s in data['scms'].items()}
        cost = parse_cost(data['cost'], base_dir) if 'cost' in data else None
    except KeyError as e:
        raise CausalOTValidationError(f"model is missing required key {e}") from e
    except (TypeError, ValueError) as e:
        raise CausalOTValidationError(f"malformed model: {e}") from e
    return ModelBundle(
        spaces=spaces,
        dag=dag,
        measures=measures,
        scms=scms,
        cost=cost,
        pairs=[tuple(pair) for pair in data.get('pairs', [])],
        ate=dict(data['ate']) if 'ate' in data else None,
        description=data.get('description', ''),
        path=path,
    )


def read_json(path: str) -> Any:
    """
    Read a JSON document.

    Raises:
        CausalOTFileError: If the file is missing or not valid JSON
    """
    try:
        validate_file_exists(path, "path")
    except CausalOTValidationError as e:
        raise CausalOTFileError(str(e)) from e
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except OSError as e:
        raise CausalOTFileError(f"Failed to read '{path}': {e}") from e
    except json.JSONDecodeError as e:
        raise CausalOTFileError(f"Malformed JSON in '{path}': {e}") from e


def load_model(path: str) -> ModelBundle:
    """
    Load a model file.

    Args:
        path: JSON model path; referenced CSV matrices resolve next to it

    Returns:
        ModelBundle

    Raises:
        CausalOTFileError: If the file or a referenced matrix cannot be read
        CausalOTValidationError: If the model is malformed
    """
    data = read_json(path)
    if not isinstance(data, Mapping):
        raise CausalOTFileError(f"Model file '{path}' must hold a JSON object")
    bundle = parse_model(data, base_dir=os.path.dirname(os.path.abspath(path)), path=path)
    logger.info("Loaded model %s: %s measures, %s SCMs", path, len(bundle.measures), len(bundle.scms))
    return bundle


def load_graph(spec: str, n: Optional[int] = None) -> Dag:
    """
    Graph from a preset name (full, empty, linear, markov) or a JSON file.

    A JSON file may hold the graph object itself or a model with a "graph" key.
    """
    if spec.lower() in GRAPH_PRESETS:
        return parse_graph(spec.lower(), n)
    data = read_json(spec)
    try:
        return parse_graph(data.get('graph', data), n)
    except (KeyError, TypeError, AttributeError) as e:
        raise CausalOTFileError(f"Graph file '{spec}' is malformed: {e}") from e


def dumps_report(report: Mapping[str, Any]) -> str:
    """Deterministic JSON rendering of a report."""
    return json.dumps(report, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    rendered = json_number(value)
    if rendered is value:
        raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")
    return rendered


def write_report(report: Mapping[str, Any], path: Optional[str] = None) -> str:
    """
    Render a report and write it to path (if given).

    Raises:
        CausalOTFileError: If the file cannot be written
    """
    text = dumps_report(report)
    if path:
        try:
            with open(path, 'w', encoding='utf-8') as f:
                f.write(text)
        except OSError as e:
            raise CausalOTFileError(f"Failed to write report '{path}': {e}") from e
        logger.info("Wrote report to %s", path)
    return text


__all__ = [
    'ModelBundle',
    'dumps_report',
    'load_graph',
    'load_model',
    'parse_cost',
    'parse_graph',
    'parse_measure',
    'parse_model',
    'parse_scm',
    'parse_spaces',
    'read_json',
    'write_report',
]
