"""Discrete pairwise Markov networks in log-linear form.

A network is an undirected graph over discrete variables with one unary
table per variable and one pairwise table per edge.  Potentials are kept in
log space: ``phi = exp(theta)``.  All parameters live in one flat vector
whose layout is the canonical gradient order used by :mod:`markovnet.training`:
unary tables by variable id then state, followed by pairwise tables by edge
(sorted ``(u, v)`` with ``u < v``) in row-major ``[state_u, state_v]`` order.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import (
    InvalidAssignmentError,
    ModelFormatError,
    StateSpaceTooLargeError,
    StructureError,
)

LABEL = "label"
FEATURE = "feature"
ROLES = (LABEL, FEATURE)

#: Largest joint state space the exact routines will enumerate.
DEFAULT_EXACT_LIMIT = 2 ** 20

FORMAT_VERSION = 1


@dataclass(frozen=True)
class VariableSpec:
    id: int
    name: str
    cardinality: int
    role: str = FEATURE

    def __post_init__(self):
        if int(self.id) != self.id or self.id < 0:
            raise StructureError(f"variable id must be a non-negative integer, got {self.id!r}")
        if int(self.cardinality) != self.cardinality or self.cardinality < 2:
            raise StructureError(
                f"variable {self.name!r}: cardinality must be an integer >= 2, got {self.cardinality!r}"
            )
        if self.role not in ROLES:
            raise StructureError(f"variable {self.name!r}: unknown role {self.role!r}")


class GraphStructure:
    """Simple undirected graph over :class:`VariableSpec` nodes.

    Edges are normalised to sorted ``(u, v)`` tuples with ``u < v`` and kept in
    ascending order, which fixes the parameter layout.
    """

    def __init__(self, variables: Sequence[VariableSpec], edges: Iterable[tuple[int, int]] = ()):
        variables = tuple(variables)
        if not variables:
            raise StructureError("a network needs at least one variable")
        ids = [v.id for v in variables]
        if ids != list(range(len(variables))):
            raise StructureError(f"variable ids must be contiguous 0..n-1 in order, got {ids}")
        n_labels = sum(v.role == LABEL for v in variables)
        if n_labels != 1:
            raise StructureError(f"exactly one label variable is required, found {n_labels}")

        seen = set()
        for e in edges:
            u, v = (int(x) for x in e)
            if u == v:
                raise StructureError(f"self-loop on variable {u}")
            if not (0 <= u < len(variables) and 0 <= v < len(variables)):
                raise StructureError(f"edge ({u}, {v}) references an unknown variable")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise StructureError(f"duplicate edge {key}")
            seen.add(key)

        self.variables = variables
        self.edges = tuple(sorted(seen))
        self.label_id = next(v.id for v in variables if v.role == LABEL)

        cards = np.array([v.cardinality for v in variables], dtype=np.intp)
        cards.setflags(write=False)
        self.cardinalities = cards

        offsets = np.zeros(len(variables) + 1, dtype=np.intp)
        offsets[1:] = np.cumsum(cards)
        self.unary_offsets = offsets[:-1].copy()
        pos = int(offsets[-1])
        edge_offsets = []
        for u, v in self.edges:
            edge_offsets.append(pos)
            pos += int(cards[u] * cards[v])
        self.edge_offsets = np.array(edge_offsets, dtype=np.intp)
        self.n_unary = int(offsets[-1])
        self.n_params = pos
        self._edge_index = {e: i for i, e in enumerate(self.edges)}

        nbrs = [[] for _ in variables]
        for u, v in self.edges:
            nbrs[u].append(v)
            nbrs[v].append(u)
        self._neighbors = tuple(tuple(sorted(x)) for x in nbrs)

    @classmethod
    def star(cls, variables: Sequence[VariableSpec], extra_edges: Iterable[tuple[int, int]] = ()):
        """Label connected to every feature, plus ``extra_edges``."""
        label = next(v.id for v in variables if v.role == LABEL)
        edges = [(label, v.id) for v in variables if v.id != label]
        return cls(variables, list(edges) + list(extra_edges))

    @property
    def n(self) -> int:
        return len(self.variables)

    @property
    def feature_ids(self) -> tuple[int, ...]:
        return tuple(v.id for v in self.variables if v.role != LABEL)

    def neighbors(self, v: int) -> tuple[int, ...]:
        return self._neighbors[v]

    def edge_index(self, u: int, v: int) -> int:
        return self._edge_index[(min(u, v), max(u, v))]

    def has_edge(self, u: int, v: int) -> bool:
        return (min(u, v), max(u, v)) in self._edge_index

    def state_space_size(self, variables: Iterable[int] | None = None) -> int:
        ids = range(self.n) if variables is None else variables
        size = 1
        for v in ids:
            size *= int(self.cardinalities[v])
        return size

    def with_edges(self, edges: Iterable[tuple[int, int]]) -> "GraphStructure":
        return GraphStructure(self.variables, edges)

    def __eq__(self, other):
        if not isinstance(other, GraphStructure):
            return NotImplemented
        return self.variables == other.variables and self.edges == other.edges

    def __hash__(self):
        return hash((self.variables, self.edges))

    def __repr__(self):
        return f"GraphStructure(n={self.n}, edges={list(self.edges)})"


@dataclass(frozen=True)
class LogLinearParams:
    """Per-table view of a parameter vector (arrays are read-only views)."""

    unary: tuple
    pairwise: Mapping[tuple[int, int], np.ndarray]


class MarkovNetwork:
    """Immutable pairwise log-linear Markov network."""

    def __init__(self, structure: GraphStructure, theta=None):
        if theta is None:
            theta = np.zeros(structure.n_params)
        theta = np.array(theta, dtype=np.float64, copy=True).reshape(-1)
        if theta.shape != (structure.n_params,):
            raise StructureError(
                f"parameter vector has length {theta.size}, structure needs {structure.n_params}"
            )
        if not np.all(np.isfinite(theta)):
            raise StructureError("parameters must be finite")
        theta.setflags(write=False)
        self.structure = structure
        self.theta = theta

    @classmethod
    def from_tables(cls, structure: GraphStructure, unary=None, pairwise=None):
        """Build from per-table arrays; missing tables default to zeros.

        ``pairwise`` keys may be given in either orientation; a key ``(v, u)``
        with ``v > u`` is transposed into canonical ``[state_u, state_v]`` form.
        """
        theta = np.zeros(structure.n_params)
        cards = structure.cardinalities
        if unary is not None:
            items = unary.items() if isinstance(unary, Mapping) else enumerate(unary)
            for v, table in items:
                table = np.asarray(table, dtype=np.float64)
                if table.shape != (cards[v],):
                    raise StructureError(f"unary table {v} has shape {table.shape}, expected ({cards[v]},)")
                o = structure.unary_offsets[v]
                theta[o:o + cards[v]] = table
        for (u, v), table in (pairwise or {}).items():
            table = np.asarray(table, dtype=np.float64)
            if u > v:
                u, v, table = v, u, table.T
            if not structure.has_edge(u, v):
                raise StructureError(f"no edge ({u}, {v}) in structure")
            if table.shape != (cards[u], cards[v]):
                raise StructureError(
                    f"pairwise table ({u}, {v}) has shape {table.shape}, expected ({cards[u]}, {cards[v]})"
                )
            o = structure.edge_offsets[structure.edge_index(u, v)]
            theta[o:o + table.size] = table.reshape(-1)
        return cls(structure, theta)

    def with_theta(self, theta) -> "MarkovNetwork":
        return MarkovNetwork(self.structure, theta)

    def unary(self, v: int) -> np.ndarray:
        o = self.structure.unary_offsets[v]
        return self.theta[o:o + self.structure.cardinalities[v]]

    def pairwise(self, u: int, v: int) -> np.ndarray:
        """Table indexed ``[state_u, state_v]`` for the edge between ``u`` and ``v``."""
        s = self.structure
        a, b = min(u, v), max(u, v)
        o = s.edge_offsets[s.edge_index(a, b)]
        table = self.theta[o:o + s.cardinalities[a] * s.cardinalities[b]].reshape(
            s.cardinalities[a], s.cardinalities[b]
        )
        return table if u < v else table.T

    @property
    def params(self) -> LogLinearParams:
        s = self.structure
        return LogLinearParams(
            unary=tuple(self.unary(v) for v in range(s.n)),
            pairwise={e: self.pairwise(*e) for e in s.edges},
        )

    def __eq__(self, other):
        if not isinstance(other, MarkovNetwork):
            return NotImplemented
        return self.structure == other.structure and np.array_equal(self.theta, other.theta)

    __hash__ = None

    def __repr__(self):
        return f"MarkovNetwork({self.structure!r}, n_params={self.structure.n_params})"


def check_assignments(structure: GraphStructure, assignments) -> np.ndarray:
    """Validate and return an ``(N, n)`` integer array of assignments."""
    a = np.asarray(assignments)
    single = a.ndim == 1
    a = np.atleast_2d(a)
    if a.ndim != 2 or a.shape[1] != structure.n:
        raise InvalidAssignmentError(
            f"assignment has {a.shape[-1]} entries, network has {structure.n} variables"
        )
    if a.size and not np.issubdtype(a.dtype, np.integer):
        if not np.all(np.mod(a, 1) == 0):
            raise InvalidAssignmentError("assignment entries must be integers")
    a = a.astype(np.intp, copy=False)
    if a.size and (np.any(a < 0) or np.any(a >= structure.cardinalities[None, :])):
        bad = np.argwhere((a < 0) | (a >= structure.cardinalities[None, :]))[0]
        raise InvalidAssignmentError(
            f"variable {bad[1]} state {a[bad[0], bad[1]]} outside [0, {structure.cardinalities[bad[1]]})"
        )
    return a[0] if single else a


def log_scores(network: MarkovNetwork, assignments) -> np.ndarray:
    """Unnormalised log-probability of each row of ``assignments``."""
    s = network.structure
    a = np.atleast_2d(check_assignments(s, assignments))
    theta = network.theta
    out = np.zeros(a.shape[0])
    for v in range(s.n):
        out += theta[s.unary_offsets[v] + a[:, v]]
    for i, (u, v) in enumerate(s.edges):
        out += theta[s.edge_offsets[i] + a[:, u] * s.cardinalities[v] + a[:, v]]
    return out


def log_score(network: MarkovNetwork, assignment) -> float:
    """Sum of the unary and pairwise log-potentials selected by ``assignment``."""
    a = np.asarray(assignment)
    if a.ndim != 1:
        raise InvalidAssignmentError("log_score takes a single assignment; use log_scores for batches")
    return float(log_scores(network, a[None, :])[0])


def enumerate_assignments(cardinalities: Sequence[int]) -> np.ndarray:
    """All joint states in lexicographic order (last variable fastest)."""
    cards = [int(c) for c in cardinalities]
    if not cards:
        return np.zeros((1, 0), dtype=np.intp)
    grids = np.indices(cards, dtype=np.intp)
    return grids.reshape(len(cards), -1).T.copy()


def check_exact_limit(size: int, limit: int | None):
    limit = DEFAULT_EXACT_LIMIT if limit is None else limit
    if size > limit:
        raise StateSpaceTooLargeError(size, limit)


def log_partition_function_exact(network: MarkovNetwork, limit: int | None = None) -> float:
    s = network.structure
    check_exact_limit(s.state_space_size(), limit)
    return float(logsumexp(log_scores(network, enumerate_assignments(s.cardinalities))))


def partition_function_exact(network: MarkovNetwork, limit: int | None = None) -> float:
    """Sum of ``exp(log_score)`` over every joint assignment."""
    return float(np.exp(log_partition_function_exact(network, limit)))


def joint_probability(network: MarkovNetwork, assignment, limit: int | None = None) -> float:
    log_z = log_partition_function_exact(network, limit)
    return float(np.exp(log_score(network, assignment) - log_z))


def joint_distribution(network: MarkovNetwork, limit: int | None = None):
    """Return ``(assignments, probabilities)`` over the full state space."""
    s = network.structure
    check_exact_limit(s.state_space_size(), limit)
    states = enumerate_assignments(s.cardinalities)
    scores = log_scores(network, states)
    return states, np.exp(scores - logsumexp(scores))


# -- serialization -----------------------------------------------------------

def _num(x: float) -> str:
    return format(float(x), ".17g")


def _array(values) -> str:
    return "[" + ", ".join(_num(x) for x in values) + "]"


def serialize_model(network: MarkovNetwork) -> str:
    """Render as a JSON document; floats carry 17 significant digits."""
    s = network.structure
    lines = ["{", f'  "format_version": {FORMAT_VERSION},', '  "variables": [']
    var_lines = [
        "    " + json.dumps({"id": v.id, "name": v.name, "cardinality": v.cardinality, "role": v.role})
        for v in s.variables
    ]
    lines.append(",\n".join(var_lines))
    lines.append("  ],")
    lines.append('  "edges": [' + ", ".join(f"[{u}, {v}]" for u, v in s.edges) + "],")
    lines.append('  "unary": {')
    lines.append(",\n".join(f'    "{v}": {_array(network.unary(v))}' for v in range(s.n)))
    lines.append("  },")
    lines.append('  "pairwise": {')
    pair_lines = []
    for u, v in s.edges:
        rows = ", ".join(_array(row) for row in network.pairwise(u, v))
        pair_lines.append(f'    "{u}-{v}": [{rows}]')
    lines.append(",\n".join(pair_lines))
    lines.append("  }")
    lines.append("}")
    return "\n".join(line for line in lines if line) + "\n"


def _require(doc, key, kind, where="document"):
    if not isinstance(doc, dict) or key not in doc:
        raise ModelFormatError(key, f"missing from {where}")
    value = doc[key]
    if kind is not None and not isinstance(value, kind):
        raise ModelFormatError(key, f"expected {kind.__name__ if isinstance(kind, type) else kind}")
    return value


def _float_list(values, field):
    if not isinstance(values, list) or not all(
        isinstance(x, (int, float)) and not isinstance(x, bool) for x in values
    ):
        raise ModelFormatError(field, "expected an array of numbers")
    return [float(x) for x in values]


def deserialize_model(text: str) -> MarkovNetwork:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError("document", f"not valid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(doc, dict):
        raise ModelFormatError("document", "top level must be an object")
    unknown = set(doc) - {"format_version", "variables", "edges", "unary", "pairwise"}
    if unknown:
        raise ModelFormatError(sorted(unknown)[0], "unknown field")
    version = _require(doc, "format_version", int)
    if version != FORMAT_VERSION:
        raise ModelFormatError("format_version", f"unsupported version {version}")

    variables = []
    for i, entry in enumerate(_require(doc, "variables", list)):
        where = f"variables[{i}]"
        try:
            variables.append(VariableSpec(
                id=_require(entry, "id", int, where),
                name=_require(entry, "name", str, where),
                cardinality=_require(entry, "cardinality", int, where),
                role=_require(entry, "role", str, where),
            ))
        except StructureError as exc:
            raise ModelFormatError(where, str(exc)) from None

    edges = []
    for i, e in enumerate(_require(doc, "edges", list)):
        if not (isinstance(e, list) and len(e) == 2 and all(isinstance(x, int) for x in e)) or e[0] >= e[1]:
            raise ModelFormatError(f"edges[{i}]", "expected [u, v] with integer u < v")
        edges.append(tuple(e))
    try:
        structure = GraphStructure(variables, edges)
    except StructureError as exc:
        raise ModelFormatError("variables", str(exc)) from None

    unary_doc = _require(doc, "unary", dict)
    pair_doc = _require(doc, "pairwise", dict)
    theta = np.zeros(structure.n_params)
    for v in range(structure.n):
        key = str(v)
        if key not in unary_doc:
            raise ModelFormatError(f"unary.{key}", "missing table")
        values = _float_list(unary_doc[key], f"unary.{key}")
        if len(values) != structure.cardinalities[v]:
            raise ModelFormatError(f"unary.{key}", f"expected {structure.cardinalities[v]} entries")
        o = structure.unary_offsets[v]
        theta[o:o + len(values)] = values
    if len(unary_doc) != structure.n:
        extra = sorted(set(unary_doc) - {str(v) for v in range(structure.n)})
        raise ModelFormatError(f"unary.{extra[0]}", "table for unknown variable")
    for i, (u, v) in enumerate(structure.edges):
        key = f"{u}-{v}"
        if key not in pair_doc:
            raise ModelFormatError(f"pairwise.{key}", "missing table")
        rows = pair_doc[key]
        cu, cv = structure.cardinalities[u], structure.cardinalities[v]
        if not isinstance(rows, list) or len(rows) != cu:
            raise ModelFormatError(f"pairwise.{key}", f"expected {cu} rows")
        flat = []
        for r in rows:
            r = _float_list(r, f"pairwise.{key}")
            if len(r) != cv:
                raise ModelFormatError(f"pairwise.{key}", f"expected {cv} columns")
            flat.extend(r)
        o = structure.edge_offsets[i]
        theta[o:o + len(flat)] = flat
    if len(pair_doc) != len(structure.edges):
        extra = sorted(set(pair_doc) - {f"{u}-{v}" for u, v in structure.edges})
        raise ModelFormatError(f"pairwise.{extra[0]}", "table for an edge not in the edge list")
    if not np.all(np.isfinite(theta)):
        raise ModelFormatError("unary", "parameters must be finite")
    return MarkovNetwork(structure, theta)


def save_model(network: MarkovNetwork, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_model(network))


def load_model(path) -> MarkovNetwork:
    with open(path, encoding="utf-8") as fh:
        return deserialize_model(fh.read())
