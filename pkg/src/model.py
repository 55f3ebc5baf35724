"""Analytic dataflows as DAGs of CEP queries: rates, topological sets, critical paths."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Callable, Dict, List, Mapping, Tuple

import networkx as nx

from .errors import IncompleteMappingError, InvalidDagError

if TYPE_CHECKING:
    from .resources import ProfileCatalog, ResourcePool

# Relative tolerance under which two path latencies count as a tie
TIE_TOLERANCE = 1e-12


class QueryKind(str, enum.Enum):
    FILTER = "filter"
    SEQUENCE = "sequence"
    PATTERN = "pattern"
    SLIDING_AGGREGATE = "sliding-aggregate"
    BATCH_AGGREGATE = "batch-aggregate"
    SOURCE = "source"
    SINK = "sink"


@dataclass(frozen=True)
class QueryType:
    """A benchmarked CEP query type."""

    id: str
    kind: QueryKind
    selectivity: float
    event_size_bytes: float

    def __post_init__(self) -> None:
        if self.kind is not QueryKind.SINK and self.selectivity <= 0:
            raise ValueError(f"Query type '{self.id}' needs a positive selectivity")
        if self.event_size_bytes <= 0:
            raise ValueError(f"Query type '{self.id}' needs a positive event size")

    @property
    def effective_selectivity(self) -> float:
        # sources forward their share of the input, sinks only terminate the stream
        if self.kind in (QueryKind.SOURCE, QueryKind.SINK):
            return 1.0
        return self.selectivity


@dataclass(frozen=True)
class DataflowSpec:
    """Static description of one analytic dataflow."""

    id: str
    vertices: Tuple[Tuple[str, str], ...]
    edges: Tuple[Tuple[str, str], ...]
    input_rate: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "vertices", tuple((str(v), str(t)) for v, t in self.vertices))
        object.__setattr__(self, "edges", tuple((str(u), str(v)) for u, v in self.edges))
        ids = [vertex_id for vertex_id, _ in self.vertices]
        if not ids:
            raise InvalidDagError(f"Dataflow '{self.id}' has no vertices")
        if len(set(ids)) != len(ids):
            raise InvalidDagError(f"Dataflow '{self.id}' has duplicate vertex ids")
        known = set(ids)
        for u, v in self.edges:
            if u not in known or v not in known:
                raise InvalidDagError(f"Dataflow '{self.id}' edge ({u}, {v}) references an unknown vertex")
            if u == v:
                raise InvalidDagError(f"Dataflow '{self.id}' has a self loop on '{u}'")
        if self.input_rate <= 0:
            raise InvalidDagError(f"Dataflow '{self.id}' needs a positive input rate")

    @cached_property
    def graph(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(vertex_id for vertex_id, _ in self.vertices)
        graph.add_edges_from(self.edges)
        return graph

    @cached_property
    def type_of(self) -> Dict[str, str]:
        return dict(self.vertices)

    @cached_property
    def vertex_ids(self) -> Tuple[str, ...]:
        return tuple(vertex_id for vertex_id, _ in self.vertices)

    @cached_property
    def predecessors(self) -> Dict[str, Tuple[str, ...]]:
        return {v: tuple(sorted(self.graph.predecessors(v))) for v in self.vertex_ids}

    @cached_property
    def successors(self) -> Dict[str, Tuple[str, ...]]:
        return {v: tuple(sorted(self.graph.successors(v))) for v in self.vertex_ids}

    @cached_property
    def sources(self) -> Tuple[str, ...]:
        return tuple(sorted(v for v in self.vertex_ids if not self.predecessors[v]))

    @cached_property
    def sinks(self) -> Tuple[str, ...]:
        return tuple(sorted(v for v in self.vertex_ids if not self.successors[v]))

    @property
    def size(self) -> int:
        return len(self.vertices)

    @property
    def max_fan_out(self) -> int:
        return max(len(children) for children in self.successors.values())

    def topological_order(self) -> List[str]:
        """Deterministic topological order (lexicographic among ready vertices)."""
        try:
            return list(nx.lexicographical_topological_sort(self.graph))
        except nx.NetworkXUnfeasible as exc:
            raise InvalidDagError(f"Dataflow '{self.id}' contains a cycle") from exc

    def validate(self, catalog: "ProfileCatalog") -> None:
        """Check acyclicity and that roots are sources and leaves are sinks."""
        self.topological_order()
        for vertex_id, type_id in self.vertices:
            kind = catalog.query_type(type_id).kind
            is_root = not self.predecessors[vertex_id]
            is_leaf = not self.successors[vertex_id]
            if is_root != (kind is QueryKind.SOURCE):
                raise InvalidDagError(
                    f"Dataflow '{self.id}' vertex '{vertex_id}': source kind must match having no predecessors"
                )
            if is_leaf != (kind is QueryKind.SINK):
                raise InvalidDagError(
                    f"Dataflow '{self.id}' vertex '{vertex_id}': sink kind must match having no successors"
                )

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "input_rate": self.input_rate,
            "vertices": [{"id": v, "type": t} for v, t in self.vertices],
            "edges": [[u, v] for u, v in self.edges],
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "DataflowSpec":
        return cls(
            id=str(payload["id"]),
            vertices=tuple((item["id"], item["type"]) for item in payload["vertices"]),
            edges=tuple(tuple(edge) for edge in payload["edges"]),
            input_rate=float(payload["input_rate"]),
        )


@dataclass(frozen=True)
class RatedDataflow:
    """A dataflow with stream rates propagated from its input rate."""

    spec: DataflowSpec
    in_rate: Dict[str, float]
    out_rate: Dict[str, float]
    output_rate: float
    dag_selectivity: float
    # vertex -> query type, resolved once so schedulers avoid catalog lookups
    query_types: Dict[str, QueryType] = field(repr=False)

    @property
    def id(self) -> str:
        return self.spec.id

    @property
    def size(self) -> int:
        return self.spec.size

    def is_source(self, vertex_id: str) -> bool:
        return self.query_types[vertex_id].kind is QueryKind.SOURCE

    def is_sink(self, vertex_id: str) -> bool:
        return self.query_types[vertex_id].kind is QueryKind.SINK

    def event_size(self, vertex_id: str) -> float:
        return self.query_types[vertex_id].event_size_bytes

    @cached_property
    def order(self) -> Tuple[str, ...]:
        return tuple(self.spec.topological_order())

    def renamed(self, new_id: str) -> "RatedDataflow":
        """Same dataflow under another instance id."""
        spec = DataflowSpec(new_id, self.spec.vertices, self.spec.edges, self.spec.input_rate)
        return RatedDataflow(spec, self.in_rate, self.out_rate, self.output_rate, self.dag_selectivity, self.query_types)


@dataclass(frozen=True)
class TopoSetOrder:
    sets: Tuple[frozenset, ...]

    def flatten(self) -> List[str]:
        return [vertex_id for level in self.sets for vertex_id in sorted(level)]


def propagate_rates(spec: DataflowSpec, catalog: "ProfileCatalog") -> RatedDataflow:
    """Propagate the dataflow input rate through selectivities in topological order.

    Sources split the input rate uniformly, every edge carries the full output
    rate of its upstream vertex and multi-input vertices add their inputs.
    """
    spec.validate(catalog)
    query_types = {vertex_id: catalog.query_type(type_id) for vertex_id, type_id in spec.vertices}

    per_source = spec.input_rate / len(spec.sources)
    in_rate: Dict[str, float] = {}
    out_rate: Dict[str, float] = {}
    for vertex_id in spec.topological_order():
        parents = spec.predecessors[vertex_id]
        if parents:
            in_rate[vertex_id] = math.fsum(out_rate[parent] for parent in parents)
        else:
            in_rate[vertex_id] = per_source
        out_rate[vertex_id] = in_rate[vertex_id] * query_types[vertex_id].effective_selectivity

    output_rate = math.fsum(out_rate[sink] for sink in spec.sinks)
    return RatedDataflow(
        spec=spec,
        in_rate=in_rate,
        out_rate=out_rate,
        output_rate=output_rate,
        dag_selectivity=output_rate / spec.input_rate,
        query_types=query_types,
    )


def topo_set_order(spec: DataflowSpec) -> TopoSetOrder:
    """Group vertices into sets whose predecessors all lie in earlier sets."""
    try:
        generations = list(nx.topological_generations(spec.graph))
    except nx.NetworkXUnfeasible as exc:
        raise InvalidDagError(f"Dataflow '{spec.id}' contains a cycle") from exc
    return TopoSetOrder(tuple(frozenset(level) for level in generations))


EdgeWeight = Callable[[str, str], float]


def longest_path(rated: RatedDataflow, weight: EdgeWeight, skip: str | None = None) -> Tuple[Tuple[str, ...], float]:
    """Longest source-to-sink path by dynamic programming in topological order.

    Ties are resolved towards the lexicographically smallest vertex sequence.
    A vertex named by ``skip`` is removed from the graph before the search.
    """
    best: Dict[str, Tuple[float, Tuple[str, ...]]] = {}
    spec = rated.spec
    for vertex_id in rated.order:
        if vertex_id == skip:
            continue
        parents = [p for p in spec.predecessors[vertex_id] if p != skip and p in best]
        if not parents:
            if spec.predecessors[vertex_id]:
                continue  # only reachable through the skipped vertex
            best[vertex_id] = (0.0, (vertex_id,))
            continue
        chosen: Tuple[float, Tuple[str, ...]] | None = None
        for parent in parents:
            cost, path = best[parent]
            candidate = (cost + weight(parent, vertex_id), path + (vertex_id,))
            chosen = candidate if chosen is None else _better(candidate, chosen)
        best[vertex_id] = chosen

    result: Tuple[float, Tuple[str, ...]] | None = None
    for sink in spec.sinks:
        if sink in best:
            result = best[sink] if result is None else _better(best[sink], result)
    if result is None:
        return (), 0.0
    return result[1], result[0]


def _better(a: Tuple[float, Tuple[str, ...]], b: Tuple[float, Tuple[str, ...]]) -> Tuple[float, Tuple[str, ...]]:
    if math.isclose(a[0], b[0], rel_tol=TIE_TOLERANCE, abs_tol=1e-15):
        return a if a[1] < b[1] else b
    return a if a[0] > b[0] else b


def edge_weight(rated: RatedDataflow, assignments: Mapping[str, int], pool: "ResourcePool") -> EdgeWeight:
    """Cost of stream edge (u, v): latency of u on its resource plus transfer to v."""

    def weight(upstream: str, downstream: str) -> float:
        source_resource = assignments[upstream]
        latency = pool.latency(rated.query_types[upstream].id, source_resource)
        return latency + pool.transfer_time(source_resource, assignments[downstream], rated.event_size(upstream))

    return weight


def enumerate_critical_path(rated: RatedDataflow, mapping, pool: "ResourcePool") -> Tuple[Tuple[str, ...], float]:
    """Critical path and makespan of a placed dataflow."""
    assignments = mapping.assignments
    missing = [vertex_id for vertex_id in rated.spec.vertex_ids if vertex_id not in assignments]
    if missing:
        raise IncompleteMappingError(f"Dataflow '{rated.id}' has unmapped vertices: {missing}")
    return longest_path(rated, edge_weight(rated, assignments, pool))
