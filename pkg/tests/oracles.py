"""Independent reference computations the library results are checked against.

Nothing here reuses the library's longest-path, ledger or validator code.
"""

from __future__ import annotations

import itertools
from typing import Dict, List, Mapping, Sequence, Set, Tuple

import networkx as nx

from src.model import QueryKind, RatedDataflow
from src.placement import Mapping as PlacementMapping
from src.placement import PlacementState
from src.resources import ResourcePool


def hop(pool: ResourcePool, a: int, b: int, size: float) -> float:
    if a == b:
        return 0.0
    return float(pool.network.latency[a, b] + size / pool.network.bandwidth[a, b])


def all_paths_makespan(rated: RatedDataflow, assignments: Mapping[str, int], pool: ResourcePool) -> float:
    """Maximum over every enumerated source-to-sink path."""
    graph = nx.DiGraph(list(rated.spec.edges))
    graph.add_nodes_from(rated.spec.vertex_ids)
    best = 0.0
    for source in rated.spec.sources:
        for sink in rated.spec.sinks:
            for path in nx.all_simple_paths(graph, source, sink):
                total = 0.0
                for u, v in zip(path, path[1:]):
                    query_type = rated.query_types[u]
                    total += pool.latency(query_type.id, assignments[u])
                    total += hop(pool, assignments[u], assignments[v], query_type.event_size_bytes)
                best = max(best, total)
    return best


def violations(state: PlacementState, pool: ResourcePool) -> Set[Tuple[int, str]]:
    """(constraint, subject) pairs; subject is the vertex for 1 and 2, the resource id for 3."""
    found: Set[Tuple[int, str]] = set()
    hosted: Dict[int, List[Tuple[str, float, float, float]]] = {}
    for dataflow_id, rated in state.dataflows.items():
        for vertex_id, resource in state.mappings[dataflow_id].assignments.items():
            kind = rated.query_types[vertex_id].kind
            edge = pool.resources[resource].is_edge
            if kind is QueryKind.SOURCE:
                if not edge:
                    found.add((1, vertex_id))
                continue
            if kind is QueryKind.SINK and edge:
                found.add((1, vertex_id))
            type_id = rated.query_types[vertex_id].id
            hosted.setdefault(resource, []).append(
                (vertex_id, rated.in_rate[vertex_id], pool.latency(type_id, resource), pool.energy(type_id, resource))
            )

    catalog = pool.catalog
    for resource, items in hosted.items():
        m = len(items)
        factor = 1.0 + catalog.overhead_sign * catalog.parallelism_overhead(m)
        total = sum(latency for _, _, latency, _ in items)
        for vertex_id, rate, _, _ in items:
            if total > 0 and rate * total >= factor:
                found.add((2, vertex_id))

    for resource in pool.resources:
        if not resource.is_edge:
            continue
        per_second = resource.base_load_ma / 3600.0 + sum(rate * energy for _, rate, _, energy in hosted.get(resource.index, []))
        if resource.recharge_interval_sec * per_second > resource.battery_capacity_mah:
            found.add((3, resource.id))
    return found


def best_joint_placement(dags: Sequence[RatedDataflow], pool: ResourcePool) -> float:
    """Lowest summed makespan over every valid joint assignment (tiny instances only)."""
    keys = [(rated, v) for rated in dags for v in rated.spec.vertex_ids]
    best = float("inf")
    for combo in itertools.product(range(len(pool)), repeat=len(keys)):
        assignments: Dict[str, Dict[str, int]] = {rated.id: {} for rated in dags}
        for (rated, vertex_id), resource in zip(keys, combo):
            assignments[rated.id][vertex_id] = resource
        state = PlacementState.empty()
        for rated in dags:
            state = state.with_dataflow(rated, PlacementMapping(rated.id, assignments[rated.id]))
        if violations(state, pool):
            continue
        total = sum(all_paths_makespan(rated, assignments[rated.id], pool) for rated in dags)
        best = min(best, total)
    return best
