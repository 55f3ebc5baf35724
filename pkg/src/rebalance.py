"""Single-pass rebalancing of placed dataflows along their critical paths."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import config
from .errors import ConfigError
from .model import RatedDataflow, edge_weight, enumerate_critical_path, longest_path
from .placement import LoadLedger, PlacementState, allowed_resources, objective, query_load
from .resources import ResourcePool

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Move:
    dataflow_id: str
    vertex_id: str
    from_resource: int
    to_resource: int

    def to_dict(self) -> dict:
        return {
            "dataflow_id": self.dataflow_id,
            "vertex_id": self.vertex_id,
            "from": self.from_resource,
            "to": self.to_resource,
        }


@dataclass(frozen=True)
class RebalancePlan:
    mode: str
    moves: Tuple[Move, ...]
    objective_before: float
    objective_after: float

    @property
    def improvement(self) -> float:
        return self.objective_before - self.objective_after

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "moves": [move.to_dict() for move in self.moves],
            "objective_before": self.objective_before,
            "objective_after": self.objective_after,
        }


def _by_makespan(state: PlacementState, pool: ResourcePool) -> List[Tuple[str, Tuple[str, ...], float]]:
    """Dataflows with their critical path, longest first."""
    paths = []
    for dataflow_id in state.ids:
        path, cost = enumerate_critical_path(state.dataflows[dataflow_id], state.mappings[dataflow_id], pool)
        paths.append((dataflow_id, path, cost))
    return sorted(paths, key=lambda item: (-item[2], item[0]))


def _makespan_with(rated: RatedDataflow, assignments: Dict[str, int], pool: ResourcePool) -> float:
    return longest_path(rated, edge_weight(rated, assignments, pool))[1]


def _hosts(ledger: LoadLedger, rated: RatedDataflow, vertex_id: str, pool: ResourcePool, target: int) -> bool:
    """Whether ``target`` may take the vertex once it has left its current resource."""
    if not allowed_resources(rated, vertex_id, pool)[target]:
        return False
    if rated.is_source(vertex_id):
        return True
    return ledger.can_host(target, query_load(rated, vertex_id, pool, target))


def _relocate(ledger: LoadLedger, rated: RatedDataflow, vertex_id: str, pool: ResourcePool, old: int, new: int) -> None:
    if rated.is_source(vertex_id):
        return
    key = (rated.id, vertex_id)
    ledger.remove(old, key)
    ledger.add(new, key, query_load(rated, vertex_id, pool, new))


def _detach(ledger: LoadLedger, rated: RatedDataflow, vertex_id: str, resource: int) -> None:
    if not rated.is_source(vertex_id):
        ledger.remove(resource, (rated.id, vertex_id))


def _attach(ledger: LoadLedger, rated: RatedDataflow, vertex_id: str, pool: ResourcePool, resource: int) -> None:
    if not rated.is_source(vertex_id):
        ledger.add(resource, (rated.id, vertex_id), query_load(rated, vertex_id, pool, resource))


def _reach(rated: RatedDataflow, assignments: Dict[str, int], pool: ResourcePool) -> Tuple[Dict[str, float], Dict[str, float]]:
    """Longest path into each vertex and longest path from each vertex to a sink."""
    weight = edge_weight(rated, assignments, pool)
    spec = rated.spec
    into: Dict[str, float] = {}
    for vertex_id in rated.order:
        into[vertex_id] = max((into[p] + weight(p, vertex_id) for p in spec.predecessors[vertex_id]), default=0.0)
    out: Dict[str, float] = {}
    for vertex_id in reversed(rated.order):
        out[vertex_id] = max((weight(vertex_id, c) + out[c] for c in spec.successors[vertex_id]), default=0.0)
    return into, out


def _makespans_if_moved(rated: RatedDataflow, assignments: Dict[str, int], pool: ResourcePool, vertex_id: str) -> np.ndarray:
    """Makespan of the dataflow for every possible resource of ``vertex_id``."""
    spec = rated.spec
    into, out = _reach(rated, assignments, pool)
    resources = len(pool)
    arrive = np.zeros(resources)
    parents = spec.predecessors[vertex_id]
    if parents:
        arrive = np.max(
            [
                into[p] + pool.latency(rated.query_types[p].id, assignments[p])
                + pool.transfer_from(assignments[p], rated.event_size(p))
                for p in parents
            ],
            axis=0,
        )
    leave = np.zeros(resources)
    children = spec.successors[vertex_id]
    if children:
        own = pool.latency_vector(rated.query_types[vertex_id].id)
        leave = own + np.max(
            [pool.transfer_to(assignments[c], rated.event_size(vertex_id)) + out[c] for c in children],
            axis=0,
        )
    _, bypass = longest_path(rated, edge_weight(rated, assignments, pool), skip=vertex_id)
    return np.maximum(arrive + leave, bypass)


def vertex_rebalance(state: PlacementState, pool: ResourcePool) -> Tuple[PlacementState, RebalancePlan]:
    """Move the slowest critical-path query of each dataflow to its best valid resource.

    Dataflows are visited longest makespan first; at most one move each, and
    only when that dataflow's makespan strictly drops.
    """
    before = objective(state, pool)
    ledger = LoadLedger.from_state(state, pool)
    current = state
    moves: List[Move] = []
    for dataflow_id, path, cost in _by_makespan(state, pool):
        rated = current.dataflows[dataflow_id]
        assignments = dict(current.mappings[dataflow_id].assignments)
        vertex_id = min(path, key=lambda v: (-pool.latency(rated.query_types[v].id, assignments[v]), v))
        origin = assignments[vertex_id]

        candidates = _makespans_if_moved(rated, assignments, pool, vertex_id)
        _detach(ledger, rated, vertex_id, origin)
        type_id = rated.query_types[vertex_id].id
        mask = allowed_resources(rated, vertex_id, pool)
        mask[origin] = False
        # only resources with more compute capacity for this query
        mask &= pool.latency_vector(type_id) < pool.latency(type_id, origin)
        if not rated.is_source(vertex_id):
            mask &= ledger.host_mask(pool.latency_vector(type_id), pool.energy_vector(type_id), rated.in_rate[vertex_id])
        mask &= candidates < cost

        target: Optional[int] = None
        # lowest makespan first, lowest index among equals
        ranking = np.lexsort((np.arange(len(pool)), candidates))
        for resource in ranking[mask[ranking]]:
            resource = int(resource)
            if not _hosts(ledger, rated, vertex_id, pool, resource):
                continue
            trial = {**assignments, vertex_id: resource}
            if _makespan_with(rated, trial, pool) < cost:
                target = resource
            break
        if target is None:
            _attach(ledger, rated, vertex_id, pool, origin)
            continue
        _attach(ledger, rated, vertex_id, pool, target)
        current = current.with_move(dataflow_id, vertex_id, target)
        moves.append(Move(dataflow_id, vertex_id, origin, target))
        logger.debug("vertex rebalance moved %s/%s %d -> %d", dataflow_id, vertex_id, origin, target)

    return current, RebalancePlan("vertex", tuple(moves), before, objective(current, pool))


def edge_rebalance(state: PlacementState, pool: ResourcePool) -> Tuple[PlacementState, RebalancePlan]:
    """Collapse the costliest network hop on each dataflow's critical path.

    Either endpoint may join the other; the option giving the lower makespan
    wins and is applied only when it strictly improves.
    """
    before = objective(state, pool)
    ledger = LoadLedger.from_state(state, pool)
    current = state
    moves: List[Move] = []
    for dataflow_id, path, cost in _by_makespan(state, pool):
        if len(path) < 2:
            continue
        rated = current.dataflows[dataflow_id]
        assignments = dict(current.mappings[dataflow_id].assignments)
        hops = [
            (pool.transfer_time(assignments[u], assignments[v], rated.event_size(u)), -i, u, v)
            for i, (u, v) in enumerate(zip(path, path[1:]))
        ]
        hop_cost, _, upstream, downstream = max(hops)
        if hop_cost <= 0:
            continue

        best: Optional[Tuple[float, str, int, int]] = None
        for vertex_id, target in ((upstream, assignments[downstream]), (downstream, assignments[upstream])):
            origin = assignments[vertex_id]
            _detach(ledger, rated, vertex_id, origin)
            feasible = _hosts(ledger, rated, vertex_id, pool, target)
            _attach(ledger, rated, vertex_id, pool, origin)
            if not feasible:
                continue
            trial = _makespan_with(rated, {**assignments, vertex_id: target}, pool)
            if best is None or trial < best[0]:
                best = (trial, vertex_id, origin, target)
        if best is None or best[0] >= cost:
            continue
        _, vertex_id, origin, target = best
        _relocate(ledger, rated, vertex_id, pool, origin, target)
        current = current.with_move(dataflow_id, vertex_id, target)
        moves.append(Move(dataflow_id, vertex_id, origin, target))
        logger.debug("edge rebalance moved %s/%s %d -> %d", dataflow_id, vertex_id, origin, target)

    return current, RebalancePlan("edge", tuple(moves), before, objective(current, pool))


def combined_rebalance(state: PlacementState, pool: ResourcePool) -> Tuple[PlacementState, RebalancePlan]:
    middle, vertex_plan = vertex_rebalance(state, pool)
    final, edge_plan = edge_rebalance(middle, pool)
    return final, RebalancePlan(
        "vertex+edge",
        vertex_plan.moves + edge_plan.moves,
        vertex_plan.objective_before,
        edge_plan.objective_after,
    )


def apply_rebalance(state: PlacementState, pool: ResourcePool, mode: str) -> Tuple[PlacementState, RebalancePlan]:
    if mode == "none":
        value = objective(state, pool)
        return state, RebalancePlan("none", (), value, value)
    passes = {"vertex": vertex_rebalance, "edge": edge_rebalance, "vertex+edge": combined_rebalance}
    try:
        rebalance = passes[mode]
    except KeyError:
        raise ConfigError(f"Unknown rebalance mode '{mode}', choose from {list(config.REBALANCE_MODES)}") from None
    return rebalance(state, pool)
