"""Mappings of queries to resources, the three placement constraints and the objective."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterable, List, Mapping as MappingType, Optional, Sequence, Tuple

import numpy as np

from . import config
from .errors import DomainError, IncompleteMappingError, StateError
from .model import RatedDataflow, enumerate_critical_path
from .resources import Resource, ResourcePool

logger = logging.getLogger(__name__)

SECONDS_PER_HOUR = 3600.0


@dataclass(frozen=True)
class Mapping:
    """Resource index of every vertex of one dataflow."""

    dataflow_id: str
    assignments: Dict[str, int]

    def __post_init__(self) -> None:
        object.__setattr__(self, "assignments", {str(v): int(r) for v, r in self.assignments.items()})

    def resource_of(self, vertex_id: str) -> int:
        try:
            return self.assignments[vertex_id]
        except KeyError:
            raise IncompleteMappingError(f"Vertex '{vertex_id}' of '{self.dataflow_id}' is not mapped") from None

    def moved(self, vertex_id: str, resource: int) -> "Mapping":
        assignments = dict(self.assignments)
        assignments[vertex_id] = int(resource)
        return Mapping(self.dataflow_id, assignments)

    def to_dict(self) -> dict:
        return {"dataflow_id": self.dataflow_id, "assignments": dict(sorted(self.assignments.items()))}

    @classmethod
    def from_dict(cls, payload: MappingType) -> "Mapping":
        return cls(str(payload["dataflow_id"]), dict(payload["assignments"]))


@dataclass(frozen=True, eq=False)
class PlacementState:
    """Active dataflows and their mappings at one control interval.

    States are values: every change returns a new state.
    """

    dataflows: Dict[str, RatedDataflow] = field(default_factory=dict)
    mappings: Dict[str, Mapping] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if set(self.dataflows) != set(self.mappings):
            raise StateError("Active dataflows and mappings must have identical keys")
        for dataflow_id, mapping in self.mappings.items():
            if mapping.dataflow_id != dataflow_id:
                raise StateError(f"Mapping stored under '{dataflow_id}' belongs to '{mapping.dataflow_id}'")
            expected = set(self.dataflows[dataflow_id].spec.vertex_ids)
            if set(mapping.assignments) != expected:
                missing = sorted(expected - set(mapping.assignments))
                raise IncompleteMappingError(f"Mapping for '{dataflow_id}' does not match its vertices (missing {missing})")

    @classmethod
    def empty(cls) -> "PlacementState":
        return cls({}, {})

    def __len__(self) -> int:
        return len(self.dataflows)

    def __contains__(self, dataflow_id: object) -> bool:
        return dataflow_id in self.dataflows

    @property
    def ids(self) -> List[str]:
        return sorted(self.dataflows)

    @property
    def vertex_count(self) -> int:
        return sum(rated.size for rated in self.dataflows.values())

    @cached_property
    def per_resource_load(self) -> Dict[int, Tuple[Tuple[str, str], ...]]:
        """resource index -> (dataflow id, vertex id) pairs placed on it."""
        load: Dict[int, List[Tuple[str, str]]] = {}
        for dataflow_id in self.ids:
            for vertex_id, resource in self.mappings[dataflow_id].assignments.items():
                load.setdefault(resource, []).append((dataflow_id, vertex_id))
        return {resource: tuple(sorted(items)) for resource, items in sorted(load.items())}

    def with_dataflow(self, rated: RatedDataflow, mapping: Mapping) -> "PlacementState":
        if rated.id in self.dataflows:
            raise StateError(f"Dataflow '{rated.id}' is already active")
        return PlacementState({**self.dataflows, rated.id: rated}, {**self.mappings, rated.id: mapping})

    def without(self, dataflow_id: str) -> "PlacementState":
        if dataflow_id not in self.dataflows:
            raise StateError(f"Dataflow '{dataflow_id}' is not active")
        dataflows = {k: v for k, v in self.dataflows.items() if k != dataflow_id}
        mappings = {k: v for k, v in self.mappings.items() if k != dataflow_id}
        return PlacementState(dataflows, mappings)

    def with_mappings(self, mappings: MappingType[str, Mapping]) -> "PlacementState":
        """Replace the mappings of some (or all) active dataflows."""
        unknown = set(mappings) - set(self.dataflows)
        if unknown:
            raise StateError(f"Mappings given for inactive dataflows {sorted(unknown)}")
        return PlacementState(dict(self.dataflows), {**self.mappings, **mappings})

    def with_move(self, dataflow_id: str, vertex_id: str, resource: int) -> "PlacementState":
        return self.with_mappings({dataflow_id: self.mappings[dataflow_id].moved(vertex_id, resource)})

    def to_dict(self) -> dict:
        return {
            "dataflows": [self.dataflows[i].spec.to_dict() for i in self.ids],
            "mappings": [self.mappings[i].to_dict() for i in self.ids],
        }


@dataclass(frozen=True)
class Violation:
    constraint: int
    dataflow_id: Optional[str]
    subject: str
    detail: str

    def to_dict(self) -> dict:
        return {
            "constraint": self.constraint,
            "dataflow_id": self.dataflow_id,
            "subject": self.subject,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class ConstraintReport:
    violations: Tuple[Violation, ...] = ()

    def _clean(self, constraint: int) -> bool:
        return not any(v.constraint == constraint for v in self.violations)

    @property
    def c1_ok(self) -> bool:
        return self._clean(1)

    @property
    def c2_ok(self) -> bool:
        return self._clean(2)

    @property
    def c3_ok(self) -> bool:
        return self._clean(3)

    @property
    def ok(self) -> bool:
        return not self.violations

    @classmethod
    def combine(cls, *reports: "ConstraintReport") -> "ConstraintReport":
        return cls(tuple(v for report in reports for v in report.violations))

    def to_dict(self) -> dict:
        return {
            "c1_ok": self.c1_ok,
            "c2_ok": self.c2_ok,
            "c3_ok": self.c3_ok,
            "violations": [v.to_dict() for v in self.violations],
        }


@dataclass(frozen=True)
class QueryLoad:
    """What one non-source query costs the resource it runs on."""

    rate: float
    latency: float
    energy: float


def query_load(rated: RatedDataflow, vertex_id: str, pool: ResourcePool, resource: int) -> QueryLoad:
    type_id = rated.query_types[vertex_id].id
    return QueryLoad(rated.in_rate[vertex_id], pool.latency(type_id, resource), pool.energy(type_id, resource))


def rate_bound(pool: ResourcePool, latencies: Sequence[float]) -> float:
    """Largest admissible input rate per query when these latencies share a resource."""
    if not latencies:
        return math.inf
    total = math.fsum(latencies)
    if total <= 0:
        return math.inf
    return max(pool.catalog.capacity_factor(len(latencies)), 0.0) / total


def battery_drain(resource: Resource, loads: Iterable[QueryLoad]) -> float:
    """Charge (mAh) drawn over one recharge interval; base load converted from mA."""
    per_second = resource.base_load_ma / SECONDS_PER_HOUR + math.fsum(load.rate * load.energy for load in loads)
    return resource.recharge_interval_sec * per_second


def allowed_resources(rated: RatedDataflow, vertex_id: str, pool: ResourcePool) -> np.ndarray:
    """Constraint 1 mask: sources on edges, sinks on cloud VMs, others anywhere."""
    if rated.is_source(vertex_id):
        return pool.is_edge_array.copy()
    if rated.is_sink(vertex_id):
        return ~pool.is_edge_array
    return np.ones(len(pool), dtype=bool)


class LoadLedger:
    """Running per-resource totals of the non-source queries placed so far.

    Scalar checks use the same formulas as the validators; the array views
    support vectorised screening of every resource at once.
    """

    def __init__(self, pool: ResourcePool) -> None:
        self.pool = pool
        n = len(pool)
        self._entries: Dict[int, Dict[Tuple[str, str], QueryLoad]] = {}
        self.count = np.zeros(n, dtype=int)
        self.latency_sum = np.zeros(n)
        self.max_rate = np.zeros(n)
        self.energy_rate = np.zeros(n)
        edge = pool.is_edge_array
        self.capacity = np.array([r.battery_capacity_mah if r.is_edge else np.inf for r in pool.resources])
        self.recharge = np.array([r.recharge_interval_sec if r.is_edge else 0.0 for r in pool.resources])
        self.base_rate = np.where(edge, [(r.base_load_ma or 0.0) / SECONDS_PER_HOUR for r in pool.resources], 0.0)

    @classmethod
    def from_state(cls, state: PlacementState, pool: ResourcePool) -> "LoadLedger":
        ledger = cls(pool)
        for dataflow_id in state.ids:
            rated = state.dataflows[dataflow_id]
            for vertex_id, resource in state.mappings[dataflow_id].assignments.items():
                if not rated.is_source(vertex_id):
                    ledger.add(resource, (dataflow_id, vertex_id), query_load(rated, vertex_id, pool, resource))
        return ledger

    def copy(self) -> "LoadLedger":
        clone = LoadLedger.__new__(LoadLedger)
        clone.pool = self.pool
        clone._entries = {r: dict(entries) for r, entries in self._entries.items()}
        for name in ("count", "latency_sum", "max_rate", "energy_rate", "capacity", "recharge", "base_rate"):
            setattr(clone, name, getattr(self, name).copy())
        return clone

    def loads(self, resource: int) -> List[QueryLoad]:
        return list(self._entries.get(resource, {}).values())

    def keys(self, resource: int) -> List[Tuple[str, str]]:
        return sorted(self._entries.get(resource, {}))

    def add(self, resource: int, key: Tuple[str, str], load: QueryLoad) -> None:
        self._entries.setdefault(resource, {})[key] = load
        self._refresh(resource)

    def remove(self, resource: int, key: Tuple[str, str]) -> QueryLoad:
        try:
            load = self._entries[resource].pop(key)
        except KeyError:
            raise StateError(f"{key} is not recorded on resource {resource}") from None
        self._refresh(resource)
        return load

    def _refresh(self, resource: int) -> None:
        loads = self.loads(resource)
        self.count[resource] = len(loads)
        self.latency_sum[resource] = math.fsum(load.latency for load in loads)
        self.max_rate[resource] = max((load.rate for load in loads), default=0.0)
        self.energy_rate[resource] = math.fsum(load.rate * load.energy for load in loads)

    def bound(self, resource: int) -> float:
        return rate_bound(self.pool, [load.latency for load in self.loads(resource)])

    def can_host(self, resource: int, load: QueryLoad) -> bool:
        """Exact check that constraints 2 and 3 hold on ``resource`` with ``load`` added."""
        loads = self.loads(resource) + [load]
        bound = rate_bound(self.pool, [item.latency for item in loads])
        if any(item.rate >= bound for item in loads):
            return False
        target = self.pool.resource(resource)
        if target.is_edge and battery_drain(target, loads) > target.battery_capacity_mah:
            return False
        return True

    def host_mask(self, latency: np.ndarray, energy: np.ndarray, rate: float) -> np.ndarray:
        """Resources that could take one more query with these per-resource coefficients."""
        counts = self.count + 1
        factors = np.maximum(self.pool.catalog.capacity_factors(counts), 0.0)
        totals = self.latency_sum + latency
        with np.errstate(divide="ignore", invalid="ignore"):
            bounds = np.where(totals > 0, factors / totals, np.inf)
        fits_rate = np.maximum(self.max_rate, rate) < bounds
        drain = self.recharge * (self.base_rate + self.energy_rate + rate * energy)
        fits_energy = drain <= self.capacity
        return fits_rate & fits_energy


def check_constraint1(state: PlacementState, pool: ResourcePool) -> ConstraintReport:
    violations = []
    for dataflow_id in state.ids:
        rated = state.dataflows[dataflow_id]
        assignments = state.mappings[dataflow_id].assignments
        for vertex_id in rated.spec.vertex_ids:
            resource = pool.resource(assignments[vertex_id])
            if rated.is_source(vertex_id) and not resource.is_edge:
                violations.append(Violation(1, dataflow_id, vertex_id, f"source query on cloud resource {resource.id}"))
            elif rated.is_sink(vertex_id) and resource.is_edge:
                violations.append(Violation(1, dataflow_id, vertex_id, f"sink query on edge resource {resource.id}"))
    return ConstraintReport(tuple(violations))


def _non_source_loads(state: PlacementState, pool: ResourcePool) -> Dict[int, List[Tuple[str, str, QueryLoad]]]:
    loads: Dict[int, List[Tuple[str, str, QueryLoad]]] = {}
    for resource, items in state.per_resource_load.items():
        for dataflow_id, vertex_id in items:
            rated = state.dataflows[dataflow_id]
            if not rated.is_source(vertex_id):
                loads.setdefault(resource, []).append(
                    (dataflow_id, vertex_id, query_load(rated, vertex_id, pool, resource))
                )
    return loads


def check_constraint2(state: PlacementState, pool: ResourcePool) -> ConstraintReport:
    violations = []
    for resource, items in _non_source_loads(state, pool).items():
        bound = rate_bound(pool, [load.latency for _, _, load in items])
        for dataflow_id, vertex_id, load in items:
            if load.rate >= bound:
                violations.append(
                    Violation(
                        2,
                        dataflow_id,
                        vertex_id,
                        f"input rate {load.rate:.6g} e/s not below bound {bound:.6g} e/s on {pool.resource(resource).id} "
                        f"with {len(items)} queries",
                    )
                )
    return ConstraintReport(tuple(violations))


def check_constraint3(state: PlacementState, pool: ResourcePool) -> ConstraintReport:
    loads = _non_source_loads(state, pool)
    violations = []
    for resource in pool.edges:
        drain = battery_drain(resource, [load for _, _, load in loads.get(resource.index, [])])
        if drain > resource.battery_capacity_mah:
            violations.append(
                Violation(3, None, resource.id, f"drain {drain:.6g} mAh exceeds capacity {resource.battery_capacity_mah:.6g} mAh")
            )
    return ConstraintReport(tuple(violations))


def validate_state(state: PlacementState, pool: ResourcePool) -> ConstraintReport:
    return ConstraintReport.combine(
        check_constraint1(state, pool),
        check_constraint2(state, pool),
        check_constraint3(state, pool),
    )


def rate_bounds(state: PlacementState, pool: ResourcePool) -> Dict[int, float]:
    """Constraint 2 bound of every resource hosting at least one non-source query."""
    return {
        resource: rate_bound(pool, [load.latency for _, _, load in items])
        for resource, items in sorted(_non_source_loads(state, pool).items())
    }


def makespan(rated: RatedDataflow, mapping: Mapping, pool: ResourcePool) -> float:
    return enumerate_critical_path(rated, mapping, pool)[1]


def dataflow_makespans(state: PlacementState, pool: ResourcePool) -> Dict[str, float]:
    return {i: makespan(state.dataflows[i], state.mappings[i], pool) for i in state.ids}


def objective(state: PlacementState, pool: ResourcePool) -> float:
    """Sum of the makespans of every active dataflow."""
    return math.fsum(dataflow_makespans(state, pool).values())


def migrated_vertices(before: PlacementState, after: PlacementState) -> List[Tuple[str, str, int, int]]:
    """(dataflow, vertex, from, to) for vertices present in both states on different resources."""
    moved = []
    for dataflow_id in sorted(set(before.mappings) & set(after.mappings)):
        old = before.mappings[dataflow_id].assignments
        new = after.mappings[dataflow_id].assignments
        for vertex_id in sorted(set(old) & set(new)):
            if old[vertex_id] != new[vertex_id]:
                moved.append((dataflow_id, vertex_id, old[vertex_id], new[vertex_id]))
    return moved


def count_migrations(before: PlacementState, after: PlacementState) -> int:
    return len(migrated_vertices(before, after))


def stabilization_time(
    before: PlacementState,
    after: PlacementState,
    pool: ResourcePool,
    migration_cost_sec: float = config.MIGRATION_COST_SEC,
    psi_max: float = config.STABILIZATION_CAP_SEC,
) -> float:
    """Longest catch-up time over migrated vertices.

    Events buffered during a migration (rate x migration cost) drain at the
    exclusive service rate of the new resource minus the input rate.
    """
    if migration_cost_sec < 0:
        raise DomainError("Migration cost must be non-negative")
    worst = 0.0
    for dataflow_id, vertex_id, _, resource in migrated_vertices(before, after):
        rated = after.dataflows[dataflow_id]
        rate = rated.in_rate[vertex_id]
        latency = pool.latency(rated.query_types[vertex_id].id, resource)
        if latency <= 0:
            continue
        headroom = 1.0 / latency - rate
        queued = rate * migration_cost_sec
        if headroom <= 0:
            logger.warning(
                "Unstable catch-up for %s/%s on %s (service rate %.4g <= input %.4g); capping at %.1fs",
                dataflow_id, vertex_id, pool.resource(resource).id, 1.0 / latency, rate, psi_max,
            )
            psi = psi_max
        else:
            psi = queued / headroom
            if psi > psi_max:
                logger.warning("Stabilization of %s/%s is %.3gs; capping at %.1fs", dataflow_id, vertex_id, psi, psi_max)
                psi = psi_max
        worst = max(worst, psi)
    return worst
