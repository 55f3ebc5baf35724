"""Placement strategies for an arriving dataflow: TopSet, TopSet/P and the brute-force oracle.

The genetic strategies live in :mod:`src.genetic`; :func:`schedule_arrival`
dispatches to any of them by name.
"""

from __future__ import annotations

import enum
import itertools
import logging
import time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Dict, Optional, Sequence, Tuple

import numpy as np

from . import config
from .errors import ConfigError, InstanceTooLargeError, StateError
from .evaluator import PlacementProblem
from .model import RatedDataflow, topo_set_order
from .placement import (
    LoadLedger,
    Mapping,
    PlacementState,
    allowed_resources,
    objective,
    query_load,
    validate_state,
)
from .resources import ResourceClass, ResourcePool

if TYPE_CHECKING:
    from .genetic import GaParams

logger = logging.getLogger(__name__)


@dataclass
class ScheduleResult:
    strategy: str
    accepted: bool
    mappings: Dict[str, Mapping] = field(default_factory=dict)
    planning_time_sec: float = 0.0
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    @property
    def mapping(self) -> Optional[Mapping]:
        """The single mapping of an incremental placement."""
        if len(self.mappings) != 1:
            return None
        return next(iter(self.mappings.values()))

    @classmethod
    def rejected(cls, strategy: str, reason: str, planning_time_sec: float = 0.0, **diagnostics: Any) -> "ScheduleResult":
        return cls(strategy, False, {}, planning_time_sec, {"reason": reason, **diagnostics})


class PenaltyModel(str, enum.Enum):
    """How collocation stretches the latency of queries already on a resource."""

    EFFECTIVE_LATENCY = "effective-latency"
    SHARED_LATENCY = "shared-latency"

    def stretch(self, pool: ResourcePool, counts: np.ndarray) -> np.ndarray:
        """Latency multiplier f(m) for m queries sharing one resource."""
        counts = np.asarray(counts, dtype=float)
        if self is PenaltyModel.SHARED_LATENCY:
            return counts
        factors = pool.catalog.capacity_factors(counts)
        with np.errstate(divide="ignore"):
            return np.where(factors > 0, counts / np.where(factors > 0, factors, 1.0), np.inf)


def _penalties(ledger: LoadLedger, pool: ResourcePool, model: PenaltyModel) -> np.ndarray:
    counts = ledger.count
    increase = model.stretch(pool, counts + 1) - model.stretch(pool, counts)
    with np.errstate(invalid="ignore"):
        penalty = np.where(counts > 0, ledger.latency_sum * increase, 0.0)
    return np.maximum(np.nan_to_num(penalty, nan=np.inf), 0.0)


def estimate_penalty(
    resource: int,
    candidate: Tuple[str, str],
    state: PlacementState,
    pool: ResourcePool,
    model: PenaltyModel = PenaltyModel.EFFECTIVE_LATENCY,
    ledger: Optional[LoadLedger] = None,
) -> float:
    """Increase in the critical-path lengths of queries already on ``resource``
    when ``candidate`` (a dataflow id, vertex id pair) joins them, never negative.

    A candidate already recorded on the resource does not count as its own neighbour.
    """
    pool.resource(resource)
    ledger = ledger if ledger is not None else LoadLedger.from_state(state, pool)
    if candidate in ledger.keys(resource):
        ledger = ledger.copy()
        ledger.remove(resource, candidate)
    return float(_penalties(ledger, pool, model)[resource])


def _visit_order(rated: RatedDataflow, pool: ResourcePool):
    catalog = pool.catalog
    for level in topo_set_order(rated.spec).sets:
        ranked = sorted(
            level,
            key=lambda v: (-catalog.latency(rated.query_types[v].id, ResourceClass.EDGE), v),
        )
        yield from ranked


def topset_place(
    state: PlacementState,
    pool: ResourcePool,
    rated: RatedDataflow,
    penalty_mode: bool = False,
    penalty_model: PenaltyModel = PenaltyModel.EFFECTIVE_LATENCY,
) -> ScheduleResult:
    """Place ``rated`` query by query in topological-set order without moving anything else."""
    strategy = "topset-p" if penalty_mode else "topset"
    if rated.id in state:
        raise StateError(f"Dataflow '{rated.id}' is already active")
    started = time.perf_counter()
    ledger = LoadLedger.from_state(state, pool)
    # edge before cloud, then lowest index
    tie_break = np.lexsort((np.arange(len(pool)), ~pool.is_edge_array))
    class_rank = np.empty(len(pool), dtype=int)
    class_rank[tie_break] = np.arange(len(pool))

    path_to: Dict[str, float] = {}
    assignments: Dict[str, int] = {}
    for vertex_id in _visit_order(rated, pool):
        type_id = rated.query_types[vertex_id].id
        latency = pool.latency_vector(type_id)
        cost = latency.copy()
        parents = rated.spec.predecessors[vertex_id]
        if parents:
            arrivals = [path_to[p] + pool.transfer_from(assignments[p], rated.event_size(p)) for p in parents]
            cost = cost + np.max(arrivals, axis=0)
        candidates = allowed_resources(rated, vertex_id, pool)
        source = rated.is_source(vertex_id)
        if not source:
            candidates &= ledger.host_mask(latency, pool.energy_vector(type_id), rated.in_rate[vertex_id])
        score = cost + _penalties(ledger, pool, penalty_model) if penalty_mode and not source else cost

        chosen = None
        ranking = np.lexsort((class_rank, score))
        for resource in ranking[candidates[ranking]]:
            resource = int(resource)
            if source:
                chosen = resource
                break
            load = query_load(rated, vertex_id, pool, resource)
            if ledger.can_host(resource, load):
                ledger.add(resource, (rated.id, vertex_id), load)
                chosen = resource
                break
        if chosen is None:
            elapsed = time.perf_counter() - started
            logger.info("%s rejected '%s': no valid resource for '%s'", strategy, rated.id, vertex_id)
            return ScheduleResult.rejected(strategy, f"no valid resource for vertex '{vertex_id}'", elapsed, vertex=vertex_id)
        assignments[vertex_id] = chosen
        path_to[vertex_id] = float(cost[chosen])

    mapping = Mapping(rated.id, assignments)
    candidate_state = state.with_dataflow(rated, mapping)
    report = validate_state(candidate_state, pool)
    elapsed = time.perf_counter() - started
    if not report.ok:
        logger.warning("%s placement of '%s' failed re-validation: %s", strategy, rated.id, report.violations[0].detail)
        return ScheduleResult.rejected(strategy, "placement failed re-validation", elapsed)
    return ScheduleResult(
        strategy,
        True,
        {rated.id: mapping},
        elapsed,
        {"path_lengths": dict(sorted(path_to.items()))},
    )


def brute_force_place(
    dags: Sequence[RatedDataflow],
    pool: ResourcePool,
    state: Optional[PlacementState] = None,
    max_queries: int = config.BRUTE_FORCE_MAX_QUERIES,
    max_resources: int = config.BRUTE_FORCE_MAX_RESOURCES,
) -> ScheduleResult:
    """Exhaustive search over every joint assignment of ``dags`` next to ``state``.

    Only meant as a test oracle; refuses instances above the size guard.
    """
    state = state or PlacementState.empty()
    total = sum(rated.size for rated in dags)
    if total > max_queries or len(pool) > max_resources:
        raise InstanceTooLargeError(
            f"Brute force limited to {max_queries} queries on {max_resources} resources, got {total} on {len(pool)}"
        )
    started = time.perf_counter()
    problem = PlacementProblem(dags, pool, LoadLedger.from_state(state, pool))
    genes = np.array(list(itertools.product(range(len(pool)), repeat=problem.n_genes)), dtype=int)
    genes = genes.reshape(-1, problem.n_genes)
    evaluation = problem.evaluate_chunked(genes)
    valid = np.flatnonzero(evaluation.valid)
    elapsed = time.perf_counter() - started
    diagnostics = {"evaluated": int(len(genes)), "valid": int(len(valid))}
    if valid.size == 0:
        return ScheduleResult.rejected("brute", "no valid placement", elapsed, **diagnostics)

    # stable sort keeps the lexicographically smallest optimum first
    for row in valid[np.argsort(evaluation.objective[valid], kind="stable")]:
        mappings = problem.to_mappings(genes[row])
        candidate = state
        for rated in dags:
            candidate = candidate.with_dataflow(rated, mappings[rated.id])
        if validate_state(candidate, pool).ok:
            diagnostics["objective"] = objective(candidate, pool)
            return ScheduleResult("brute", True, mappings, time.perf_counter() - started, diagnostics)
    return ScheduleResult.rejected("brute", "no valid placement", time.perf_counter() - started, **diagnostics)


def schedule_arrival(
    strategy: str,
    state: PlacementState,
    pool: ResourcePool,
    rated: RatedDataflow,
    ga_params: Optional["GaParams"] = None,
    penalty_model: PenaltyModel = PenaltyModel.EFFECTIVE_LATENCY,
) -> ScheduleResult:
    """Run the named strategy for one arriving dataflow.

    For ``gag`` the result holds new mappings for every active dataflow.
    """
    from .genetic import GaParams, ga_global, ga_incremental

    if strategy == "topset":
        return topset_place(state, pool, rated)
    if strategy == "topset-p":
        return topset_place(state, pool, rated, penalty_mode=True, penalty_model=penalty_model)
    if strategy == "gai":
        return ga_incremental(state, pool, rated, ga_params or GaParams())
    if strategy == "gag":
        return ga_global(state, pool, ga_params or GaParams(), arriving=rated)
    if strategy == "brute":
        return brute_force_place([rated], pool, state)
    raise ConfigError(f"Unknown strategy '{strategy}', choose from {sorted(config.STRATEGIES + ('brute',))}")
