"""Control-interval simulation: apply activities, schedule, rebalance, record metrics."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import pandas as pd

from . import config
from .errors import ConfigError, ProvenanceError, StateError
from .genetic import GaParams, ga_global
from .model import DataflowSpec, RatedDataflow, longest_path, propagate_rates
from .placement import Mapping as PlacementMapping
from .placement import (
    ConstraintReport,
    PlacementState,
    count_migrations,
    dataflow_makespans,
    stabilization_time,
    validate_state,
)
from .rebalance import apply_rebalance
from .resources import PoolConfig, ResourceClass, ResourcePool, build_pool
from .schedulers import PenaltyModel, schedule_arrival
from .workload import ActivityKind, DagPool, WorkloadScript, instance_id, utilization

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScenarioConfig:
    pool_config: PoolConfig
    strategy: str = "topset-p"
    rebalance: str = "none"
    migration_cost_sec: float = config.MIGRATION_COST_SEC
    psi_max: float = config.STABILIZATION_CAP_SEC
    ga_params: GaParams = field(default_factory=GaParams)
    horizon: Optional[int] = None
    seed: int = config.RANDOM_STATE
    penalty_model: PenaltyModel = PenaltyModel.EFFECTIVE_LATENCY
    pool_path: Optional[Path] = None
    workload_path: Optional[Path] = None
    # checks every changed state with the constraint validator
    audit: bool = True

    def __post_init__(self) -> None:
        if self.strategy not in config.STRATEGIES:
            raise ConfigError(f"Unknown strategy '{self.strategy}', choose from {list(config.STRATEGIES)}")
        if self.rebalance not in config.REBALANCE_MODES:
            raise ConfigError(f"Unknown rebalance mode '{self.rebalance}', choose from {list(config.REBALANCE_MODES)}")
        if self.migration_cost_sec <= 0:
            raise ConfigError("Migration cost must be positive")
        if self.psi_max <= 0:
            raise ConfigError("Stabilization cap must be positive")
        if self.horizon is not None and self.horizon < 1:
            raise ConfigError("Horizon must be positive")

    def to_dict(self) -> dict:
        return {
            "pool": self.pool_config.to_dict(),
            "strategy": self.strategy,
            "rebalance": self.rebalance,
            "migration_cost_sec": self.migration_cost_sec,
            "psi_max": self.psi_max,
            "ga": self.ga_params.to_dict(),
            "horizon": self.horizon,
            "seed": self.seed,
            "penalty_model": self.penalty_model.value,
            "pool_path": str(self.pool_path) if self.pool_path else None,
            "workload_path": str(self.workload_path) if self.workload_path else None,
            "audit": self.audit,
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "ScenarioConfig":
        pool_payload = payload.get("pool")
        if isinstance(pool_payload, str) or pool_payload is None:
            pool_config = PoolConfig.preset(pool_payload or "small")
        else:
            pool_config = PoolConfig.from_dict(pool_payload)
        try:
            return cls(
                pool_config=pool_config,
                strategy=payload.get("strategy", "topset-p"),
                rebalance=payload.get("rebalance", "none"),
                migration_cost_sec=float(payload.get("migration_cost_sec", config.MIGRATION_COST_SEC)),
                psi_max=float(payload.get("psi_max", config.STABILIZATION_CAP_SEC)),
                ga_params=GaParams.from_dict(payload.get("ga", {})),
                horizon=payload.get("horizon"),
                seed=int(payload.get("seed", config.RANDOM_STATE)),
                penalty_model=PenaltyModel(payload.get("penalty_model", PenaltyModel.EFFECTIVE_LATENCY.value)),
                pool_path=Path(payload["pool_path"]) if payload.get("pool_path") else None,
                workload_path=Path(payload["workload_path"]) if payload.get("workload_path") else None,
                audit=bool(payload.get("audit", True)),
            )
        except ValueError as exc:
            raise ConfigError(f"Bad scenario config: {exc}") from exc


@dataclass(frozen=True)
class IntervalRecord:
    t: int
    activity: str
    dataflow_id: Optional[str]
    accepted: bool
    objective_s: float
    planning_s: float
    migrations: int
    stabilization_s: float
    utilization: float
    edge_only_s: float
    cloud_only_s: float
    rebalance_moves: int
    active_dags: int
    makespans: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "activity": self.activity,
            "dataflow_id": self.dataflow_id,
            "accepted": self.accepted,
            "objective_s": self.objective_s,
            "planning_s": self.planning_s,
            "migrations": self.migrations,
            "stabilization_s": self.stabilization_s,
            "utilization": self.utilization,
            "edge_only_s": self.edge_only_s,
            "cloud_only_s": self.cloud_only_s,
            "rebalance_moves": self.rebalance_moves,
            "active_dags": self.active_dags,
            "makespans": dict(self.makespans),
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "IntervalRecord":
        return cls(**{key: payload[key] for key in cls.__dataclass_fields__ if key in payload})


@dataclass
class SimTrace:
    config: Dict[str, Any]
    provenance: Dict[str, Any]
    records: List[IntervalRecord]
    final_state: Dict[str, Any] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        rows = [record.to_dict() for record in self.records]
        return pd.DataFrame(rows, columns=config.TRACE_COLUMNS)

    def summary(self) -> Dict[str, Dict[str, float]]:
        frame = self.to_frame()
        stats = {}
        for metric in config.SUMMARY_METRICS:
            column = frame[metric].astype(float)
            stats[metric] = {
                "mean": float(column.mean()) if len(column) else 0.0,
                "median": float(column.median()) if len(column) else 0.0,
                "p99": float(column.quantile(0.99)) if len(column) else 0.0,
                "max": float(column.max()) if len(column) else 0.0,
            }
        stats["accepted_arrivals"] = {
            "count": int(((frame["activity"] == "arrive") & frame["accepted"].astype(bool)).sum()),
            "rejected": int(((frame["activity"] == "arrive") & ~frame["accepted"].astype(bool)).sum()),
        }
        return stats

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "provenance": self.provenance,
            "summary": self.summary(),
            "records": [record.to_dict() for record in self.records],
            "final_state": self.final_state,
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "SimTrace":
        return cls(
            dict(payload.get("config", {})),
            dict(payload.get("provenance", {})),
            [IntervalRecord.from_dict(item) for item in payload.get("records", [])],
            dict(payload.get("final_state", {})),
        )


def baseline_edge_only(rated: RatedDataflow, pool: ResourcePool) -> float:
    """Makespan with every non-sink query on its own edge device and free edge links.

    Only the hop into a sink on the cloud costs network time, priced at the
    fastest sampled edge-to-cloud link.
    """
    catalog = pool.catalog

    def weight(upstream: str, downstream: str) -> float:
        latency = catalog.latency(rated.query_types[upstream].id, ResourceClass.EDGE)
        if rated.is_sink(downstream):
            return latency + pool.min_transfer(ResourceClass.EDGE, ResourceClass.CLOUD, rated.event_size(upstream))
        return latency

    return longest_path(rated, weight)[1]


def baseline_cloud_only(rated: RatedDataflow, pool: ResourcePool) -> float:
    """Makespan with every non-source query on its own cloud VM and free cloud links.

    The source pays the fastest sampled edge-to-cloud hop.
    """
    catalog = pool.catalog

    def weight(upstream: str, downstream: str) -> float:
        if rated.is_source(upstream):
            latency = catalog.latency(rated.query_types[upstream].id, ResourceClass.EDGE)
            return latency + pool.min_transfer(ResourceClass.EDGE, ResourceClass.CLOUD, rated.event_size(upstream))
        return catalog.latency(rated.query_types[upstream].id, ResourceClass.CLOUD)

    return longest_path(rated, weight)[1]


def provenance(
    scenario: ScenarioConfig,
    dag_pool: DagPool,
    workload: WorkloadScript,
) -> Dict[str, Any]:
    from .data_loader import config_hash

    return {
        "seed": scenario.seed,
        "config_hash": config_hash(scenario.to_dict()),
        "pool_hash": config_hash({"resources": scenario.pool_config.to_dict(), "dataflows": dag_pool.to_dict()}),
        "workload_hash": config_hash(workload.to_dict()),
        "strategy": scenario.strategy,
        "rebalance": scenario.rebalance,
    }


def _load_inputs(scenario: ScenarioConfig, dag_pool: Optional[DagPool], workload: Optional[WorkloadScript]):
    from .data_loader import load_dag_pool, load_workload

    if dag_pool is None:
        if scenario.pool_path is None:
            raise ConfigError("Scenario needs a dataflow pool or a pool_path")
        dag_pool = load_dag_pool(scenario.pool_path)
    if workload is None:
        if scenario.workload_path is None:
            raise ConfigError("Scenario needs a workload script or a workload_path")
        workload = load_workload(scenario.workload_path)
    return dag_pool, workload


def run_scenario(
    scenario: ScenarioConfig,
    dag_pool: Optional[DagPool] = None,
    workload: Optional[WorkloadScript] = None,
    pool: Optional[ResourcePool] = None,
) -> SimTrace:
    """Drive every control interval of ``workload`` and record its metrics."""
    dag_pool, workload = _load_inputs(scenario, dag_pool, workload)
    horizon = scenario.horizon or workload.horizon
    if horizon != workload.horizon:
        raise ConfigError(f"Horizon {horizon} does not match the workload length {workload.horizon}")
    pool = pool or build_pool(scenario.pool_config, scenario.seed)
    gag = scenario.strategy == "gag"
    if gag and scenario.rebalance != "none":
        logger.warning("Rebalance '%s' does not apply to gag and is skipped", scenario.rebalance)

    rated_cache: Dict[str, RatedDataflow] = {}
    baselines: Dict[str, Tuple[float, float]] = {}
    state = PlacementState.empty()
    records: List[IntervalRecord] = []
    previous: Optional[IntervalRecord] = None

    for t, activity in enumerate(workload.activities):
        before = state
        planning = 0.0
        accepted = True
        moves = 0
        subject = activity.dataflow_id

        if activity.kind is ActivityKind.ARRIVE:
            spec_id = activity.dataflow_id
            if spec_id not in rated_cache:
                rated_cache[spec_id] = propagate_rates(dag_pool.get(spec_id), pool.catalog)
            rated = rated_cache[spec_id].renamed(instance_id(spec_id, t))
            subject = rated.id
            result = schedule_arrival(
                scenario.strategy, state, pool, rated, scenario.ga_params.with_seed(scenario.ga_params.seed + t),
                scenario.penalty_model,
            )
            planning += result.planning_time_sec
            if result.accepted:
                if gag:
                    state = PlacementState({**state.dataflows, rated.id: rated}, result.mappings)
                else:
                    state = state.with_dataflow(rated, result.mapping)
                baselines[rated.id] = (baseline_edge_only(rated, pool), baseline_cloud_only(rated, pool))
            else:
                accepted = False
                logger.warning("t=%d: %s rejected '%s' (%s)", t, scenario.strategy, rated.id, result.diagnostics.get("reason"))
        elif activity.kind is ActivityKind.DEPART:
            if activity.dataflow_id not in state:
                accepted = False
                logger.warning("t=%d: '%s' never became active; departure skipped", t, activity.dataflow_id)
            else:
                state = state.without(activity.dataflow_id)
                baselines.pop(activity.dataflow_id, None)
                if gag and len(state):
                    result = ga_global(state, pool, scenario.ga_params.with_seed(scenario.ga_params.seed + t))
                    planning += result.planning_time_sec
                    if result.accepted:
                        state = state.with_mappings(result.mappings)

        changed = state is not before
        if changed and not gag and scenario.rebalance != "none":
            started = time.perf_counter()
            state, plan = apply_rebalance(state, pool, scenario.rebalance)
            planning += time.perf_counter() - started
            moves = len(plan.moves)

        if changed and scenario.audit:
            report = validate_state(state, pool)
            if not report.ok:
                raise StateError(f"t={t}: state breaks constraints: {report.violations[0].detail}")

        if not changed and previous is not None:
            record = replace(
                previous,
                t=t,
                activity=activity.kind.value,
                dataflow_id=subject,
                accepted=accepted,
                planning_s=planning,
                migrations=0,
                stabilization_s=0.0,
                rebalance_moves=0,
            )
        else:
            makespans = dataflow_makespans(state, pool)
            record = IntervalRecord(
                t=t,
                activity=activity.kind.value,
                dataflow_id=subject,
                accepted=accepted,
                objective_s=math.fsum(makespans.values()),
                planning_s=planning,
                migrations=count_migrations(before, state),
                stabilization_s=stabilization_time(before, state, pool, scenario.migration_cost_sec, scenario.psi_max),
                utilization=utilization(state, pool),
                edge_only_s=sum(baselines[i][0] for i in state.ids),
                cloud_only_s=sum(baselines[i][1] for i in state.ids),
                rebalance_moves=moves,
                active_dags=len(state),
                makespans=makespans,
            )
        records.append(record)
        previous = record
        logger.debug("t=%d %s %s objective=%.4f", t, record.activity, subject, record.objective_s)

    return SimTrace(scenario.to_dict(), provenance(scenario, dag_pool, workload), records, state.to_dict())


def compare_runs(trace_a: SimTrace, trace_b: SimTrace) -> Tuple[pd.DataFrame, Dict[str, float]]:
    """Per-interval relative makespan improvement of ``trace_b`` over ``trace_a``.

    Positive values mean ``trace_b`` (typically with rebalance) is better.
    """
    for key in ("pool_hash", "workload_hash", "strategy", "seed"):
        if trace_a.provenance.get(key) != trace_b.provenance.get(key):
            raise ProvenanceError(
                f"Traces differ in {key}: {trace_a.provenance.get(key)!r} vs {trace_b.provenance.get(key)!r}"
            )
    a = trace_a.to_frame().set_index("t")["objective_s"].astype(float)
    b = trace_b.to_frame().set_index("t")["objective_s"].astype(float)
    if not a.index.equals(b.index):
        raise ProvenanceError("Traces cover different intervals")
    delta = a - b
    relative = (delta / a.where(a > 0)).fillna(0.0)
    frame = pd.DataFrame(
        {"objective_a": a, "objective_b": b, "delta_s": delta, "relative_improvement": relative}
    ).reset_index()
    summary = {
        "intervals": int(len(frame)),
        "mean_relative_improvement": float(relative.mean()) if len(frame) else 0.0,
        "max_relative_improvement": float(relative.max()) if len(frame) else 0.0,
        "min_relative_improvement": float(relative.min()) if len(frame) else 0.0,
        "rebalance_a": trace_a.provenance.get("rebalance"),
        "rebalance_b": trace_b.provenance.get("rebalance"),
    }
    return frame, summary


def run_sweep(
    scenario: ScenarioConfig,
    dag_pool: DagPool,
    workload: WorkloadScript,
    strategies: Sequence[str] = config.STRATEGIES,
    modes: Sequence[str] = config.REBALANCE_MODES,
) -> Tuple[Dict[Tuple[str, str], SimTrace], pd.DataFrame]:
    """Every strategy x rebalance combination on one pool and workload."""
    pool = build_pool(scenario.pool_config, scenario.seed)
    traces: Dict[Tuple[str, str], SimTrace] = {}
    rows = []
    for strategy in strategies:
        for mode in modes:
            if strategy == "gag" and mode != "none":
                continue
            run = replace(scenario, strategy=strategy, rebalance=mode)
            trace = run_scenario(run, dag_pool, workload, pool)
            traces[(strategy, mode)] = trace
            row: Dict[str, Any] = {"strategy": strategy, "rebalance": mode}
            for metric, values in trace.summary().items():
                for stat, value in values.items():
                    row[f"{metric}_{stat}"] = value
            rows.append(row)
            logger.info("Sweep %s/%s done", strategy, mode)
    return traces, pd.DataFrame(rows)


def audit_trace_state(payload: Mapping, pool: ResourcePool) -> ConstraintReport:
    """Rebuild the final state stored in a trace and re-check every constraint."""
    dataflows = {}
    for item in payload.get("dataflows", []):
        rated = propagate_rates(DataflowSpec.from_dict(item), pool.catalog)
        dataflows[rated.id] = rated
    mappings = {}
    for item in payload.get("mappings", []):
        mapping = PlacementMapping.from_dict(item)
        mappings[mapping.dataflow_id] = mapping
    return validate_state(PlacementState(dataflows, mappings), pool)
