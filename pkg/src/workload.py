"""Dataflow pool generation and arrival/departure scripts (random walk and Poisson)."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from . import config
from .errors import ConfigError, GenerationError, StateError
from .model import DataflowSpec, QueryKind, propagate_rates
from .placement import PlacementState
from .resources import ProfileCatalog, ResourcePool

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DagPool:
    dataflows: Tuple[DataflowSpec, ...]

    def __post_init__(self) -> None:
        ids = [spec.id for spec in self.dataflows]
        if len(set(ids)) != len(ids):
            raise ConfigError("Dataflow pool ids must be unique")

    def __len__(self) -> int:
        return len(self.dataflows)

    @cached_property
    def by_id(self) -> Dict[str, DataflowSpec]:
        return {spec.id: spec for spec in self.dataflows}

    @cached_property
    def size_index(self) -> Dict[int, Tuple[str, ...]]:
        index: Dict[int, List[str]] = {}
        for spec in self.dataflows:
            index.setdefault(spec.size, []).append(spec.id)
        return {size: tuple(sorted(ids)) for size, ids in sorted(index.items())}

    @property
    def sizes(self) -> List[int]:
        return list(self.size_index)

    def get(self, dataflow_id: str) -> DataflowSpec:
        try:
            return self.by_id[dataflow_id]
        except KeyError:
            raise ConfigError(f"Dataflow '{dataflow_id}' is not in the pool") from None

    def nearest_size(self, size: int) -> int:
        """Pool size closest to ``size``; the smaller one on ties."""
        return min(self.sizes, key=lambda s: (abs(s - size), s))

    def variants(self, size: int) -> Tuple[str, ...]:
        return self.size_index[self.nearest_size(size)]

    def to_dict(self) -> dict:
        return {"dataflows": [spec.to_dict() for spec in self.dataflows]}

    @classmethod
    def from_dict(cls, payload: Mapping) -> "DagPool":
        return cls(tuple(DataflowSpec.from_dict(item) for item in payload["dataflows"]))


def _layer_widths(rng: np.random.Generator, count: int) -> List[int]:
    widths = []
    while count > 0:
        width = int(rng.integers(1, min(config.MAX_LAYER_WIDTH, count) + 1))
        widths.append(width)
        count -= width
    return widths


def generate_dataflow(
    rng: np.random.Generator,
    catalog: ProfileCatalog,
    size: int,
    dataflow_id: str,
    input_rate: float = config.DATAFLOW_INPUT_RATE,
) -> DataflowSpec:
    """One layered random DAG: sources, middle layers of CEP queries, sinks.

    Edges only join consecutive layers. Every child gets a parent, every
    parent gets a child, and layer widths cap the fan-out.
    """
    if size < config.MIN_VERTICES:
        raise ConfigError(f"Dataflows need at least {config.MIN_VERTICES} vertices")
    sources = int(rng.integers(1, min(config.MAX_SOURCES, size - 2) + 1))
    sinks = int(rng.integers(1, min(config.MAX_SINKS, size - sources - 1) + 1))
    widths = [sources] + _layer_widths(rng, size - sources - sinks) + [sinks]

    source_type = catalog.type_of_kind(QueryKind.SOURCE)
    sink_type = catalog.type_of_kind(QueryKind.SINK)
    cep_types = catalog.cep_type_ids
    layers: List[List[str]] = []
    vertices: List[Tuple[str, str]] = []
    counter = 0
    for depth, width in enumerate(widths):
        layer = []
        for _ in range(width):
            vertex_id = f"v{counter:02d}"
            counter += 1
            if depth == 0:
                type_id = source_type
            elif depth == len(widths) - 1:
                type_id = sink_type
            else:
                type_id = cep_types[int(rng.integers(len(cep_types)))]
            vertices.append((vertex_id, type_id))
            layer.append(vertex_id)
        layers.append(layer)

    edges = set()
    for upper, lower in zip(layers, layers[1:]):
        for child in lower:
            first = upper[int(rng.integers(len(upper)))]
            edges.add((first, child))
            if len(upper) > 1 and rng.random() < config.EXTRA_PARENT_PROBABILITY:
                others = [p for p in upper if p != first]
                edges.add((others[int(rng.integers(len(others)))], child))
        for parent in upper:
            if not any(u == parent for u, _ in edges):
                edges.add((parent, lower[int(rng.integers(len(lower)))]))

    return DataflowSpec(dataflow_id, tuple(vertices), tuple(sorted(edges)), input_rate)


def is_feasible(spec: DataflowSpec, pool: ResourcePool) -> bool:
    """Whether the dataflow can be placed alone on an empty pool."""
    from .schedulers import topset_place

    rated = propagate_rates(spec, pool.catalog)
    return topset_place(PlacementState.empty(), pool, rated).accepted


def generate_pool(
    count: int,
    seed: int,
    pool: ResourcePool,
    min_vertices: int = config.MIN_VERTICES,
    max_vertices: int = config.MAX_VERTICES,
    input_rate: float = config.DATAFLOW_INPUT_RATE,
) -> DagPool:
    """``count`` feasible dataflows with sizes drawn uniformly from [min, max]."""
    if count < 1:
        raise ConfigError("Pool needs at least one dataflow")
    if not config.MIN_VERTICES <= min_vertices <= max_vertices:
        raise ConfigError(f"Vertex bounds must satisfy {config.MIN_VERTICES} <= min <= max")
    rng = np.random.default_rng(seed)
    dataflows = []
    for index in range(count):
        dataflow_id = f"dag-{index:02d}"
        for attempt in range(1, config.MAX_GENERATION_ATTEMPTS + 1):
            size = int(rng.integers(min_vertices, max_vertices + 1))
            spec = generate_dataflow(rng, pool.catalog, size, dataflow_id, input_rate)
            if spec.max_fan_out <= config.MAX_FAN_OUT and is_feasible(spec, pool):
                dataflows.append(spec)
                break
            logger.debug("Resampling %s (attempt %d): infeasible on the reference pool", dataflow_id, attempt)
        else:
            raise GenerationError(f"No feasible dataflow for '{dataflow_id}' after {config.MAX_GENERATION_ATTEMPTS} attempts")
    logger.info("Generated %d dataflows (seed=%d)", count, seed)
    return DagPool(tuple(dataflows))


def utilization(state: PlacementState, pool: ResourcePool) -> float:
    """Active queries per resource."""
    return state.vertex_count / len(pool)


class ActivityKind(str, enum.Enum):
    ARRIVE = "arrive"
    DEPART = "depart"
    NONE = "none"


class Phase(str, enum.Enum):
    ADDING = "adding"
    REMOVING = "removing"


@dataclass(frozen=True)
class Activity:
    kind: ActivityKind
    # pool id for arrivals, instance id for departures
    dataflow_id: Optional[str] = None

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "dataflow_id": self.dataflow_id}

    @classmethod
    def from_dict(cls, payload: Mapping) -> "Activity":
        return cls(ActivityKind(payload["kind"]), payload.get("dataflow_id"))


def instance_id(dataflow_id: str, interval: int) -> str:
    return f"{dataflow_id}@{interval}"


def next_activity_rw(current: float, target: float, band: float, phase: Phase) -> Tuple[ActivityKind, Phase]:
    """Hysteresis walk: add up to target+band, then remove down to target-band."""
    if band < 0:
        raise ConfigError("Random-walk band must be non-negative")
    if phase is Phase.ADDING:
        if current < target + band:
            return ActivityKind.ARRIVE, Phase.ADDING
        return ActivityKind.DEPART, Phase.REMOVING
    if current > target - band:
        return ActivityKind.DEPART, Phase.REMOVING
    return ActivityKind.ARRIVE, Phase.ADDING


def next_activity_poisson(interval: int, warmup: int) -> ActivityKind:
    """Arrivals during warm-up, then depart on even offsets and arrive on odd ones."""
    if interval < warmup:
        return ActivityKind.ARRIVE
    return ActivityKind.DEPART if (interval - warmup) % 2 == 0 else ActivityKind.ARRIVE


@dataclass(frozen=True)
class SizeSampler:
    sizes: np.ndarray
    probabilities: np.ndarray

    @classmethod
    def inverse_size(cls, sizes: Iterable[int]) -> "SizeSampler":
        """Probability of each distinct size proportional to 1/size."""
        values = np.array(sorted(set(sizes)), dtype=int)
        weights = 1.0 / values
        return cls(values, weights / weights.sum())

    @classmethod
    def truncated_poisson(
        cls,
        mean: float = config.POISSON_SIZE_MEAN,
        low: int = config.MIN_VERTICES,
        high: int = config.MAX_VERTICES,
    ) -> "SizeSampler":
        values = np.arange(low, high + 1)
        pmf = stats.poisson.pmf(values, mean)
        return cls(values, pmf / pmf.sum())

    def sample(self, rng: np.random.Generator, size: Optional[int] = None):
        draw = rng.choice(self.sizes, size=size, p=self.probabilities)
        return int(draw) if size is None else draw


@dataclass(frozen=True)
class WorkloadConfig:
    model: str
    horizon: int
    target: float = config.UTILIZATION_TARGET
    band: float = 0.5
    mean: float = config.POISSON_SIZE_MEAN
    warmup: int = config.PRESETS["small"]["poisson_warmup"]

    def __post_init__(self) -> None:
        if self.model not in ("rw", "poisson"):
            raise ConfigError(f"Unknown workload model '{self.model}'")
        if self.horizon < 1:
            raise ConfigError("Workload horizon must be positive")
        if self.band < 0 or self.band > self.target:
            raise ConfigError("Random-walk band must lie in [0, target]")
        if self.mean <= 0 or self.warmup < 0:
            raise ConfigError("Poisson mean must be positive and warm-up non-negative")

    @classmethod
    def preset(cls, name: str, setup: str = "small") -> "WorkloadConfig":
        try:
            workload = config.WORKLOAD_PRESETS[name]
            scale = config.PRESETS[setup]
        except KeyError as exc:
            raise ConfigError(f"Unknown workload preset or setup: {exc}") from None
        params = {k: v for k, v in workload.items() if k != "model"}
        return cls(model=workload["model"], horizon=scale["horizon"], warmup=scale["poisson_warmup"], **params)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "horizon": self.horizon,
            "target": self.target,
            "band": self.band,
            "mean": self.mean,
            "warmup": self.warmup,
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "WorkloadConfig":
        try:
            return cls(**{key: payload[key] for key in payload if key in cls.__dataclass_fields__})
        except TypeError as exc:
            raise ConfigError(f"Bad workload config: {exc}") from exc


@dataclass(frozen=True)
class WorkloadScript:
    activities: Tuple[Activity, ...]
    workload: WorkloadConfig
    seed: int
    utilization: Tuple[float, ...] = field(default=(), compare=False)

    @property
    def horizon(self) -> int:
        return len(self.activities)

    def validate(self) -> None:
        """Every departure must name an instance active at that interval."""
        active = set()
        for t, activity in enumerate(self.activities):
            if activity.kind is ActivityKind.ARRIVE:
                active.add(instance_id(activity.dataflow_id, t))
            elif activity.kind is ActivityKind.DEPART:
                if activity.dataflow_id not in active:
                    raise StateError(f"Interval {t} departs inactive instance '{activity.dataflow_id}'")
                active.remove(activity.dataflow_id)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "workload": self.workload.to_dict(),
            "activities": [a.to_dict() for a in self.activities],
            "utilization": list(self.utilization),
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "WorkloadScript":
        script = cls(
            tuple(Activity.from_dict(item) for item in payload["activities"]),
            WorkloadConfig.from_dict(payload["workload"]),
            int(payload["seed"]),
            tuple(payload.get("utilization", ())),
        )
        script.validate()
        return script


def _pick_departure(
    rng: np.random.Generator,
    sampler: SizeSampler,
    active: Dict[str, int],
) -> str:
    """Resample sizes until an active instance matches, then fall back to the closest size."""
    for _ in range(config.REMOVAL_RESAMPLE_CAP):
        size = sampler.sample(rng)
        matches = sorted(i for i, s in active.items() if s == size)
        if matches:
            return matches[int(rng.integers(len(matches)))]
    closest = min(active.items(), key=lambda item: (abs(item[1] - size), item[1], item[0]))
    return closest[0]


def generate_workload(
    dag_pool: DagPool,
    resource_count: int,
    workload: WorkloadConfig,
    seed: int,
) -> WorkloadScript:
    """Arrival/departure script assuming every arrival is admitted."""
    if resource_count < 1:
        raise ConfigError("Resource count must be positive")
    rng = np.random.default_rng(seed)
    if workload.model == "rw":
        sampler = SizeSampler.inverse_size(dag_pool.sizes)
    else:
        sampler = SizeSampler.truncated_poisson(workload.mean)
    active: Dict[str, int] = {}
    phase = Phase.ADDING
    activities: List[Activity] = []
    levels: List[float] = []
    for t in range(workload.horizon):
        level = sum(active.values()) / resource_count
        if workload.model == "rw":
            kind, phase = next_activity_rw(level, workload.target, workload.band, phase)
        else:
            kind = next_activity_poisson(t, workload.warmup)
        if kind is ActivityKind.DEPART and not active:
            kind = ActivityKind.ARRIVE

        if kind is ActivityKind.ARRIVE:
            variants = dag_pool.variants(sampler.sample(rng))
            chosen = variants[int(rng.integers(len(variants)))]
            active[instance_id(chosen, t)] = dag_pool.get(chosen).size
            activities.append(Activity(ActivityKind.ARRIVE, chosen))
        else:
            leaving = _pick_departure(rng, sampler, active)
            del active[leaving]
            activities.append(Activity(ActivityKind.DEPART, leaving))
        levels.append(sum(active.values()) / resource_count)
    logger.info("Generated %s workload over %d intervals (seed=%d)", workload.model, workload.horizon, seed)
    return WorkloadScript(tuple(activities), workload, seed, tuple(levels))
