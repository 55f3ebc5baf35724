"""Edge and cloud resource pools: profiles, parallelism overhead, network and energy."""

from __future__ import annotations

import bisect
import enum
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import config
from .errors import ConfigError, DomainError, ProfileNotFoundError, ResourceNotFoundError
from .model import QueryKind, QueryType

logger = logging.getLogger(__name__)


class ResourceClass(str, enum.Enum):
    EDGE = "edge"
    CLOUD = "cloud"


@dataclass(frozen=True)
class ProfileEntry:
    latency_sec: float
    energy_mah: float


@dataclass(frozen=True, eq=False)
class ProfileCatalog:
    """Per (query type, resource class) latency and energy, plus the pi(m) table."""

    query_types: Dict[str, QueryType]
    entries: Dict[Tuple[str, ResourceClass], ProfileEntry]
    parallelism_table: Tuple[Tuple[int, float], ...] = tuple(config.DEFAULT_PARALLELISM_TABLE.items())
    overhead_sign: float = config.PARALLELISM_SIGN

    def __post_init__(self) -> None:
        table = tuple(sorted((int(m), float(pi)) for m, pi in self.parallelism_table))
        if not table or table[0] != (1, 0.0):
            raise ConfigError("Parallelism table must start with pi(1) = 0")
        object.__setattr__(self, "parallelism_table", table)
        object.__setattr__(self, "_table_keys", [m for m, _ in table])
        for (type_id, _), entry in self.entries.items():
            if type_id not in self.query_types:
                raise ConfigError(f"Catalog entry for unknown query type '{type_id}'")
            if entry.latency_sec < 0 or entry.energy_mah < 0:
                raise ConfigError(f"Catalog entry for '{type_id}' has a negative coefficient")

    def query_type(self, type_id: str) -> QueryType:
        try:
            return self.query_types[type_id]
        except KeyError:
            raise ProfileNotFoundError(f"Query type '{type_id}' not in catalog") from None

    def entry(self, type_id: str, resource_class: ResourceClass) -> ProfileEntry:
        try:
            return self.entries[(type_id, resource_class)]
        except KeyError:
            raise ProfileNotFoundError(f"No profile for '{type_id}' on {resource_class.value}") from None

    def latency(self, type_id: str, resource_class: ResourceClass) -> float:
        return self.entry(type_id, resource_class).latency_sec

    def energy(self, type_id: str, resource_class: ResourceClass) -> float:
        return self.entry(type_id, resource_class).energy_mah

    def parallelism_overhead(self, m: int) -> float:
        if m < 1:
            raise DomainError(f"Parallelism overhead is undefined for m={m}")
        position = bisect.bisect_right(self._table_keys, m) - 1
        return self.parallelism_table[position][1]

    def capacity_factor(self, m: int) -> float:
        """Multiplier (1 + sign * pi(m)) on the summed service rate of m queries."""
        return 1.0 + self.overhead_sign * self.parallelism_overhead(m)

    def capacity_factors(self, counts) -> np.ndarray:
        """Vectorised capacity_factor; counts below 1 map to the m=1 entry."""
        keys = np.asarray(self._table_keys)
        values = np.asarray([pi for _, pi in self.parallelism_table])
        position = np.searchsorted(keys, np.maximum(np.asarray(counts), 1), side="right") - 1
        return 1.0 + self.overhead_sign * values[position]

    def sanity_warnings(self) -> List[str]:
        warnings = []
        for type_id, query_type in sorted(self.query_types.items()):
            edge = self.entries.get((type_id, ResourceClass.EDGE))
            cloud = self.entries.get((type_id, ResourceClass.CLOUD))
            if edge and cloud and edge.latency_sec < cloud.latency_sec:
                warnings.append(f"'{type_id}' is faster on edge than on cloud")
            if query_type.kind is not QueryKind.SOURCE:
                if any(e is not None and e.latency_sec == 0 for e in (edge, cloud)):
                    warnings.append(f"'{type_id}' has zero latency")
        values = [pi for _, pi in self.parallelism_table]
        if any(b < a for a, b in zip(values, values[1:])):
            warnings.append("parallelism table is not non-decreasing")
        for message in warnings:
            logger.warning("Catalog sanity: %s", message)
        return warnings

    @classmethod
    def from_profiles(
        cls,
        profiles: Mapping[str, Mapping] = config.QUERY_PROFILES,
        cloud_speedup: float = config.CLOUD_SPEEDUP,
        parallelism_table: Mapping[int, float] = config.DEFAULT_PARALLELISM_TABLE,
        overhead_sign: float = config.PARALLELISM_SIGN,
    ) -> "ProfileCatalog":
        """Build a catalog from edge-side profiles; cloud latency is edge latency / speedup.

        Profiles may give explicit ``cloud_latency`` / ``cloud_energy`` values.
        """
        if cloud_speedup <= 0:
            raise ConfigError("cloud_speedup must be positive")
        query_types: Dict[str, QueryType] = {}
        entries: Dict[Tuple[str, ResourceClass], ProfileEntry] = {}
        for type_id, profile in profiles.items():
            try:
                query_types[type_id] = QueryType(
                    id=type_id,
                    kind=QueryKind(profile["kind"]),
                    selectivity=float(profile["selectivity"]),
                    event_size_bytes=float(profile["event_size"]),
                )
                edge_latency = float(profile["edge_latency"])
                edge_energy = float(profile.get("edge_energy", 0.0))
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"Bad profile for '{type_id}': {exc}") from exc
            cloud_latency = float(profile.get("cloud_latency", edge_latency / cloud_speedup))
            entries[(type_id, ResourceClass.EDGE)] = ProfileEntry(edge_latency, edge_energy)
            entries[(type_id, ResourceClass.CLOUD)] = ProfileEntry(cloud_latency, float(profile.get("cloud_energy", 0.0)))
        return cls(query_types, entries, tuple(parallelism_table.items()), overhead_sign)

    @classmethod
    def default(cls) -> "ProfileCatalog":
        return cls.from_profiles()

    @property
    def cep_type_ids(self) -> List[str]:
        """Query types that may sit between sources and sinks."""
        return sorted(
            type_id
            for type_id, query_type in self.query_types.items()
            if query_type.kind not in (QueryKind.SOURCE, QueryKind.SINK)
        )

    def type_of_kind(self, kind: QueryKind) -> str:
        for type_id in sorted(self.query_types):
            if self.query_types[type_id].kind is kind:
                return type_id
        raise ProfileNotFoundError(f"Catalog has no '{kind.value}' query type")

    def to_dict(self) -> dict:
        profiles = {}
        for type_id, query_type in sorted(self.query_types.items()):
            edge = self.entries.get((type_id, ResourceClass.EDGE))
            cloud = self.entries.get((type_id, ResourceClass.CLOUD))
            profiles[type_id] = {
                "kind": query_type.kind.value,
                "selectivity": query_type.selectivity,
                "event_size": query_type.event_size_bytes,
                "edge_latency": edge.latency_sec if edge else 0.0,
                "edge_energy": edge.energy_mah if edge else 0.0,
                "cloud_latency": cloud.latency_sec if cloud else 0.0,
                "cloud_energy": cloud.energy_mah if cloud else 0.0,
            }
        return {
            "profiles": profiles,
            "parallelism_table": {str(m): pi for m, pi in self.parallelism_table},
            "overhead_sign": self.overhead_sign,
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "ProfileCatalog":
        table = {int(m): float(pi) for m, pi in payload.get("parallelism_table", config.DEFAULT_PARALLELISM_TABLE).items()}
        return cls.from_profiles(
            payload.get("profiles", config.QUERY_PROFILES),
            cloud_speedup=float(payload.get("cloud_speedup", config.CLOUD_SPEEDUP)),
            parallelism_table=table,
            overhead_sign=float(payload.get("overhead_sign", config.PARALLELISM_SIGN)),
        )


@dataclass(frozen=True)
class Resource:
    index: int
    id: str
    resource_class: ResourceClass
    battery_capacity_mah: Optional[float] = None
    base_load_ma: Optional[float] = None
    recharge_interval_sec: Optional[float] = None

    def __post_init__(self) -> None:
        energy = (self.battery_capacity_mah, self.base_load_ma, self.recharge_interval_sec)
        if self.resource_class is ResourceClass.CLOUD:
            if any(value is not None for value in energy):
                raise ConfigError(f"Cloud resource '{self.id}' cannot carry energy parameters")
            return
        if any(value is None for value in energy):
            raise ConfigError(f"Edge resource '{self.id}' needs battery, base load and recharge interval")
        if self.battery_capacity_mah <= 0 or self.base_load_ma < 0 or self.recharge_interval_sec <= 0:
            raise ConfigError(f"Edge resource '{self.id}' has invalid energy parameters")

    @property
    def is_edge(self) -> bool:
        return self.resource_class is ResourceClass.EDGE


@dataclass(frozen=True)
class LinkDistribution:
    latency_mean: float
    latency_std: float
    bandwidth_mean: float
    bandwidth_std: float

    def __post_init__(self) -> None:
        if self.latency_mean < 0 or self.latency_std < 0 or self.bandwidth_std < 0:
            raise ConfigError("Link distribution needs non-negative latency mean and deviations")
        if self.bandwidth_mean <= 0:
            raise ConfigError("Link distribution needs a positive bandwidth mean")


def _pair_key(a: ResourceClass, b: ResourceClass) -> Tuple[ResourceClass, ResourceClass]:
    return (a, b) if (a.value, b.value) <= (b.value, a.value) else (b, a)


def default_network() -> Dict[Tuple[ResourceClass, ResourceClass], LinkDistribution]:
    network = {}
    for (a, b), profile in config.NETWORK_PROFILES.items():
        key = _pair_key(ResourceClass(a), ResourceClass(b))
        network[key] = LinkDistribution(*profile["latency"], *profile["bandwidth"])
    return network


@dataclass(frozen=True, eq=False)
class NetworkModel:
    """Pairwise latency (s) and bandwidth (B/s); the diagonal is free."""

    latency: np.ndarray
    bandwidth: np.ndarray

    def __post_init__(self) -> None:
        if self.latency.shape != self.bandwidth.shape or self.latency.ndim != 2:
            raise ConfigError("Latency and bandwidth matrices must be square and of equal shape")
        np.fill_diagonal(self.latency, 0.0)
        np.fill_diagonal(self.bandwidth, np.inf)
        if (self.latency < 0).any():
            raise ConfigError("Network latencies must be non-negative")
        if (self.bandwidth <= 0).any():
            raise ConfigError("Network bandwidths must be positive")


@dataclass(frozen=True)
class PoolConfig:
    edge_count: int
    cloud_count: int
    catalog: ProfileCatalog = field(default_factory=ProfileCatalog.default, compare=False)
    battery_capacity_mah: float = config.BATTERY_CAPACITY_MAH
    base_load_ma: float = config.BASE_LOAD_MA
    recharge_interval_sec: float = config.RECHARGE_INTERVAL_SEC
    network: Dict[Tuple[ResourceClass, ResourceClass], LinkDistribution] = field(default_factory=default_network)
    symmetric: bool = True

    def __post_init__(self) -> None:
        if self.edge_count <= 0 or self.cloud_count <= 0:
            raise ConfigError("Pool needs at least one edge device and one cloud VM")
        if self.battery_capacity_mah <= 0 or self.base_load_ma < 0 or self.recharge_interval_sec <= 0:
            raise ConfigError("Invalid edge energy parameters")
        for a in ResourceClass:
            for b in ResourceClass:
                if _pair_key(a, b) not in self.network:
                    raise ConfigError(f"No network distribution for {a.value}<->{b.value}")

    @classmethod
    def preset(cls, name: str, catalog: Optional[ProfileCatalog] = None) -> "PoolConfig":
        try:
            preset = config.PRESETS[name]
        except KeyError:
            raise ConfigError(f"Unknown preset '{name}', choose from {sorted(config.PRESETS)}") from None
        return cls(
            edge_count=preset["edge_count"],
            cloud_count=preset["cloud_count"],
            catalog=catalog or ProfileCatalog.default(),
        )

    def to_dict(self) -> dict:
        return {
            "edge_count": self.edge_count,
            "cloud_count": self.cloud_count,
            "battery_capacity_mah": self.battery_capacity_mah,
            "base_load_ma": self.base_load_ma,
            "recharge_interval_sec": self.recharge_interval_sec,
            "symmetric": self.symmetric,
            "network": {
                f"{a.value}-{b.value}": {
                    "latency": [d.latency_mean, d.latency_std],
                    "bandwidth": [d.bandwidth_mean, d.bandwidth_std],
                }
                for (a, b), d in sorted(self.network.items(), key=lambda item: (item[0][0].value, item[0][1].value))
            },
            "catalog": self.catalog.to_dict(),
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "PoolConfig":
        network = default_network()
        for key, value in payload.get("network", {}).items():
            try:
                a, b = (ResourceClass(part) for part in key.split("-"))
                network[_pair_key(a, b)] = LinkDistribution(*value["latency"], *value["bandwidth"])
            except (ValueError, KeyError, TypeError) as exc:
                raise ConfigError(f"Bad network entry '{key}': {exc}") from exc
        try:
            return cls(
                edge_count=int(payload["edge_count"]),
                cloud_count=int(payload["cloud_count"]),
                catalog=ProfileCatalog.from_dict(payload.get("catalog", {})),
                battery_capacity_mah=float(payload.get("battery_capacity_mah", config.BATTERY_CAPACITY_MAH)),
                base_load_ma=float(payload.get("base_load_ma", config.BASE_LOAD_MA)),
                recharge_interval_sec=float(payload.get("recharge_interval_sec", config.RECHARGE_INTERVAL_SEC)),
                network=network,
                symmetric=bool(payload.get("symmetric", True)),
            )
        except KeyError as exc:
            raise ConfigError(f"Pool config is missing {exc}") from exc


@dataclass(frozen=True, eq=False)
class ResourcePool:
    resources: Tuple[Resource, ...]
    network: NetworkModel
    catalog: ProfileCatalog

    def __post_init__(self) -> None:
        if [r.index for r in self.resources] != list(range(len(self.resources))):
            raise ConfigError("Resource indices must be 0..n-1 in order")
        if self.network.latency.shape != (len(self.resources), len(self.resources)):
            raise ConfigError("Network matrices do not match the resource count")
        classes = [r.resource_class for r in self.resources]
        object.__setattr__(self, "_classes", classes)
        object.__setattr__(self, "is_edge_array", np.array([r.is_edge for r in self.resources], dtype=bool))

    @classmethod
    def from_matrices(
        cls,
        classes: Sequence[ResourceClass],
        latency: Iterable,
        bandwidth: Iterable,
        catalog: ProfileCatalog,
        battery_capacity_mah: float = config.BATTERY_CAPACITY_MAH,
        base_load_ma: float = config.BASE_LOAD_MA,
        recharge_interval_sec: float = config.RECHARGE_INTERVAL_SEC,
    ) -> "ResourcePool":
        """Pool with explicit network matrices; useful for hand-checked instances."""
        resources = tuple(
            _make_resource(i, ResourceClass(c), battery_capacity_mah, base_load_ma, recharge_interval_sec)
            for i, c in enumerate(classes)
        )
        network = NetworkModel(np.array(latency, dtype=float), np.array(bandwidth, dtype=float))
        return cls(resources, network, catalog)

    def __len__(self) -> int:
        return len(self.resources)

    @property
    def edges(self) -> List[Resource]:
        return [r for r in self.resources if r.is_edge]

    @property
    def clouds(self) -> List[Resource]:
        return [r for r in self.resources if not r.is_edge]

    def resource(self, index: int) -> Resource:
        if not 0 <= index < len(self.resources):
            raise ResourceNotFoundError(f"Resource {index} is not in the pool")
        return self.resources[index]

    def resource_class(self, index: int) -> ResourceClass:
        return self._classes[index]

    def is_edge(self, index: int) -> bool:
        return self._classes[index] is ResourceClass.EDGE

    def latency(self, type_id: str, index: int) -> float:
        return self.catalog.entry(type_id, self._classes[index]).latency_sec

    def energy(self, type_id: str, index: int) -> float:
        return self.catalog.entry(type_id, self._classes[index]).energy_mah

    def latency_vector(self, type_id: str) -> np.ndarray:
        """lambda of one query type on every resource of the pool."""
        return np.where(
            self.is_edge_array,
            self.catalog.latency(type_id, ResourceClass.EDGE),
            self.catalog.latency(type_id, ResourceClass.CLOUD),
        )

    def energy_vector(self, type_id: str) -> np.ndarray:
        return np.where(
            self.is_edge_array,
            self.catalog.energy(type_id, ResourceClass.EDGE),
            self.catalog.energy(type_id, ResourceClass.CLOUD),
        )

    def transfer_time(self, a: int, b: int, event_size: float) -> float:
        if a == b:
            return 0.0
        return self.network.latency.item(a, b) + event_size / self.network.bandwidth.item(a, b)

    def transfer_from(self, a: int, event_size: float) -> np.ndarray:
        """Hop time from resource ``a`` to every resource (zero to itself)."""
        return self.network.latency[a] + event_size / self.network.bandwidth[a]

    def transfer_to(self, b: int, event_size: float) -> np.ndarray:
        """Hop time from every resource to resource ``b``."""
        return self.network.latency[:, b] + event_size / self.network.bandwidth[:, b]

    def min_transfer(self, a: ResourceClass, b: ResourceClass, event_size: float) -> float:
        """Fastest sampled hop between two resource classes for one event, either direction."""
        rows = np.array([c is a for c in self._classes])
        cols = np.array([c is b for c in self._classes])
        block = ~np.eye(len(self._classes), dtype=bool) & (
            (rows[:, None] & cols[None, :]) | (cols[:, None] & rows[None, :])
        )
        if not block.any():
            return 0.0
        hops = self.network.latency[block] + event_size / self.network.bandwidth[block]
        return float(hops.min())


def _make_resource(index: int, resource_class: ResourceClass, capacity: float, base_load: float, recharge: float) -> Resource:
    if resource_class is ResourceClass.EDGE:
        return Resource(index, f"edge-{index:04d}", resource_class, capacity, base_load, recharge)
    return Resource(index, f"cloud-{index:04d}", resource_class)


def _sample_positive(rng: np.random.Generator, mean: float, std: float, size: int, strict: bool) -> np.ndarray:
    values = rng.normal(mean, std, size=size)
    bad = values <= 0 if strict else values < 0
    while bad.any():
        values[bad] = rng.normal(mean, std, size=int(bad.sum()))
        bad = values <= 0 if strict else values < 0
    return values


def build_pool(pool_config: PoolConfig, seed: int) -> ResourcePool:
    """Deterministic pool for (config, seed): edges first, then cloud VMs."""
    classes = [ResourceClass.EDGE] * pool_config.edge_count + [ResourceClass.CLOUD] * pool_config.cloud_count
    n = len(classes)
    resources = tuple(
        _make_resource(
            i,
            c,
            pool_config.battery_capacity_mah,
            pool_config.base_load_ma,
            pool_config.recharge_interval_sec,
        )
        for i, c in enumerate(classes)
    )

    rng = np.random.default_rng(seed)
    is_edge = np.array([c is ResourceClass.EDGE for c in classes])
    if pool_config.symmetric:
        rows, cols = np.triu_indices(n, k=1)
    else:
        rows, cols = np.nonzero(~np.eye(n, dtype=bool))
    latency = np.zeros((n, n))
    bandwidth = np.full((n, n), np.inf)
    pair_edges = is_edge[rows].astype(int) + is_edge[cols].astype(int)
    for edge_endpoints, key in (
        (2, (ResourceClass.EDGE, ResourceClass.EDGE)),
        (1, _pair_key(ResourceClass.EDGE, ResourceClass.CLOUD)),
        (0, (ResourceClass.CLOUD, ResourceClass.CLOUD)),
    ):
        dist = pool_config.network[key]
        selected = pair_edges == edge_endpoints
        count = int(selected.sum())
        if count == 0:
            continue
        latency[rows[selected], cols[selected]] = _sample_positive(rng, dist.latency_mean, dist.latency_std, count, False)
        bandwidth[rows[selected], cols[selected]] = _sample_positive(
            rng, dist.bandwidth_mean, dist.bandwidth_std, count, True
        )
    if pool_config.symmetric:
        latency[cols, rows] = latency[rows, cols]
        bandwidth[cols, rows] = bandwidth[rows, cols]

    pool_config.catalog.sanity_warnings()
    logger.info("Built pool with %d edge and %d cloud resources (seed=%d)", pool_config.edge_count, pool_config.cloud_count, seed)
    return ResourcePool(resources, NetworkModel(latency, bandwidth), pool_config.catalog)


def parallelism_overhead(pool: ResourcePool, m: int) -> float:
    """pi(m) from the catalog table; m beyond the table reuses its last entry."""
    return pool.catalog.parallelism_overhead(m)


def link_cost(pool: ResourcePool, from_resource: int, to_resource: int, event_size_bytes: float) -> float:
    """Network time l + delta/beta between two resources; zero when co-located."""
    pool.resource(from_resource)
    pool.resource(to_resource)
    return pool.transfer_time(from_resource, to_resource, event_size_bytes)
