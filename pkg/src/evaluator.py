"""Population-wide evaluation of candidate placements.

A :class:`PlacementProblem` compiles a set of dataflows to be placed, plus the
fixed load already present on the pool, into flat arrays. Each row of a gene
matrix assigns one resource index to every vertex; ``evaluate`` scores all rows
at once with numpy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import StateError
from .model import RatedDataflow
from .placement import LoadLedger, Mapping
from .resources import ResourceClass, ResourcePool

logger = logging.getLogger(__name__)

GeneKey = Tuple[str, str]


@dataclass(frozen=True)
class Evaluation:
    objective: np.ndarray
    violations: np.ndarray
    makespans: np.ndarray

    @property
    def violation_count(self) -> np.ndarray:
        return self.violations.sum(axis=1)

    @property
    def valid(self) -> np.ndarray:
        return self.violation_count == 0

    @classmethod
    def concat(cls, parts: Sequence["Evaluation"]) -> "Evaluation":
        return cls(
            np.concatenate([p.objective for p in parts]),
            np.concatenate([p.violations for p in parts]),
            np.concatenate([p.makespans for p in parts]),
        )


class PlacementProblem:
    """Placement of ``dataflows`` on ``pool`` next to the load held by ``ledger``."""

    def __init__(
        self,
        dataflows: Sequence[RatedDataflow],
        pool: ResourcePool,
        ledger: Optional[LoadLedger] = None,
        gene_order: Optional[Sequence[GeneKey]] = None,
    ) -> None:
        self.dataflows = list(dataflows)
        self.pool = pool
        self.ledger = ledger if ledger is not None else LoadLedger(pool)
        ids = [rated.id for rated in self.dataflows]
        if len(set(ids)) != len(ids):
            raise StateError("Dataflows to place must have distinct ids")

        natural = [(rated.id, v) for rated in self.dataflows for v in rated.order]
        genes = list(gene_order) if gene_order is not None else natural
        if sorted(genes) != sorted(natural):
            raise StateError("Gene order must list every vertex of the dataflows exactly once")
        self.genes: List[GeneKey] = genes
        self.index: Dict[GeneKey, int] = {key: i for i, key in enumerate(genes)}
        self._compile()

    @property
    def n_genes(self) -> int:
        return len(self.genes)

    @property
    def n_resources(self) -> int:
        return len(self.pool)

    def _compile(self) -> None:
        catalog = self.pool.catalog
        by_id = {rated.id: rated for rated in self.dataflows}
        n = self.n_genes
        self.latency_edge = np.zeros(n)
        self.latency_cloud = np.zeros(n)
        self.energy_edge = np.zeros(n)
        self.energy_cloud = np.zeros(n)
        self.rate = np.zeros(n)
        self.event_size = np.zeros(n)
        self.is_source = np.zeros(n, dtype=bool)
        self.is_sink = np.zeros(n, dtype=bool)
        for i, (dataflow_id, vertex_id) in enumerate(self.genes):
            rated = by_id[dataflow_id]
            type_id = rated.query_types[vertex_id].id
            self.latency_edge[i] = catalog.latency(type_id, ResourceClass.EDGE)
            self.latency_cloud[i] = catalog.latency(type_id, ResourceClass.CLOUD)
            self.energy_edge[i] = catalog.energy(type_id, ResourceClass.EDGE)
            self.energy_cloud[i] = catalog.energy(type_id, ResourceClass.CLOUD)
            self.rate[i] = rated.in_rate[vertex_id]
            self.event_size[i] = rated.event_size(vertex_id)
            self.is_source[i] = rated.is_source(vertex_id)
            self.is_sink[i] = rated.is_sink(vertex_id)
        self.non_source = np.flatnonzero(~self.is_source)

        # longest-path sweep: every dataflow in its own topological order
        self._sweep: List[Tuple[int, np.ndarray]] = []
        self._sinks: List[np.ndarray] = []
        for rated in self.dataflows:
            for vertex_id in rated.order:
                parents = rated.spec.predecessors[vertex_id]
                if parents:
                    parent_idx = np.array([self.index[(rated.id, p)] for p in parents])
                    self._sweep.append((self.index[(rated.id, vertex_id)], parent_idx))
            self._sinks.append(np.array([self.index[(rated.id, s)] for s in rated.spec.sinks]))

    def random_genes(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.integers(0, self.n_resources, size=(size, self.n_genes))

    def _latency(self, genes: np.ndarray) -> np.ndarray:
        on_edge = self.pool.is_edge_array[genes]
        return np.where(on_edge, self.latency_edge, self.latency_cloud)

    def makespans(self, genes: np.ndarray) -> np.ndarray:
        """(population, dataflows) makespans by longest-path sweep."""
        genes = np.atleast_2d(genes)
        latency = self._latency(genes)
        net_latency = self.pool.network.latency
        bandwidth = self.pool.network.bandwidth
        reach = np.zeros(genes.shape, dtype=float)
        for vertex, parents in self._sweep:
            upstream = genes[:, parents]
            downstream = genes[:, vertex][:, None]
            hop = net_latency[upstream, downstream] + self.event_size[parents] / bandwidth[upstream, downstream]
            reach[:, vertex] = (reach[:, parents] + latency[:, parents] + hop).max(axis=1)
        return np.stack([reach[:, sinks].max(axis=1) for sinks in self._sinks], axis=1)

    def _resource_totals(self, genes: np.ndarray, weights: np.ndarray) -> np.ndarray:
        population = genes.shape[0]
        resources = self.n_resources
        selected = genes[:, self.non_source]
        flat = (selected + np.arange(population)[:, None] * resources).ravel()
        totals = np.bincount(flat, weights=weights[:, self.non_source].ravel(), minlength=population * resources)
        return totals.reshape(population, resources)

    def bounds(self, genes: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Constraint 2 bounds and query counts per (individual, resource)."""
        genes = np.atleast_2d(genes)
        ledger = self.ledger
        ones = np.ones(genes.shape)
        counts = ledger.count + self._resource_totals(genes, ones).astype(int)
        latency_sums = ledger.latency_sum + self._resource_totals(genes, self._latency(genes))
        factors = np.maximum(self.pool.catalog.capacity_factors(counts), 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            bounds = np.where(latency_sums > 0, factors / latency_sums, np.inf)
        return bounds, counts

    def violations(self, genes: np.ndarray) -> np.ndarray:
        """(population, 3) violation counts for constraints 1, 2 and 3."""
        genes = np.atleast_2d(genes)
        on_edge = self.pool.is_edge_array[genes]
        c1 = (self.is_source & ~on_edge).sum(axis=1) + (self.is_sink & on_edge).sum(axis=1)

        bounds, _ = self.bounds(genes)
        selected = genes[:, self.non_source]
        gene_bounds = np.take_along_axis(bounds, selected, axis=1)
        c2 = (self.rate[self.non_source] >= gene_bounds).sum(axis=1)
        c2 = c2 + (self.ledger.max_rate >= bounds).sum(axis=1)

        energy = np.where(on_edge, self.energy_edge, self.energy_cloud) * self.rate
        energy_rate = self.ledger.energy_rate + self._resource_totals(genes, energy)
        drain = self.ledger.recharge * (self.ledger.base_rate + energy_rate)
        c3 = (drain > self.ledger.capacity).sum(axis=1)
        return np.stack([c1, c2, c3], axis=1)

    def evaluate(self, genes: np.ndarray) -> Evaluation:
        genes = np.atleast_2d(genes)
        makespans = self.makespans(genes)
        return Evaluation(makespans.sum(axis=1), self.violations(genes), makespans)

    def evaluate_chunked(self, genes: np.ndarray, chunk_size: int = 50_000) -> Evaluation:
        parts = [self.evaluate(genes[i : i + chunk_size]) for i in range(0, len(genes), chunk_size)]
        return Evaluation.concat(parts)

    def rate_bounds(self, row: np.ndarray) -> Dict[int, float]:
        """Constraint 2 bound of each loaded resource for a single placement."""
        bounds, counts = self.bounds(np.asarray(row)[None, :])
        loaded = np.flatnonzero(counts[0] > 0)
        return {int(r): float(bounds[0, r]) for r in loaded}

    def to_mappings(self, row: np.ndarray) -> Dict[str, Mapping]:
        assignments: Dict[str, Dict[str, int]] = {rated.id: {} for rated in self.dataflows}
        for (dataflow_id, vertex_id), resource in zip(self.genes, np.asarray(row).tolist()):
            assignments[dataflow_id][vertex_id] = int(resource)
        return {dataflow_id: Mapping(dataflow_id, value) for dataflow_id, value in assignments.items()}

    def encode(self, mappings: Dict[str, Mapping]) -> np.ndarray:
        return np.array([mappings[d].assignments[v] for d, v in self.genes], dtype=int)
