"""Genetic-algorithm placement: incremental (GAI) and global (GAG) variants."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, replace
from typing import Any, Dict, List, Mapping as MappingType, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from joblib import Parallel, delayed

from . import config
from .errors import ConfigError, StateError
from .evaluator import Evaluation, PlacementProblem
from .model import RatedDataflow
from .placement import LoadLedger, PlacementState, validate_state
from .resources import ResourcePool
from .schedulers import ScheduleResult

logger = logging.getLogger(__name__)

DUMMY_SOURCE = "__source__"
DUMMY_SINK = "__sink__"


@dataclass(frozen=True)
class GaParams:
    population_size: int = config.GA_DEFAULTS["population_size"]
    max_generations: int = config.GA_DEFAULTS["max_generations"]
    crossover_rate: float = config.GA_DEFAULTS["crossover_rate"]
    mutation_rate: float = config.GA_DEFAULTS["mutation_rate"]
    elite_count: int = config.GA_DEFAULTS["elite_count"]
    no_improvement_window_fraction: float = config.GA_DEFAULTS["no_improvement_window_fraction"]
    min_generations: int = config.GA_DEFAULTS["min_generations"]
    penalty_weight: Optional[float] = config.GA_DEFAULTS["penalty_weight"]
    seed: int = config.GA_DEFAULTS["seed"]
    n_jobs: int = config.GA_DEFAULTS["n_jobs"]

    def __post_init__(self) -> None:
        if self.population_size < 2 or self.max_generations < 1:
            raise ConfigError("GA needs a population of at least 2 and at least one generation")
        for name in ("crossover_rate", "mutation_rate", "no_improvement_window_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"GA {name} must lie in [0, 1]")
        if not 0 <= self.elite_count < self.population_size:
            raise ConfigError("GA elite_count must be below the population size")
        if self.min_generations < 0:
            raise ConfigError("GA min_generations must be non-negative")
        if self.penalty_weight is not None and self.penalty_weight <= 0:
            raise ConfigError("GA penalty_weight must be positive")
        if self.n_jobs == 0:
            raise ConfigError("GA n_jobs cannot be 0")

    def with_seed(self, seed: int) -> "GaParams":
        return replace(self, seed=int(seed))

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: MappingType[str, Any]) -> "GaParams":
        unknown = set(payload) - set(config.GA_DEFAULTS)
        if unknown:
            raise ConfigError(f"Unknown GA parameters {sorted(unknown)}")
        return cls(**{**config.GA_DEFAULTS, **payload})


@dataclass(frozen=True)
class Chromosome:
    genes: Tuple[int, ...]
    fitness: float


def _evaluate(problem: PlacementProblem, population: np.ndarray, n_jobs: int) -> Evaluation:
    if n_jobs == 1 or len(population) < 2:
        return problem.evaluate(population)
    chunks = [chunk for chunk in np.array_split(population, abs(n_jobs) if n_jobs > 0 else 4) if len(chunk)]
    parts = Parallel(n_jobs=n_jobs, prefer="threads")(delayed(problem.evaluate)(chunk) for chunk in chunks)
    return Evaluation.concat(parts)


def _offspring(
    population: np.ndarray,
    fitness: np.ndarray,
    count: int,
    params: GaParams,
    resources: int,
    rng: np.random.Generator,
) -> np.ndarray:
    size, n = population.shape
    # binary tournaments, the lower fitness wins
    contenders = rng.integers(0, size, size=(2 * count, 2))
    winners = np.where(
        fitness[contenders[:, 0]] <= fitness[contenders[:, 1]], contenders[:, 0], contenders[:, 1]
    )
    mothers = population[winners[:count]]
    fathers = population[winners[count:]]

    children = mothers.copy()
    if n > 1:
        crossed = rng.random(count) < params.crossover_rate
        cuts = rng.integers(1, n, size=count)
        take_father = (np.arange(n)[None, :] >= cuts[:, None]) & crossed[:, None]
        children = np.where(take_father, fathers, mothers)

    mutate = rng.random(children.shape) < params.mutation_rate
    children[mutate] = rng.integers(0, resources, size=int(mutate.sum()))
    return children


def evolve(problem: PlacementProblem, params: GaParams) -> Tuple[Optional[Chromosome], Dict[str, Any]]:
    """Run the GA on ``problem``; returns the best valid chromosome ever seen."""
    rng = np.random.default_rng(params.seed)
    population = problem.random_genes(rng, params.population_size)
    evaluation = _evaluate(problem, population, params.n_jobs)
    weight = params.penalty_weight
    if weight is None:
        scale = float(np.median(evaluation.objective))
        weight = 10.0 * scale if scale > 0 else 1.0
    fitness = evaluation.objective + weight * evaluation.violation_count

    best: Optional[Chromosome] = None
    history: List[float] = []

    def track(pop: np.ndarray, ev: Evaluation) -> None:
        nonlocal best
        valid = np.flatnonzero(ev.valid)
        if valid.size:
            row = valid[np.argmin(ev.objective[valid])]
            if best is None or ev.objective[row] < best.fitness:
                best = Chromosome(tuple(int(g) for g in pop[row]), float(ev.objective[row]))
        history.append(best.fitness if best is not None else float("inf"))

    track(population, evaluation)
    best_fitness = float(fitness.min())
    last_improvement = 0
    generation = 0
    for generation in range(1, params.max_generations + 1):
        elites = population[np.argsort(fitness, kind="stable")[: params.elite_count]]
        children = _offspring(
            population, fitness, params.population_size - params.elite_count, params, problem.n_resources, rng
        )
        population = np.vstack([elites, children])
        evaluation = _evaluate(problem, population, params.n_jobs)
        fitness = evaluation.objective + weight * evaluation.violation_count
        track(population, evaluation)
        if fitness.min() < best_fitness:
            best_fitness = float(fitness.min())
            last_improvement = generation
        stagnant = generation - last_improvement
        if generation >= params.min_generations and stagnant >= params.no_improvement_window_fraction * generation:
            break

    diagnostics = {
        "generations": generation,
        "penalty_weight": weight,
        "best_fitness": best_fitness,
        "best_valid_history": history,
    }
    return best, diagnostics


def ga_place(
    dataflows: Sequence[RatedDataflow],
    pool: ResourcePool,
    params: GaParams,
    state: Optional[PlacementState] = None,
    strategy: str = "ga",
    gene_order: Optional[Sequence[Tuple[str, str]]] = None,
) -> ScheduleResult:
    """Evolve mappings for ``dataflows`` against the capacity left over by ``state``."""
    state = state or PlacementState.empty()
    started = time.perf_counter()
    problem = PlacementProblem(dataflows, pool, LoadLedger.from_state(state, pool), gene_order=gene_order)
    best, diagnostics = evolve(problem, params)
    if best is None:
        elapsed = time.perf_counter() - started
        logger.warning("%s found no valid chromosome for %s", strategy, [d.id for d in dataflows])
        return ScheduleResult.rejected(strategy, "no valid chromosome found", elapsed, **diagnostics)

    mappings = problem.to_mappings(np.array(best.genes))
    candidate = state
    for rated in dataflows:
        candidate = candidate.with_dataflow(rated, mappings[rated.id])
    report = validate_state(candidate, pool)
    elapsed = time.perf_counter() - started
    if not report.ok:
        logger.warning("%s best chromosome failed re-validation: %s", strategy, report.violations[0].detail)
        return ScheduleResult.rejected(strategy, "best chromosome failed re-validation", elapsed, **diagnostics)
    diagnostics["objective"] = best.fitness
    return ScheduleResult(strategy, True, mappings, elapsed, diagnostics)


def ga_incremental(state: PlacementState, pool: ResourcePool, rated: RatedDataflow, params: GaParams) -> ScheduleResult:
    """Place only the arriving dataflow; existing mappings stay as they are."""
    if rated.id in state:
        raise StateError(f"Dataflow '{rated.id}' is already active")
    return ga_place([rated], pool, params, state=state, strategy="gai")


def global_dataflow_graph(dataflows: Sequence[RatedDataflow]) -> nx.DiGraph:
    """All dataflows joined under a dummy source and a dummy sink."""
    graph = nx.DiGraph()
    graph.add_node(DUMMY_SOURCE, latency=0.0, event_size=0.0)
    graph.add_node(DUMMY_SINK, latency=0.0, event_size=0.0)
    for rated in dataflows:
        graph.add_nodes_from((rated.id, v) for v in rated.spec.vertex_ids)
        graph.add_edges_from(((rated.id, u), (rated.id, v)) for u, v in rated.spec.edges)
        graph.add_edges_from((DUMMY_SOURCE, (rated.id, s)) for s in rated.spec.sources)
        graph.add_edges_from(((rated.id, s), DUMMY_SINK) for s in rated.spec.sinks)
    return graph


def ga_global(
    state: PlacementState,
    pool: ResourcePool,
    params: GaParams,
    arriving: Optional[RatedDataflow] = None,
) -> ScheduleResult:
    """Re-place every active dataflow (plus ``arriving``) from scratch on the full pool."""
    dataflows = [state.dataflows[i] for i in state.ids]
    if arriving is not None:
        if arriving.id in state:
            raise StateError(f"Dataflow '{arriving.id}' is already active")
        dataflows.append(arriving)
    if not dataflows:
        return ScheduleResult("gag", True, {}, 0.0, {"reason": "no active dataflows"})

    graph = global_dataflow_graph(dataflows)
    order = [node for node in nx.lexicographical_topological_sort(graph, key=str) if node not in (DUMMY_SOURCE, DUMMY_SINK)]
    result = ga_place(dataflows, pool, params, strategy="gag", gene_order=order)
    result.diagnostics["global_vertices"] = graph.number_of_nodes()
    return result
