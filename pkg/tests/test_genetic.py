import numpy as np
import pytest

from src.errors import ConfigError, StateError
from src.evaluator import PlacementProblem
from src.genetic import GaParams, ga_global, ga_incremental, ga_place, global_dataflow_graph
from src.placement import PlacementState, objective, validate_state
from src.schedulers import brute_force_place

from tests.builders import chain, dag, matrix_pool, place, rated, tiny_catalog

FAST = GaParams(population_size=40, max_generations=40, min_generations=10, mutation_rate=0.1, seed=1)
FULL_RUN = GaParams(population_size=40, max_generations=40, min_generations=40, mutation_rate=0.1, seed=1)


def _pair(catalog, dataflow_id="pair"):
    return rated(dag(dataflow_id, {"s": "src", "k": "snk"}, [("s", "k")]), catalog)


def test_params_validation():
    with pytest.raises(ConfigError):
        GaParams(population_size=1)
    with pytest.raises(ConfigError):
        GaParams(mutation_rate=1.5)
    with pytest.raises(ConfigError):
        GaParams(population_size=4, elite_count=4)
    with pytest.raises(ConfigError):
        GaParams(n_jobs=0)
    with pytest.raises(ConfigError):
        GaParams(penalty_weight=-1.0)


def test_params_from_dict():
    params = GaParams.from_dict({"population_size": 12, "seed": 3})
    assert params.population_size == 12 and params.seed == 3
    assert params.max_generations == GaParams().max_generations
    assert GaParams.from_dict(params.to_dict()) == params
    with pytest.raises(ConfigError):
        GaParams.from_dict({"populaton_size": 12})


def test_pair_matches_brute_force(catalog):
    pool = matrix_pool("ECC", catalog)
    pair = _pair(catalog)
    result = ga_incremental(PlacementState.empty(), pool, pair, FAST)
    oracle = brute_force_place([pair], pool)
    assert result.accepted
    assert result.diagnostics["objective"] == pytest.approx(oracle.diagnostics["objective"])
    assert result.strategy == "gai"


def test_chain_is_near_optimal_for_most_seeds(pool4, chain4):
    best = brute_force_place([chain4], pool4).diagnostics["objective"]
    close = 0
    for seed in range(20):
        result = ga_place([chain4], pool4, FAST.with_seed(seed))
        assert result.accepted
        state = PlacementState.empty().with_dataflow(chain4, result.mapping)
        assert validate_state(state, pool4).ok
        if objective(state, pool4) <= 1.1 * best:
            close += 1
    assert close >= 18


def test_same_seed_same_answer(pool4, chain4):
    a = ga_place([chain4], pool4, FAST)
    b = ga_place([chain4], pool4, FAST)
    assert a.mapping == b.mapping
    assert a.diagnostics["best_valid_history"] == b.diagnostics["best_valid_history"]


def test_threaded_fitness_matches_serial(pool4, chain4):
    serial = ga_place([chain4], pool4, FAST)
    threaded = ga_place([chain4], pool4, GaParams(**{**FAST.to_dict(), "n_jobs": 2}))
    assert serial.mapping == threaded.mapping
    assert serial.diagnostics["objective"] == threaded.diagnostics["objective"]


def test_best_valid_history_never_rises(pool4, chain4):
    history = ga_place([chain4], pool4, FAST).diagnostics["best_valid_history"]
    assert all(later <= earlier for earlier, later in zip(history, history[1:]))


def test_explicit_penalty_weight_is_kept(pool4, chain4):
    result = ga_place([chain4], pool4, GaParams(**{**FAST.to_dict(), "penalty_weight": 5.0}))
    assert result.diagnostics["penalty_weight"] == 5.0


def test_incremental_rejects_impossible_query():
    catalog = tiny_catalog({"hopeless": {"kind": "filter", "selectivity": 1.0, "event_size": 100, "edge_latency": 0.05, "cloud_latency": 0.02}})
    pool = matrix_pool("EEC", catalog)
    dataflow = rated(chain("h", ["src", "hopeless", "snk"]), catalog)
    result = ga_incremental(PlacementState.empty(), pool, dataflow, FAST)
    assert not result.accepted
    assert result.mappings == {}
    assert result.diagnostics["reason"] == "no valid chromosome found"


def test_incremental_leaves_active_mappings(pool4, chain4, catalog):
    state = place(PlacementState.empty(), chain4, {"v0": 0, "v1": 0, "v2": 0, "v3": 2})
    result = ga_incremental(state, pool4, _pair(catalog), FAST)
    assert set(result.mappings) == {"pair"}
    with pytest.raises(StateError):
        ga_incremental(state, pool4, chain4, FAST)


def test_global_single_dataflow_reaches_optimum(catalog):
    pool = matrix_pool("ECC", catalog)
    pair = _pair(catalog)
    state = place(PlacementState.empty(), pair, {"s": 0, "k": 1})
    result = ga_global(state, pool, FULL_RUN)
    assert result.accepted and result.strategy == "gag"
    assert result.diagnostics["objective"] == pytest.approx(brute_force_place([pair], pool).diagnostics["objective"])
    assert result.diagnostics["objective"] == pytest.approx(
        ga_place([pair], pool, FULL_RUN).diagnostics["objective"]
    )


def test_global_replaces_every_active_dataflow(pool4, chain3, catalog):
    state = place(PlacementState.empty(), chain3, {"v0": 1, "v1": 1, "v2": 3})
    arriving = _pair(catalog)
    result = ga_global(state, pool4, FULL_RUN, arriving=arriving)
    assert result.accepted
    assert set(result.mappings) == {"chain", "pair"}
    joint = brute_force_place([chain3, arriving], pool4).diagnostics["objective"]
    assert result.diagnostics["objective"] <= 1.1 * joint
    assert result.diagnostics["global_vertices"] == chain3.size + arriving.size + 2
    with pytest.raises(StateError):
        ga_global(state, pool4, FULL_RUN, arriving=chain3)


def test_global_with_nothing_active(pool3):
    result = ga_global(PlacementState.empty(), pool3, FAST)
    assert result.accepted and result.mappings == {}


def test_global_graph_joins_dataflows(chain3, chain4):
    graph = global_dataflow_graph([chain3, chain4])
    assert graph.number_of_nodes() == chain3.size + chain4.size + 2
    assert graph.out_degree("__source__") == 2
    assert graph.in_degree("__sink__") == 2
    assert graph.has_edge(("chain4", "v1"), ("chain4", "v2"))


def test_gene_order_must_cover_every_vertex(pool4, chain4):
    with pytest.raises(StateError):
        ga_place([chain4], pool4, FAST, gene_order=[("chain4", "v0")])


def test_population_evaluation_is_vectorised(pool4, chain4):
    problem = PlacementProblem([chain4], pool4)
    genes = problem.random_genes(np.random.default_rng(0), 16)
    evaluation = problem.evaluate(genes)
    assert evaluation.objective.shape == (16,)
    assert evaluation.violations.shape == (16, 3)
    for row, value in zip(genes, evaluation.objective):
        mapping = problem.to_mappings(row)["chain4"]
        state = PlacementState.empty().with_dataflow(chain4, mapping)
        assert value == pytest.approx(objective(state, pool4))
