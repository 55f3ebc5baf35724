import numpy as np
import pytest

from src.errors import ConfigError, InstanceTooLargeError, StateError
from src.placement import PlacementState, makespan, objective, validate_state
from src.schedulers import (
    PenaltyModel,
    brute_force_place,
    estimate_penalty,
    schedule_arrival,
    topset_place,
)

from tests.builders import chain, dag, matrix_pool, place, rated, tiny_catalog
from tests.oracles import best_joint_placement


def _small_energy(type_id, edge_latency, cloud_latency=0.001):
    return {
        type_id: {
            "kind": "filter",
            "selectivity": 1.0,
            "event_size": 100,
            "edge_latency": edge_latency,
            "cloud_latency": cloud_latency,
            "edge_energy": 0.00001,
        }
    }


def test_chain_on_empty_pool(pool3, chain3):
    result = topset_place(PlacementState.empty(), pool3, chain3)
    assert result.accepted
    # the filter stays next to its source: 0.002 s locally beats a 60 ms hop
    assert result.mapping.assignments == {"v0": 0, "v1": 0, "v2": 2}
    assert result.diagnostics["path_lengths"]["v1"] == pytest.approx(0.002)
    assert result.planning_time_sec >= 0


def test_saturated_edge_spills_to_cloud():
    catalog = tiny_catalog(_small_energy("busy", 0.007))
    pool = matrix_pool("EC", catalog)
    first = rated(chain("first", ["src", "busy", "snk"]), catalog)
    second = rated(chain("second", ["src", "busy", "snk"]), catalog)

    placed = topset_place(PlacementState.empty(), pool, first)
    assert placed.mapping.resource_of("v1") == 0
    state = PlacementState.empty().with_dataflow(first, placed.mapping)

    # two 7 ms queries allow only 1.2 / 0.014 < 100 e/s on the edge device
    spilled = topset_place(state, pool, second)
    assert spilled.accepted
    assert spilled.mapping.resource_of("v1") == 1
    assert validate_state(state.with_dataflow(second, spilled.mapping), pool).ok


def test_rejection_leaves_state_untouched():
    catalog = tiny_catalog(_small_energy("hopeless", 0.05, cloud_latency=0.02))
    pool = matrix_pool("EEC", catalog)
    dataflow = rated(chain("h", ["src", "hopeless", "snk"]), catalog)
    state = PlacementState.empty()
    result = topset_place(state, pool, dataflow)
    assert not result.accepted
    assert result.mappings == {}
    assert "v1" in result.diagnostics["reason"]
    assert len(state) == 0


def test_already_active_is_an_error(pool3, chain3):
    state = place(PlacementState.empty(), chain3, {"v0": 0, "v1": 0, "v2": 2})
    with pytest.raises(StateError):
        topset_place(state, pool3, chain3)


def test_topset_is_valid_and_no_better_than_brute_force(catalog, pool4, chain4):
    heuristic = topset_place(PlacementState.empty(), pool4, chain4)
    oracle = brute_force_place([chain4], pool4)
    assert heuristic.accepted and oracle.accepted
    state = PlacementState.empty().with_dataflow(chain4, heuristic.mapping)
    assert validate_state(state, pool4).ok
    assert objective(state, pool4) >= oracle.diagnostics["objective"] - 1e-12


def test_brute_force_matches_enumeration(catalog, pool4, chain4):
    oracle = brute_force_place([chain4], pool4)
    assert oracle.diagnostics["objective"] == pytest.approx(best_joint_placement([chain4], pool4))
    assert oracle.diagnostics["evaluated"] == 4**4


def test_brute_force_picks_the_nearer_cloud(catalog):
    pool = matrix_pool("ECC", catalog, latency=[[0, 0.08, 0.03], [0.08, 0, 0.001], [0.03, 0.001, 0]])
    pair = rated(dag("pair", {"s": "src", "k": "snk"}, [("s", "k")]), catalog)
    result = brute_force_place([pair], pool)
    assert result.mapping.assignments == {"s": 0, "k": 2}
    assert result.diagnostics["objective"] == pytest.approx(0.03 + 100 / 1e9)


def test_brute_force_reports_infeasible_energy(catalog, chain3):
    pool = matrix_pool("EEC", catalog, battery_capacity_mah=1000.0)
    result = brute_force_place([chain3], pool)
    assert not result.accepted
    assert result.diagnostics["reason"] == "no valid placement"


def test_brute_force_size_guard(catalog, pool3):
    big = rated(chain("big", ["src"] + ["pass"] * 8 + ["snk"]), catalog)
    with pytest.raises(InstanceTooLargeError):
        brute_force_place([big], pool3)


def test_penalty_on_empty_resource(pool3):
    assert estimate_penalty(0, ("new", "v1"), PlacementState.empty(), pool3) == 0.0


def _one_query_on_edge():
    catalog = tiny_catalog(_small_energy("q4", 0.004))
    pool = matrix_pool("EC", catalog)
    dataflow = rated(chain("d", ["src", "q4", "snk"]), catalog)
    return pool, place(PlacementState.empty(), dataflow, {"v0": 0, "v1": 0, "v2": 1})


def test_penalty_effective_latency():
    pool, state = _one_query_on_edge()
    # 0.004 * 2 / 1.2 - 0.004
    assert estimate_penalty(0, ("new", "v1"), state, pool) == pytest.approx(0.004 * 2 / 1.2 - 0.004)


def test_penalty_shared_latency():
    pool, state = _one_query_on_edge()
    assert estimate_penalty(0, ("new", "v1"), state, pool, PenaltyModel.SHARED_LATENCY) == pytest.approx(0.004)


def test_penalty_ignores_the_candidates_own_load():
    pool, state = _one_query_on_edge()
    # d/v1 is the only query on resource 0
    assert estimate_penalty(0, ("d", "v1"), state, pool) == 0.0
    assert estimate_penalty(0, ("d", "v1"), state, pool, PenaltyModel.SHARED_LATENCY) == 0.0


def test_penalty_is_never_negative():
    catalog = tiny_catalog(_small_energy("q4", 0.004), table={1: 0.0, 2: 1.5})
    pool = matrix_pool("EC", catalog)
    dataflow = rated(chain("d", ["src", "q4", "snk"]), catalog)
    state = place(PlacementState.empty(), dataflow, {"v0": 0, "v1": 0, "v2": 1})
    # 2 / 2.5 < 1 would shrink the stretch
    assert estimate_penalty(0, ("new", "v1"), state, pool) == 0.0


def test_penalty_steers_away_from_busy_resource():
    catalog = tiny_catalog(_small_energy("q4", 0.004))
    pool = matrix_pool("EEC", catalog, edge_edge=0.0005)
    resident = rated(chain("resident", ["src", "q4", "q4", "snk"], input_rate=50.0), catalog)
    state = place(PlacementState.empty(), resident, {"v0": 0, "v1": 0, "v2": 0, "v3": 2})
    newcomer = rated(chain("new", ["src", "q4", "snk"], input_rate=20.0), catalog)

    plain = topset_place(state, pool, newcomer)
    penalised = topset_place(state, pool, newcomer, penalty_mode=True)
    assert plain.mapping.resource_of("v1") == 0
    # 8 ms of resident latency stretched by one more tenant outweighs a 0.5 ms hop
    assert penalised.mapping.resource_of("v1") == 1
    assert penalised.strategy == "topset-p"


def test_dispatch(pool3, chain3):
    assert schedule_arrival("topset", PlacementState.empty(), pool3, chain3).strategy == "topset"
    assert schedule_arrival("brute", PlacementState.empty(), pool3, chain3).accepted
    with pytest.raises(ConfigError):
        schedule_arrival("random", PlacementState.empty(), pool3, chain3)


def test_penalty_stretch_models(pool3):
    counts = np.array([1, 2, 4])
    np.testing.assert_allclose(PenaltyModel.SHARED_LATENCY.stretch(pool3, counts), [1, 2, 4])
    np.testing.assert_allclose(PenaltyModel.EFFECTIVE_LATENCY.stretch(pool3, counts), [1, 2 / 1.2, 4 / 1.5])


def test_makespan_of_topset_placement(pool3, chain3):
    result = topset_place(PlacementState.empty(), pool3, chain3)
    # v1 on the source's edge device, then one edge-to-cloud hop
    assert makespan(chain3, result.mapping, pool3) == pytest.approx(0.002 + 0.06 + 100 / 1e9)
