import pytest

from src.errors import ConfigError
from src.placement import PlacementState, makespan, objective, validate_state
from src.rebalance import apply_rebalance, combined_rebalance, edge_rebalance, vertex_rebalance

from tests.builders import chain, dag, matrix_pool, place, rated, tiny_catalog


def _slow_catalog():
    return tiny_catalog({"slow": {"kind": "filter", "selectivity": 1.0, "event_size": 100, "edge_latency": 0.05, "cloud_latency": 0.005}})


def test_vertex_moves_slow_query_to_cloud():
    catalog = _slow_catalog()
    pool = matrix_pool("EEC", catalog)
    dataflow = rated(chain("d", ["src", "slow", "snk"], input_rate=10.0), catalog)
    state = place(PlacementState.empty(), dataflow, {"v0": 0, "v1": 1, "v2": 2})

    moved, plan = vertex_rebalance(state, pool)
    assert [(m.vertex_id, m.from_resource, m.to_resource) for m in plan.moves] == [("v1", 1, 2)]
    assert makespan(dataflow, moved.mappings["d"], pool) == pytest.approx(0.06 + 1e-7 + 0.005)
    assert plan.objective_after == pytest.approx(objective(moved, pool))
    assert plan.improvement > 0
    assert validate_state(moved, pool).ok

    again, second = vertex_rebalance(moved, pool)
    assert second.moves == ()
    assert again.mappings == moved.mappings


def _battery_case(resident_energy):
    catalog = tiny_catalog(
        {
            "q": {"kind": "filter", "selectivity": 1.0, "event_size": 100, "edge_latency": 0.01, "cloud_latency": 0.2, "edge_energy": 0.05},
            "h": {"kind": "filter", "selectivity": 1.0, "event_size": 100, "edge_latency": 0.002, "edge_energy": resident_energy},
        }
    )
    pool = matrix_pool("EECC", catalog, battery_capacity_mah=1000.0, base_load_ma=0.0, recharge_interval_sec=3600.0)
    a = rated(chain("A", ["src", "q", "snk"], input_rate=2.0), catalog)
    b = rated(chain("B", ["src", "h", "snk"], input_rate=50.0), catalog)
    state = place(PlacementState.empty(), a, {"v0": 0, "v1": 2, "v2": 2})
    state = place(state, b, {"v0": 0, "v1": 0, "v2": 3})
    return pool, state


def test_vertex_move_respects_battery():
    pool, state = _battery_case(resident_energy=0.004)
    assert validate_state(state, pool).ok
    moved, _ = vertex_rebalance(state, pool)
    # edge 0 would drain 3600 * (0.2 + 0.1) = 1080 mAh, so the second device takes it
    assert moved.mappings["A"].resource_of("v1") == 1
    assert validate_state(moved, pool).ok


def test_vertex_move_takes_best_device_when_battery_allows():
    pool, state = _battery_case(resident_energy=0.0)
    moved, _ = vertex_rebalance(state, pool)
    assert moved.mappings["A"].resource_of("v1") == 0
    assert validate_state(moved, pool).ok


def test_vertex_leaves_hop_merging_to_edge_rebalance():
    catalog = tiny_catalog({"quick": {"kind": "filter", "selectivity": 1.0, "event_size": 100, "edge_latency": 0.001, "cloud_latency": 0.002}})
    pool = matrix_pool("EEC", catalog, edge_edge=0.01)
    dataflow = rated(chain("d", ["src", "quick", "snk"]), catalog)
    state = place(PlacementState.empty(), dataflow, {"v0": 0, "v1": 1, "v2": 2})

    # joining the source's device would drop the 10 ms hop, but runs no faster
    moved, plan = vertex_rebalance(state, pool)
    assert plan.moves == ()
    assert moved is state

    _, plan = edge_rebalance(state, pool)
    assert [(m.vertex_id, m.from_resource, m.to_resource) for m in plan.moves] == [("v1", 1, 2)]
    assert plan.improvement == pytest.approx(0.071 - 0.062, abs=1e-6)


def _detour(catalog):
    # the middle query sits on the cloud between two edge hops
    dataflow = rated(chain("d", ["src", "pass", "pass", "snk"]), catalog)
    return dataflow, place(PlacementState.empty(), dataflow, {"v0": 0, "v1": 2, "v2": 1, "v3": 2})


def test_edge_collapses_costliest_hop(catalog, pool3):
    dataflow, state = _detour(catalog)
    moved, plan = edge_rebalance(state, pool3)
    # three equal 60 ms hops; the earliest one is collapsed by pulling v1 onto the source's device
    assert [(m.vertex_id, m.from_resource, m.to_resource) for m in plan.moves] == [("v1", 2, 0)]
    assert plan.improvement > 0.05
    assert makespan(dataflow, moved.mappings["d"], pool3) == pytest.approx(0.002 + 0.002 + 0.002 + 0.06 + 2e-7)


def test_edge_never_moves_pinned_endpoints(catalog, pool3):
    pair = rated(dag("pair", {"s": "src", "k": "snk"}, [("s", "k")]), catalog)
    state = place(PlacementState.empty(), pair, {"s": 0, "k": 2})
    moved, plan = edge_rebalance(state, pool3)
    assert plan.moves == ()
    assert moved is state


def test_no_move_when_nothing_improves():
    catalog = _slow_catalog()
    pool = matrix_pool("EEC", catalog)
    dataflow = rated(chain("d", ["src", "slow", "snk"], input_rate=10.0), catalog)
    state = place(PlacementState.empty(), dataflow, {"v0": 0, "v1": 2, "v2": 2})
    for rebalance in (vertex_rebalance, edge_rebalance):
        _, plan = rebalance(state, pool)
        assert plan.moves == ()
        assert plan.objective_after == plan.objective_before


def test_combined_is_vertex_then_edge(catalog, pool3):
    _, state = _detour(catalog)
    combined, plan = combined_rebalance(state, pool3)
    middle, vertex_plan = vertex_rebalance(state, pool3)
    final, edge_plan = edge_rebalance(middle, pool3)
    assert combined.mappings == final.mappings
    assert plan.moves == vertex_plan.moves + edge_plan.moves
    assert plan.mode == "vertex+edge"
    assert plan.objective_before == pytest.approx(objective(state, pool3))
    assert plan.objective_after == pytest.approx(objective(combined, pool3))


def test_apply_dispatch(catalog, pool3):
    _, state = _detour(catalog)
    same, plan = apply_rebalance(state, pool3, "none")
    assert same is state and plan.moves == ()
    _, plan = apply_rebalance(state, pool3, "edge")
    assert plan.mode == "edge" and len(plan.moves) == 1
    assert plan.to_dict()["moves"][0] == {"dataflow_id": "d", "vertex_id": "v1", "from": 2, "to": 0}
    with pytest.raises(ConfigError):
        apply_rebalance(state, pool3, "sideways")


def test_empty_state(pool3):
    state = PlacementState.empty()
    for mode in ("vertex", "edge", "vertex+edge"):
        after, plan = apply_rebalance(state, pool3, mode)
        assert len(after) == 0 and plan.moves == ()
