import numpy as np
import pytest

from src.errors import IncompleteMappingError, InvalidDagError, ProfileNotFoundError
from src.model import DataflowSpec, enumerate_critical_path, longest_path, propagate_rates, topo_set_order
from src.placement import Mapping
from src.workload import generate_dataflow

from tests.builders import chain, dag, matrix_pool, rated, tiny_catalog
from tests.oracles import all_paths_makespan


def _diamond(types=("double", "half", "pass")):
    a, b, join = types
    return dag(
        "diamond",
        {"s": "src", "a": a, "b": b, "j": join, "k": "snk"},
        [("s", "a"), ("s", "b"), ("a", "j"), ("b", "j"), ("j", "k")],
    )


def test_chain_rates(catalog):
    result = rated(chain("c", ["src", "half", "snk"]), catalog)
    assert result.in_rate["v1"] == pytest.approx(100.0)
    assert result.out_rate["v1"] == pytest.approx(50.0)
    assert result.output_rate == pytest.approx(50.0)
    assert result.dag_selectivity == pytest.approx(0.5)


def test_sources_split_input_rate(catalog):
    spec = dag("two", {"s1": "src", "s2": "src", "f": "pass", "k": "snk"}, [("s1", "f"), ("s2", "f"), ("f", "k")])
    result = rated(spec, catalog)
    assert result.out_rate["s1"] == pytest.approx(50.0)
    assert result.out_rate["s2"] == pytest.approx(50.0)
    assert result.in_rate["f"] == pytest.approx(100.0)


def test_join_adds_its_inputs(catalog):
    result = rated(_diamond(), catalog)
    assert result.out_rate["a"] == pytest.approx(200.0)
    assert result.out_rate["b"] == pytest.approx(50.0)
    assert result.in_rate["j"] == pytest.approx(250.0)
    assert result.output_rate == pytest.approx(250.0)


def test_cycle_is_rejected(catalog):
    spec = dag(
        "cyclic",
        {"s": "src", "a": "pass", "b": "pass", "k": "snk"},
        [("s", "a"), ("a", "b"), ("b", "a"), ("b", "k")],
    )
    with pytest.raises(InvalidDagError):
        propagate_rates(spec, catalog)
    with pytest.raises(InvalidDagError):
        topo_set_order(spec)


def test_unknown_query_type(catalog):
    with pytest.raises(ProfileNotFoundError):
        propagate_rates(chain("c", ["src", "nope", "snk"]), catalog)


def test_roots_must_be_sources(catalog):
    with pytest.raises(InvalidDagError):
        propagate_rates(chain("c", ["pass", "half", "snk"]), catalog)
    with pytest.raises(InvalidDagError):
        propagate_rates(chain("c", ["src", "half", "pass"]), catalog)


def test_malformed_specs():
    with pytest.raises(InvalidDagError):
        DataflowSpec("dup", (("a", "src"), ("a", "snk")), (), 1.0)
    with pytest.raises(InvalidDagError):
        dag("loop", {"a": "src", "b": "snk"}, [("a", "a")])
    with pytest.raises(InvalidDagError):
        dag("dangling", {"a": "src"}, [("a", "z")])
    with pytest.raises(InvalidDagError):
        chain("c", ["src", "snk"], input_rate=0.0)


def test_spec_dict_round_trip(catalog):
    spec = _diamond()
    assert DataflowSpec.from_dict(spec.to_dict()) == spec


def test_topo_sets():
    diamond = dag("d", {"a": "x", "b": "x", "c": "x", "d": "x"}, [("a", "b"), ("a", "c"), ("b", "d"), ("c", "d")])
    assert topo_set_order(diamond).sets == (frozenset({"a"}), frozenset({"b", "c"}), frozenset({"d"}))

    line = dag("l", {"a": "x", "b": "x", "c": "x"}, [("a", "b"), ("b", "c")])
    assert topo_set_order(line).flatten() == ["a", "b", "c"]

    merge = dag("m", {"a": "x", "b": "x", "c": "x"}, [("a", "c"), ("b", "c")])
    assert topo_set_order(merge).sets == (frozenset({"a", "b"}), frozenset({"c"}))


def test_single_path_makespan(catalog):
    pool = matrix_pool("EC", catalog, edge_cloud=0.06, bandwidth=1e6)
    result = rated(chain("c", ["src", "pass", "snk"]), catalog)
    path, cost = enumerate_critical_path(result, Mapping("c", {"v0": 0, "v1": 0, "v2": 1}), pool)
    assert path == ("v0", "v1", "v2")
    assert cost == pytest.approx(0.0621)


def _branches(catalog):
    spec = dag("p", {"s": "src", "a": "pass", "b": "pass", "k": "snk"}, [("s", "a"), ("s", "b"), ("a", "k"), ("b", "k")])
    return rated(spec, catalog)


def test_parallel_branches_take_the_slower(catalog):
    weights = {("s", "a"): 0.05, ("a", "k"): 0.05, ("s", "b"): 0.1, ("b", "k"): 0.15}
    path, cost = longest_path(_branches(catalog), lambda u, v: weights[(u, v)])
    assert path == ("s", "b", "k")
    assert cost == pytest.approx(0.25)


def test_equal_branches_tie_break_lexicographically(catalog):
    path, cost = longest_path(_branches(catalog), lambda u, v: 0.1)
    assert path == ("s", "a", "k")
    assert cost == pytest.approx(0.2)


def test_skip_removes_a_vertex(catalog):
    weights = {("s", "a"): 0.05, ("a", "k"): 0.05, ("s", "b"): 0.1, ("b", "k"): 0.15}
    path, cost = longest_path(_branches(catalog), lambda u, v: weights[(u, v)], skip="b")
    assert path == ("s", "a", "k")
    assert cost == pytest.approx(0.1)


def test_unmapped_vertex(catalog, pool3):
    result = rated(chain("c", ["src", "pass", "snk"]), catalog)
    with pytest.raises(IncompleteMappingError):
        enumerate_critical_path(result, Mapping("c", {"v0": 0, "v2": 2}), pool3)


@pytest.mark.parametrize("seed", range(8))
def test_longest_path_matches_all_paths(seed):
    catalog = tiny_catalog()
    pool = matrix_pool("EECC", catalog, edge_edge=0.004, edge_cloud=0.05, cloud_cloud=0.002, bandwidth=2e5)
    rng = np.random.default_rng(seed)
    spec = generate_dataflow(rng, catalog, int(rng.integers(4, 9)), f"r{seed}")
    result = rated(spec, catalog)
    assignments = {v: int(rng.integers(len(pool))) for v in spec.vertex_ids}
    path, cost = enumerate_critical_path(result, Mapping(spec.id, assignments), pool)
    assert cost == pytest.approx(all_paths_makespan(result, assignments, pool))
    assert path[0] in spec.sources and path[-1] in spec.sinks


def test_renamed_keeps_rates(chain3):
    copy = chain3.renamed("chain@4")
    assert copy.id == "chain@4"
    assert copy.in_rate == chain3.in_rate
    assert copy.spec.edges == chain3.spec.edges
