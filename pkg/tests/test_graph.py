import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modeshare import DataError, UsageError
from modeshare.graph import EdgeRow, TractAssignment, build_graph, restrict_assignment, zone_nodes

from conftest import make_graph


def test_triangle_degrees(triangle):
    assert triangle.node_count == 3
    assert [triangle.degree(v) for v in range(3)] == [2, 2, 2]


def test_duplicate_edges_keep_minimum_weight():
    g = build_graph([("a", "b", 5.0), ("b", "a", 3.0)])
    assert g.edge_count == 1
    assert g.edge_weight(0, 1) == 3.0
    assert g.build_warnings["duplicates_merged"] == 1


def test_self_loop_dropped_with_warning():
    g = build_graph([("a", "a", 2.0), ("a", "b", 1.0)])
    assert (g.node_count, g.edge_count) == (2, 1)
    assert g.build_warnings["self_loops"] == 1


@pytest.mark.parametrize("w", [0.0, -1.0, float("nan"), float("inf")])
def test_bad_weight_is_data_error(w):
    with pytest.raises(DataError, match="row 2"):
        build_graph([("a", "b", 1.0), ("b", "c", w)])


def test_bad_weight_reports_file_line():
    with pytest.raises(DataError, match="line 7"):
        build_graph([EdgeRow("a", "b", -2.0, 7)])


def test_empty_edge_list_rejected():
    with pytest.raises(DataError):
        build_graph([])


def test_neighbors(triangle, path3):
    assert triangle.neighbors(0) == [(1, 1.0), (2, 1.0)]
    g = build_graph([("a", "b", 2.0), ("b", "c", 3.0)])
    assert g.neighbors(g.node_id("b")) == [(g.node_id("a"), 2.0), (g.node_id("c"), 3.0)]


def test_isolated_node_has_no_neighbors():
    g = build_graph([("a", "b", 1.0), ("c", "c", 1.0)])
    assert g.neighbors(g.node_id("c")) == []


def test_out_of_range_node_is_usage_error(triangle):
    with pytest.raises(UsageError):
        triangle.neighbors(3)


def test_zone_nodes():
    g = make_graph([(0, 1), (1, 2), (2, 3)])
    a = TractAssignment.from_labels(g, {"0": "A", "1": "A", "2": "B", "3": "B"})
    assert zone_nodes(a, "A") == [g.node_id("0"), g.node_id("1")]
    single = TractAssignment.from_labels(g, {str(v): "Z" for v in range(4)})
    assert zone_nodes(single, "Z") == [0, 1, 2, 3]
    with pytest.raises(UsageError):
        zone_nodes(a, "Z")


def test_uncovered_node_is_data_error(triangle):
    with pytest.raises(DataError):
        TractAssignment.from_labels(triangle, {"0": "A", "1": "A"})


def test_restrict_assignment_drops_empty_zones(path3):
    a, dropped = restrict_assignment(path3, {"0": "A", "1": "A", "2": "A", "gone": "B"})
    assert a.zones == ("A",) and dropped == ["B"]


edge_lists = st.lists(
    st.tuples(st.integers(0, 9), st.integers(0, 9), st.floats(0.1, 100.0)), min_size=1, max_size=40
).filter(lambda es: any(a != b for a, b, _ in es))


@given(edge_lists)
@settings(max_examples=100, deadline=None)
def test_adjacency_symmetric_and_degree_sum(edges):
    g = build_graph([(str(a), str(b), w) for a, b, w in edges])
    for v in range(g.node_count):
        for x, w in g.neighbors(v):
            assert g.edge_weight(x, v) == w
    assert int(g.degrees().sum()) == 2 * g.edge_count
    # min-merge: each stored weight is the minimum over duplicates
    best = {}
    for a, b, w in edges:
        if a != b:
            key = (min(a, b), max(a, b))
            best[key] = min(best.get(key, np.inf), w)
    assert g.edge_count == len(best)
    for (a, b), w in best.items():
        assert g.edge_weight(g.node_id(str(a)), g.node_id(str(b))) == w


@given(st.lists(st.integers(0, 3), min_size=2, max_size=12))
@settings(max_examples=50, deadline=None)
def test_zone_nodes_partition(zones):
    g = make_graph([(i, i + 1) for i in range(len(zones) - 1)])
    a = TractAssignment.from_labels(g, {str(i): f"z{z}" for i, z in enumerate(zones)})
    seen = sorted(v for z in a.zones for v in zone_nodes(a, z))
    assert seen == list(range(g.node_count))
