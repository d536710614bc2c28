import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tvlevel.maxflow import CAPACITY_LIMIT, CapacityOverflow, FlowGraph, quantize
from tvlevel.verify.oracles import reference_maxflow


def test_single_edge():
    g = FlowGraph(0)
    g.add_edge_int(g.source, g.sink, 1)
    assert g.maxflow() == 1


def test_disconnected():
    g = FlowGraph(2)
    g.add_edge_int(g.source, 0, 5)
    g.add_edge_int(1, g.sink, 5)
    assert g.maxflow() == 0
    assert g.source_side().tolist() == [True, False]
    assert g.sink_side().tolist() == [False, True]


def test_quantize_rounding_and_overflow():
    assert quantize(0.5, 4) == 2
    assert quantize(1.0) == 2 ** 32
    with pytest.raises(CapacityOverflow, match="edge A"):
        quantize(float(2 ** 40), 2 ** 32, "edge A")
    with pytest.raises(CapacityOverflow):
        quantize(float("inf"))
    g = FlowGraph(1)
    with pytest.raises(CapacityOverflow, match="0->1"):
        g.add_edge_int(0, 1, CAPACITY_LIMIT + 1, label="0->1")
    with pytest.raises(ValueError):
        g.add_edge_int(0, 1, -1)


def test_real_capacities_are_quantized():
    g = FlowGraph(1, quantum=1000)
    g.add_edge(g.source, 0, 0.25)
    g.add_edge(0, g.sink, 0.5)
    assert g.maxflow() == 250


edges = st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9), st.integers(1, 30)), max_size=40)


@given(st.integers(1, 8), edges)
def test_matches_networkx_and_reference(n, raw):
    g = FlowGraph(n)
    cap = {}
    ref = nx.DiGraph()
    ref.add_nodes_from([n, n + 1])
    for u, v, c in raw:
        u, v = u % (n + 2), v % (n + 2)
        if u == v or u == n + 1 or v == n:
            continue
        g.add_edge_int(u, v, c)
        cap[(u, v)] = cap.get((u, v), 0) + c
        w = ref.get_edge_data(u, v, {"capacity": 0})["capacity"]
        ref.add_edge(u, v, capacity=w + c)
    f = g.maxflow()
    assert f == nx.maximum_flow_value(ref, n, n + 1)
    assert f == reference_maxflow(cap, n, n + 1)
    # the source side is a minimum cut
    side = np.r_[g.source_side(), True, False]
    cut = sum(c for (u, v), c in cap.items() if side[u] and not side[v])
    assert cut == f
    # and so is the complement of the sink side
    side = np.r_[~g.sink_side(), True, False]
    assert sum(c for (u, v), c in cap.items() if side[u] and not side[v]) == f


def test_minimal_cut_inside_maximal_cut():
    # two equal-cost cuts: {} and {0}
    g = FlowGraph(1)
    g.add_edge_int(g.source, 0, 3)
    g.add_edge_int(0, g.sink, 3)
    assert g.maxflow() == 3
    assert g.source_side().tolist() == [False]
    assert (~g.sink_side()).tolist() == [True]
