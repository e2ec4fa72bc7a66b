import itertools
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sensorplace import synthetic
from sensorplace.errors import NetworkParseError, ValidationError
from sensorplace.network import (adjacency_constraints, build_incidence, load_network,
                                 parse_network, read_scenario_csv, shortest_path_costs)

from conftest import path_network, small_networks

DATA = Path(__file__).resolve().parents[1] / "data"

TINY = """
[JUNCTIONS]
 A 0 1
 B 0 1
 C 0 1
[RESERVOIRS]
 R 50
[PIPES]
 P1 R A 100 100 120
 P2 A B 100 100 120
 P3 A C 100 100 120
"""


def floyd_warshall(net):
    ids = [n.id for n in net.nodes] + [r.id for r in net.inlets]
    idx = {k: i for i, k in enumerate(ids)}
    D = np.full((len(ids), len(ids)), np.inf)
    np.fill_diagonal(D, 0.0)
    for l in net.links:
        a, b = idx[l.start], idx[l.end]
        D[a, b] = D[b, a] = min(D[a, b], l.length)
    for k in range(len(ids)):
        D = np.minimum(D, D[:, k:k + 1] + D[k:k + 1, :])
    return D[:net.n_n, :net.n_n]


def test_parse_counts_and_units():
    net = parse_network(TINY)
    assert (net.n_n, net.n_0, net.n_p, net.n_t) == (3, 1, 3, 1)
    # default units CMS, diameters in mm
    assert net.links[0].diameter == pytest.approx(0.1)
    assert net.nodes[0].demands == (1.0,)


def test_three_node_two_pipe_file():
    # three nodes counting the reservoir, connected by two pipes
    text = "[JUNCTIONS]\n A 0 0\n B 0 0\n[RESERVOIRS]\n R 10\n" \
           "[PIPES]\n P1 R A 1 100 100\n P2 A B 1 100 100\n"
    net = parse_network(text)
    assert (net.n_n + net.n_0, net.n_p) == (3, 2)


def test_unknown_endpoint_names_node():
    text = TINY.replace("P3 A C", "P3 A X9")
    with pytest.raises(ValidationError, match="X9"):
        parse_network(text)


def test_malformed_line_reports_line_number():
    text = TINY.replace("P2 A B 100 100 120", "P2 A B 100 abc 120")
    with pytest.raises(NetworkParseError) as exc:
        parse_network(text)
    assert exc.value.line == 10


def test_unsupported_section_rejected():
    with pytest.raises(NetworkParseError):
        parse_network(TINY + "[TANKS]\n T1 0 1 0 2 5 0\n")


def test_unknown_section_ignored_with_warning(caplog):
    net = parse_network(TINY + "[COORDINATES]\n A 1 2\n")
    assert net.n_n == 3
    assert "COORDINATES" in caplog.text


def test_disconnected_network_rejected():
    text = TINY.replace("P3 A C", "P3 B C") + "[JUNCTIONS]\n D 0 1\n"
    with pytest.raises(ValidationError, match="not connected"):
        parse_network(text)


def test_example_file_matches_header_counts():
    text = (DATA / "two_loop.inp").read_text()
    header = {}
    for line in text.splitlines():
        if line.startswith("; ") and ":" in line:
            key, value = line[2:].split(":")
            header[key.strip()] = int(value)
    net = load_network(DATA / "two_loop.inp")
    assert header == {"junctions": net.n_n, "reservoirs": net.n_0, "pipes": net.n_p}
    assert net.n_r == 2
    # CMH demands and mm diameters converted to SI
    assert net.nodes[0].demands[0] == pytest.approx(100 / 3600)
    assert net.links[0].diameter == pytest.approx(0.5)


def test_scenario_csv_overrides_demands():
    net = load_network(DATA / "two_loop.inp", DATA / "two_loop_scenarios.csv")
    assert net.n_t == 3
    assert net.nodes[0].demands == (0.0167, 0.0278, 0.0389)
    assert net.inlets[0].heads == (212.0, 210.0, 208.0)


def test_scenario_csv_validation():
    assert read_scenario_csv("id,a,b\nX,1,2\n") == {"X": [1.0, 2.0]}
    with pytest.raises(ValidationError, match="unknown element"):
        parse_network(TINY, scenarios={"Q": [1.0]})
    with pytest.raises(ValidationError, match="expected"):
        parse_network(TINY, scenarios={"A": [1.0, 2.0], "B": [1.0]})


def test_valves_parsed_without_group():
    text = TINY + "[VALVES]\n V1 B C 100 TCV 2.5\n"
    net = parse_network(text)
    v = net.links[net.valve_indices[0]]
    assert v.group is None and v.losses == (2.5,) and v.length > 0


@pytest.mark.parametrize("net", small_networks() + [load_network(DATA / "two_loop.inp")],
                         ids=lambda n: n.name)
def test_round_trip(net):
    again = parse_network(net.to_inp())
    assert again.to_json() == net.to_json()
    assert type(net).from_dict(net.to_dict()) == net


def test_incidence_single_pipe():
    inc = build_incidence(synthetic.single_pipe())
    # flow runs from the reservoir (start) into the node (end)
    assert inc.A12.toarray().tolist() == [[1.0]]
    assert inc.A10.toarray().tolist() == [[-1.0]]


@pytest.mark.parametrize("net", small_networks(), ids=lambda n: n.name)
def test_incidence_rows(net):
    inc = build_incidence(net)
    A12 = inc.A12.toarray()
    A10 = inc.A10.toarray()
    full = np.hstack([A12, A10])
    assert np.all(full.sum(axis=1) == 0)
    assert np.all(np.abs(full).sum(axis=1) == 2)
    internal = np.abs(A10).sum(axis=1) == 0
    assert np.all(A12[internal].sum(axis=1) == 0)
    assert set(A12[~internal].sum(axis=1)) <= {-1.0, 1.0}


def test_path_incidence_row_sums():
    A12 = build_incidence(path_network(3)).A12.toarray()
    assert set(A12.sum(axis=1)) <= {1.0, 0.0}


def test_path_costs():
    C = shortest_path_costs(path_network(3)).C
    assert C[0, 2] == 2.0
    assert np.all(np.diag(C) == 0)


@pytest.mark.parametrize("net", small_networks(), ids=lambda n: n.name)
def test_costs_match_floyd_warshall(net):
    C = shortest_path_costs(net).C
    np.testing.assert_allclose(C, floyd_warshall(net), rtol=1e-12, atol=0)


def test_integer_weights_exact():
    net = synthetic.random_looped_network(20, seed=8)
    links = tuple(type(l)(**{**l.__dict__, "length": float(round(l.length))}) for l in net.links)
    net = type(net)(net.nodes, net.inlets, links, net.name, net.n_groups)
    assert np.array_equal(shortest_path_costs(net).C, floyd_warshall(net))


def test_cost_order_ties_by_index():
    cost = shortest_path_costs(path_network(5))
    assert cost.order[2].tolist() == [1, 3, 0, 4]
    assert cost.order[0].tolist() == [1, 2, 3, 4]


def test_adjacency_examples():
    adj = adjacency_constraints(path_network(3))
    assert adj.G.shape == (3, 3)
    assert adj.feasible([1, 0, 1])
    assert not adj.feasible([1, 1, 0])
    assert np.all(adj.b == 1)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), data=st.data())
def test_adjacency_equals_graph_scan(seed, data):
    net = synthetic.random_looped_network(8, seed=seed)
    adj = adjacency_constraints(net)
    z = np.array(data.draw(st.lists(st.integers(0, 1), min_size=8, max_size=8)), dtype=float)
    ids = [n.id for n in net.nodes]
    sel = {ids[j] for j in np.flatnonzero(z)}
    shared = any(l.start in sel and l.end in sel for l in net.links)
    assert adj.feasible(z) == (not shared)


def test_neighbors_symmetric():
    adj = adjacency_constraints(synthetic.grid_network(3, 3, seed=0))
    for a, nb in enumerate(adj.neighbors):
        for b in nb:
            assert a in adj.neighbors[b]
    assert adj.neighbors[4] == {1, 3, 5, 7}
