import csv
import json
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mbeon.hpo import flat_launch_profiles
from mbeon.network import (
    CCR_HEADER,
    DisconnectedCoreError,
    SpanLengthMismatchError,
    TooFewNodesError,
    TopologySchemaError,
    ZeroLengthLinkError,
    _SpanCache,
    _to_candidate,
    generate_demand_sequence,
    k_shortest_paths,
    load_topology,
    node_weights,
    path_gsnr,
    precompute_ccr,
    random_topology,
    topology_from_dict,
    write_ccr_csv,
)
from mbeon.qot import DEFAULT_NLI, NO_PENALTIES, PenaltyConfig, modulation_from_gsnr


def doc(nodes, links):
    return {
        "nodes": [{"id": n} if not isinstance(n, dict) else n for n in nodes],
        "links": [{"a": a, "b": b, "length_km": L, "spans_km": [L]} for a, b, L in links],
    }


TRIANGLE = doc(["A", "B", "C"], [("A", "B", 50.0), ("B", "C", 60.0), ("A", "C", 100.0)])


def all_simple_paths(topo, s, d):
    out = []

    def walk(path):
        u = path[-1]
        if u == d:
            out.append(tuple(path))
            return
        for v in topo.neighbors(u):
            if v not in path:
                walk(path + [v])

    walk([s])
    return sorted(out, key=lambda p: (sum(topo.link_between(a, b).length_km
                                          for a, b in zip(p, p[1:])), p))


# --- loading / validation ---------------------------------------------------

def test_fixture_shape(fixture_topology):
    assert len(fixture_topology.nodes) == 6 and len(fixture_topology.links) == 8
    assert fixture_topology.core_nodes == ["A", "B", "C", "D", "E"]
    assert len(fixture_topology.core_pairs()) == 10
    for link in fixture_topology.links:
        assert sum(link.spans_km) == pytest.approx(link.length_km)
        assert len(link.extra_losses_db) == len(link.spans_km)


def test_lumped_losses_seeded(fixture_topology):
    from mbeon.network import load_fixture

    again = load_fixture(seed=1)
    other = load_fixture(seed=2)
    assert [l.extra_losses_db for l in again.links] == [l.extra_losses_db for l in fixture_topology.links]
    assert [l.extra_losses_db for l in other.links] != [l.extra_losses_db for l in again.links]
    assert load_fixture(seed=1, penalties=NO_PENALTIES).links[0].extra_losses_db == (0.0, 0.0, 0.0)


@pytest.mark.parametrize("data,err", [
    (doc(["A"], []), TooFewNodesError),
    (doc(["A", "B"], [("A", "B", 0.0)]), ZeroLengthLinkError),
    (doc(["A", "B", "C", "D"], [("A", "B", 10.0), ("C", "D", 10.0)]), DisconnectedCoreError),
    (doc(["A", "B"], [("A", "A", 10.0)]), TopologySchemaError),
    (doc(["A", "A"], []), TopologySchemaError),
    (doc(["A", 2], []), TopologySchemaError),
    (doc(["A", "B"], [("A", "Z", 10.0)]), TopologySchemaError),
    (doc(["A", "B"], [("A", "B", 10.0), ("B", "A", 10.0)]), TopologySchemaError),
    ({"nodes": []}, TopologySchemaError),
    ([], TopologySchemaError),
    (doc([{"id": "A", "core": False}, "B"], [("A", "B", 10.0)]), TooFewNodesError),
    (doc([{"id": "A", "population": -1}, "B"], [("A", "B", 10.0)]), TopologySchemaError),
])
def test_topology_errors(data, err):
    with pytest.raises(err):
        topology_from_dict(data)


def test_span_sum_mismatch():
    d = doc(["A", "B"], [("A", "B", 100.0)])
    d["links"][0]["spans_km"] = [50.0, 48.0]
    with pytest.raises(SpanLengthMismatchError):
        topology_from_dict(d)
    d["links"][0]["spans_km"] = [50.0, 49.5]  # within the 1 km tolerance
    assert topology_from_dict(d).links[0].spans_km == (50.0, 49.5)


def test_disconnected_non_core_is_fine():
    d = doc(["A", "B", {"id": "X", "core": False}], [("A", "B", 10.0)])
    assert len(topology_from_dict(d).nodes) == 3


def test_load_topology_bad_json(tmp_path):
    p = tmp_path / "t.json"
    p.write_text("{not json")
    with pytest.raises(TopologySchemaError):
        load_topology(p)
    p.write_text(json.dumps(TRIANGLE))
    assert len(load_topology(p).links) == 3


def test_link_spans_reverse(fixture_topology):
    link = fixture_topology.links[0]
    fwd = [s.extra_loss_db for s in link.spans()]
    assert [s.extra_loss_db for s in link.spans(reverse=True)] == fwd[::-1]
    assert link.other(link.a) == link.b


# --- routing ----------------------------------------------------------------

def test_triangle_k_shortest():
    topo = topology_from_dict(TRIANGLE)
    paths = k_shortest_paths(topo, "A", "C", 3)
    assert [p.nodes for p in paths] == [("A", "C"), ("A", "B", "C")]
    assert [p.length_km for p in paths] == [100.0, 110.0]
    assert paths[1].roadm_hops == 3
    assert paths[1].reversed_links == (False, False)
    assert k_shortest_paths(topo, "C", "A", 1)[0].reversed_links == (True,)


def test_k_equals_one_is_dijkstra(fixture_topology):
    for s, d in fixture_topology.core_pairs():
        best = all_simple_paths(fixture_topology, s, d)[0]
        assert k_shortest_paths(fixture_topology, s, d, 1)[0].nodes == best


def test_fixture_matches_bruteforce(fixture_topology):
    for s, d in fixture_topology.core_pairs():
        for k in (1, 3, 5):
            got = [p.nodes for p in k_shortest_paths(fixture_topology, s, d, k)]
            want = all_simple_paths(fixture_topology, s, d)[:k]
            assert got == want


@settings(max_examples=25)
@given(seed=st.integers(0, 10_000), n=st.integers(3, 9), k=st.integers(1, 6))
def test_yen_matches_bruteforce(seed, n, k):
    topo = topology_from_dict(random_topology(n, seed), penalties=NO_PENALTIES)
    s, d = topo.core_nodes[0], topo.core_nodes[-1]
    got = k_shortest_paths(topo, s, d, k)
    want = all_simple_paths(topo, s, d)[:k]
    assert [p.nodes for p in got] == want
    assert all(len(set(p.nodes)) == len(p.nodes) for p in got)


def test_k_shortest_argument_checks(fixture_topology):
    with pytest.raises(ValueError):
        k_shortest_paths(fixture_topology, "A", "A", 3)
    assert k_shortest_paths(fixture_topology, "A", "B", 0) == []


def test_random_topology_valid():
    d = random_topology(12, seed=3, core_fraction=0.5)
    topo = topology_from_dict(d)
    assert len(topo.core_nodes) == 6
    assert len(topo.links) >= 11
    assert all(max(l.spans_km) <= 80.0 + 1e-6 for l in topo.links)
    assert random_topology(12, seed=3) == random_topology(12, seed=3)


# --- demands ----------------------------------------------------------------

def test_node_weights(fixture_topology):
    w = node_weights(fixture_topology)
    assert w == {"A": 6.0, "B": 4.5, "C": 6.0, "D": 3.0, "E": 5.0}


def test_demand_pair_distribution(fixture_topology):
    n = 100_000
    demands = generate_demand_sequence(fixture_topology, 7, n)
    w = node_weights(fixture_topology)
    pairs = fixture_topology.core_pairs()
    p = np.array([w[s] * w[d] for s, d in pairs])
    p /= p.sum()
    counts = Counter((d.source, d.destination) for d in demands)
    for (pair, prob) in zip(pairs, p):
        sigma = np.sqrt(n * prob * (1 - prob))
        assert abs(counts[pair] - n * prob) <= 3 * sigma
    rates = Counter(d.rate for d in demands)
    assert set(rates) == {r * 10**9 for r in (100, 200, 300, 400, 500, 600)}
    for c in rates.values():
        assert abs(c - n / 6) <= 3 * np.sqrt(n / 6 * 5 / 6)


def test_zero_weight_node_never_drawn():
    d = doc(["A", "B", {"id": "Z", "population": 0.0}],
            [("A", "B", 10.0), ("B", "Z", 10.0), ("A", "Z", 10.0)])
    topo = topology_from_dict(d)
    demands = generate_demand_sequence(topo, 1, 5000)
    assert all("Z" not in (x.source, x.destination) for x in demands)


def test_demands_deterministic(fixture_topology):
    a = generate_demand_sequence(fixture_topology, 11, 500)
    assert a == generate_demand_sequence(fixture_topology, 11, 500)
    assert a != generate_demand_sequence(fixture_topology, 12, 500)
    assert all(isinstance(x.rate, int) and x.source < x.destination for x in a)


# --- CCR --------------------------------------------------------------------

def test_ccr_consistency(fixture_ccr, fixture_topology, lcs_grid, trx):
    for table in fixture_ccr.values():
        assert set(table.entries) == set(fixture_topology.core_pairs())
        for (s, d), e in table.entries.items():
            assert e.gsnr.shape == (len(e.paths), lcs_grid.n_channels) and len(e.paths) == 3
            np.testing.assert_array_equal(e.m, modulation_from_gsnr(e.gsnr, trx))
            np.testing.assert_array_equal(e.rate, e.m * 100 * 10**9)
            assert table.entry(d, s) is e


def test_ccr_paths_ranked_by_length(fixture_ccr):
    for e in fixture_ccr["FLP"].entries.values():
        lengths = [p.length_km for p in e.paths]
        assert lengths == sorted(lengths)


def test_ccr_frp_not_worse_on_average(fixture_ccr):
    flp, frp = fixture_ccr["FLP"], fixture_ccr["FRP"]
    for key in flp.entries:
        assert frp.entries[key].m.sum() >= flp.entries[key].m.sum()


def test_superset_path_has_lower_gsnr(fixture_topology, lcs_grid, trx):
    """Under identical flat launches, extending a path only adds noise."""
    launches = flat_launch_profiles(fixture_topology, lcs_grid, 0.0)
    cache = _SpanCache(lcs_grid, DEFAULT_NLI)
    pen = PenaltyConfig()
    for short, long in ((("A", "B"), ("A", "B", "D")), (("C", "F"), ("C", "F", "E")),
                        (("D", "F", "C"), ("D", "F", "C", "A"))):
        g1 = path_gsnr(fixture_topology, _to_candidate(fixture_topology, short), lcs_grid, trx,
                       launches, pen, cache)
        g2 = path_gsnr(fixture_topology, _to_candidate(fixture_topology, long), lcs_grid, trx,
                       launches, pen, cache)
        assert np.all(g2 < g1)


def test_ccr_csv(fixture_ccr, tmp_path, lcs_grid):
    table = fixture_ccr["FLP"]
    p = tmp_path / "ccr.csv"
    write_ccr_csv(table, p)
    rows = list(csv.reader(p.open()))
    assert tuple(rows[0]) == CCR_HEADER
    assert len(rows) - 1 == 10 * 3 * lcs_grid.n_channels
    for r, ref in zip(rows[1:], table.rows()):
        assert (r[0], r[1], int(r[2]), int(r[3])) == ref[:4]
        assert float(r[4]) == pytest.approx(ref[4], rel=1e-5)
        assert int(r[5]) == ref[5] and int(r[6]) == 100 * int(r[5])


def test_ccr_launch_shape_checked(fixture_topology, lcs_grid, trx):
    with pytest.raises(ValueError):
        precompute_ccr(fixture_topology, lcs_grid, trx, {l.index: np.ones(3) for l in fixture_topology.links})
