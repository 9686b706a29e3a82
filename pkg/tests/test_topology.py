import numpy as np
import pytest

from scmsim.topology import (
    NetworkTopology,
    TopologyError,
    assign_roles,
    benign_majority_holds,
    benign_subgraph_connected,
    contamination_percent,
    erdos_renyi,
    generate_topology,
)


def complete_graph(n):
    return ~np.eye(n, dtype=bool)


class TestErdosRenyi:
    def test_two_agents_full_probability(self):
        adj = erdos_renyi(2, 1.0, seed=0)
        assert adj[0, 1] and adj[1, 0]
        assert not adj.diagonal().any()

    def test_edge_count_within_binomial_band(self):
        adj = erdos_renyi(32, 0.7, seed=123)
        edges = adj.sum() // 2
        n_pairs = 32 * 31 // 2
        expected = 0.7 * n_pairs
        sigma = np.sqrt(n_pairs * 0.7 * 0.3)
        assert abs(edges - expected) <= 4 * sigma

    def test_deterministic_in_seed(self):
        a = erdos_renyi(20, 0.5, seed=7)
        b = erdos_renyi(20, 0.5, seed=7)
        np.testing.assert_array_equal(a, b)
        c = erdos_renyi(20, 0.5, seed=8)
        assert (a != c).any()

    def test_symmetric(self):
        adj = erdos_renyi(15, 0.4, seed=1)
        np.testing.assert_array_equal(adj, adj.T)

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            erdos_renyi(1, 0.5, seed=0)
        with pytest.raises(ValueError):
            erdos_renyi(5, 0.0, seed=0)
        with pytest.raises(ValueError):
            erdos_renyi(5, 1.5, seed=0)


class TestAssignRoles:
    def test_zero_malicious_trivially_valid(self):
        adj = erdos_renyi(10, 0.5, seed=3)
        topo = assign_roles(adj, 0, seed=0)
        assert topo.num_malicious == 0
        assert benign_majority_holds(adj, topo.malicious)

    def test_complete_graph_five_two(self):
        # every benign node sees 3 benign (incl. itself) vs 2 malicious
        adj = complete_graph(5)
        topo = assign_roles(adj, 2, seed=0, max_attempts=1)
        assert topo.num_malicious == 2
        assert benign_majority_holds(adj, topo.malicious)

    def test_majority_bound_enforced(self):
        adj = complete_graph(8)
        with pytest.raises(ValueError):
            assign_roles(adj, 4, seed=0)

    def test_failure_reports_constraint(self):
        # two disjoint triangles: majority holds with one malicious agent,
        # but the benign agents always split into two components
        adj = np.zeros((6, 6), dtype=bool)
        for a, b in ((0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)):
            adj[a, b] = adj[b, a] = True
        with pytest.raises(TopologyError, match="connectivity"):
            assign_roles(adj, 1, seed=0, max_attempts=5)

    def test_paper_scale_assignment_found(self):
        topo = generate_topology(32, 0.7, 12, seed=0)
        assert topo.num_malicious == 12
        assert benign_majority_holds(topo.adjacency, topo.malicious)
        assert benign_subgraph_connected(topo.adjacency, topo.malicious)

    def test_generation_deterministic(self):
        a = generate_topology(32, 0.7, 6, seed=5)
        b = generate_topology(32, 0.7, 6, seed=5)
        np.testing.assert_array_equal(a.adjacency, b.adjacency)
        np.testing.assert_array_equal(a.malicious, b.malicious)


class TestNeighborhood:
    def test_isolated_node_is_self_only(self):
        adj = np.zeros((3, 3), dtype=bool)
        adj[1, 2] = adj[2, 1] = True
        topo = NetworkTopology(adj, np.zeros(3, dtype=bool))
        np.testing.assert_array_equal(topo.neighborhood(0), [0])

    def test_complete_graph_neighborhood_is_everyone(self):
        topo = NetworkTopology(complete_graph(4), np.zeros(4, dtype=bool))
        np.testing.assert_array_equal(topo.neighborhood(2), [0, 1, 2, 3])

    def test_symmetry(self):
        topo = generate_topology(16, 0.4, 0, seed=2)
        for k in range(16):
            for ell in topo.neighborhood(k):
                assert k in topo.neighborhood(int(ell))

    def test_invalid_id_rejected(self):
        topo = NetworkTopology(complete_graph(3), np.zeros(3, dtype=bool))
        with pytest.raises(ValueError):
            topo.neighborhood(3)

    def test_malformed_topology_rejected(self):
        bad = np.zeros((3, 3), dtype=bool)
        bad[0, 1] = True  # asymmetric
        with pytest.raises(TopologyError):
            NetworkTopology(bad, np.zeros(3, dtype=bool))
        with_loop = np.eye(3, dtype=bool)
        with pytest.raises(TopologyError):
            NetworkTopology(with_loop, np.zeros(3, dtype=bool))


class TestBookkeeping:
    def test_contamination_labels_match_panel_captions(self):
        assert contamination_percent(3, 32) == 9
        assert contamination_percent(6, 32) == 19
        assert contamination_percent(9, 32) == 28
        assert contamination_percent(12, 32) == 38

    def test_text_serialization(self):
        adj = np.zeros((3, 3), dtype=bool)
        adj[0, 1] = adj[1, 0] = True
        adj[1, 2] = adj[2, 1] = True
        topo = NetworkTopology(adj, np.array([False, False, True]))
        lines = topo.to_text().strip().split("\n")
        assert lines == ["0 1", "1 2", "0 B", "1 B", "2 M"]

    def test_save_roundtrips_bytes(self, tmp_path):
        topo = generate_topology(8, 0.6, 2, seed=9)
        p = tmp_path / "topo.txt"
        topo.save(p)
        assert p.read_text() == topo.to_text()
