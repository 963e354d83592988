import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypkg.analyze import (
    ANTI_SYMMETRIC,
    NEITHER,
    SYMMETRIC,
    RelationGraph,
    analyze_dataset,
    classify_pattern,
    exhaustive_triangles,
    global_curvature,
    krackhardt_score,
    relation_curvature,
    sample_triangles,
    triangle_curvature,
)
from hypkg.data import Dataset
from hypkg.errors import DomainError


def path(n):
    return [(i, i + 1) for i in range(n - 1)]


def cycle(n):
    return [(i, (i + 1) % n) for i in range(n)]


def heap_tree(n):
    return [(i, (i - 1) // 2) for i in range(1, n)]


def bfs_distances(edges, n):
    """Floyd-Warshall on the undirected graph; independent of the BFS code."""
    d = np.full((n, n), np.inf)
    np.fill_diagonal(d, 0)
    for u, v in edges:
        d[u, v] = d[v, u] = 1
    for k in range(n):
        d = np.minimum(d, d[:, [k]] + d[[k], :])
    return d


class TestTriangle:
    def test_collinear_on_line_is_zero(self):
        g = RelationGraph.from_edges(path(7))
        assert triangle_curvature(g, 0, 2, 6) == 0.0
        assert triangle_curvature(g, 6, 0, 3) == 0.0

    def test_star_is_negative(self):
        g = RelationGraph.from_edges([(0, 1), (0, 2), (0, 3)])
        # b=1, c=2 meet at 0; a=3 hangs off the midpoint: (1 + 1 - 4) / 2
        assert triangle_curvature(g, 3, 1, 2) == pytest.approx(-1.0)

    def test_six_cycle_value(self):
        g = RelationGraph.from_edges(cycle(6))
        # b=0, c=2, m=1, a=4: d(a,m)=3, d(b,c)=2, d(a,b)=d(a,c)=2
        assert triangle_curvature(g, 4, 0, 2) == pytest.approx((9 + 1 - 4) / 6)

    def test_adjacent_and_midpoint_are_not_samples(self):
        g = RelationGraph.from_edges(path(5))
        assert triangle_curvature(g, 4, 0, 1) is None
        assert triangle_curvature(g, 1, 0, 2) is None

    def test_disconnected_is_not_a_sample(self):
        g = RelationGraph.from_edges([(0, 1), (1, 2), (5, 6)])
        assert triangle_curvature(g, 5, 0, 2) is None

    def test_unknown_entity(self):
        with pytest.raises(DomainError):
            triangle_curvature(RelationGraph.from_edges(path(3)), 0, 1, 9)

    @pytest.mark.parametrize("edges", [path(9), cycle(9), heap_tree(15), cycle(8) + [(0, 4)]])
    def test_bfs_distances(self, edges):
        g = RelationGraph.from_edges(edges)
        want = bfs_distances(edges, g.n_nodes)
        for s in range(g.n_nodes):
            dist, parent = g.bfs(s)
            np.testing.assert_array_equal(dist, want[s])
            for v in range(g.n_nodes):
                if v != s:
                    assert dist[parent[v]] == dist[v] - 1
                    assert parent[v] == min(u for u in range(g.n_nodes) if want[u, v] == 1 and dist[u] == dist[v] - 1)


GRAPH_SIZES = range(5, 21)


class TestSigns:
    """Exhaustive over every valid triple, for graphs up to 20 nodes."""

    @pytest.mark.parametrize("n", range(4, 21))
    def test_paths_zero(self, n):
        vals = exhaustive_triangles(RelationGraph.from_edges(path(n)))
        assert len(vals) and np.all(np.abs(vals) <= 1e-12)

    @pytest.mark.parametrize("n", range(4, 21))
    def test_cycles_positive(self, n):
        vals = exhaustive_triangles(RelationGraph.from_edges(cycle(n)))
        assert vals.mean() > 0 and vals.min() >= 0

    @pytest.mark.parametrize("n", GRAPH_SIZES)
    def test_trees_negative(self, n):
        vals = exhaustive_triangles(RelationGraph.from_edges(heap_tree(n)))
        assert vals.mean() < 0 and vals.max() <= 1e-12

    def test_seven_node_path_sampled(self):
        assert relation_curvature(RelationGraph.from_edges(path(7)), rng=0) == pytest.approx(0.0, abs=1e-9)


class TestSampling:
    def test_single_component_draws_exactly_1000(self):
        g = RelationGraph.from_edges(cycle(12))
        assert g.component_weights().tolist() == [1.0]
        assert len(sample_triangles(g, 1000, rng=1)) == 1000

    def test_weights_split_samples(self):
        g = RelationGraph.from_edges(cycle(10) + [(20 + u, 20 + v) for u, v in cycle(5)])
        w = g.component_weights()
        np.testing.assert_allclose(sorted(w), sorted([1000 / 1125, 125 / 1125]))
        assert len(sample_triangles(g, 1000, rng=0)) == sum(round(1000 * x) for x in w)

    def test_seeded(self):
        g = RelationGraph.from_edges(heap_tree(20))
        assert relation_curvature(g, rng=4) == relation_curvature(g, rng=4)

    def test_undefined_when_no_valid_triple(self):
        g = RelationGraph.from_edges([(0, 1), (2, 3), (4, 5)])
        assert relation_curvature(g, rng=0) is None

    @pytest.mark.parametrize("edges", [heap_tree(20), cycle(13), cycle(6) + heap_tree(9)[2:]])
    def test_sampled_mean_consistent_with_exhaustive(self, edges):
        g = RelationGraph.from_edges(edges)
        exact = exhaustive_triangles(g)
        sampled = sample_triangles(g, 4000, rng=11)
        se = exact.std() / np.sqrt(len(sampled))
        assert abs(sampled.mean() - exact.mean()) <= 3 * se + 1e-12


class TestKrackhardt:
    def test_reciprocated_pair(self):
        g = RelationGraph.from_edges([(1, 2), (2, 1)])
        assert krackhardt_score(g) == 0.0
        assert classify_pattern(g) == SYMMETRIC

    def test_single_edge(self):
        g = RelationGraph.from_edges([(1, 2)])
        assert krackhardt_score(g) == 1.0
        assert classify_pattern(g) == ANTI_SYMMETRIC

    def test_duplicate_edges_count_once(self):
        assert krackhardt_score(RelationGraph.from_edges([(1, 2), (1, 2), (2, 1)])) == 0.0

    def test_no_edges(self):
        g = RelationGraph.from_edges(np.zeros((0, 2), int))
        assert krackhardt_score(g) is None and classify_pattern(g) is None

    def test_mixed_is_neither(self):
        g = RelationGraph.from_edges([(0, 1), (1, 0), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (7, 8)])
        assert krackhardt_score(g) == pytest.approx(6 / 8)
        assert classify_pattern(g) == NEITHER

    @given(st.lists(st.tuples(st.integers(0, 12), st.integers(0, 12)), min_size=1, max_size=40))
    @settings(max_examples=60)
    def test_symmetric_closure_is_zero(self, edges):
        closed = edges + [(v, u) for u, v in edges]
        assert krackhardt_score(RelationGraph.from_edges(closed)) == 0.0

    @given(st.lists(st.tuples(st.integers(0, 12), st.integers(0, 12)), min_size=1, max_size=40))
    @settings(max_examples=60)
    def test_dag_is_one(self, edges):
        dag = [(min(u, v), max(u, v)) for u, v in edges if u != v]
        if dag:
            g = RelationGraph.from_edges(dag)
            assert krackhardt_score(g) == 1.0 and classify_pattern(g) == ANTI_SYMMETRIC


class TestGlobal:
    def test_single_relation(self):
        assert global_curvature([-1.7], [8.0]) == -1.7

    def test_equal_weights_cancel(self):
        assert global_curvature([-1.0, 1.0], [5.0, 5.0]) == 0.0

    def test_undefined_relations_are_dropped(self):
        assert global_curvature([None, 2.0], [100.0, 1.0]) == 2.0
        assert global_curvature([None], [1.0]) is None


def test_analyze_dataset_report():
    tree = [(f"n{i}", "parentOf", f"n{(i - 1) // 2}") for i in range(1, 15)]
    ring = [(f"n{i}", "near", f"n{(i + 1) % 8}") for i in range(8)]
    ring += [(t, r, h) for h, r, t in ring]
    ds = Dataset.from_triples(tree[:10] + ring[:12], tree[10:12] + ring[12:14], tree[12:] + ring[14:])
    rep = analyze_dataset(ds, seed=3, samples_per_unit=300)
    parent, near = rep.by_name("parentOf"), rep.by_name("near")
    assert parent.khs == 1.0 and parent.pattern == ANTI_SYMMETRIC and parent.xi < 0
    assert near.khs == 0.0 and near.pattern == SYMMETRIC and near.xi > 0
    assert parent.n_triples == 14 and near.n_triples == 16
    w = np.array([parent.weight, near.weight])
    assert rep.global_xi == pytest.approx((parent.xi * w[0] + near.xi * w[1]) / w.sum())
    assert analyze_dataset(ds, seed=3, samples_per_unit=300).to_tsv() == rep.to_tsv()
    lines = rep.to_tsv().splitlines()
    assert lines[0] == "relation\ttriples\txi\tkhs\tpattern" and lines[-1].startswith("GLOBAL")


def test_relation_streams_are_independent():
    tree = [(f"n{i}", "a", f"n{(i - 1) // 2}") for i in range(1, 15)]
    other = [(f"m{i}", "b", f"m{i + 1}") for i in range(6)]
    one = analyze_dataset(Dataset.from_triples(tree, tree[:1], tree[:1]), seed=0)
    two = analyze_dataset(Dataset.from_triples(tree + other, tree[:1], tree[:1]), seed=0)
    assert one.by_name("a").xi == two.by_name("a").xi


def test_all_valid_triples_enumerated():
    edges = heap_tree(7)
    g = RelationGraph.from_edges(edges)
    manual = [
        triangle_curvature(g, a, b, c)
        for a, b, c in itertools.permutations(range(7), 3)
        if triangle_curvature(g, a, b, c) is not None
    ]
    np.testing.assert_allclose(sorted(exhaustive_triangles(g)), sorted(manual))
