"""Graph invariants, interchange IO, subgraph extraction, deletion semantics."""

import os

import numpy as np
import pytest

from neighbor_xai.graph import (
    DimensionMismatchError, Graph, IdRangeError, MissingFileError,
    NonFiniteFeatureError, SubgraphError, delete_neighbors, khop_subgraph,
    load_graph, save_graph, set_self_loops,
)
from neighbor_xai.synth import (
    GADGET_CENTER, GADGET_PENDANT, make_pendant_gadget, make_random_graph,
)


def small_graph(edges, n=3, f=2, self_loops=False):
    return Graph(
        features=np.arange(n * f, dtype=float).reshape(n, f),
        edges=np.array(edges, dtype=np.int64).reshape(-1, 2),
        labels=np.zeros(n, dtype=np.int64),
        train_mask=np.ones(n, dtype=bool),
        val_mask=np.zeros(n, dtype=bool),
        test_mask=np.zeros(n, dtype=bool),
        has_self_loops=self_loops,
        num_classes=2,
    )


# -- construction and IO -------------------------------------------------------


def test_empty_edge_list():
    g = small_graph([])
    assert len(g.edges) == 0
    assert g.n_nodes == 3


def test_out_of_range_edge_rejected():
    with pytest.raises(IdRangeError):
        small_graph([[0, 99]], n=10)


def test_duplicate_edge_rejected():
    with pytest.raises(Exception):
        small_graph([[0, 1], [0, 1]])


def test_nan_features_rejected():
    feats = np.ones((2, 2))
    feats[0, 0] = np.nan
    with pytest.raises(NonFiniteFeatureError):
        Graph(feats, np.zeros((0, 2), dtype=np.int64), [0, 0],
              [True, False], [False, False], [False, True],
              has_self_loops=False, num_classes=1)


def test_self_loop_flag_enforced():
    with pytest.raises(Exception):
        small_graph([[0, 0]], self_loops=True)  # loops missing for nodes 1, 2


def test_roundtrip_is_byte_identical(tmp_path):
    rng = np.random.default_rng(0)
    g = make_random_graph(rng, 8, n_features=3, self_loops=True)
    p1 = tmp_path / "a"
    p2 = tmp_path / "b"
    save_graph(g, p1)
    save_graph(load_graph(p1), p2)
    for name in ("meta.json", "features.csv", "edges.csv", "labels.csv", "masks.csv"):
        assert (p1 / name).read_bytes() == (p2 / name).read_bytes()


def test_load_missing_directory():
    with pytest.raises(MissingFileError):
        load_graph("/nonexistent/dataset/path")


def test_load_empty_edge_file(tmp_path):
    save_graph(small_graph([]), tmp_path)
    assert (tmp_path / "edges.csv").read_bytes() == b""
    g = load_graph(tmp_path)
    assert len(g.edges) == 0
    assert g.n_nodes == 3


def test_load_missing_file(tmp_path):
    g = small_graph([[0, 1], [1, 0]])
    save_graph(g, tmp_path)
    os.remove(tmp_path / "edges.csv")
    with pytest.raises(MissingFileError):
        load_graph(tmp_path)


def test_load_dimension_mismatch(tmp_path):
    g = small_graph([[0, 1], [1, 0]])
    save_graph(g, tmp_path)
    rows = (tmp_path / "features.csv").read_text().splitlines()
    (tmp_path / "features.csv").write_text("\n".join(rows[:-1]) + "\n")
    with pytest.raises(DimensionMismatchError):
        load_graph(tmp_path)


def test_load_out_of_range_edge(tmp_path):
    g = small_graph([[0, 1], [1, 0]])
    save_graph(g, tmp_path)
    (tmp_path / "edges.csv").write_text("0,99\n")
    with pytest.raises(IdRangeError):
        load_graph(tmp_path)


def test_load_rejects_nan_feature(tmp_path):
    g = small_graph([[0, 1], [1, 0]])
    save_graph(g, tmp_path)
    text = (tmp_path / "features.csv").read_text().replace("0.0", "nan", 1)
    (tmp_path / "features.csv").write_text(text)
    with pytest.raises(NonFiniteFeatureError):
        load_graph(tmp_path)


# -- self-loop control ---------------------------------------------------------


def test_set_self_loops_adds_all_loops():
    g = small_graph([[0, 1], [1, 0]], n=2)
    g2 = set_self_loops(g, True)
    assert sorted(map(tuple, g2.edges)) == [(0, 0), (0, 1), (1, 0), (1, 1)]


def test_set_self_loops_idempotent():
    g = small_graph([[0, 1], [1, 0]], n=2)
    for flag in (True, False):
        once = set_self_loops(g, flag)
        twice = set_self_loops(once, flag)
        assert np.array_equal(once.edges, twice.edges)


def test_self_loop_roundtrip_restores_edges():
    g = small_graph([[0, 1], [1, 0], [1, 2]])
    back = set_self_loops(set_self_loops(g, True), False)
    assert np.array_equal(back.edges, g.edges)


# -- k-hop subgraphs -------------------------------------------------------------


def test_khop_path_graph():
    g = small_graph([[0, 1], [1, 2]])  # directed chain 0 -> 1 -> 2
    sg = khop_subgraph(g, 2, 2)
    assert list(sg.neighbor_ids) == [0, 1]
    assert sg.center == 2


def test_khop_isolated_node():
    g = small_graph([[0, 1]])
    sg = khop_subgraph(g, 2, 2)
    assert len(sg.neighbor_ids) == 0
    assert sg.n_nodes == 1


def test_khop_invalid_center():
    g = small_graph([[0, 1]])
    with pytest.raises(SubgraphError):
        khop_subgraph(g, 7, 2)


def _bfs_oracle(g, center, hops):
    """Independent reverse-direction BFS over the raw edge list."""
    preds = {}
    for s, t in g.edges:
        preds.setdefault(int(t), []).append(int(s))
    layer = {int(center)}
    seen = {int(center)}
    for _ in range(hops):
        layer = {u for v in layer for u in preds.get(v, [])} - seen
        seen |= layer
    return sorted(seen - {int(center)})


def test_khop_matches_bfs_oracle():
    rng = np.random.default_rng(42)
    for trial in range(50):
        n = int(rng.integers(2, 51))
        g = make_random_graph(rng, n, edge_prob=float(rng.uniform(0.02, 0.3)),
                              undirected=bool(trial % 2))
        center = int(rng.integers(0, n))
        hops = int(rng.integers(1, 4))
        sg = khop_subgraph(g, center, hops)
        assert list(sg.neighbor_ids) == _bfs_oracle(g, center, hops)


def test_khop_degrees_come_from_parent_graph():
    # star with an extra edge beyond the 1-hop boundary
    g = small_graph([[0, 1], [1, 0], [1, 2], [2, 1]], n=3)
    sg = khop_subgraph(g, 0, 1)
    assert list(sg.nodes) == [0, 1]
    # node 1 keeps its full-graph in-degree (edges from 0 and 2)
    assert sg.degrees[sg.local_index(1)] == 2.0


# -- deletion ---------------------------------------------------------------------


def test_delete_all_neighbors_keeps_center_and_loop():
    g = set_self_loops(small_graph([[0, 1], [1, 0], [1, 2], [2, 1]]), True)
    sg = khop_subgraph(g, 0, 2)
    out = delete_neighbors(sg, set(map(int, sg.neighbor_ids)))
    assert list(out.nodes) == [0]
    assert len(out.edge_src) == 1  # the center self-loop survives
    assert out.edge_src[0] == out.edge_dst[0] == 0

    g2 = small_graph([[0, 1], [1, 0], [1, 2], [2, 1]])
    sg2 = khop_subgraph(g2, 0, 2)
    out2 = delete_neighbors(sg2, set(map(int, sg2.neighbor_ids)))
    assert list(out2.nodes) == [0]
    assert len(out2.edge_src) == 0


def test_delete_nothing_is_identity():
    g = small_graph([[0, 1], [1, 0]])
    sg = khop_subgraph(g, 0, 2)
    assert delete_neighbors(sg, set()) is sg


def test_delete_midpath_keeps_disconnected_remnant():
    g = small_graph([[0, 1], [1, 2]])  # 0 -> 1 -> 2
    sg = khop_subgraph(g, 2, 2)
    out = delete_neighbors(sg, {1})
    assert list(out.nodes) == [0, 2]  # 0 is cut off but still present
    assert len(out.edge_src) == 0


def test_delete_unknown_victim_rejected():
    g = small_graph([[0, 1], [1, 0]])
    sg = khop_subgraph(g, 0, 2)
    with pytest.raises(SubgraphError):
        delete_neighbors(sg, {2})


def test_delete_never_removes_center():
    g = small_graph([[0, 1], [1, 0]])
    sg = khop_subgraph(g, 0, 2)
    with pytest.raises(SubgraphError):
        delete_neighbors(sg, {0})


# -- gadget ------------------------------------------------------------------------


def test_gadget_pendant_contract():
    g = make_pendant_gadget()
    pendant_edges = [tuple(e) for e in g.edges
                     if GADGET_PENDANT in (e[0], e[1])]
    assert sorted(pendant_edges) == [(GADGET_CENTER, GADGET_PENDANT),
                                     (GADGET_PENDANT, GADGET_CENTER)]
    assert not g.has_self_loops


def test_gadget_pendant_not_reachable_avoiding_center():
    g = make_pendant_gadget()
    # BFS from the center over edges that never use the center as intermediary
    preds = {}
    for s, t in g.edges:
        preds.setdefault(int(t), []).append(int(s))
    frontier = [u for u in preds.get(GADGET_CENTER, []) if u != GADGET_CENTER]
    two_hop = set()
    for u in frontier:
        for w in preds.get(u, []):
            if w != GADGET_CENTER:
                two_hop.add(w)
    assert GADGET_PENDANT not in two_hop
