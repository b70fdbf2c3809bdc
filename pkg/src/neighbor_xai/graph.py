"""Graph representation, interchange IO, receptive-field subgraphs, deletion.

A Graph is immutable after construction; every operation here returns a new
object, so metric sweeps can fan out over target nodes concurrently.

Subgraphs carry the full induced edge set among the receptive-field nodes
plus each node's degree in the parent graph. Deleting neighbors removes
their incident edges and decrements the cached degrees, which keeps a
two-layer forward pass on the subgraph exactly equal to a forward pass on
the whole graph with the same nodes deleted (boundary nodes keep the degree
they had in the full graph, which is what their normalization coefficients
use there).
"""

import json
import os
from collections import deque

import numpy as np


class GraphFormatError(ValueError):
    """Interchange data violates the format contract."""


class MissingFileError(GraphFormatError):
    """A required interchange file or directory does not exist."""


class DimensionMismatchError(GraphFormatError):
    """Declared and actual dimensions disagree."""


class IdRangeError(GraphFormatError):
    """A node id falls outside [0, nodes)."""


class NonFiniteFeatureError(GraphFormatError):
    """Feature matrix contains NaN or infinite entries."""


class SubgraphError(ValueError):
    """Invalid subgraph operation (bad center, victim not present, ...)."""


def _canonical_edges(edges):
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if len(edges):
        order = np.lexsort((edges[:, 1], edges[:, 0]))
        edges = edges[order]
    return edges


class Graph:
    """Node features, directed edges, labels and split masks.

    Undirected datasets store both edge directions explicitly. The
    has_self_loops flag promises that (v, v) exists for every v.
    """

    def __init__(self, features, edges, labels, train_mask, val_mask,
                 test_mask, has_self_loops, num_classes=None, name=""):
        self.features = np.ascontiguousarray(features, dtype=np.float64)
        if self.features.ndim != 2:
            raise DimensionMismatchError("features must be a 2-d matrix")
        if not np.isfinite(self.features).all():
            raise NonFiniteFeatureError("features contain NaN or inf")
        n = self.features.shape[0]
        self.edges = _canonical_edges(edges)
        if len(self.edges):
            if self.edges.min() < 0 or self.edges.max() >= n:
                raise IdRangeError(
                    f"edge endpoint outside [0, {n})"
                )
            if len(np.unique(self.edges, axis=0)) != len(self.edges):
                raise GraphFormatError("duplicate directed edge")
        self.labels = np.asarray(labels, dtype=np.int64)
        if self.labels.shape != (n,):
            raise DimensionMismatchError("labels must have one entry per node")
        self.train_mask = np.asarray(train_mask, dtype=bool)
        self.val_mask = np.asarray(val_mask, dtype=bool)
        self.test_mask = np.asarray(test_mask, dtype=bool)
        for m in (self.train_mask, self.val_mask, self.test_mask):
            if m.shape != (n,):
                raise DimensionMismatchError("split mask must have one flag per node")
        self.has_self_loops = bool(has_self_loops)
        if self.has_self_loops:
            loops = self.edges[:, 0] == self.edges[:, 1]
            if np.count_nonzero(loops) != n:
                raise GraphFormatError(
                    "has_self_loops set but some (v, v) edge is missing"
                )
        if num_classes is None:
            num_classes = int(self.labels.max()) + 1 if n else 0
        self.num_classes = int(num_classes)
        if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise IdRangeError("label outside [0, num_classes)")
        self.name = name
        self._in_adj = None

    @property
    def n_nodes(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    @property
    def edge_src(self):
        return self.edges[:, 0]

    @property
    def edge_dst(self):
        return self.edges[:, 1]

    @property
    def norm_degrees(self):
        return np.bincount(self.edge_dst, minlength=self.n_nodes).astype(np.float64)

    def in_adjacency(self):
        """Per-node array of message sources (edge sources grouped by target)."""
        if self._in_adj is None:
            order = np.argsort(self.edge_dst, kind="stable")
            src = self.edge_src[order]
            dst = self.edge_dst[order]
            bounds = np.searchsorted(dst, np.arange(self.n_nodes + 1))
            self._in_adj = [src[bounds[i]:bounds[i + 1]] for i in range(self.n_nodes)]
        return self._in_adj


def set_self_loops(g, enabled):
    """Return a copy of g with (v, v) edges present for every v, or for none.

    Idempotent for both flag values; all other edges are unchanged.
    """
    edges = g.edges[g.edges[:, 0] != g.edges[:, 1]]
    if enabled:
        loops = np.stack([np.arange(g.n_nodes)] * 2, axis=1)
        edges = np.concatenate([edges, loops]) if len(edges) else loops
    return Graph(g.features, edges, g.labels, g.train_mask, g.val_mask,
                 g.test_mask, enabled, num_classes=g.num_classes, name=g.name)


class Subgraph:
    """Receptive field of one center node, ready for model evaluation.

    nodes / neighbor_ids hold original graph ids (ascending); edge_src and
    edge_dst are local row indices into `features`. `degrees` is each node's
    degree in the graph the subgraph was extracted from, minus any edges
    removed by delete_neighbors since.
    """

    def __init__(self, center, nodes, features, edge_src, edge_dst,
                 degrees, has_self_loops, num_classes):
        self.center = int(center)
        self.nodes = np.asarray(nodes, dtype=np.int64)
        self.features = features
        self.edge_src = np.asarray(edge_src, dtype=np.int64)
        self.edge_dst = np.asarray(edge_dst, dtype=np.int64)
        self.degrees = np.asarray(degrees, dtype=np.float64)
        self.has_self_loops = bool(has_self_loops)
        self.num_classes = int(num_classes)
        self.center_pos = int(np.searchsorted(self.nodes, self.center))

    @property
    def neighbor_ids(self):
        return self.nodes[self.nodes != self.center]

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def norm_degrees(self):
        return self.degrees

    def local_index(self, original_id):
        pos = int(np.searchsorted(self.nodes, original_id))
        if pos >= len(self.nodes) or self.nodes[pos] != original_id:
            raise SubgraphError(f"node {original_id} not in subgraph")
        return pos

    def edge_list_original(self):
        return np.stack([self.nodes[self.edge_src], self.nodes[self.edge_dst]], axis=1)


def khop_subgraph(g, center, hops):
    """Nodes with a directed path to `center` of length <= hops, plus center.

    Edges are every graph edge with both endpoints in that node set; each
    node also carries its full-graph degree so that model evaluation on the
    subgraph reproduces whole-graph evaluation at the center exactly.
    """
    if not (0 <= center < g.n_nodes):
        raise SubgraphError(f"center {center} outside [0, {g.n_nodes})")
    if hops < 1:
        raise SubgraphError("hop count must be >= 1")
    in_adj = g.in_adjacency()
    seen = {int(center)}
    frontier = deque([(int(center), 0)])
    while frontier:
        v, d = frontier.popleft()
        if d == hops:
            continue
        for u in in_adj[v]:
            u = int(u)
            if u not in seen:
                seen.add(u)
                frontier.append((u, d + 1))
    nodes = np.array(sorted(seen), dtype=np.int64)

    def locate(ids):
        pos = np.minimum(np.searchsorted(nodes, ids), len(nodes) - 1)
        return pos, nodes[pos] == ids

    src_pos, src_ok = locate(g.edge_src)
    dst_pos, dst_ok = locate(g.edge_dst)
    keep = src_ok & dst_ok
    src = src_pos[keep]
    dst = dst_pos[keep]
    return Subgraph(
        center=center,
        nodes=nodes,
        features=np.ascontiguousarray(g.features[nodes]),
        edge_src=src,
        edge_dst=dst,
        degrees=g.norm_degrees[nodes],
        has_self_loops=g.has_self_loops,
        num_classes=g.num_classes,
    )


def delete_neighbors(sg, victims):
    """Remove the victim neighbors and all their incident edges.

    The center (and its self-loop, if present) is never removed. Nodes cut
    off from the center by earlier deletions stay until deleted themselves.
    """
    victims = {int(v) for v in victims}
    if not victims:
        return sg
    neighbor_set = set(int(v) for v in sg.neighbor_ids)
    bad = victims - neighbor_set
    if bad:
        raise SubgraphError(f"victims not in subgraph: {sorted(bad)}")
    victim_pos = np.array(sorted(sg.local_index(v) for v in victims), dtype=np.int64)
    keep_nodes = np.ones(sg.n_nodes, dtype=bool)
    keep_nodes[victim_pos] = False

    edge_gone = ~keep_nodes[sg.edge_src] | ~keep_nodes[sg.edge_dst]
    removed_dst = sg.edge_dst[edge_gone]
    degrees = sg.degrees - np.bincount(removed_dst, minlength=sg.n_nodes)

    remap = np.cumsum(keep_nodes) - 1
    keep_edges = ~edge_gone
    return Subgraph(
        center=sg.center,
        nodes=sg.nodes[keep_nodes],
        features=np.ascontiguousarray(sg.features[keep_nodes]),
        edge_src=remap[sg.edge_src[keep_edges]],
        edge_dst=remap[sg.edge_dst[keep_edges]],
        degrees=degrees[keep_nodes],
        has_self_loops=sg.has_self_loops,
        num_classes=sg.num_classes,
    )


# -- interchange format -------------------------------------------------------
#
# Directory layout: meta.json, features.csv, edges.csv, labels.csv, masks.csv.
# All ids 0-based decimal; UTF-8 with LF line endings. save_graph output is
# canonical: loading and re-saving reproduces the bytes exactly.

_SPLITS = ("train", "val", "test")


def _read_lines(path):
    if not os.path.isfile(path):
        raise MissingFileError(f"missing interchange file: {path}")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return [ln for ln in fh.read().split("\n") if ln != ""]


def load_graph(path):
    """Load a Graph from an interchange directory, validating all invariants."""
    if not os.path.isdir(path):
        raise MissingFileError(f"missing dataset directory: {path}")
    meta_path = os.path.join(path, "meta.json")
    if not os.path.isfile(meta_path):
        raise MissingFileError(f"missing interchange file: {meta_path}")
    with open(meta_path, "r", encoding="utf-8") as fh:
        try:
            meta = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GraphFormatError(f"meta.json is not valid JSON: {exc}") from exc
    for key in ("nodes", "features", "classes", "has_self_loops"):
        if key not in meta:
            raise GraphFormatError(f"meta.json missing key {key!r}")
    n, f = int(meta["nodes"]), int(meta["features"])

    rows = _read_lines(os.path.join(path, "features.csv"))
    if len(rows) != n:
        raise DimensionMismatchError(
            f"features.csv has {len(rows)} rows, meta declares {n} nodes")
    features = np.empty((n, f), dtype=np.float64)
    for i, row in enumerate(rows):
        parts = row.split(",")
        if len(parts) != f:
            raise DimensionMismatchError(
                f"features.csv row {i} has {len(parts)} values, expected {f}")
        features[i] = [float(p) for p in parts]

    edge_rows = _read_lines(os.path.join(path, "edges.csv"))
    edges = np.array(
        [[int(p) for p in row.split(",")] for row in edge_rows], dtype=np.int64
    ).reshape(-1, 2)

    labels = np.zeros(n, dtype=np.int64)
    label_rows = _read_lines(os.path.join(path, "labels.csv"))
    if len(label_rows) != n:
        raise DimensionMismatchError(
            f"labels.csv has {len(label_rows)} rows, expected {n}")
    for row in label_rows:
        node_s, cls_s = row.split(",")
        node = int(node_s)
        if not (0 <= node < n):
            raise IdRangeError(f"labels.csv references node {node}")
        labels[node] = int(cls_s)

    masks = {s: np.zeros(n, dtype=bool) for s in _SPLITS}
    for row in _read_lines(os.path.join(path, "masks.csv")):
        node_s, split = row.split(",")
        node = int(node_s)
        if not (0 <= node < n):
            raise IdRangeError(f"masks.csv references node {node}")
        if split not in masks:
            raise GraphFormatError(f"unknown split {split!r} in masks.csv")
        masks[split][node] = True

    return Graph(
        features=features,
        edges=edges,
        labels=labels,
        train_mask=masks["train"],
        val_mask=masks["val"],
        test_mask=masks["test"],
        has_self_loops=bool(meta["has_self_loops"]),
        num_classes=int(meta["classes"]),
        name=str(meta.get("name", "")),
    )


def save_graph(g, path):
    """Write g to `path` in canonical interchange form."""
    os.makedirs(path, exist_ok=True)
    meta = {
        "classes": g.num_classes,
        "features": g.n_features,
        "has_self_loops": g.has_self_loops,
        "name": g.name,
        "nodes": g.n_nodes,
    }
    with open(os.path.join(path, "meta.json"), "w", encoding="utf-8", newline="") as fh:
        fh.write(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    with open(os.path.join(path, "features.csv"), "w", encoding="utf-8", newline="") as fh:
        for row in g.features:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    with open(os.path.join(path, "edges.csv"), "w", encoding="utf-8", newline="") as fh:
        for s, t in g.edges:
            fh.write(f"{s},{t}\n")
    with open(os.path.join(path, "labels.csv"), "w", encoding="utf-8", newline="") as fh:
        for node, cls in enumerate(g.labels):
            fh.write(f"{node},{cls}\n")
    with open(os.path.join(path, "masks.csv"), "w", encoding="utf-8", newline="") as fh:
        for node in range(g.n_nodes):
            for split, mask in zip(_SPLITS, (g.train_mask, g.val_mask, g.test_mask)):
                if mask[node]:
                    fh.write(f"{node},{split}\n")
