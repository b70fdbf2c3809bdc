"""Synthetic graph constructions used by tests, demos and the CLI.

The pendant-node gadget exhibits the self-loop gradient pathology: a
degree-1 neighbor reachable only through the classified node contributes to
the classification (its presence bounces the center's own message back and
changes normalization) yet receives an exactly-zero feature gradient in a
two-layer model without self-loops.
"""

import numpy as np

from .graph import Graph, set_self_loops

# Designated node pair of the pendant gadget.
GADGET_CENTER = 0
GADGET_PENDANT = 1


def _undirected(pairs):
    out = []
    for a, b in pairs:
        out.append((a, b))
        out.append((b, a))
    return np.array(out, dtype=np.int64)


def make_pendant_gadget():
    """Bidirectional graph without self-loops containing a pendant neighbor.

    Node GADGET_PENDANT's only connection is to GADGET_CENTER, which also
    has a hub neighbor with a clearly different feature pattern; the pendant
    cannot be reached from the center within two hops by any path avoiding
    the center itself.
    """
    #      1 (pendant)
    #      |
    #      0 -- 2 -- 3
    #           |    |
    #           4 -- 5
    pairs = [(0, 1), (0, 2), (2, 3), (2, 4), (3, 5), (4, 5)]
    features = np.array([
        [1.0, 0.5, 0.0, 0.0],   # center
        [0.0, 0.0, 1.0, 1.0],   # pendant, distinct from the hub
        [0.5, 1.0, 0.0, 0.0],   # hub
        [1.0, 0.0, 0.5, 0.0],
        [0.0, 1.0, 0.0, 0.5],
        [0.3, 0.3, 0.3, 0.3],
    ])
    labels = np.array([0, 1, 1, 0, 1, 0])
    ones = np.ones(6, dtype=bool)
    return Graph(
        features=features,
        edges=_undirected(pairs),
        labels=labels,
        train_mask=ones,
        val_mask=ones,
        test_mask=ones,
        has_self_loops=False,
        num_classes=2,
        name="gadget",
    )


def make_planted_synthetic(seed=0, n_cores=90, n_classes=3, leaves_per_core=2,
                           feature_dim=6, noise=0.45, signal=0.8, echo=0.8,
                           cross_edges_per_core=0, self_loops=False):
    """Homophilous core rings with pendant leaves hanging off every core.

    Core nodes carry a noisy class signal in their first `n_classes`
    feature dimensions and connect only within their class (ring plus one
    chord); the leaves connect only to their core, so in a two-layer model
    without self-loops they are exactly the contributes-but-zero-gradient
    case. Within-class edges are the planted label-carrying structure;
    `cross_edges_per_core` adds that many cross-class noise edges per core
    for experiments that need a signal/noise edge contrast.
    """
    rng = np.random.default_rng([int(seed), 5])
    per_class = n_cores // n_classes
    n_cores = per_class * n_classes
    core_class = np.repeat(np.arange(n_classes), per_class)
    n = n_cores * (1 + leaves_per_core)

    features = rng.normal(0.0, noise, size=(n, feature_dim))
    features[np.arange(n_cores), core_class] += signal
    labels = np.zeros(n, dtype=np.int64)
    labels[:n_cores] = core_class

    pairs = set()
    for cls in range(n_classes):
        members = np.arange(cls * per_class, (cls + 1) * per_class)
        for i, u in enumerate(members):
            for step in (1, 2):
                v = members[(i + step) % per_class]
                if u != v:
                    pairs.add((min(u, v), max(u, v)))
    for u in range(n_cores):
        others = np.flatnonzero(core_class != core_class[u])
        for _ in range(cross_edges_per_core):
            v = int(rng.choice(others))
            pairs.add((min(u, v), max(u, v)))

    leaf = n_cores
    for u in range(n_cores):
        for _ in range(leaves_per_core):
            features[leaf, core_class[u]] += echo
            labels[leaf] = core_class[u]
            pairs.add((u, leaf))
            leaf += 1

    train = np.zeros(n, dtype=bool)
    val = np.zeros(n, dtype=bool)
    test = np.zeros(n, dtype=bool)
    for cls in range(n_classes):
        members = rng.permutation(
            np.arange(cls * per_class, (cls + 1) * per_class))
        n_tr = max(1, int(round(0.4 * per_class)))
        n_va = max(1, int(round(0.1 * per_class)))
        train[members[:n_tr]] = True
        val[members[n_tr:n_tr + n_va]] = True
        test[members[n_tr + n_va:]] = True
    train[n_cores:] = True  # leaves are train-only

    g = Graph(
        features=features,
        edges=_undirected(sorted(pairs)),
        labels=labels,
        train_mask=train,
        val_mask=val,
        test_mask=test,
        has_self_loops=False,
        num_classes=n_classes,
        name="planted",
    )
    if self_loops:
        g = set_self_loops(g, True)
    return g


def make_separable_synthetic(seed=0):
    """Ten nodes, two classes, linearly separable features, homophilous edges."""
    rng = np.random.default_rng([int(seed), 5, 1])
    features = np.empty((10, 4))
    features[:5] = [2.0, 0.0, 0.1, 0.1] + rng.normal(0, 0.05, size=(5, 4))
    features[5:] = [0.0, 2.0, 0.1, 0.1] + rng.normal(0, 0.05, size=(5, 4))
    labels = np.array([0] * 5 + [1] * 5)
    pairs = [(0, 1), (1, 2), (2, 3), (3, 4), (0, 2),
             (5, 6), (6, 7), (7, 8), (8, 9), (5, 7)]
    train = np.array([1, 1, 1, 0, 0, 1, 1, 1, 0, 0], dtype=bool)
    val = np.zeros(10, dtype=bool)
    test = ~train
    g = Graph(
        features=features,
        edges=_undirected(pairs),
        labels=labels,
        train_mask=train,
        val_mask=val,
        test_mask=test,
        has_self_loops=False,
        num_classes=2,
        name="separable",
    )
    return set_self_loops(g, True)


def make_random_graph(rng, n_nodes, n_features=4, n_classes=3,
                      edge_prob=0.3, undirected=True, self_loops=False):
    """Random graph with features in [-1, 1]; used by oracles and stress tests."""
    features = rng.uniform(-1.0, 1.0, size=(n_nodes, n_features))
    pairs = []
    for u in range(n_nodes):
        for v in range(u + 1, n_nodes):
            if rng.random() < edge_prob:
                pairs.append((u, v))
                pairs.append((v, u))
                if not undirected and rng.random() < 0.5:
                    pairs.pop()
    edges = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    labels = rng.integers(0, n_classes, size=n_nodes)
    split = rng.integers(0, 3, size=n_nodes)
    g = Graph(
        features=features,
        edges=edges,
        labels=labels,
        train_mask=split == 0,
        val_mask=split == 1,
        test_mask=split == 2,
        has_self_loops=False,
        num_classes=n_classes,
        name="random",
    )
    if self_loops:
        g = set_self_loops(g, True)
    return g
