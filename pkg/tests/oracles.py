"""Independent brute-force oracles shared by the metric and acceptance tests.

Everything here is written from scratch against the raw graph data: dense
adjacency forward passes, whole-graph victim deletion, its own sorting and
rounding. It must never import the package's metric or subgraph machinery.
"""

import math

import numpy as np

from neighbor_xai.explainers import Explanation
from neighbor_xai.graph import khop_subgraph


def oracle_logits(model, feats, edges, n):
    """Dense-matrix two-layer forward pass, independent of the package."""
    p = model.params
    deg = np.zeros(n)
    for _, t in edges:
        deg[t] += 1.0
    inv = np.array([1.0 / math.sqrt(d) if d > 0 else 0.0 for d in deg])
    if model.config.arch == "gcn":
        a = np.zeros((n, n))
        for s, t in edges:
            a[t, s] = inv[t] * inv[s]
        h = np.maximum(a @ (feats @ p["w1"]) + p["b1"], 0.0)
        return a @ (h @ p["w2"]) + p["b2"]

    def gat_layer(x, w_src, w_dst, att, heads, width):
        outs = []
        for hd in range(heads):
            ws = w_src[:, hd * width:(hd + 1) * width]
            wd = w_dst[:, hd * width:(hd + 1) * width]
            a_vec = att[:, hd]
            xs, xd = x @ ws, x @ wd
            incoming = {v: [] for v in range(n)}
            for s, t in edges:
                score = xs[s] + xd[t]
                score = np.where(score > 0, score, 0.2 * score)
                incoming[t].append((s, float(score @ a_vec)))
            out = np.zeros((n, width))
            for t, items in incoming.items():
                if not items:
                    continue
                logits = np.array([e for _, e in items])
                ex = np.exp(logits - logits.max())
                alphas = ex / ex.sum()
                for (s, _), al in zip(items, alphas):
                    out[t] += al * xs[s]
            outs.append(out)
        return outs

    cfg = model.config
    l1 = gat_layer(feats, p["w_src1"], p["w_dst1"], p["att1"],
                   cfg.heads, cfg.hidden_dim)
    h = np.maximum(np.hstack(l1) + p["b1"], 0.0)
    l2 = gat_layer(h, p["w_src2"], p["w_dst2"], p["att2"],
                   cfg.heads, model.n_classes)
    return sum(l2) / cfg.heads + p["b2"]


def oracle_softmax(v):
    e = np.exp(v - v.max())
    return e / e.sum()


def oracle_metric_curves(model, g, explanations, direction, percents):
    """Brute force: delete victims from the whole graph, re-run from scratch."""
    loyal = {pc: [] for pc in percents}
    prob = {pc: [] for pc in percents}
    excluded = 0
    edges_full = [tuple(map(int, e)) for e in g.edges]
    for e in sorted(explanations, key=lambda x: x.target):
        order = [i for i in e.raw if abs(e.raw[i]) > 1e-12]
        order.sort(key=lambda i: (-e.importance[i], i) if direction == "desc"
                   else (e.importance[i], i))
        if not order:
            excluded += 1
            continue
        logits0 = oracle_logits(model, g.features, edges_full, g.n_nodes)
        orig_class = int(np.argmax(logits0[e.target]))
        orig_prob = oracle_softmax(logits0[e.target])[orig_class]
        for pc in percents:
            count = math.floor(pc * len(order) / 100.0 + 0.5)
            victims = set(order[:count])
            kept = [ed for ed in edges_full
                    if ed[0] not in victims and ed[1] not in victims]
            logits = oracle_logits(model, g.features, kept, g.n_nodes)
            cls = int(np.argmax(logits[e.target]))
            pr = oracle_softmax(logits[e.target])[orig_class]
            loyal[pc].append(1.0 if cls == orig_class else 0.0)
            prob[pc].append(abs(pr - orig_prob))
    n_eval = len(explanations) - excluded
    lo = [(pc, float(np.mean(loyal[pc])) if n_eval else 0.0) for pc in percents]
    pr = [(pc, float(np.mean(prob[pc])) if n_eval else 0.0) for pc in percents]
    return lo, pr, n_eval, excluded


def oracle_all_deleted(model, g, victim_sets):
    """Single-step loyalty after whole-graph deletion of each victim set."""
    edges_full = [tuple(map(int, e)) for e in g.edges]
    kept_scores = []
    for target, victims in victim_sets:
        if not victims:
            continue
        logits0 = oracle_logits(model, g.features, edges_full, g.n_nodes)
        orig = int(np.argmax(logits0[target]))
        kept = [ed for ed in edges_full
                if ed[0] not in victims and ed[1] not in victims]
        logits = oracle_logits(model, g.features, kept, g.n_nodes)
        kept_scores.append(1.0 if int(np.argmax(logits[target])) == orig else 0.0)
    return float(np.mean(kept_scores)) if kept_scores else 0.0


def random_explanations(rng, g, zero_prob=0.3):
    out = []
    for k in range(g.n_nodes):
        sg = khop_subgraph(g, k, 2)
        raw = {}
        for v in map(int, sg.neighbor_ids):
            raw[v] = 0.0 if rng.random() < zero_prob else float(rng.uniform(0.01, 1))
        out.append(Explanation(target=k, method="random", predicted_class=0,
                               importance=dict(raw), raw=raw))
    return out
