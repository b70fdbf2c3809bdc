"""Deletion-based loyalty metrics and their AUC summaries.

For every explained node, its nonzero-importance neighbors are sorted by
importance (descending, or ascending for the inverse variants) and deleted
cumulatively on a percent grid; at each step the node is re-classified on
its own modified receptive-field subgraph. Loyalty is the fraction of nodes
whose predicted class survives; the probability variant averages the
absolute change of the originally-predicted-class probability. Nodes with
no deletable neighbors are excluded from the averages and counted.

The all-neighbors-deleted baselines remove either every nonzero-importance
neighbor or the entire receptive field in one step.
"""

import math
from dataclasses import dataclass

import numpy as np

from .explainers import nonzero_neighbors
from .graph import delete_neighbors, khop_subgraph
from .models import MODEL_DEPTH, forward, prepare_graph

DEFAULT_PERCENTS = tuple(range(0, 101, 10))


class MetricInputError(ValueError):
    pass


@dataclass
class MetricCurve:
    points: list      # [(percent, value)]
    kind: str         # "loyalty" | "loyalty_probabilities"
    direction: str    # "desc" | "asc"
    n_evaluated: int
    n_excluded: int

    def __post_init__(self):
        percents = [p for p, _ in self.points]
        if percents and percents[0] != 0:
            raise MetricInputError("curve must start at percent 0")
        if any(b <= a for a, b in zip(percents, percents[1:])):
            raise MetricInputError("curve percents must be strictly increasing")

    def values(self):
        return [v for _, v in self.points]


@dataclass
class DeletionSchedule:
    """Cumulative victim prefixes of one node's ordered neighbor list."""
    neighbors: tuple
    percents: tuple
    counts: tuple

    def victims(self, percent):
        return set(self.neighbors[:self.counts[self.percents.index(percent)]])


def round_half_up(x):
    return int(math.floor(x + 0.5))


def schedule(neighbors, percents=DEFAULT_PERCENTS):
    """Victim counts per percent: round-half-up of percent * len / 100."""
    percents = tuple(percents)
    if any(not (0 <= p <= 100) for p in percents):
        raise MetricInputError("percents must lie in [0, 100]")
    if any(b <= a for a, b in zip(percents, percents[1:])):
        raise MetricInputError("percents must be increasing")
    m = len(neighbors)
    counts = tuple(round_half_up(p * m / 100.0) for p in percents)
    return DeletionSchedule(neighbors=tuple(neighbors), percents=percents,
                            counts=counts)


def _check_explanations(g, explanations):
    targets = [e.target for e in explanations]
    if len(set(targets)) != len(targets):
        raise MetricInputError("duplicate explanation targets")
    return sorted(explanations, key=lambda e: e.target)


def _node_sweep(model, sg, e, direction, percents):
    """Per-percent (predicted class, probability of original class) for one node.

    Returns None when the node has no nonzero-importance neighbors.
    """
    expected = set(int(v) for v in sg.neighbor_ids)
    if set(e.importance) != expected:
        raise MetricInputError(
            f"explanation for node {e.target} does not match its subgraph")
    order = nonzero_neighbors(e, direction)
    if not order:
        return None
    sched = schedule(order, percents)
    base = forward(model, sg)
    orig_class = base.predicted_class
    orig_prob = float(base.probabilities[orig_class])
    by_count = {}
    out = []
    for percent, count in zip(sched.percents, sched.counts):
        if count not in by_count:
            if count == 0:
                pred = base
            else:
                pred = forward(model, delete_neighbors(sg, set(order[:count])))
            by_count[count] = (pred.predicted_class,
                               float(pred.probabilities[orig_class]))
        out.append(by_count[count])
    return orig_class, orig_prob, out


def _sweep(model, g, explanations, direction, percents):
    g = prepare_graph(model, g)
    explanations = _check_explanations(g, explanations)
    rows = []
    excluded = 0
    for e in explanations:
        sg = khop_subgraph(g, e.target, MODEL_DEPTH)
        res = _node_sweep(model, sg, e, direction, percents)
        if res is None:
            excluded += 1
        else:
            rows.append(res)
    return rows, excluded


def loyalty(model, g, explanations, direction="desc", percents=DEFAULT_PERCENTS):
    """Fraction of nodes whose post-deletion class equals the original one."""
    rows, excluded = _sweep(model, g, explanations, direction, percents)
    points = []
    for idx, percent in enumerate(percents):
        if rows:
            value = float(np.mean([
                1.0 if steps[idx][0] == orig_class else 0.0
                for orig_class, _, steps in rows]))
        else:
            value = 0.0
        points.append((percent, value))
    return MetricCurve(points=points, kind="loyalty", direction=direction,
                       n_evaluated=len(rows), n_excluded=excluded)


def loyalty_probabilities(model, g, explanations, direction="desc",
                          percents=DEFAULT_PERCENTS):
    """Mean |P(original class | modified) - P(original class | original)|."""
    rows, excluded = _sweep(model, g, explanations, direction, percents)
    points = []
    for idx, percent in enumerate(percents):
        if rows:
            value = float(np.mean([
                abs(steps[idx][1] - orig_prob)
                for _, orig_prob, steps in rows]))
        else:
            value = 0.0
        points.append((percent, value))
    return MetricCurve(points=points, kind="loyalty_probabilities",
                       direction=direction, n_evaluated=len(rows),
                       n_excluded=excluded)


def auc(curve):
    """Trapezoidal area under the curve, rescaled to [0, 1] by the percent span."""
    points = curve.points if isinstance(curve, MetricCurve) else list(curve)
    if len(points) < 2:
        raise MetricInputError("AUC needs at least two curve points")
    total = 0.0
    for (p0, v0), (p1, v1) in zip(points, points[1:]):
        total += 0.5 * (v0 + v1) * (p1 - p0)
    return total / (points[-1][0] - points[0][0])


def all_deleted_loyalty(model, g, explanations=None, mode="nonzero", nodes=None):
    """Loyalty after deleting every nonzero-importance (or every) neighbor.

    mode="nonzero" requires explanations and removes each node's whole
    nonzero set; mode="all_neighbors" removes the entire receptive field and
    takes targets from `nodes` (or from the explanations, if given).
    """
    if mode not in ("nonzero", "all_neighbors"):
        raise MetricInputError(f"unknown mode {mode!r}")
    g = prepare_graph(model, g)
    if mode == "nonzero":
        if explanations is None:
            raise MetricInputError("mode='nonzero' needs explanations")
        explanations = _check_explanations(g, explanations)
        targets = [(e.target, e) for e in explanations]
    else:
        if nodes is None and explanations is None:
            raise MetricInputError("mode='all_neighbors' needs nodes or explanations")
        ids = sorted(int(v) for v in nodes) if nodes is not None \
            else sorted(e.target for e in explanations)
        targets = [(v, None) for v in ids]
    kept = []
    for target, e in targets:
        sg = khop_subgraph(g, target, MODEL_DEPTH)
        if e is not None:
            victims = set(nonzero_neighbors(e, "desc"))
        else:
            victims = set(int(v) for v in sg.neighbor_ids)
        if not victims:
            continue
        base = forward(model, sg)
        pred = forward(model, delete_neighbors(sg, victims))
        kept.append(1.0 if pred.predicted_class == base.predicted_class else 0.0)
    return float(np.mean(kept)) if kept else 0.0


# -- CSV output -----------------------------------------------------------------

CURVE_HEADER = ("metric,method,dataset,arch,self_loops,direction,"
                "percent,value,n_evaluated,n_excluded")


def curve_csv_rows(curve, method, dataset, arch, self_loops):
    rows = []
    for percent, value in curve.points:
        rows.append(
            f"{curve.kind},{method},{dataset},{arch},{str(self_loops).lower()},"
            f"{curve.direction},{percent},{repr(float(value))},"
            f"{curve.n_evaluated},{curve.n_excluded}")
    return rows


def write_curves_csv(rows, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(CURVE_HEADER + "\n")
        for row in rows:
            fh.write(row + "\n")


AUC_HEADER = "metric,self_loops,method,dataset,arch,L,I"


def write_auc_summary(entries, path):
    """One row per (metric family, method): descending (L) and ascending (I) AUCs."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(AUC_HEADER + "\n")
        for e in entries:
            fh.write(
                f"{e['metric']},{str(e['self_loops']).lower()},{e['method']},"
                f"{e['dataset']},{e['arch']},{repr(float(e['L']))},"
                f"{repr(float(e['I']))}\n")
