"""Neighbor-importance explainers for two-layer GNN node classifiers.

Every method maps (model, graph, target node) to an Explanation: one score
in [0, 1] per receptive-field neighbor, 1 being the most important. The
gradient family (saliency, smoothgrad, deconvnet, guided) reduces feature
gradients of the predicted-class logit to a per-neighbor mean absolute
value; the two mask trainers (gnnexplainer, pgexplainer) optimize scalar
gates and report the pre-squashing values.

All methods are pure given (model, graph, config, seed) and can run
concurrently over target nodes.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .autodiff import BackpropMode, Tape, backward
from .graph import khop_subgraph
from .models import (
    MODEL_DEPTH, STREAM_MASK, STREAM_PG, STREAM_SMOOTHGRAD,
    TrainingDivergedError, eval_logits, forward, prepare_graph,
    record_forward,
)

METHODS = ("saliency", "smoothgrad", "deconvnet", "guided",
           "gnnexplainer", "pgexplainer")

NONZERO_EPS = 1e-12
ENTROPY_EPS = 1e-15  # keeps log() finite when a gate saturates


@dataclass
class Explanation:
    target: int
    method: str
    predicted_class: int
    importance: dict  # neighbor id -> score in [0, 1]
    raw: dict         # neighbor id -> unnormalized score

    def __post_init__(self):
        if self.target in self.importance:
            raise ValueError("target node must not appear among its neighbors")
        for v in self.importance.values():
            if not (-1e-9 <= v <= 1.0 + 1e-9):
                raise ValueError(f"importance score {v} outside [0, 1]")


@dataclass
class SmoothGradConfig:
    n: int = 50
    sigma: float = None  # resolved to 0.15 * feature range when unset
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("sample count must be >= 1")
        if self.sigma is not None and self.sigma < 0:
            raise ValueError("sigma must be >= 0")


@dataclass
class MaskTrainConfig:
    epochs: int = 100
    learning_rate: float = 0.01
    size_coefficient: float = 0.005
    entropy_coefficient: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class PGExplainerConfig:
    epochs: int = 30
    learning_rate: float = 0.003
    size_coefficient: float = 0.05
    entropy_coefficient: float = 1.0
    hidden_dim: int = 64
    temp_start: float = 5.0
    temp_end: float = 1.0
    seed: int = 0


@dataclass
class PGExplainerModel:
    """Edge-scoring MLP over concatenated final-layer embeddings."""
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    embedding_dim: int
    config: PGExplainerConfig = field(default_factory=PGExplainerConfig)

    def __post_init__(self):
        if self.w1.shape[0] != 3 * self.embedding_dim:
            raise ValueError("MLP input width must be 3 x embedding dim")

    def edge_weights(self, z_src, z_dst, z_target):
        """Raw MLP outputs for edges given source/dest/target embeddings."""
        x = np.hstack([z_src, z_dst, z_target])
        h = np.maximum(x @ self.w1 + self.b1, 0.0)
        return (h @ self.w2 + self.b2)[:, 0]


def target_subgraph(model, g, k):
    """Receptive field of node k under the model's self-loop condition."""
    return khop_subgraph(prepare_graph(model, g), k, MODEL_DEPTH)


def _center_prediction(model, sg):
    return forward(model, sg)


def _scale_by_max(raw):
    top = max(abs(v) for v in raw.values()) if raw else 0.0
    if top <= 0.0:
        return {i: 0.0 for i in raw}
    return {i: v / top for i, v in raw.items()}


def _grad_matrix(model, sg, class_id, mode, features_override=None):
    """Gradient of the class logit w.r.t. every subgraph feature row."""
    tape = Tape()
    feats = sg.features if features_override is None else features_override
    x_ref = tape.leaf(feats)
    rec = record_forward(model, sg, tape=tape, x_ref=x_ref)
    scalar = tape.pick(rec.logits_ref, sg.center_pos, class_id)
    grads = backward(tape, scalar, mode)
    return grads[x_ref]


def _neighbor_mean_abs(sg, grad):
    out = {}
    for pos, node in enumerate(sg.nodes):
        if pos == sg.center_pos:
            continue
        out[int(node)] = float(np.mean(np.abs(grad[pos])))
    return out


def _gradient_explanation(model, g, k, mode, method):
    sg = target_subgraph(model, g, k)
    pred = _center_prediction(model, sg)
    grad = _grad_matrix(model, sg, pred.predicted_class, mode)
    raw = _neighbor_mean_abs(sg, grad)
    return Explanation(target=int(k), method=method,
                       predicted_class=pred.predicted_class,
                       importance=_scale_by_max(raw), raw=raw)


def saliency(model, g, k):
    """Mean absolute gradient of the predicted-class logit per neighbor."""
    return _gradient_explanation(model, g, k, BackpropMode.STANDARD, "saliency")


def deconvnet_explain(model, g, k):
    """Saliency with the deconvnet ReLU backward rule."""
    return _gradient_explanation(model, g, k, BackpropMode.DECONVNET, "deconvnet")


def guided_explain(model, g, k):
    """Saliency with the guided-backpropagation ReLU backward rule."""
    return _gradient_explanation(model, g, k, BackpropMode.GUIDED, "guided")


def resolve_sigma(cfg, g):
    if cfg.sigma is not None:
        return float(cfg.sigma)
    spread = float(g.features.max() - g.features.min()) if g.n_nodes else 0.0
    return 0.15 * spread


def smoothgrad(model, g, k, cfg=None):
    """Noise-averaged signed gradients, absolute value taken after the mean.

    sigma = 0 short-circuits to the noiseless gradient so the zero-noise
    output is bitwise equal to saliency.
    """
    cfg = cfg or SmoothGradConfig()
    sigma = resolve_sigma(cfg, g)
    sg = target_subgraph(model, g, k)
    pred = _center_prediction(model, sg)
    if sigma == 0.0:
        grad = _grad_matrix(model, sg, pred.predicted_class, BackpropMode.STANDARD)
    else:
        rng = np.random.default_rng([int(cfg.seed), STREAM_SMOOTHGRAD, int(k)])
        total = np.zeros_like(sg.features)
        for _ in range(cfg.n):
            noisy = sg.features + rng.normal(0.0, sigma, size=sg.features.shape)
            total += _grad_matrix(model, sg, pred.predicted_class,
                                  BackpropMode.STANDARD, features_override=noisy)
        grad = total / cfg.n
    raw = _neighbor_mean_abs(sg, grad)
    return Explanation(target=int(k), method="smoothgrad",
                       predicted_class=pred.predicted_class,
                       importance=_scale_by_max(raw), raw=raw)


# -- GNNExplainer-style node mask ------------------------------------------------


def _mask_loss_and_grad(model, sg, class_id, mask, cfg):
    """Cross-entropy toward the original class plus size/entropy penalties.

    Returns (total_loss, d total/d mask, d CE/d mask); the CE gradient comes
    from the tape, the regularizer gradients are analytic.
    """
    n = len(mask)
    tape = Tape()
    m_ref = tape.leaf(mask)
    sig_ref = tape.sigmoid(m_ref)
    x_ref = tape.mul(tape.constant(sg.features), sig_ref)
    rec = record_forward(model, sg, tape=tape, x_ref=x_ref)
    probs = tape.softmax(rec.logits_ref)
    logp = tape.log(probs)
    ce_ref = tape.scale(tape.pick(logp, sg.center_pos, class_id), -1.0)
    ce = float(tape.value(ce_ref))
    ce_grad = backward(tape, ce_ref)[m_ref]

    s = 1.0 / (1.0 + np.exp(-mask))
    size = cfg.size_coefficient * float(np.mean(s))
    ent = -(s * np.log(s + ENTROPY_EPS) + (1 - s) * np.log(1 - s + ENTROPY_EPS))
    entropy = cfg.entropy_coefficient * float(np.mean(ent))
    reg_grad = (cfg.size_coefficient / n) * s * (1 - s) \
        + (cfg.entropy_coefficient / n) * np.log(
            (1 - s + ENTROPY_EPS) / (s + ENTROPY_EPS)) * s * (1 - s)
    total = ce + size + entropy
    if not np.isfinite(total):
        raise TrainingDivergedError("non-finite mask-training loss")
    return total, ce_grad + reg_grad, ce_grad


def gnnexplainer(model, g, k, cfg=None):
    """Per-node feature-gate mask trained to preserve the original prediction.

    Gradient descent with the step size halved whenever a step would
    increase the loss, so the recorded loss sequence never increases. The
    reported raw importances are the trained pre-sigmoid mask values, except
    that entries whose prediction-loss gradient stayed exactly zero through
    training (nodes the model never saw through any feature path) report 0.
    """
    cfg = cfg or MaskTrainConfig()
    sg = target_subgraph(model, g, k)
    pred = _center_prediction(model, sg)
    rng = np.random.default_rng([int(cfg.seed), STREAM_MASK, int(k)])
    init = rng.normal(0.0, 0.1, size=(sg.n_nodes, 1))
    mask = init.copy()

    losses = []
    lr = cfg.learning_rate
    ce_touched = np.zeros(sg.n_nodes, dtype=bool)
    if cfg.epochs > 0:
        loss, grad, ce_grad = _mask_loss_and_grad(model, sg, pred.predicted_class,
                                                  mask, cfg)
        ce_touched |= ce_grad[:, 0] != 0.0
        losses.append(loss)
        for _ in range(cfg.epochs):
            candidate = mask - lr * grad
            cand_loss, cand_grad, ce_grad = _mask_loss_and_grad(
                model, sg, pred.predicted_class, candidate, cfg)
            ce_touched |= ce_grad[:, 0] != 0.0
            if cand_loss <= loss:
                mask, loss, grad = candidate, cand_loss, cand_grad
            else:
                lr *= 0.5
            losses.append(loss)

    raw = {}
    for pos, node in enumerate(sg.nodes):
        if pos == sg.center_pos:
            continue
        value = float(mask[pos, 0]) if (ce_touched[pos] or cfg.epochs == 0) else 0.0
        raw[int(node)] = value
    importance = _min_max_scores(raw, init_values={
        int(node): float(init[pos, 0])
        for pos, node in enumerate(sg.nodes) if pos != sg.center_pos})
    e = Explanation(target=int(k), method="gnnexplainer",
                    predicted_class=pred.predicted_class,
                    importance=importance, raw=raw)
    e.loss_history = losses
    return e


def _min_max_scores(raw, init_values=None):
    """Order-preserving min-max map to [0, 1].

    All-exact-zero raw maps stay all-zero. Degenerate (constant) maps score
    1.0 when the value exceeds its initialization (or is nonzero, when no
    initialization applies), else 0.5.
    """
    if not raw:
        return {}
    values = np.array(list(raw.values()))
    if np.all(values == 0.0):
        return {i: 0.0 for i in raw}
    lo, hi = float(values.min()), float(values.max())
    if hi > lo:
        return {i: (v - lo) / (hi - lo) for i, v in raw.items()}
    if init_values is None:
        return {i: 1.0 for i in raw}
    return {i: (1.0 if v > init_values[i] else 0.5) for i, v in raw.items()}


# -- PGExplainer ---------------------------------------------------------------


def _glorot(rng, shape):
    limit = np.sqrt(6.0 / (shape[0] + shape[-1]))
    return rng.uniform(-limit, limit, size=shape)


def _pg_inputs(sg, z, k):
    """Constant MLP input rows [z_src; z_dst; z_target] for subgraph edges."""
    src_ids = sg.nodes[sg.edge_src]
    dst_ids = sg.nodes[sg.edge_dst]
    z_t = np.repeat(z[int(k)][None, :], len(src_ids), axis=0)
    return np.hstack([z[src_ids], z[dst_ids], z_t])


def pgexplainer_train(model, g, nodes, cfg=None):
    """Train the shared edge-MLP with concrete-relaxation edge sampling.

    Inductive: explaining any node afterwards needs no further optimization.
    Deterministic given cfg.seed.
    """
    cfg = cfg or PGExplainerConfig()
    nodes = sorted(int(v) for v in nodes)
    if not nodes:
        raise ValueError("pgexplainer_train needs a non-empty node set")
    g = prepare_graph(model, g)
    z = eval_logits(model, g)
    emb_dim = z.shape[1]

    rng = np.random.default_rng([int(cfg.seed), STREAM_PG])
    params = {
        "w1": _glorot(rng, (3 * emb_dim, cfg.hidden_dim)),
        "b1": np.zeros(cfg.hidden_dim),
        "w2": _glorot(rng, (cfg.hidden_dim, 1)),
        "b2": np.zeros(1),
    }
    cases = []
    for v in nodes:
        sg = khop_subgraph(g, v, MODEL_DEPTH)
        if len(sg.edge_src) == 0:
            continue
        cases.append((sg, _pg_inputs(sg, z, v), int(np.argmax(z[v]))))
    if not cases:
        raise ValueError("no training node has edges in its receptive field")

    adam_m = {n: np.zeros_like(p) for n, p in params.items()}
    adam_v = {n: np.zeros_like(p) for n, p in params.items()}
    beta1, beta2, adam_eps = 0.9, 0.999, 1e-8
    for step in range(1, cfg.epochs + 1):
        if cfg.epochs == 1:
            temp = cfg.temp_start
        else:
            temp = cfg.temp_start * (cfg.temp_end / cfg.temp_start) ** (
                (step - 1) / (cfg.epochs - 1))
        grads_total = {n: np.zeros_like(p) for n, p in params.items()}
        for sg, mlp_in, class_id in cases:
            n_edges = mlp_in.shape[0]
            u = rng.uniform(1e-6, 1.0 - 1e-6, size=(n_edges, 1))
            gumbel = np.log(u) - np.log(1.0 - u)
            tape = Tape()
            refs = {n: tape.leaf(p) for n, p in params.items()}
            hid = tape.relu(tape.add(tape.matmul(tape.constant(mlp_in),
                                                 refs["w1"]), refs["b1"]))
            w = tape.add(tape.matmul(hid, refs["w2"]), refs["b2"])
            gate = tape.sigmoid(tape.scale(tape.add(w, tape.constant(gumbel)),
                                           1.0 / temp))
            rec = record_forward(model, sg, tape=tape, edge_gate_ref=gate)
            probs = tape.softmax(rec.logits_ref)
            logp = tape.log(probs)
            ce = tape.scale(tape.pick(logp, sg.center_pos, class_id), -1.0)
            size = tape.scale(tape.sum(gate), cfg.size_coefficient / n_edges)
            eps_ref = tape.constant(np.full((n_edges, 1), ENTROPY_EPS))
            one_minus = tape.sub(tape.constant(np.ones((n_edges, 1))), gate)
            ent_sum = tape.add(
                tape.mul(gate, tape.log(tape.add(gate, eps_ref))),
                tape.mul(one_minus, tape.log(tape.add(one_minus, eps_ref))))
            ent = tape.scale(tape.sum(ent_sum),
                             -cfg.entropy_coefficient / n_edges)
            loss_ref = tape.add(tape.add(ce, size), ent)
            loss = float(tape.value(loss_ref))
            if not np.isfinite(loss):
                raise TrainingDivergedError("non-finite PGExplainer loss")
            grads = backward(tape, loss_ref)
            for name, ref in refs.items():
                grads_total[name] += grads[ref]
        for name in params:
            grad = grads_total[name] / len(cases)
            adam_m[name] = beta1 * adam_m[name] + (1 - beta1) * grad
            adam_v[name] = beta2 * adam_v[name] + (1 - beta2) * grad * grad
            m_hat = adam_m[name] / (1 - beta1 ** step)
            v_hat = adam_v[name] / (1 - beta2 ** step)
            params[name] = params[name] - cfg.learning_rate * m_hat / (
                np.sqrt(v_hat) + adam_eps)
    return PGExplainerModel(w1=params["w1"], b1=params["b1"],
                            w2=params["w2"], b2=params["b2"],
                            embedding_dim=emb_dim, config=cfg)


def pgexplainer_explain(pgm, model, g, k):
    """Edge weights from the trained MLP, reassigned to the edge source.

    A neighbor's raw score is the maximum weight over its outgoing edges
    inside the target's computational subgraph; scores are min-max scaled.
    """
    g = prepare_graph(model, g)
    z = eval_logits(model, g)
    if z.shape[1] != pgm.embedding_dim:
        raise ValueError(
            f"model embedding dim {z.shape[1]} != explainer's {pgm.embedding_dim}")
    sg = khop_subgraph(g, k, MODEL_DEPTH)
    pred = _center_prediction(model, sg)
    raw = {int(node): 0.0 for pos, node in enumerate(sg.nodes)
           if pos != sg.center_pos}
    if len(sg.edge_src):
        src_ids = sg.nodes[sg.edge_src]
        weights = pgm.edge_weights(z[src_ids], z[sg.nodes[sg.edge_dst]],
                                   np.repeat(z[int(k)][None, :],
                                             len(src_ids), axis=0))
        best = {}
        for sid, w in zip(src_ids, weights):
            sid = int(sid)
            if sid == int(k):
                continue
            if sid not in best or w > best[sid]:
                best[sid] = float(w)
        raw.update(best)
    return Explanation(target=int(k), method="pgexplainer",
                       predicted_class=pred.predicted_class,
                       importance=_min_max_scores(raw), raw=raw)


# -- shared post-processing ------------------------------------------------------


def nonzero_neighbors(e, direction="desc"):
    """Neighbors with |raw| > 1e-12, ordered by score; ids break ties ascending."""
    if direction not in ("desc", "asc"):
        raise ValueError(f"direction must be 'desc' or 'asc', got {direction!r}")
    kept = [i for i in e.importance if abs(e.raw[i]) > NONZERO_EPS]
    sign = -1.0 if direction == "desc" else 1.0
    return sorted(kept, key=lambda i: (sign * e.importance[i], i))


def explain(method, model, g, k, smoothgrad_cfg=None, mask_cfg=None, pg_model=None):
    """Dispatch one explanation by method name."""
    if method == "saliency":
        return saliency(model, g, k)
    if method == "smoothgrad":
        return smoothgrad(model, g, k, smoothgrad_cfg)
    if method == "deconvnet":
        return deconvnet_explain(model, g, k)
    if method == "guided":
        return guided_explain(model, g, k)
    if method == "gnnexplainer":
        return gnnexplainer(model, g, k, mask_cfg)
    if method == "pgexplainer":
        if pg_model is None:
            raise ValueError("pgexplainer needs a trained PGExplainerModel")
        return pgexplainer_explain(pg_model, model, g, k)
    raise ValueError(f"unknown method {method!r}")


# -- serialization ---------------------------------------------------------------


def explanation_to_json(e):
    return json.dumps({
        "target": e.target,
        "method": e.method,
        "predicted_class": e.predicted_class,
        "importance": {str(i): float(e.importance[i]) for i in sorted(e.importance)},
        "raw": {str(i): float(e.raw[i]) for i in sorted(e.raw)},
    })


def explanation_from_json(line):
    d = json.loads(line)
    return Explanation(
        target=int(d["target"]),
        method=d["method"],
        predicted_class=int(d["predicted_class"]),
        importance={int(i): float(v) for i, v in d["importance"].items()},
        raw={int(i): float(v) for i, v in d["raw"].items()},
    )


def write_explanations(explanations, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for e in explanations:
            fh.write(explanation_to_json(e) + "\n")


def read_explanations(path):
    with open(path, "r", encoding="utf-8") as fh:
        return [explanation_from_json(line) for line in fh if line.strip()]


def save_pg_model(pgm, path):
    payload = {
        "format": "neighbor-xai-pgexplainer",
        "embedding_dim": pgm.embedding_dim,
        "params": {
            name: {"shape": list(arr.shape), "data": [float(x) for x in arr.ravel()]}
            for name, arr in (("w1", pgm.w1), ("b1", pgm.b1),
                              ("w2", pgm.w2), ("b2", pgm.b2))
        },
    }
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(json.dumps(payload, sort_keys=True) + "\n")


def load_pg_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != "neighbor-xai-pgexplainer":
        raise ValueError("not a pgexplainer model file")
    arrs = {name: np.array(entry["data"]).reshape(entry["shape"])
            for name, entry in payload["params"].items()}
    return PGExplainerModel(w1=arrs["w1"], b1=arrs["b1"], w2=arrs["w2"],
                            b2=arrs["b2"],
                            embedding_dim=int(payload["embedding_dim"]))
