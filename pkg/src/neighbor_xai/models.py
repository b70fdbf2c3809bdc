"""Two-layer GCN and GATv2 node classifiers.

Both architectures follow the same scheme: message-passing layer, ReLU,
dropout (training only), message-passing layer. The forward pass is always
recorded through the autodiff tape so that the exact computation used for
predictions is also the one the explainers differentiate; evaluation mode
simply never applies dropout and discards the tape unless asked to keep it.

The GCN layer uses symmetric degree normalization with the degrees supplied
by the graph/subgraph structure (1/sqrt(d) taken as 0 for isolated nodes).
GATv2 concatenates heads after layer one and averages them at the output
layer. Self-loops are never inserted silently: the edge list of the input
structure is the whole truth.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .autodiff import BackpropMode, Tape, backward
from .graph import set_self_loops

MODEL_DEPTH = 2  # layers, and therefore receptive-field hops

ARCHS = ("gcn", "gatv2")

# named sub-streams hanging off the experiment seed
STREAM_INIT = 0
STREAM_DROPOUT = 1
STREAM_SMOOTHGRAD = 2
STREAM_MASK = 3
STREAM_PG = 4
STREAM_DATA = 5


class ShapeMismatchError(ValueError):
    pass


class TrainingDivergedError(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    arch: str = "gcn"
    hidden_dim: int = None  # per-head width for gatv2; resolved per arch
    heads: int = 8
    dropout_rate: float = 0.5
    self_loops: bool = True
    seed: int = 0
    epochs: int = 200
    learning_rate: float = 0.01
    weight_decay: float = 5e-4

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValueError(f"arch must be one of {ARCHS}, got {self.arch!r}")
        if self.hidden_dim is None:
            object.__setattr__(self, "hidden_dim", 16 if self.arch == "gcn" else 8)
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.heads < 1:
            raise ValueError("heads must be >= 1")

    def to_dict(self):
        return {
            "arch": self.arch, "hidden_dim": self.hidden_dim,
            "heads": self.heads, "dropout_rate": self.dropout_rate,
            "self_loops": self.self_loops, "seed": self.seed,
            "epochs": self.epochs, "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class Prediction:
    node: int
    logits: np.ndarray
    probabilities: np.ndarray
    predicted_class: int


@dataclass
class TrainedModel:
    config: ModelConfig
    params: dict
    n_features: int
    n_classes: int
    training_log: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = param_shapes(self.config, self.n_features, self.n_classes)
        if set(expected) != set(self.params):
            raise CheckpointError(
                f"parameter set {sorted(self.params)} != expected {sorted(expected)}")
        for name, shape in expected.items():
            arr = np.asarray(self.params[name], dtype=np.float64)
            if arr.shape != shape:
                raise CheckpointError(
                    f"parameter {name} has shape {arr.shape}, expected {shape}")
            if not np.isfinite(arr).all():
                raise CheckpointError(f"parameter {name} is not finite")
            self.params[name] = arr


def param_shapes(config, n_features, n_classes):
    h = config.hidden_dim
    if config.arch == "gcn":
        return {
            "w1": (n_features, h), "b1": (h,),
            "w2": (h, n_classes), "b2": (n_classes,),
        }
    k = config.heads
    wide = k * h
    return {
        "w_src1": (n_features, wide), "w_dst1": (n_features, wide),
        "att1": (h, k), "b1": (wide,),
        "w_src2": (wide, k * n_classes), "w_dst2": (wide, k * n_classes),
        "att2": (n_classes, k), "b2": (n_classes,),
    }


def _glorot(rng, shape):
    limit = np.sqrt(6.0 / (shape[0] + shape[-1]))
    return rng.uniform(-limit, limit, size=shape)


def init_params(config, n_features, n_classes):
    """Seeded Glorot initialization; deterministic given the config seed."""
    rng = np.random.default_rng([int(config.seed), STREAM_INIT])
    params = {}
    for name, shape in param_shapes(config, n_features, n_classes).items():
        if name.startswith("b"):
            params[name] = np.zeros(shape)
        else:
            params[name] = _glorot(rng, shape)
    return params


def init_model(config, n_features, n_classes):
    """Untrained model with freshly initialized parameters."""
    return TrainedModel(config, init_params(config, n_features, n_classes),
                        n_features, n_classes, training_log={})


# -- forward pass -------------------------------------------------------------


@dataclass
class ForwardRecord:
    tape: Tape
    x_ref: int
    logits_ref: int


def _gcn_coefficients(structure):
    deg = np.asarray(structure.norm_degrees, dtype=np.float64)
    inv = np.zeros_like(deg)
    pos = deg > 0
    inv[pos] = 1.0 / np.sqrt(deg[pos])
    coeff = inv[structure.edge_src] * inv[structure.edge_dst]
    return coeff[:, None]


def _gcn_layer(tape, x_ref, w_ref, b_ref, coeff_ref, src, dst, n, gate_ref):
    xw = tape.matmul(x_ref, w_ref)
    msg = tape.gather_rows(xw, src)
    msg = tape.mul(msg, coeff_ref)
    if gate_ref is not None:
        msg = tape.mul(msg, gate_ref)
    agg = tape.segment_sum(msg, dst, n)
    return tape.add(agg, b_ref)


def _gatv2_layer(tape, x_ref, refs, prefix, heads, width, src, dst, n,
                 gate_ref, combine):
    from . import _kernels

    xs = tape.matmul(x_ref, refs[f"w_src{prefix}"])
    xd = tape.matmul(x_ref, refs[f"w_dst{prefix}"])
    outs = []
    for h in range(heads):
        s_h = tape.slice_cols(xs, h * width, (h + 1) * width)
        d_h = tape.slice_cols(xd, h * width, (h + 1) * width)
        gs = tape.gather_rows(s_h, src)
        gt = tape.gather_rows(d_h, dst)
        score = tape.leaky_relu(tape.add(gs, gt), 0.2)
        att_h = tape.slice_cols(refs[f"att{prefix}"], h, h + 1)
        logit = tape.matmul(score, att_h)  # E x 1
        shift = _kernels.segment_max(tape.value(logit)[:, 0], dst, n)
        shifted = tape.sub(logit, tape.constant(shift[dst][:, None]))
        ex = tape.exp(shifted)
        denom = tape.segment_sum(ex, dst, n)
        alpha = tape.div(ex, tape.gather_rows(denom, dst))
        if gate_ref is not None:
            alpha = tape.mul(alpha, gate_ref)
        msg = tape.mul(gs, alpha)
        outs.append(tape.segment_sum(msg, dst, n))
    if combine == "concat":
        merged = tape.concat_cols(outs)
    else:
        merged = outs[0]
        for o in outs[1:]:
            merged = tape.add(merged, o)
        merged = tape.scale(merged, 1.0 / heads)
    return tape.add(merged, refs[f"b{prefix}"])


def record_forward(model, structure, param_refs=None, tape=None, x_ref=None,
                   dropout_rng=None, edge_gate_ref=None):
    """Record the full two-layer forward; returns a ForwardRecord.

    Callers that need gradients w.r.t. parameters (training) push the params
    as leaves and pass their refs; otherwise params enter as constants.
    Dropout is applied between the layers only when dropout_rng is given.
    """
    if structure.features.shape[1] != model.n_features:
        raise ShapeMismatchError(
            f"structure has {structure.features.shape[1]} features, "
            f"model expects {model.n_features}")
    cfg = model.config
    if tape is None:
        tape = Tape()
    if x_ref is None:
        x_ref = tape.leaf(structure.features)
    if param_refs is None:
        param_refs = {k: tape.constant(v) for k, v in model.params.items()}
    n = structure.n_nodes
    src, dst = structure.edge_src, structure.edge_dst

    if cfg.arch == "gcn":
        coeff_ref = tape.constant(_gcn_coefficients(structure))
        h = _gcn_layer(tape, x_ref, param_refs["w1"], param_refs["b1"],
                       coeff_ref, src, dst, n, edge_gate_ref)
        h = tape.relu(h)
        if dropout_rng is not None and cfg.dropout_rate > 0:
            keep = 1.0 - cfg.dropout_rate
            mask = (dropout_rng.random(tape.value(h).shape) < keep) / keep
            h = tape.mul(h, tape.constant(mask))
        logits = _gcn_layer(tape, h, param_refs["w2"], param_refs["b2"],
                            coeff_ref, src, dst, n, edge_gate_ref)
    else:
        h = _gatv2_layer(tape, x_ref, param_refs, "1", cfg.heads,
                         cfg.hidden_dim, src, dst, n, edge_gate_ref, "concat")
        h = tape.relu(h)
        if dropout_rng is not None and cfg.dropout_rate > 0:
            keep = 1.0 - cfg.dropout_rate
            mask = (dropout_rng.random(tape.value(h).shape) < keep) / keep
            h = tape.mul(h, tape.constant(mask))
        logits = _gatv2_layer(tape, h, param_refs, "2", cfg.heads,
                              model.n_classes, src, dst, n, edge_gate_ref, "mean")
    return ForwardRecord(tape=tape, x_ref=x_ref, logits_ref=logits)


def _softmax_rows(v):
    e = np.exp(v - v.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _prediction_from_logits(node, logits_row):
    probs = _softmax_rows(logits_row[None, :])[0]
    return Prediction(node=int(node), logits=logits_row,
                      probabilities=probs,
                      predicted_class=int(np.argmax(logits_row)))


def forward(model, sg, record=False):
    """Evaluation-mode prediction for the subgraph's center node.

    With record=True also returns the ForwardRecord whose tape can be
    differentiated w.r.t. the feature rows of every subgraph node.
    """
    rec = record_forward(model, sg)
    logits = rec.tape.value(rec.logits_ref)
    pred = _prediction_from_logits(sg.center, logits[sg.center_pos])
    if record:
        return pred, rec
    return pred


def eval_logits(model, structure):
    """Evaluation-mode logits for every node of the structure."""
    rec = record_forward(model, structure)
    return rec.tape.value(rec.logits_ref)


def prepare_graph(model, g):
    """Graph adjusted to the self-loop condition the model was trained under."""
    if g.has_self_loops == model.config.self_loops:
        return g
    return set_self_loops(g, model.config.self_loops)


def predict_all(model, g, nodes):
    """Predictions for the given nodes from one whole-graph forward pass."""
    g = prepare_graph(model, g)
    logits = eval_logits(model, g)
    return [_prediction_from_logits(v, logits[int(v)]) for v in nodes]


# -- training -----------------------------------------------------------------


def _accuracy(logits, labels, mask):
    if not mask.any():
        return None
    pred = np.argmax(logits[mask], axis=1)
    return float(np.mean(pred == labels[mask]))


def train(g, config):
    """Full-batch Adam training of a fresh model; deterministic given the seed.

    Cross-entropy on train-mask nodes, inverted dropout between the layers,
    weight decay added to the raw gradient. The final-epoch parameters are
    returned (no validation-based selection); per-epoch loss and validation
    accuracy plus the final test accuracy are logged.
    """
    if not g.train_mask.any():
        raise TrainingDivergedError("no training nodes in graph")
    g = set_self_loops(g, config.self_loops)
    n, n_classes = g.n_nodes, g.num_classes
    model = init_model(config, g.n_features, n_classes)
    params = model.params

    train_idx = np.flatnonzero(g.train_mask)
    ce_mask = np.zeros((n, n_classes))
    ce_mask[train_idx, g.labels[train_idx]] = 1.0 / len(train_idx)

    rng_drop = np.random.default_rng([int(config.seed), STREAM_DROPOUT])
    adam_m = {k: np.zeros_like(v) for k, v in params.items()}
    adam_v = {k: np.zeros_like(v) for k, v in params.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    log_loss, log_val = [], []

    for step in range(1, config.epochs + 1):
        tape = Tape()
        x_ref = tape.leaf(g.features)
        param_refs = {k: tape.leaf(v) for k, v in params.items()}
        rec = record_forward(model, g, param_refs=param_refs, tape=tape,
                             x_ref=x_ref, dropout_rng=rng_drop)
        probs = tape.softmax(rec.logits_ref)
        logp = tape.log(probs)
        loss_ref = tape.scale(tape.sum(tape.mul(logp, tape.constant(ce_mask))), -1.0)
        loss = float(tape.value(loss_ref))
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"non-finite loss at epoch {step}")
        grads = backward(tape, loss_ref, BackpropMode.STANDARD)
        for name, ref in param_refs.items():
            grad = grads[ref] + config.weight_decay * params[name]
            adam_m[name] = beta1 * adam_m[name] + (1 - beta1) * grad
            adam_v[name] = beta2 * adam_v[name] + (1 - beta2) * grad * grad
            m_hat = adam_m[name] / (1 - beta1 ** step)
            v_hat = adam_v[name] / (1 - beta2 ** step)
            params[name] = params[name] - config.learning_rate * m_hat / (
                np.sqrt(v_hat) + eps)
        if not all(np.isfinite(p).all() for p in params.values()):
            raise TrainingDivergedError(f"non-finite parameters at epoch {step}")
        model.params = params
        logits = eval_logits(model, g)
        log_loss.append(loss)
        log_val.append(_accuracy(logits, g.labels, g.val_mask))

    logits = eval_logits(model, g)
    model.training_log = {
        "loss": log_loss,
        "val_accuracy": log_val,
        "train_accuracy": _accuracy(logits, g.labels, g.train_mask),
        "test_accuracy": _accuracy(logits, g.labels, g.test_mask),
    }
    return model


# -- checkpoints ----------------------------------------------------------------

CHECKPOINT_FORMAT = "neighbor-xai-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(model, path):
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "n_features": model.n_features,
        "n_classes": model.n_classes,
        "params": {
            name: {"shape": list(arr.shape), "data": [float(x) for x in arr.ravel()]}
            for name, arr in sorted(model.params.items())
        },
        "training_log": model.training_log,
    }
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(json.dumps(payload, sort_keys=True) + "\n")


def load_checkpoint(path):
    if not os.path.isfile(path):
        raise CheckpointError(f"missing checkpoint file: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"checkpoint is not valid JSON: {exc}") from exc
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError("not a model checkpoint file")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {payload.get('version')}")
    config = ModelConfig.from_dict(payload["config"])
    params = {}
    for name, entry in payload["params"].items():
        arr = np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
        params[name] = arr
    return TrainedModel(config, params, int(payload["n_features"]),
                        int(payload["n_classes"]),
                        training_log=payload.get("training_log", {}))
