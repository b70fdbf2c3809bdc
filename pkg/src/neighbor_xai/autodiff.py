"""Reverse-mode differentiation over dense float64 arrays.

A Tape records primitive operations during a forward pass; backward() then
replays it in reverse to produce vector-Jacobian products for every leaf.
The primitive set is exactly what two-layer GCN / GATv2 forwards and the
mask/edge-weight trainers need: matmul, broadcast elementwise arithmetic,
relu / leaky-relu / sigmoid / exp / log, row softmax, edge gathers and
segment sums, column concat/slice, and scalar reductions.

ReLU nodes are special: their backward rule is selected per backward() call
(standard, deconvnet, or guided), which is what distinguishes the three
gradient-based explainers. Every other node differentiates identically in
all modes.
"""

from enum import Enum

import numpy as np

from . import _kernels


class BackpropMode(Enum):
    STANDARD = "standard"
    DECONVNET = "deconvnet"
    GUIDED = "guided"


def relu_backward(mode, x, g):
    """Backward rule of a ReLU node under the given mode.

    standard:  g * 1[x > 0]
    deconvnet: g * 1[g > 0]
    guided:    g * 1[x > 0] * 1[g > 0]
    """
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if mode is BackpropMode.STANDARD:
        return g * (x > 0)
    if mode is BackpropMode.DECONVNET:
        return g * (g > 0)
    if mode is BackpropMode.GUIDED:
        return g * ((x > 0) & (g > 0))
    raise ValueError(f"unknown backprop mode: {mode!r}")


class NonScalarOutputError(ValueError):
    """backward() was asked to differentiate a non-scalar node."""


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (adjoint of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class _Node:
    __slots__ = ("op", "inputs", "value", "aux")

    def __init__(self, op, inputs, value, aux=None):
        self.op = op
        self.inputs = inputs
        self.value = value
        self.aux = aux


class Tape:
    """Append-only record of a forward computation.

    Single-writer while recording; immutable (by convention) afterwards,
    so backward() calls on distinct tapes can run concurrently.
    """

    def __init__(self):
        self._nodes = []

    def __len__(self):
        return len(self._nodes)

    def value(self, ref):
        return self._nodes[ref].value

    def op_of(self, ref):
        return self._nodes[ref].op

    def _push(self, op, inputs, value, aux=None):
        value = np.asarray(value, dtype=np.float64)
        self._nodes.append(_Node(op, inputs, value, aux))
        return len(self._nodes) - 1

    # -- sources ---------------------------------------------------------

    def leaf(self, value):
        return self._push("leaf", (), value)

    def constant(self, value):
        return self._push("constant", (), value)

    # -- arithmetic ------------------------------------------------------

    def matmul(self, a, b):
        return self._push("matmul", (a, b), self.value(a) @ self.value(b))

    def add(self, a, b):
        return self._push("add", (a, b), self.value(a) + self.value(b))

    def sub(self, a, b):
        return self._push("sub", (a, b), self.value(a) - self.value(b))

    def mul(self, a, b):
        return self._push("mul", (a, b), self.value(a) * self.value(b))

    def div(self, a, b):
        return self._push("div", (a, b), self.value(a) / self.value(b))

    def scale(self, a, c):
        return self._push("scale", (a,), self.value(a) * c, aux=float(c))

    # -- nonlinearities ---------------------------------------------------

    def relu(self, a):
        return self._push("relu", (a,), np.maximum(self.value(a), 0.0))

    def leaky_relu(self, a, negative_slope=0.2):
        x = self.value(a)
        return self._push(
            "leaky_relu", (a,), np.where(x > 0, x, negative_slope * x),
            aux=float(negative_slope),
        )

    def exp(self, a):
        return self._push("exp", (a,), np.exp(self.value(a)))

    def log(self, a):
        return self._push("log", (a,), np.log(self.value(a)))

    def sigmoid(self, a):
        x = self.value(a)
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return self._push("sigmoid", (a,), out)

    def softmax(self, a):
        x = self.value(a)
        shifted = x - x.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        return self._push("softmax", (a,), e / e.sum(axis=-1, keepdims=True))

    # -- edge ops ----------------------------------------------------------

    def gather_rows(self, a, index):
        index = np.asarray(index, dtype=np.int64)
        return self._push(
            "gather_rows", (a,), _kernels.gather_rows(self.value(a), index),
            aux=index,
        )

    def segment_sum(self, a, segments, n_segments):
        segments = np.asarray(segments, dtype=np.int64)
        return self._push(
            "segment_sum", (a,),
            _kernels.segment_sum_rows(self.value(a), segments, n_segments),
            aux=segments,
        )

    # -- shape ops ---------------------------------------------------------

    def concat_cols(self, refs):
        vals = [self.value(r) for r in refs]
        widths = [v.shape[1] for v in vals]
        return self._push("concat_cols", tuple(refs), np.hstack(vals), aux=widths)

    def slice_cols(self, a, start, stop):
        return self._push(
            "slice_cols", (a,), self.value(a)[:, start:stop], aux=(start, stop)
        )

    # -- reductions ----------------------------------------------------------

    def sum(self, a):
        return self._push("sum", (a,), np.sum(self.value(a)))

    def pick(self, a, row, col):
        return self._push("pick", (a,), self.value(a)[row, col], aux=(row, col))


def backward(tape, output, mode=BackpropMode.STANDARD):
    """Vector-Jacobian product of the scalar node `output` w.r.t. all leaves.

    Returns {leaf_ref: gradient array}; leaves the output does not depend on
    get exact-zero arrays. With mode=STANDARD the result is the true
    gradient of the recorded computation; other modes differ only at relu
    nodes, which apply relu_backward.
    """
    nodes = tape._nodes
    out_val = nodes[output].value
    if out_val.shape != ():
        raise NonScalarOutputError(
            f"backward() needs a scalar output node, got shape {out_val.shape}"
        )
    grads = [None] * len(nodes)
    grads[output] = np.ones((), dtype=np.float64)

    def acc(ref, g):
        if grads[ref] is None:
            grads[ref] = g
        else:
            grads[ref] = grads[ref] + g

    for ref in range(output, -1, -1):
        g = grads[ref]
        if g is None:
            continue
        node = nodes[ref]
        op = node.op
        if op in ("leaf", "constant"):
            continue
        if op == "matmul":
            a, b = node.inputs
            acc(a, g @ nodes[b].value.T)
            acc(b, nodes[a].value.T @ g)
        elif op == "add":
            a, b = node.inputs
            acc(a, _unbroadcast(g, nodes[a].value.shape))
            acc(b, _unbroadcast(g, nodes[b].value.shape))
        elif op == "sub":
            a, b = node.inputs
            acc(a, _unbroadcast(g, nodes[a].value.shape))
            acc(b, _unbroadcast(-g, nodes[b].value.shape))
        elif op == "mul":
            a, b = node.inputs
            acc(a, _unbroadcast(g * nodes[b].value, nodes[a].value.shape))
            acc(b, _unbroadcast(g * nodes[a].value, nodes[b].value.shape))
        elif op == "div":
            a, b = node.inputs
            bv = nodes[b].value
            acc(a, _unbroadcast(g / bv, nodes[a].value.shape))
            acc(b, _unbroadcast(-g * nodes[a].value / (bv * bv), nodes[b].value.shape))
        elif op == "scale":
            acc(node.inputs[0], g * node.aux)
        elif op == "relu":
            acc(node.inputs[0], relu_backward(mode, nodes[node.inputs[0]].value, g))
        elif op == "leaky_relu":
            x = nodes[node.inputs[0]].value
            acc(node.inputs[0], g * np.where(x > 0, 1.0, node.aux))
        elif op == "exp":
            acc(node.inputs[0], g * node.value)
        elif op == "log":
            acc(node.inputs[0], g / nodes[node.inputs[0]].value)
        elif op == "sigmoid":
            s = node.value
            acc(node.inputs[0], g * s * (1.0 - s))
        elif op == "softmax":
            p = node.value
            dot = np.sum(g * p, axis=-1, keepdims=True)
            acc(node.inputs[0], p * (g - dot))
        elif op == "gather_rows":
            a = node.inputs[0]
            acc(a, _kernels.scatter_add_rows(
                np.ascontiguousarray(g), node.aux, nodes[a].value.shape[0]))
        elif op == "segment_sum":
            acc(node.inputs[0], _kernels.gather_rows(
                np.ascontiguousarray(g), node.aux))
        elif op == "concat_cols":
            start = 0
            for inp, width in zip(node.inputs, node.aux):
                acc(inp, g[:, start:start + width])
                start += width
        elif op == "slice_cols":
            a = node.inputs[0]
            full = np.zeros_like(nodes[a].value)
            full[:, node.aux[0]:node.aux[1]] = g
            acc(a, full)
        elif op == "sum":
            a = node.inputs[0]
            acc(a, np.full(nodes[a].value.shape, float(g)))
        elif op == "pick":
            a = node.inputs[0]
            full = np.zeros_like(nodes[a].value)
            full[node.aux] = g
            acc(a, full)
        else:
            raise AssertionError(f"no backward rule for op {op!r}")

    out = {}
    for ref, node in enumerate(nodes):
        if node.op == "leaf":
            g = grads[ref]
            out[ref] = np.zeros_like(node.value) if g is None else np.asarray(g)
    return out
