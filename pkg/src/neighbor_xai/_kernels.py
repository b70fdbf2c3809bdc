"""Edge gather/scatter kernels.

These are the hot inner loops of message passing: every GNN forward (and
its reverse sweep) funnels through row gathers, segment sums and segment
maxima over the edge list. The numba versions avoid `np.add.at` /
`np.maximum.at`, which are an order of magnitude slower on large edge sets.

Backend selection: set NEIGHBOR_XAI_BACKEND=numpy to force the pure-numpy
fallback, NEIGHBOR_XAI_BACKEND=numba to require numba (ImportError if it is
missing). Unset, numba is used when importable. Both paths produce equal
results; see benchmarks/bench_kernels.py for a speed comparison.
"""

import os

import numpy as np

_FLAG = os.environ.get("NEIGHBOR_XAI_BACKEND", "").strip().lower()
if _FLAG not in ("", "numba", "numpy"):
    raise ValueError(
        f"NEIGHBOR_XAI_BACKEND must be 'numba' or 'numpy', got {_FLAG!r}"
    )

if _FLAG == "numpy":
    njit = None
else:
    try:
        from numba import njit
    except ImportError:
        if _FLAG == "numba":
            raise
        njit = None

NUMBA_ENABLED = njit is not None


def gather_rows_numpy(x, index):
    return x[index]


def scatter_add_rows_numpy(grad, index, n_rows):
    out = np.zeros((n_rows, grad.shape[1]), dtype=grad.dtype)
    np.add.at(out, index, grad)
    return out


def segment_sum_rows_numpy(values, segments, n_segments):
    out = np.zeros((n_segments, values.shape[1]), dtype=values.dtype)
    np.add.at(out, segments, values)
    return out


def segment_max_numpy(values, segments, n_segments):
    out = np.full(n_segments, -np.inf, dtype=values.dtype)
    np.maximum.at(out, segments, values)
    return out


if NUMBA_ENABLED:

    @njit(cache=True)
    def _gather_rows(x, index):
        out = np.empty((index.shape[0], x.shape[1]), dtype=x.dtype)
        for e in range(index.shape[0]):
            r = index[e]
            for c in range(x.shape[1]):
                out[e, c] = x[r, c]
        return out

    @njit(cache=True)
    def _scatter_add_rows(grad, index, n_rows):
        out = np.zeros((n_rows, grad.shape[1]), dtype=grad.dtype)
        for e in range(index.shape[0]):
            r = index[e]
            for c in range(grad.shape[1]):
                out[r, c] += grad[e, c]
        return out

    @njit(cache=True)
    def _segment_max(values, segments, n_segments):
        out = np.full(n_segments, -np.inf, dtype=values.dtype)
        for e in range(segments.shape[0]):
            s = segments[e]
            if values[e] > out[s]:
                out[s] = values[e]
        return out

    def gather_rows_numba(x, index):
        return _gather_rows(x, index)

    def scatter_add_rows_numba(grad, index, n_rows):
        return _scatter_add_rows(grad, index, n_rows)

    def segment_sum_rows_numba(values, segments, n_segments):
        return _scatter_add_rows(values, segments, n_segments)

    def segment_max_numba(values, segments, n_segments):
        return _segment_max(values, segments, n_segments)

    gather_rows = gather_rows_numba
    scatter_add_rows = scatter_add_rows_numba
    segment_sum_rows = segment_sum_rows_numba
    segment_max = segment_max_numba
else:
    gather_rows_numba = None
    scatter_add_rows_numba = None
    segment_sum_rows_numba = None
    segment_max_numba = None

    gather_rows = gather_rows_numpy
    scatter_add_rows = scatter_add_rows_numpy
    segment_sum_rows = segment_sum_rows_numpy
    segment_max = segment_max_numpy


def backend_name():
    return "numba" if NUMBA_ENABLED else "numpy"
