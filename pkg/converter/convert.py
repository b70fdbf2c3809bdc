"""One-shot converter from raw Planetoid citation files to the interchange format.

Usage: python convert.py --dataset {cora,citeseer,pubmed} --in DIR --out DIR

Input is the classic distribution: ind.<name>.{x,y,tx,ty,allx,ally,graph}
(python-2 pickles of scipy sparse matrices / numpy arrays / an adjacency
dict) plus ind.<name>.test.index. Output is an interchange directory
(meta.json, features.csv, edges.csv, labels.csv, masks.csv) with the
standard fixed split, undirected edges emitted in both directions, no
self-loops, plus a checksums.txt so consumers can verify integrity without
this converter installed. Conversion is deterministic; reruns are
byte-identical.
"""

import argparse
import hashlib
import json
import os
import pickle
import sys

import numpy as np
import scipy.sparse as sp

PUBLISHED_DIMS = {
    # nodes, features, classes
    "cora": (2708, 1433, 7),
    "citeseer": (3327, 3703, 6),
    "pubmed": (19717, 500, 3),
}

RAW_PARTS = ("x", "y", "tx", "ty", "allx", "ally", "graph")

VAL_SIZE = 500


class ConversionError(Exception):
    pass


def _load_pickle(path):
    if not os.path.isfile(path):
        raise ConversionError(f"missing raw file: {path}")
    with open(path, "rb") as fh:
        try:
            return pickle.load(fh, encoding="latin1")
        except Exception as exc:
            raise ConversionError(f"cannot unpickle {path}: {exc}") from exc


def load_raw(input_dir, name):
    """Raw Planetoid bundle as a dict of parts plus the test index list."""
    bundle = {}
    for part in RAW_PARTS:
        bundle[part] = _load_pickle(os.path.join(input_dir, f"ind.{name}.{part}"))
    index_path = os.path.join(input_dir, f"ind.{name}.test.index")
    if not os.path.isfile(index_path):
        raise ConversionError(f"missing raw file: {index_path}")
    with open(index_path) as fh:
        try:
            bundle["test_index"] = [int(line) for line in fh if line.strip()]
        except ValueError as exc:
            raise ConversionError(f"bad test index in {index_path}: {exc}") from exc
    return bundle


def assemble(bundle):
    """Rebuild full node ordering from the allx/tx split and the test index.

    Isolated test ids (CiteSeer has gaps in its test range) become zero
    feature rows and zero one-hot label rows, hence class 0.
    """
    test_idx = np.array(bundle["test_index"], dtype=np.int64)
    test_range = np.arange(test_idx.min(), test_idx.max() + 1)

    allx = sp.csr_matrix(bundle["allx"])
    tx = sp.csr_matrix(bundle["tx"])
    if tx.shape[1] != allx.shape[1]:
        raise ConversionError("tx/allx feature dimensions disagree")
    if test_idx.min() != allx.shape[0]:
        raise ConversionError(
            f"test ids start at {test_idx.min()}, expected {allx.shape[0]} "
            f"(the row right after allx)")
    # tx rows come in test.index file order; drop each at its node id
    # (ids missing from the range, as in CiteSeer, stay zero rows)
    tx_ext = sp.lil_matrix((len(test_range), allx.shape[1]))
    tx_ext[test_idx - test_idx.min()] = tx
    features = sp.vstack([allx, sp.csr_matrix(tx_ext)]).toarray().astype(np.float64)

    ally = np.asarray(bundle["ally"])
    ty = np.asarray(bundle["ty"])
    ty_ext = np.zeros((len(test_range), ally.shape[1]))
    ty_ext[test_idx - test_idx.min()] = ty
    onehot = np.vstack([ally, ty_ext])

    n = features.shape[0]
    if onehot.shape[0] != n:
        raise ConversionError("label and feature row counts disagree")

    graph = bundle["graph"]
    pairs = set()
    for u, neighbors in graph.items():
        u = int(u)
        for v in neighbors:
            v = int(v)
            if u == v:
                continue  # self-loop handling belongs to the consumer
            if not (0 <= u < n and 0 <= v < n):
                raise ConversionError(f"edge ({u}, {v}) outside [0, {n})")
            pairs.add((u, v))
            pairs.add((v, u))
    edges = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)

    labels = np.argmax(onehot, axis=1).astype(np.int64)

    n_train = np.asarray(bundle["y"]).shape[0]
    train = np.zeros(n, dtype=bool)
    val = np.zeros(n, dtype=bool)
    test = np.zeros(n, dtype=bool)
    train[:n_train] = True
    val[n_train:n_train + VAL_SIZE] = True
    test[test_idx] = True
    val &= ~test
    return features, edges, labels, train, val, test


def _write_lines(path, lines):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in lines:
            fh.write(line + "\n")


def write_interchange(out_dir, name, features, edges, labels, train, val, test):
    os.makedirs(out_dir, exist_ok=True)
    n, f = features.shape
    meta = {
        "classes": int(labels.max()) + 1,
        "features": f,
        "has_self_loops": False,
        "name": name,
        "nodes": n,
    }
    with open(os.path.join(out_dir, "meta.json"), "w", encoding="utf-8",
              newline="") as fh:
        fh.write(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    _write_lines(os.path.join(out_dir, "features.csv"),
                 (",".join(repr(float(v)) for v in row) for row in features))
    _write_lines(os.path.join(out_dir, "edges.csv"),
                 (f"{s},{t}" for s, t in edges))
    _write_lines(os.path.join(out_dir, "labels.csv"),
                 (f"{i},{c}" for i, c in enumerate(labels)))
    mask_rows = []
    for i in range(n):
        for split, mask in (("train", train), ("val", val), ("test", test)):
            if mask[i]:
                mask_rows.append(f"{i},{split}")
    _write_lines(os.path.join(out_dir, "masks.csv"), mask_rows)

    names = ("meta.json", "features.csv", "edges.csv", "labels.csv", "masks.csv")
    checksum_rows = []
    for fname in names:
        with open(os.path.join(out_dir, fname), "rb") as fh:
            digest = hashlib.sha256(fh.read()).hexdigest()
        checksum_rows.append(f"{digest}  {fname}")
    _write_lines(os.path.join(out_dir, "checksums.txt"), checksum_rows)


def convert(input_dir, dataset_name, output_dir, expected_dims="published"):
    """Full conversion; validates against the published dimensions by default."""
    bundle = load_raw(input_dir, dataset_name)
    features, edges, labels, train, val, test = assemble(bundle)
    if expected_dims == "published":
        expected_dims = PUBLISHED_DIMS[dataset_name]
    if expected_dims is not None:
        nodes, feats, classes = expected_dims
        actual = (features.shape[0], features.shape[1], int(labels.max()) + 1)
        if actual != (nodes, feats, classes):
            raise ConversionError(
                f"{dataset_name}: got nodes/features/classes {actual}, "
                f"published dimensions are {(nodes, feats, classes)}")
    write_interchange(output_dir, dataset_name, features, edges, labels,
                      train, val, test)
    return features.shape[0], features.shape[1], int(labels.max()) + 1


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dataset", required=True, choices=sorted(PUBLISHED_DIMS))
    ap.add_argument("--in", dest="input_dir", required=True)
    ap.add_argument("--out", dest="output_dir", required=True)
    args = ap.parse_args(argv)
    try:
        nodes, feats, classes = convert(args.input_dir, args.dataset,
                                        args.output_dir)
    except ConversionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"{args.dataset}: {nodes} nodes, {feats} features, {classes} classes "
          f"-> {args.output_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
