"""Command-line interface: train models, run explainers, evaluate metrics.

Exit codes: 0 success, 2 usage/config error, 3 numerical failure. All
randomness flows from one --seed (env fallback NEIGHBOR_XAI_SEED) through
named sub-streams, so identical invocations produce byte-identical CSV and
JSONL outputs.
"""

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import explainers, metrics, models, svg, synth
from .graph import GraphFormatError, delete_neighbors, load_graph, set_self_loops
from .models import CheckpointError, TrainingDivergedError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

METRIC_NAMES = ("loyalty", "loyalty-probabilities")


def _err(msg):
    print(f"error: {msg}", file=sys.stderr)


def _seed_default():
    env = os.environ.get("NEIGHBOR_XAI_SEED", "").strip()
    if env:
        try:
            return int(env)
        except ValueError:
            raise SystemExit(EXIT_CONFIG)
    return 0


def _parse_config_file(path):
    """key = value lines; '#' starts a comment; values parsed as JSON when possible."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise GraphFormatError(
                    f"{path}:{lineno}: expected 'key = value'")
            key, _, raw = line.partition("=")
            key = key.strip().replace("-", "_")
            raw = raw.strip()
            try:
                values[key] = json.loads(raw)
            except json.JSONDecodeError:
                values[key] = raw
    return values


def _build_parser():
    top = argparse.ArgumentParser(
        prog="neighbor-xai",
        description="Neighbor-importance explanations for two-layer GNNs "
                    "and deletion-based loyalty metrics.")
    sub = top.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value file overriding defaults")
        p.add_argument("--seed", type=int, default=None,
                       help="experiment seed (fallback: NEIGHBOR_XAI_SEED, then 0)")
        p.add_argument("--jobs", type=int, default=1,
                       help="parallel workers for per-node work")

    p = sub.add_parser("train", help="train a two-layer GCN/GATv2 classifier")
    common(p)
    p.add_argument("--dataset", required=True, help="interchange directory")
    p.add_argument("--arch", choices=list(models.ARCHS) + ["gat"], default="gcn")
    p.add_argument("--self-loops", action=argparse.BooleanOptionalAction,
                   default=True)
    p.add_argument("--hidden-dim", type=int, default=None)
    p.add_argument("--heads", type=int, default=8)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--learning-rate", type=float, default=0.01)
    p.add_argument("--weight-decay", type=float, default=5e-4)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--out", default="outputs", help="output directory")

    p = sub.add_parser("explain", help="write per-node explanation JSONL")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--method", required=True,
                   help="one of %s or 'all'" % (", ".join(explainers.METHODS)))
    p.add_argument("--nodes", default=None,
                   help="comma-separated target ids (default: test-mask nodes)")
    p.add_argument("--smoothgrad-n", type=int, default=50)
    p.add_argument("--smoothgrad-sigma", type=float, default=None)
    p.add_argument("--mask-epochs", type=int, default=100)
    p.add_argument("--train-explainer", action="store_true",
                   help="fit the pgexplainer MLP and save it before explaining")
    p.add_argument("--pg-model", default=None,
                   help="pgexplainer artifact path (default: <out>/pgexplainer_model.json)")
    p.add_argument("--out", default="outputs")

    p = sub.add_parser("evaluate", help="loyalty metrics, AUC tables, SVG curves")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--explanations", nargs="+", required=True,
                   help="explanation JSONL files (one per method)")
    p.add_argument("--metrics", default=",".join(METRIC_NAMES),
                   help="comma-separated subset of: %s" % ", ".join(METRIC_NAMES))
    p.add_argument("--baseline", choices=["without-neighbors"], default=None,
                   help="also report all-neighbors-deleted loyalty rows")
    p.add_argument("--out", default="outputs")

    p = sub.add_parser("gadget", help="pendant-neighbor gradient pathology demo")
    common(p)
    p.add_argument("--self-loops", action="store_true",
                   help="run the variant where the gradient path exists")
    p.add_argument("--checkpoint", default=None,
                   help="load a model instead of training on the gadget")
    p.add_argument("--epochs", type=int, default=120)
    p.add_argument("--json", action="store_true", dest="as_json")

    p = sub.add_parser("convert-check", help="validate an interchange directory")
    p.add_argument("--dataset", required=True)
    return top


def _resolve_seed(args):
    return args.seed if args.seed is not None else _seed_default()


def _load_dataset(path):
    if not os.path.isdir(path):
        raise GraphFormatError(f"missing dataset path: {path}")
    return load_graph(path)


def cmd_train(args):
    seed = _resolve_seed(args)
    g = _load_dataset(args.dataset)
    arch = "gatv2" if args.arch == "gat" else args.arch
    config = models.ModelConfig(
        arch=arch, hidden_dim=args.hidden_dim, heads=args.heads,
        dropout_rate=args.dropout, self_loops=args.self_loops, seed=seed,
        epochs=args.epochs, learning_rate=args.learning_rate,
        weight_decay=args.weight_decay)
    model = models.train(g, config)
    os.makedirs(args.out, exist_ok=True)
    ckpt = os.path.join(args.out, "checkpoint.json")
    models.save_checkpoint(model, ckpt)
    log = model.training_log
    with open(os.path.join(args.out, "training_log.csv"), "w",
              encoding="utf-8", newline="") as fh:
        fh.write("epoch,loss,val_accuracy\n")
        for i, loss in enumerate(log["loss"]):
            val = log["val_accuracy"][i]
            fh.write(f"{i},{repr(float(loss))},"
                     f"{'' if val is None else repr(float(val))}\n")
    print(f"checkpoint: {ckpt}")
    print(f"train accuracy: {log['train_accuracy']}")
    print(f"test accuracy: {log['test_accuracy']}")
    return EXIT_OK


def _explain_targets(args, g):
    if args.nodes:
        return [int(tok) for tok in args.nodes.split(",") if tok.strip() != ""]
    return [int(v) for v in np.flatnonzero(g.test_mask)]


def _run_method(method, model, g, targets, args, seed, pg_model):
    sg_cfg = explainers.SmoothGradConfig(n=args.smoothgrad_n,
                                         sigma=args.smoothgrad_sigma, seed=seed)
    mask_cfg = explainers.MaskTrainConfig(epochs=args.mask_epochs, seed=seed)

    def one(k):
        return explainers.explain(method, model, g, k, smoothgrad_cfg=sg_cfg,
                                  mask_cfg=mask_cfg, pg_model=pg_model)

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            return list(pool.map(one, targets))
    return [one(k) for k in targets]


def cmd_explain(args):
    seed = _resolve_seed(args)
    g = _load_dataset(args.dataset)
    model = models.load_checkpoint(args.checkpoint)
    if model.n_features != g.n_features:
        raise GraphFormatError(
            f"checkpoint expects {model.n_features} features, "
            f"dataset has {g.n_features}")
    requested = list(explainers.METHODS) if args.method == "all" else [args.method]
    for m in requested:
        if m not in explainers.METHODS:
            raise GraphFormatError(f"unknown method: {m}")
    os.makedirs(args.out, exist_ok=True)

    pg_model = None
    if "pgexplainer" in requested:
        pg_path = args.pg_model or os.path.join(args.out, "pgexplainer_model.json")
        if args.train_explainer:
            cfg = explainers.PGExplainerConfig(seed=seed)
            pg_model = explainers.pgexplainer_train(
                model, g, np.flatnonzero(g.train_mask), cfg)
            explainers.save_pg_model(pg_model, pg_path)
            print(f"pgexplainer model: {pg_path}")
        elif os.path.isfile(pg_path):
            pg_model = explainers.load_pg_model(pg_path)
        else:
            raise GraphFormatError(
                f"pgexplainer needs a trained artifact; run with "
                f"--train-explainer or point --pg-model at one ({pg_path} missing)")

    targets = _explain_targets(args, g)
    for method in requested:
        result = _run_method(method, model, g, targets, args, seed, pg_model)
        path = os.path.join(args.out, f"explanations_{method}.jsonl")
        explainers.write_explanations(result, path)
        print(f"{method}: {len(result)} records -> {path}")
    return EXIT_OK


def cmd_evaluate(args):
    g = _load_dataset(args.dataset)
    model = models.load_checkpoint(args.checkpoint)
    if model.n_features != g.n_features:
        raise GraphFormatError(
            f"checkpoint expects {model.n_features} features, "
            f"dataset has {g.n_features}")
    wanted = [m.strip() for m in args.metrics.split(",") if m.strip()]
    for m in wanted:
        if m not in METRIC_NAMES:
            raise GraphFormatError(f"unknown metric: {m}")
    os.makedirs(args.out, exist_ok=True)
    arch, loops, dataset = model.config.arch, model.config.self_loops, g.name

    curve_rows, auc_entries, baseline_rows = [], [], []
    for path in args.explanations:
        if not os.path.isfile(path):
            raise GraphFormatError(f"missing explanations file: {path}")
        records = explainers.read_explanations(path)
        if not records:
            raise GraphFormatError(f"no explanation records in {path}")
        method = records[0].method
        for metric_name in wanted:
            fn = metrics.loyalty if metric_name == "loyalty" \
                else metrics.loyalty_probabilities
            aucs = {}
            for direction in ("desc", "asc"):
                curve = fn(model, g, records, direction=direction)
                curve_rows.extend(metrics.curve_csv_rows(
                    curve, method, dataset, arch, loops))
                aucs[direction] = metrics.auc(curve)
                tag = f"{curve.kind}_{method}_{direction}"
                svg.write_curve_svg(
                    curve.points, f"{curve.kind} / {method} / {direction}",
                    os.path.join(args.out, f"{tag}.svg"), ylabel=curve.kind)
            auc_entries.append({
                "metric": curve.kind, "self_loops": loops, "method": method,
                "dataset": dataset, "arch": arch,
                "L": aucs["desc"], "I": aucs["asc"]})
        if args.baseline == "without-neighbors":
            value = metrics.all_deleted_loyalty(model, g, explanations=records,
                                                mode="nonzero")
            baseline_rows.append((method, value))
    metrics.write_curves_csv(curve_rows, os.path.join(args.out, "curves.csv"))
    metrics.write_auc_summary(auc_entries, os.path.join(args.out, "auc_summary.csv"))
    print(f"curves: {os.path.join(args.out, 'curves.csv')}")
    print(f"auc summary: {os.path.join(args.out, 'auc_summary.csv')}")

    if args.baseline == "without-neighbors":
        targets = sorted({e.target for path in args.explanations
                          for e in explainers.read_explanations(path)})
        base = metrics.all_deleted_loyalty(model, g, mode="all_neighbors",
                                           nodes=targets)
        baseline_rows.append(("without_neighbors", base))
        path = os.path.join(args.out, "all_deleted_loyalty.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("dataset,arch,self_loops,method,loyalty\n")
            for method, value in baseline_rows:
                fh.write(f"{dataset},{arch},{str(loops).lower()},{method},"
                         f"{repr(float(value))}\n")
        print(f"all-deleted loyalty: {path}")
    return EXIT_OK


def cmd_gadget(args):
    seed = _resolve_seed(args)
    g = synth.make_pendant_gadget()
    if args.self_loops:
        g = set_self_loops(g, True)
    if args.checkpoint:
        model = models.load_checkpoint(args.checkpoint)
    else:
        config = models.ModelConfig(arch="gcn", hidden_dim=8, seed=seed,
                                    epochs=args.epochs, dropout_rate=0.2,
                                    self_loops=args.self_loops)
        model = models.train(g, config)
    center = synth.GADGET_CENTER
    e = explainers.saliency(model, g, center)
    sg = explainers.target_subgraph(model, g, center)
    base = models.forward(model, sg)
    rows = []
    for neighbor in sorted(e.raw):
        pred = models.forward(model, delete_neighbors(sg, {neighbor}))
        rows.append({
            "neighbor": neighbor,
            "is_pendant": neighbor == synth.GADGET_PENDANT,
            "gradient_importance": e.raw[neighbor],
            "delta_logit": float(np.max(np.abs(pred.logits - base.logits))),
            "delta_probability": float(abs(
                pred.probabilities[base.predicted_class]
                - base.probabilities[base.predicted_class])),
        })
    report = {"center": center, "self_loops": args.self_loops,
              "predicted_class": base.predicted_class, "neighbors": rows}
    if args.as_json:
        print(json.dumps(report, sort_keys=True))
    else:
        print(f"center node {center}, predicted class {base.predicted_class}, "
              f"self_loops={args.self_loops}")
        print("neighbor  pendant  gradient      |d logit|     |d prob|")
        for r in rows:
            print(f"{r['neighbor']:>8}  {str(r['is_pendant']):>7}  "
                  f"{r['gradient_importance']:<12.6g}  "
                  f"{r['delta_logit']:<12.6g}  {r['delta_probability']:<.6g}")
    return EXIT_OK


def cmd_convert_check(args):
    g = _load_dataset(args.dataset)
    checks = os.path.join(args.dataset, "checksums.txt")
    if os.path.isfile(checks):
        with open(checks, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                digest, name = line.split("  ", 1)
                target = os.path.join(args.dataset, name)
                if not os.path.isfile(target):
                    raise GraphFormatError(f"checksums.txt names missing file {name}")
                with open(target, "rb") as data:
                    actual = hashlib.sha256(data.read()).hexdigest()
                if actual != digest:
                    raise GraphFormatError(f"checksum mismatch for {name}")
        print("checksums: ok")
    print(f"dataset ok: {g.n_nodes} nodes, {g.n_features} features, "
          f"{g.num_classes} classes, {len(g.edges)} edges, "
          f"self_loops={g.has_self_loops}")
    print(f"splits: train={int(g.train_mask.sum())} "
          f"val={int(g.val_mask.sum())} test={int(g.test_mask.sum())}")
    return EXIT_OK


_COMMANDS = {
    "train": cmd_train,
    "explain": cmd_explain,
    "evaluate": cmd_evaluate,
    "gadget": cmd_gadget,
    "convert-check": cmd_convert_check,
}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    # apply --config file values as new defaults before the real parse
    cfg_path = None
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            cfg_path = argv[i + 1]
        elif tok.startswith("--config="):
            cfg_path = tok.split("=", 1)[1]
    if cfg_path is not None:
        if not os.path.isfile(cfg_path):
            _err(f"missing config file: {cfg_path}")
            return EXIT_CONFIG
        try:
            overrides = _parse_config_file(cfg_path)
        except GraphFormatError as exc:
            _err(str(exc))
            return EXIT_CONFIG
        for sp in parser._subparsers._group_actions[0].choices.values():
            known = {a.dest for a in sp._actions}
            sp.set_defaults(**{k: v for k, v in overrides.items() if k in known})
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return _COMMANDS[args.command](args)
    except (GraphFormatError, CheckpointError, ValueError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except TrainingDivergedError as exc:
        _err(str(exc))
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
