"""End-to-end CLI runs on a saved synthetic dataset."""

import json
import os

import numpy as np
import pytest

from neighbor_xai.cli import main
from neighbor_xai.graph import save_graph
from neighbor_xai.synth import make_planted_synthetic


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "planted"
    g = make_planted_synthetic(seed=0, n_cores=12, leaves_per_core=1)
    save_graph(g, path)
    return str(path)


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory, dataset):
    out = str(tmp_path_factory.mktemp("run"))
    code = main(["train", "--dataset", dataset, "--arch", "gcn",
                 "--self-loops", "--seed", "0", "--epochs", "60",
                 "--out", out])
    assert code == 0
    return out


def test_train_outputs(run_dir):
    assert os.path.isfile(os.path.join(run_dir, "checkpoint.json"))
    log = os.path.join(run_dir, "training_log.csv")
    lines = open(log).read().splitlines()
    assert lines[0] == "epoch,loss,val_accuracy"
    assert len(lines) == 61


def test_train_missing_dataset(tmp_path, capsys):
    code = main(["train", "--dataset", str(tmp_path / "nope"), "--out",
                 str(tmp_path / "o")])
    assert code == 2
    assert "nope" in capsys.readouterr().err


def test_train_divergence_exits_three(dataset, tmp_path):
    with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        code = main(["train", "--dataset", dataset, "--learning-rate", "1e15",
                     "--weight-decay", "0", "--epochs", "40",
                     "--out", str(tmp_path / "o")])
    assert code == 3


def test_explain_single_method(dataset, run_dir, tmp_path):
    out = str(tmp_path)
    code = main(["explain", "--dataset", dataset, "--checkpoint",
                 os.path.join(run_dir, "checkpoint.json"),
                 "--method", "saliency", "--out", out, "--seed", "0"])
    assert code == 0
    path = os.path.join(out, "explanations_saliency.jsonl")
    records = [json.loads(line) for line in open(path)]
    assert records
    for r in records:
        scores = list(r["importance"].values())
        assert all(0.0 <= s <= 1.0 for s in scores)
        if any(v != 0.0 for v in r["raw"].values()):
            assert max(scores) == 1.0


def test_explain_unknown_method(dataset, run_dir, tmp_path):
    code = main(["explain", "--dataset", dataset, "--checkpoint",
                 os.path.join(run_dir, "checkpoint.json"),
                 "--method", "lime", "--out", str(tmp_path)])
    assert code == 2


def test_explain_pg_without_artifact(dataset, run_dir, tmp_path, capsys):
    code = main(["explain", "--dataset", dataset, "--checkpoint",
                 os.path.join(run_dir, "checkpoint.json"),
                 "--method", "pgexplainer", "--out", str(tmp_path)])
    assert code == 2
    assert "train-explainer" in capsys.readouterr().err


def test_explain_all_methods_and_evaluate(dataset, run_dir, tmp_path):
    out = str(tmp_path / "expl")
    code = main(["explain", "--dataset", dataset, "--checkpoint",
                 os.path.join(run_dir, "checkpoint.json"),
                 "--method", "all", "--train-explainer",
                 "--mask-epochs", "20", "--smoothgrad-n", "8",
                 "--out", out, "--seed", "0"])
    assert code == 0
    files = sorted(os.listdir(out))
    expected = [f"explanations_{m}.jsonl" for m in
                ("deconvnet", "gnnexplainer", "guided", "pgexplainer",
                 "saliency", "smoothgrad")]
    assert [f for f in files if f.startswith("explanations_")] == expected

    eval_out = str(tmp_path / "eval")
    code = main(["evaluate", "--dataset", dataset, "--checkpoint",
                 os.path.join(run_dir, "checkpoint.json"),
                 "--explanations",
                 os.path.join(out, "explanations_saliency.jsonl"),
                 os.path.join(out, "explanations_pgexplainer.jsonl"),
                 "--baseline", "without-neighbors",
                 "--out", eval_out])
    assert code == 0
    curves = open(os.path.join(eval_out, "curves.csv")).read().splitlines()
    assert curves[0].startswith("metric,method,dataset,arch")
    # 2 methods x 2 metrics x 2 directions x 11 percents
    assert len(curves) == 1 + 2 * 2 * 2 * 11
    aucs = open(os.path.join(eval_out, "auc_summary.csv")).read().splitlines()
    assert len(aucs) == 1 + 2 * 2
    baseline = open(os.path.join(eval_out, "all_deleted_loyalty.csv")).read()
    assert "without_neighbors" in baseline
    svgs = [f for f in os.listdir(eval_out) if f.endswith(".svg")]
    assert len(svgs) == 2 * 2 * 2
    assert "<svg" in open(os.path.join(eval_out, svgs[0])).read()


def test_evaluate_metric_filter(dataset, run_dir, tmp_path):
    out = str(tmp_path / "expl")
    main(["explain", "--dataset", dataset, "--checkpoint",
          os.path.join(run_dir, "checkpoint.json"),
          "--method", "saliency", "--out", out, "--seed", "0"])
    eval_out = str(tmp_path / "eval")
    code = main(["evaluate", "--dataset", dataset, "--checkpoint",
                 os.path.join(run_dir, "checkpoint.json"),
                 "--explanations",
                 os.path.join(out, "explanations_saliency.jsonl"),
                 "--metrics", "loyalty", "--out", eval_out])
    assert code == 0
    curves = open(os.path.join(eval_out, "curves.csv")).read().splitlines()
    assert all(row.startswith("loyalty,") for row in curves[1:])


def test_outputs_reproducible(dataset, tmp_path):
    outs = []
    for tag in ("a", "b"):
        out = str(tmp_path / tag)
        code = main(["train", "--dataset", dataset, "--arch", "gcn",
                     "--seed", "3", "--epochs", "25", "--out", out])
        assert code == 0
        code = main(["explain", "--dataset", dataset, "--checkpoint",
                     os.path.join(out, "checkpoint.json"),
                     "--method", "smoothgrad", "--smoothgrad-n", "4",
                     "--out", out, "--seed", "3"])
        assert code == 0
        code = main(["evaluate", "--dataset", dataset, "--checkpoint",
                     os.path.join(out, "checkpoint.json"), "--explanations",
                     os.path.join(out, "explanations_smoothgrad.jsonl"),
                     "--out", out])
        assert code == 0
        outs.append(out)
    for name in ("checkpoint.json", "training_log.csv",
                 "explanations_smoothgrad.jsonl", "curves.csv",
                 "auc_summary.csv", "loyalty_smoothgrad_desc.svg"):
        a = open(os.path.join(outs[0], name), "rb").read()
        b = open(os.path.join(outs[1], name), "rb").read()
        assert a == b


def test_jobs_flag_does_not_change_results(dataset, run_dir, tmp_path):
    outs = []
    for tag, jobs in (("j1", "1"), ("j2", "3")):
        out = str(tmp_path / tag)
        code = main(["explain", "--dataset", dataset, "--checkpoint",
                     os.path.join(run_dir, "checkpoint.json"),
                     "--method", "saliency", "--jobs", jobs,
                     "--out", out, "--seed", "0"])
        assert code == 0
        outs.append(out)
    a = open(os.path.join(outs[0], "explanations_saliency.jsonl"), "rb").read()
    b = open(os.path.join(outs[1], "explanations_saliency.jsonl"), "rb").read()
    assert a == b


def test_train_accepts_gat_alias(dataset, tmp_path):
    out = str(tmp_path / "gat")
    code = main(["train", "--dataset", dataset, "--arch", "gat",
                 "--epochs", "3", "--seed", "0", "--out", out])
    assert code == 0
    ckpt = json.load(open(os.path.join(out, "checkpoint.json")))
    assert ckpt["config"]["arch"] == "gatv2"


def test_gadget_command(capsys):
    code = main(["gadget", "--epochs", "40", "--seed", "0"])
    assert code == 0
    text = capsys.readouterr().out
    assert "pendant" in text

    code = main(["gadget", "--epochs", "40", "--seed", "0", "--json"])
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    pendant = [r for r in report["neighbors"] if r["is_pendant"]][0]
    assert pendant["gradient_importance"] == 0.0
    assert pendant["delta_logit"] > 1e-6

    code = main(["gadget", "--epochs", "40", "--seed", "0", "--self-loops",
                 "--json"])
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    pendant = [r for r in report["neighbors"] if r["is_pendant"]][0]
    assert pendant["gradient_importance"] > 0.0


def test_convert_check(dataset, tmp_path, capsys):
    assert main(["convert-check", "--dataset", dataset]) == 0
    assert "dataset ok" in capsys.readouterr().out
    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "meta.json").write_text("{}")
    assert main(["convert-check", "--dataset", str(bad)]) == 2


def test_config_file_and_env_seed(dataset, tmp_path, monkeypatch):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("epochs = 7\narch = gcn\n# comment\n")
    out = str(tmp_path / "via_cfg")
    code = main(["train", "--dataset", dataset, "--config", str(cfg),
                 "--seed", "1", "--out", out])
    assert code == 0
    lines = open(os.path.join(out, "training_log.csv")).read().splitlines()
    assert len(lines) == 8  # header + 7 epochs from the config file

    monkeypatch.setenv("NEIGHBOR_XAI_SEED", "1")
    out_env = str(tmp_path / "via_env")
    code = main(["train", "--dataset", dataset, "--config", str(cfg),
                 "--out", out_env])
    assert code == 0
    a = open(os.path.join(out, "checkpoint.json"), "rb").read()
    b = open(os.path.join(out_env, "checkpoint.json"), "rb").read()
    assert a == b  # env seed fallback matches the explicit --seed run
