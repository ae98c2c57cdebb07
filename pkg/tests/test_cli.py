import csv
import json
import subprocess
import sys

import pytest

from conftest import DOCS
from sexismkit.cli import main
from sexismkit.models import load_model

DATA = DOCS / "data"
THREATS = "1. threats, plans to harm and incitement"


def rows(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    """Split the demo dev set and train three small task A models once."""
    d = tmp_path_factory.mktemp("cli")
    assert main(["dataset", "split", str(DATA / "dev.csv"), "--holdout", "0.3",
                 "--train-output", str(d / "dtrain.csv"), "--holdout-output", str(d / "dval.csv")]) == 0
    assert main(["train", str(DATA / "train.csv"), "-o", str(d / "ce.json"), "--epochs", "2"]) == 0
    assert main(["train", str(DATA / "train.csv"), "-o", str(d / "wbce.json"), "--loss", "weighted-bce",
                 "--epochs", "2"]) == 0
    assert main(["train", str(DATA / "train.csv"), "-o", str(d / "nb.json"), "--family", "naive-bayes"]) == 0
    return d


def test_normalize(tmp_path):
    src = tmp_path / "in.csv"
    src.write_text("id,text\n1,Hi @bob see https://x.org woman\n2,café $5\n", encoding="utf-8")
    cfg = tmp_path / "norm.json"
    cfg.write_text(json.dumps({"substitutions": {"woman": ["lady"]}}))
    assert main(["normalize", str(src), str(tmp_path / "out.csv"), "--config", str(cfg),
                 "--output-column", "clean", "--substitute"]) == 0
    out = rows(tmp_path / "out.csv")
    assert [r["clean"] for r in out] == ["Hi [USER] see [URL] lady", "cafe [CUR]5"]
    assert out[0]["text"].startswith("Hi @bob")


def test_normalize_missing_column(tmp_path):
    src = tmp_path / "in.csv"
    src.write_text("id,body\n1,x\n")
    assert main(["normalize", str(src), str(tmp_path / "o.csv")]) == 3


def test_dataset_merge_stats_balance(tmp_path, capsys):
    merged = tmp_path / "m.csv"
    assert main(["dataset", "merge", str(DATA / "train.csv"), str(DATA / "dev.csv"), "-o", str(merged)]) == 0
    assert len(rows(merged)) == len(rows(DATA / "train.csv")) + len(rows(DATA / "dev.csv"))
    capsys.readouterr()
    assert main(["dataset", "stats", str(merged), "--task", "A"]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["rows"] == len(rows(merged)) and "A" in stats["tasks"]
    ext = tmp_path / "ext_and_edos.csv"
    assert main(["dataset", "merge", str(DATA / "train.csv"), str(DATA / "external.csv"), "-o", str(ext)]) == 0
    bal = tmp_path / "bal.csv"
    assert main(["dataset", "balance", str(ext), "-o", str(bal), "--protected-source", "edos"]) == 0
    labels = [r["label_A"] for r in rows(bal)]
    assert labels.count("sexist") == labels.count("non-sexist")


def test_dataset_split(work):
    total = len(rows(DATA / "dev.csv"))
    assert len(rows(work / "dtrain.csv")) + len(rows(work / "dval.csv")) == total


def test_train_outputs_loadable_models(work):
    ce, wb, nb = (load_model(work / f"{n}.json") for n in ("ce", "wbce", "nb"))
    assert ce.task == wb.task == nb.task == "A"
    assert wb.loss.kind == "weighted-bce" and wb.loss.w > 1
    assert nb.family == "naive-bayes"


def test_train_fine_stage(tmp_path):
    out = tmp_path / "fine.json"
    b1 = tmp_path / "b1.csv"
    # training rows of a single category
    all_rows = [r for r in rows(DATA / "train.csv") if r["label_B"] == THREATS]
    with open(b1, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, list(all_rows[0]))
        w.writeheader()
        w.writerows(all_rows)
    assert main(["train", str(b1), "-o", str(out), "--task", "C", "--classes-of", THREATS, "--epochs", "2"]) == 0
    assert len(load_model(out).classes) == 2


def test_evaluate(work, tmp_path, capsys):
    capsys.readouterr()
    assert main(["evaluate", str(work / "dval.csv"), "-m", str(work / "ce.json"), "-m", str(work / "nb.json"),
                 "--strategy", "hard", "--output-dir", str(tmp_path / "ev")]) == 0
    assert "macro avg" in capsys.readouterr().out
    rep = json.loads((tmp_path / "ev" / "report.json").read_text())
    assert 0 <= rep["macro avg"]["f1"] <= 1
    assert (tmp_path / "ev" / "confusion.csv").exists()


def test_ensemble_search(work, tmp_path, capsys):
    capsys.readouterr()
    out = tmp_path / "search.csv"
    args = ["ensemble", "search", str(work / "dval.csv"), "-o", str(out)]
    for n in ("ce", "wbce", "nb"):
        args += ["-m", str(work / f"{n}.json")]
    assert main(args) == 0
    table = rows(out)
    assert [int(r["size"]) for r in table] == [1, 2, 3]
    assert out.with_suffix(".txt").exists()
    assert "size" in capsys.readouterr().out


def test_predict(work, tmp_path, capsys):
    capsys.readouterr()
    assert main(["predict", "-m", str(work / "ce.json"), "--text", "sx1 cat0x1 fine0x2"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "id,label,p:non-sexist,p:sexist" and len(lines) == 2
    out = tmp_path / "pred.csv"
    assert main(["predict", "-m", str(work / "ce.json"), "-m", str(work / "nb.json"),
                 "--input", str(work / "dval.csv"), "-o", str(out)]) == 0
    preds = rows(out)
    assert len(preds) == len(rows(work / "dval.csv"))
    for r in preds:
        assert abs(float(r["p:sexist"]) + float(r["p:non-sexist"]) - 1) < 1e-9


def test_augment(tmp_path, capsys):
    b1 = tmp_path / "b1.csv"
    assert main(["dataset", "merge", str(DATA / "train.csv"), "-o", str(b1)]) == 0
    out = tmp_path / "b2.csv"
    capsys.readouterr()
    code = main(["augment", str(b1), str(DATA / "pool.csv"), "-o", str(out), "--target", THREATS,
                 "--threshold", "0.055", "--pool-hierarchy", str(DATA / "external_hierarchy.json"),
                 "--source-class-filter", "sexual-violence", "misogyny-non-sexual-violence"])
    assert code == 0
    assert "selected" in capsys.readouterr().out
    report = rows(tmp_path / "b2.selection.csv")
    admitted = [r for r in report if r["status"] == "admitted"]
    assert len(rows(out)) == len(rows(b1)) + len(admitted) and admitted


def test_run(tmp_path, capsys):
    cfg = {
        "seed": 1,
        "datasets": [
            {"name": "tr", "op": "load", "path": str(DATA / "train.csv")},
            {"name": "dv", "op": "load", "path": str(DATA / "dev.csv")},
        ],
        "models": [{"id": "nb", "family": "naive-bayes", "task": "A", "train": "tr"}],
        "evaluations": [{"id": "e", "target": "nb", "dataset": "dv"}],
    }
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    capsys.readouterr()
    assert main(["run", str(path), "--output-root", str(tmp_path / "runs")]) == 0
    first = capsys.readouterr().out.splitlines()[0]
    assert first.endswith("manifest.json")
    assert json.loads(open(first).read())["seed"] == 1
    assert main(["--seed", "5", "run", str(path), "--output-root", str(tmp_path / "runs")]) == 0
    second = capsys.readouterr().out.splitlines()[0]
    assert second != first and json.loads(open(second).read())["seed"] == 5


@pytest.mark.parametrize("argv,code", [
    (["run", "/nonexistent/config.json"], 2),
    (["dataset", "stats", "/nonexistent/data.csv"], 3),
    (["dataset", "stats", str(DATA / "train.csv"), "--columns", "{not json"], 2),
    (["dataset", "stats", str(DATA / "train.csv"), "--columns", '{"id": "id", "text": "nope"}'], 3),
])
def test_exit_codes(argv, code, capsys):
    assert main(argv) == code
    assert capsys.readouterr().err.startswith("error:")


def test_exit_code_config_invalid(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"datasets": [{"name": "a", "op": "merge", "inputs": ["ghost"]}]}))
    assert main(["run", str(path), "--output-root", str(tmp_path)]) == 2


def test_exit_code_numeric(tmp_path):
    # weighted BCE on the four-class task is a numeric-contract violation
    assert main(["train", str(DATA / "train.csv"), "-o", str(tmp_path / "m.json"), "--task", "B",
                 "--loss", "weighted-bce", "--w", "2"]) == 4


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "sexismkit.cli", "dataset", "stats", str(DATA / "dev.csv")],
                         capture_output=True, text=True)
    assert out.returncode == 0 and json.loads(out.stdout)["rows"] == len(rows(DATA / "dev.csv"))
    bad = subprocess.run([sys.executable, "-m", "sexismkit.cli", "run", str(tmp_path / "missing.json")],
                         capture_output=True, text=True)
    assert bad.returncode == 2
