import json
import subprocess
import sys

import pytest

from compgcn.cli import main
from compgcn.graph import load_triples, write_triples
from compgcn.synthetic import compositional_kg, relation_presence_graphs, two_cluster_graph


@pytest.fixture
def kg_dir(tmp_path):
    d = tmp_path / "kg"
    write_triples(compositional_kg(20, seed=0), d)
    return d


def write_config(path, **kw):
    payload = {"task": "link-prediction", "model": {"dims": [8, 8]}, "lr": 0.01, "epochs": 4,
               "batch_size": 16, "eval_every": 2}
    payload.update(kw)
    path.write_text(json.dumps(payload))
    return path


def test_inspect_format(toy_dir, capsys):
    assert main(["inspect", str(toy_dir)]) == 0
    assert capsys.readouterr().out == "Entities 4 / Relations 2 / Edges 5\n"


def test_missing_config_exit_code(tmp_path, capsys):
    assert main(["train", "--config", str(tmp_path / "missing.json")]) == 2
    assert "missing.json" in capsys.readouterr().err


def test_invalid_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"task": "link-prediction", "lr": -0.1}))
    assert main(["train", "--config", str(cfg)]) == 2
    assert "lr" in capsys.readouterr().err


def test_unknown_flag_rejected():
    with pytest.raises(SystemExit) as exc:
        main(["train", "--config", "x.json", "--bogus"])
    assert exc.value.code != 0


def test_gradcheck(capsys):
    assert main(["gradcheck", "--seed", "7", "--trials", "3"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("max relative error ")
    assert float(out.split()[-1]) < 1e-4


def test_train_then_eval(tmp_path, kg_dir, capsys):
    cfg = write_config(tmp_path / "cfg.json", dataset=str(kg_dir))
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--seed", "3", "--out", str(out)]) == 0
    assert "best epoch" in capsys.readouterr().out
    for name in ("metrics.csv", "report.json", "model.ckpt"):
        assert (out / name).exists()
    assert main(["eval", str(out / "model.ckpt"), "--json"]) == 0
    evaluated = json.loads(capsys.readouterr().out)
    saved = json.loads((out / "report.json").read_text())["test"]
    assert evaluated["overall"] == saved["overall"]


def test_train_dataset_override_and_grid(tmp_path, kg_dir, capsys):
    cfg = write_config(tmp_path / "cfg.json", dataset="nowhere", grid={"lr": [0.001, 0.0001]})
    assert main(["train", "--config", str(cfg), "--dataset", str(kg_dir),
                 "--out", str(tmp_path / "g")]) == 0
    assert capsys.readouterr().out.count("valid MRR") == 2
    assert (tmp_path / "g" / "model.ckpt").exists()


def test_train_node_classification(tmp_path, capsys):
    g, lab = two_cluster_graph(10, seed=0)
    d = tmp_path / "nc"
    write_triples(g, d)
    loaded = load_triples(d, require_all=False)
    (d / "labels.tsv").write_text("".join(
        f"{loaded.entity_name(i)}\t{lab[int(loaded.entity_name(i)[1:])]}\n"
        for i in range(loaded.num_entities)))
    cfg = write_config(tmp_path / "nc.json", task="node-classification", dataset=str(d))
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert "test accuracy" in capsys.readouterr().out
    assert "test_accuracy" in json.loads((tmp_path / "o" / "report.json").read_text())


def test_train_graph_classification(tmp_path, capsys):
    d = tmp_path / "gc"
    d.mkdir()
    index = []
    for i, (n, rows, _, label) in enumerate(relation_presence_graphs(10, seed=0)):
        (d / f"g{i}").mkdir()
        (d / f"g{i}" / "triples.txt").write_text(
            "".join(f"v{s}\tr{r}\tv{o}\n" for s, r, o in rows))
        index.append(f"g{i}\t{label}\n")
    (d / "index.tsv").write_text("".join(index))
    cfg = write_config(tmp_path / "gc.json", task="graph-classification", dataset=str(d), epochs=1)
    assert main(["train", "--config", str(cfg)]) == 0
    assert "over 10 folds" in capsys.readouterr().out


def test_prune(tmp_path, kg_dir, capsys):
    out = tmp_path / "pruned"
    assert main(["prune", str(kg_dir), "--m", "2", "--out", str(out)]) == 0
    assert capsys.readouterr().out.startswith("Entities ")
    assert load_triples(out).num_relations == 2


def test_sweep(tmp_path, kg_dir, capsys):
    cfg = write_config(tmp_path / "cfg.json", dataset=str(kg_dir), epochs=2)
    assert main(["sweep", "--config", str(cfg), "--m", "2", "--basis", "1", "--seeds", "0",
                 "--pruned-basis", "2", "--out", str(tmp_path / "s")]) == 0
    lines = (tmp_path / "s" / "sweep.csv").read_text().splitlines()
    assert lines[0].startswith("study,m,B,seed")
    assert len(lines) == 3


def test_console_module_entry(toy_dir):
    proc = subprocess.run([sys.executable, "-m", "compgcn.cli", "inspect", str(toy_dir)],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert proc.stdout.startswith("Entities 4")
