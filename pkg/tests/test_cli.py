import json

import pytest

from metricdae.cli import main
from metricdae.data import load_csv, load_embeddings


@pytest.fixture
def workspace(tmp_path):
    assert main(["synth", "--n", "200", "--seed", "0", "--out", str(tmp_path / "src.csv")]) == 0
    assert main(["synth", "--n", "120", "--seed", "1", "--shift", "0.4", "-0.3", "--no-valence",
                 "--out", str(tmp_path / "tgt.csv")]) == 0
    (tmp_path / "manifest.toml").write_text(
        'seed = 0\nfolds = 3\n'
        '[[datasets]]\nname = "src"\npath = "src.csv"\nrole = "train"\n'
        '[[datasets]]\nname = "tgt"\npath = "tgt.csv"\nrole = "transfer"\n')
    return tmp_path


def config(ws, mode="metric-act", **extra):
    lines = ['manifest = "manifest.toml"', f'mode = "{mode}"', "epochs = 2", "batch_size = 32"]
    lines += [f"{k} = {v}" for k, v in extra.items()]
    p = ws / f"{mode}.toml"
    p.write_text("\n".join(lines) + "\n")
    return str(p)


def test_synth_writes_schema(workspace):
    ds = load_csv(workspace / "tgt.csv")
    assert ds.n == 120 and ds.valence is None


def test_train_eval_embed_report(workspace, capsys):
    cfg, out = config(workspace), workspace / "run"
    assert main(["train", "--config", cfg, "--out", str(out)]) == 0
    for name in ("report.json", "report.csv", "report.txt", "config.json",
                 "checkpoints/fold0.json", "checkpoints/fold2.json"):
        assert (out / name).exists(), name
    first = (out / "report.json").read_text()
    assert json.loads(first)["method"] == "metric-act"

    assert main(["eval", "--config", cfg, "--out", str(out)]) == 0
    assert json.loads((out / "report.json").read_text())["summary"] == json.loads(first)["summary"]

    assert main(["eval", "--config", cfg, "--out", str(out), "--source", "raw"]) == 0
    assert (out / "raw_svc_report.json").exists()

    assert main(["embed", "--config", cfg, "--out", str(out), "--fold", "1"]) == 0
    emb = load_embeddings(out / "embeddings" / "metric-act-fold1-tgt.csv")
    assert emb["valence"] is None and emb["z"].shape[1] == 2

    capsys.readouterr()
    assert main(["report", str(out / "report.json"), str(out / "raw_svc_report.json")]) == 0
    text = capsys.readouterr().out
    assert "metric-act" in text and "svc-supervised" in text


def test_embed_full(workspace):
    out = workspace / "full"
    assert main(["embed", "--config", config(workspace, "unsupervised"), "--out", str(out),
                 "--full"]) == 0
    assert (out / "embeddings" / "unsupervised-full-src.csv").exists()


def test_gradcheck_small(capsys):
    assert main(["gradcheck", "--seeds", "3", "--n-features", "12"]) == 0
    assert "ok" in capsys.readouterr().out


def test_missing_label_is_an_error(workspace, capsys):
    assert main(["synth", "--n", "100", "--no-valence", "--out", str(workspace / "src.csv")]) == 0
    code = main(["train", "--config", config(workspace, "metric-val"), "--out",
                 str(workspace / "bad")])
    assert code != 0
    assert "valence" in capsys.readouterr().err


def test_eval_without_checkpoints(workspace, capsys):
    code = main(["eval", "--config", config(workspace), "--out", str(workspace / "nothing")])
    assert code == 2
    assert "train" in capsys.readouterr().err


def test_unknown_subcommand():
    assert main(["fly"]) != 0


def test_train_needs_config():
    assert main(["train"]) != 0
