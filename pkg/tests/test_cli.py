import csv
import math
from pathlib import Path

import pytest
import yaml

from skillatlas.cli import main

BASE = dict(environment="sokoban", width=5, height=5, epochs=3, batch_size=6,
            train_seeds=[0, 1], eval_seeds=[20, 21], heatmap_every=1, checkpoint_every=2,
            eval_episodes=6)


def write_cfg(tmp_path: Path, name="cfg.yaml", **kw) -> Path:
    p = tmp_path / name
    p.write_text(yaml.safe_dump({**BASE, **kw}))
    return p


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def trained(tmp_path):
    cfg = write_cfg(tmp_path)
    assert main(["train", str(cfg), "--out", str(tmp_path / "out"), "--seed", "5"]) == 0
    return tmp_path, tmp_path / "out" / "run_5"


def test_train_artifacts(trained):
    _, run = trained
    assert len(read_csv(run / "metrics.csv")) == 3
    assert next(csv.reader(open(run / "metrics.csv"))) == [
        "epoch", "success_rate", "mean_return", "mean_env", "mean_danger", "mean_affinity",
        "pool_size"]
    for name in ("waterfall.csv", "episodes.csv", "pool_log.csv", "summary.json", "config.yaml"):
        assert (run / name).is_file()
    assert (run / "epoch_2" / "checkpoint.json").is_file()
    assert (run / "epoch_3" / "qtable.json").is_file()
    pngs = sorted(p.name for p in (run / "heatmaps").iterdir())
    assert len(pngs) == 2 * 2 * 4  # channels x seeds x epochs {0,1,2,3}
    assert "atlas_0_3_danger.png" in pngs


def test_heatmap_snapshot_count(tmp_path):
    cfg = write_cfg(tmp_path, epochs=200, batch_size=1, train_seeds=[0], heatmap_every=50,
                    checkpoint_every=0, emit_waterfall=False, emit_pool_log=False)
    assert main(["train", str(cfg), "--out", str(tmp_path / "o")]) == 0
    pngs = sorted(p.name for p in (tmp_path / "o" / "run_0" / "heatmaps").iterdir())
    assert len(pngs) == 2 * 5
    assert {p.split("_")[2] for p in pngs} == {"0", "50", "100", "150", "200"}


def test_train_reproducible(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path)
    for d in ("a", "b"):
        (tmp_path / d).mkdir()
        monkeypatch.chdir(tmp_path / d)
        assert main(["train", str(cfg), "--out", "out"]) == 0
    root_a, root_b = tmp_path / "a" / "out", tmp_path / "b" / "out"
    files_a = sorted(p.relative_to(root_a) for p in root_a.rglob("*") if p.is_file())
    assert len(files_a) > 10
    for rel in files_a:
        assert (root_a / rel).read_bytes() == (root_b / rel).read_bytes(), rel


def test_overlap_exit_2(tmp_path, capsys):
    cfg = write_cfg(tmp_path, eval_seeds=[1])
    assert main(["train", str(cfg)]) == 2
    assert "seed 1" in capsys.readouterr().err


def test_bad_config_exit_2(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text("environment: sokoban\nalpha: 3\n")
    assert main(["train", str(p)]) == 2
    assert "line 2" in capsys.readouterr().err
    assert main(["train", str(tmp_path / "missing.yaml")]) == 2


def test_runtime_failure_exit_3(tmp_path):
    cfg = write_cfg(tmp_path, width=4, height=4, n_boxes=4)
    assert main(["train", str(cfg), "--out", str(tmp_path / "o")]) == 3


def test_eval(trained, capsys):
    tmp, run = trained
    cfg = write_cfg(tmp, "eval.yaml")
    ck = str(run / "epoch_3")
    assert main(["eval", str(cfg), ck, "--out", str(tmp / "e1")]) == 0
    out = capsys.readouterr().out
    rate = float(out.split()[1])
    assert 0.0 <= rate <= 1.0
    assert main(["eval", str(cfg), ck, "--out", str(tmp / "e2")]) == 0
    assert (tmp / "e1" / "eval.csv").read_bytes() == (tmp / "e2" / "eval.csv").read_bytes()
    assert len(read_csv(tmp / "e1" / "eval.csv")) == 6


def test_eval_leakage_exit_2(trained):
    tmp, run = trained
    cfg = write_cfg(tmp, "leak.yaml", train_seeds=[50], eval_seeds=[0])
    assert main(["eval", str(cfg), str(run / "epoch_3")]) == 2


def test_eval_missing_checkpoint_exit_4(trained):
    tmp, run = trained
    cfg = write_cfg(tmp, "eval.yaml")
    assert main(["eval", str(cfg), str(tmp / "nowhere")]) == 4
    (run / "epoch_2" / "pool.json").write_text("{corrupt")
    assert main(["eval", str(cfg), str(run / "epoch_2")]) == 4


def test_waterfall(trained, capsys):
    tmp, run = trained
    episodes = read_csv(run / "episodes.csv")
    assert main(["waterfall", str(run), "0", "--csv", str(tmp / "w.csv")]) == 0
    assert "sum" in capsys.readouterr().out
    rows = read_csv(tmp / "w.csv")
    assert len(rows) == int(episodes[0]["steps"])
    assert main(["waterfall", str(run), "100000"]) == 4
    assert main(["waterfall", str(tmp / "empty"), "0"]) == 4


def test_waterfall_invariants(trained):
    _, run = trained
    lam = 0.05
    by_ep = {}
    for r in read_csv(run / "waterfall.csv"):
        by_ep.setdefault(int(r["episode"]), []).append(r)
    for ep in read_csv(run / "episodes.csv"):
        rows = by_ep[int(ep["episode"])]
        for i, r in enumerate(rows):
            parts = [float(r[c]) for c in ("env", "danger", "affinity", "format")]
            assert abs(math.fsum(parts) - float(r["total"])) <= 1e-9
            if i < len(rows) - 1:
                assert float(r["env"]) == 0.0
        if ep["outcome"] == "success":
            aff = math.fsum(float(r["affinity"]) for r in rows)
            assert abs(aff - lam * (float(ep["phi_T"]) - float(ep["phi_0"]))) <= 1e-9


def test_render_atlas(trained, capsys):
    tmp, run = trained
    assert main(["render-atlas", str(run / "epoch_3"), "--out", str(tmp / "r")]) == 0
    names = sorted(p.name for p in (tmp / "r").iterdir())
    assert names == ["atlas_0_3_affinity.png", "atlas_0_3_danger.png",
                     "atlas_1_3_affinity.png", "atlas_1_3_danger.png"]
    assert main(["render-atlas", str(tmp / "missing")]) == 4
