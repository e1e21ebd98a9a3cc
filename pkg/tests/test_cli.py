import csv
import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from pnal_lab.cli import main
from pnal_lab.data import read_labels, read_scene
from pnal_lab.metrics import read_metrics_csv

TINY = {
    "seed": 2,
    "benchmark": {"num_train": 3, "num_test": 1},
    "noise": {"kind": "symmetric", "tau": 0.4},
    "clustering": {"eps": 0.072},
    "training": {"epochs_total": 4, "e_warmup": 2, "q": 2, "sample_n": 128, "batch_blocks": 4},
}


def write_cfg(path, **over):
    raw = json.loads(json.dumps(TINY))
    for k, v in over.items():
        raw.setdefault(k, {})
        if isinstance(v, dict):
            raw[k].update(v)
        else:
            raw[k] = v
    path.write_text(yaml.safe_dump(raw))
    return str(path)


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = write_cfg(root / "c.yaml")
    out = root / "out"
    for args in (["gen-data"], ["inject-noise"], ["train", "--method", "ce"], ["train", "--method", "pnal"]):
        assert main([*args, "--config", cfg, "--out", str(out)]) == 0
    return root, cfg, out


def manifest(out):
    return [json.loads(l) for l in (out / "manifest.jsonl").read_text().splitlines()]


def test_gen_data_layout(run):
    root, cfg, out = run
    assert len(list((out / "data" / "train").glob("*.pnts"))) == 3
    assert len(list((out / "data" / "test").glob("*.pnts"))) == 1
    kinds = {(e["stage"], e["kind"]) for e in manifest(out)}
    assert {("gen-data", "scene"), ("inject-noise", "labels"), ("train", "checkpoint"),
            ("train", "metrics")} <= kinds


def test_gen_data_byte_identical(run, tmp_path):
    root, cfg, out = run
    other = tmp_path / "nested" / "o"  # missing parents are created
    assert main(["gen-data", "--config", cfg, "--out", str(other)]) == 0
    for p in (out / "data").rglob("*.pnts"):
        assert p.read_bytes() == (other / p.relative_to(out)).read_bytes()


def test_default_benchmark_file_count(tmp_path):
    assert main(["gen-data", "--out", str(tmp_path)]) == 0
    files = [e for e in manifest(tmp_path) if e["kind"] == "scene"]
    assert len(files) == 50 and {e["split"] for e in files} == {"train", "test"}


def test_inject_zero_noise_is_identity(run, tmp_path):
    root, cfg, out = run
    cfg0 = write_cfg(tmp_path / "c0.yaml", noise={"tau": 0.0})
    assert main(["gen-data", "--config", cfg0, "--out", str(tmp_path)]) == 0
    assert main(["inject-noise", "--config", cfg0, "--out", str(tmp_path)]) == 0
    scene = read_scene(tmp_path / "data" / "train" / "scene_000.pnts")
    store = read_labels(scene, tmp_path / "labels" / "scene_000.lbls")
    assert np.array_equal(store.current_label, scene.gt_labels)
    summary = json.loads((tmp_path / "labels" / "noise_summary.jsonl").read_text())
    assert summary["instance_rate"] == 0.0


def test_ce_has_no_corrections(run):
    _, _, out = run
    rows = read_metrics_csv(out / "runs" / "ce" / "metrics.csv")
    assert all(r.correction_frac == 0 for r in rows)
    pn = read_metrics_csv(out / "runs" / "pnal" / "metrics.csv")
    assert pn[-2].correction_frac > 0


def test_pnal_default_schedule():
    from pnal_lab.config import desk_config
    t = desk_config(method="pnal").train_config()
    assert (t.e_warmup, t.e_clean) == (5, 25)


def test_metrics_bit_identical(run, tmp_path):
    root, cfg, out = run
    other = tmp_path / "again"
    for args in (["gen-data"], ["inject-noise"], ["train", "--method", "pnal"]):
        assert main([*args, "--config", cfg, "--out", str(other)]) == 0
    assert (out / "runs/pnal/metrics.csv").read_bytes() == (other / "runs/pnal/metrics.csv").read_bytes()


def test_eval_reproduces_train_metrics(run, capsys):
    _, cfg, out = run
    assert main(["eval", "--config", cfg, "--out", str(out), "--method", "pnal", "--split", "train"]) == 0
    res = json.loads((out / "runs" / "pnal" / "eval_train.json").read_text())
    last = [r for r in read_metrics_csv(out / "runs/pnal/metrics.csv") if r.split == "train"][-1]
    assert abs(res["oa"] - last.oa) <= 1e-9 and abs(res["miou"] - last.miou) <= 1e-9
    assert "OA" in capsys.readouterr().out


def test_report(run):
    _, _, out = run
    assert main(["report", "--out", str(out), str(out / "runs/ce/metrics.csv"),
                 str(out / "runs/pnal/metrics.csv")]) == 0
    with open(out / "report.csv") as f:
        rows = list(csv.DictReader(f))
    assert [r["method"] for r in rows] == ["ce", "pnal"]
    assert float(rows[0]["delta_oa"]) == 0.0
    assert np.isclose(float(rows[1]["delta_oa"]), float(rows[1]["test_oa"]) - float(rows[0]["test_oa"]), atol=2e-4)
    with open(out / "curves" / "pnal.csv") as f:
        corr = [float(r["correction_frac"]) for r in csv.DictReader(f)]
    assert corr == sorted(corr)


def test_exit_codes(run, tmp_path):
    _, cfg, out = run
    assert main(["report", "--out", str(tmp_path)]) == 1
    assert main(["eval", "--out", str(out), "--checkpoint", str(tmp_path / "none.npz")]) == 2
    assert main(["train", "--out", str(tmp_path / "empty")]) == 2
    assert main(["gen-data", "--config", str(tmp_path / "missing.yaml"), "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("training: {q: 0}\n")
    assert main(["gen-data", "--config", str(bad), "--out", str(tmp_path)]) == 1
    bad.write_text("unknown_key: 1\n")
    assert main(["gen-data", "--config", str(bad), "--out", str(tmp_path)]) == 1
    assert main(["report", "--out", str(tmp_path), str(tmp_path / "nope.csv")]) == 2


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "pnal_lab", "report", "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 1 and "error" in r.stderr


def test_seed_override(run, tmp_path):
    _, cfg, out = run
    assert main(["gen-data", "--config", cfg, "--seed", "9", "--out", str(tmp_path)]) == 0
    a = (out / "data/train/scene_000.pnts").read_bytes()
    assert a != (tmp_path / "data/train/scene_000.pnts").read_bytes()


def test_label_snapshots(tmp_path):
    cfg = write_cfg(tmp_path / "c.yaml", label_snapshots=True)
    for args in (["gen-data"], ["inject-noise"], ["train", "--method", "pnal"]):
        assert main([*args, "--config", cfg, "--out", str(tmp_path)]) == 0
    snaps = sorted((tmp_path / "runs" / "pnal" / "labels").glob("epoch_*.lbls"))
    assert len(snaps) == 4
