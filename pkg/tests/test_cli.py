import json
from pathlib import Path

import numpy as np
import pytest

from advguard.cli import load_gate_bundle, main
from advguard.config import config_hash, load_config
from advguard.errors import ConfigurationError
from advguard.seeding import derive_seed

TINY_CONFIG = """\
[corpus]
count = 16
width = 64
height = 48
balance = 0.5
crop_v1 = 20,0,30,48
crop_v2 = 20,10,30,38

[attack]
epsilon = 8/255
alpha = 2/255
iterations = 4
victim_epochs = 30

[features.embedding]
dim = 24

[models.logreg]
epochs = 40

[models.gbdt]
iterations = 4
depth = 3

[cv]
folds = 4

[gate]
model = kmeans
family = histogram
variant = cropped_v1
"""


@pytest.fixture()
def tiny_config(tmp_path):
    cfg_path = tmp_path / "tiny.ini"
    cfg_path.write_text(TINY_CONFIG)
    return cfg_path


def run(args):
    return main([str(a) for a in args])


def test_config_defaults_without_file():
    cfg = load_config(None, master_seed=7, out_dir="x")
    assert cfg.corpus.count == 600
    assert cfg.attack.epsilon == pytest.approx(8 / 255)
    assert cfg.gbdt.iterations == 150 and cfg.gbdt.depth == 10
    assert cfg.dbscan.eps == 0.3 and cfg.dbscan.min_pts == 10
    assert cfg.cv.folds == 10
    assert cfg.corpus.seed == derive_seed(7, "corpus")


def test_config_rejects_unknown_key(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[corpus]\ncont = 5\n")
    with pytest.raises(ConfigurationError, match="cont"):
        load_config(bad)


def test_config_rejects_unknown_section(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[corpse]\ncount = 5\n")
    with pytest.raises(ConfigurationError, match="corpse"):
        load_config(bad)


def test_config_fraction_parsing(tiny_config):
    cfg = load_config(tiny_config)
    assert cfg.attack.epsilon == pytest.approx(8 / 255)


def test_config_hash_stable_and_sensitive(tiny_config):
    a = load_config(tiny_config, master_seed=1, out_dir="p")
    b = load_config(tiny_config, master_seed=1, out_dir="q")
    c = load_config(tiny_config, master_seed=2, out_dir="p")
    assert config_hash(a) == config_hash(b)  # out dir does not matter
    assert config_hash(a) != config_hash(c)


def test_cli_usage_error_exit_code():
    assert run(["bogus-command"]) == 1


def test_cli_missing_upstream_names_stage(tmp_path, tiny_config, capsys):
    code = run(["evaluate", "--config", tiny_config, "--out", tmp_path / "r"])
    assert code == 2
    err = capsys.readouterr().err
    assert "attack" in err or "featurize" in err


def test_cli_featurize_requires_attack(tmp_path, tiny_config, capsys):
    assert run(["generate", "--config", tiny_config, "--out", tmp_path / "r"]) == 0
    code = run(["featurize", "--config", tiny_config, "--out", tmp_path / "r"])
    assert code == 2
    assert "attack" in capsys.readouterr().err


def test_full_pipeline_and_determinism(tmp_path, tiny_config):
    """End-to-end run twice: byte-identical report artifacts."""
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        for stage in ("generate", "attack", "featurize", "evaluate", "report"):
            code = run([stage, "--config", tiny_config, "--out", out, "--seed", 11])
            assert code == 0, stage
        outs.append(out)
    for rel in ("report/table1_cells.csv", "report/table2_cells.csv",
                "report/table1.csv", "report/table2.csv", "report/metadata.json"):
        assert (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes(), rel


def test_paper_layout_shapes(tmp_path, tiny_config):
    out = tmp_path / "r"
    for stage in ("generate", "attack", "featurize", "evaluate", "report"):
        assert run([stage, "--config", tiny_config, "--out", out]) == 0
    t1 = (out / "report/table1.csv").read_text().splitlines()
    assert len(t1) == 10  # header + 9 family x variant rows
    assert all(len(line.split(",")) == 5 for line in t1)  # 2 labels + 3 model columns
    t2 = (out / "report/table2.csv").read_text().splitlines()
    assert len(t2) == 8  # header + 7 metric rows
    assert all(len(line.split(",")) == 10 for line in t2)  # metric + 9 cells


def test_config_mismatch_aborts_downstream(tmp_path, tiny_config, capsys):
    out = tmp_path / "r"
    assert run(["generate", "--config", tiny_config, "--out", out]) == 0
    # same artifacts, different seed: hash mismatch must abort
    code = run(["attack", "--config", tiny_config, "--out", out, "--seed", 99])
    assert code == 2
    assert "different configuration" in capsys.readouterr().err


def test_gate_stage_and_bundle_round_trip(tmp_path, tiny_config):
    out = tmp_path / "r"
    for stage in ("generate", "attack", "featurize"):
        assert run([stage, "--config", tiny_config, "--out", out]) == 0
    assert run(["gate", "--config", tiny_config, "--out", out]) == 0
    verdicts = (out / "gate/verdicts.csv").read_text().splitlines()
    assert verdicts[0] == "id,decision,score,second_layer_label,error"
    assert len(verdicts) == 17  # header + 16 rows
    summary = json.loads((out / "gate/summary.json").read_text())
    assert summary["clean"] + summary["tampered"] + summary["errors"] == 16
    bundle = load_gate_bundle(out / "gate/detector.bin")
    assert bundle.kind == "kmeans"
    assert bundle.variant == "cropped_v1"
    assert bundle.crop_box is not None


def test_gate_rejects_dbscan(tmp_path):
    cfg_path = tmp_path / "cfg.ini"
    cfg_path.write_text(TINY_CONFIG.replace("model = kmeans", "model = dbscan"))
    out = tmp_path / "r"
    for stage in ("generate", "attack", "featurize"):
        assert run([stage, "--config", cfg_path, "--out", out]) == 0
    assert run(["gate", "--config", cfg_path, "--out", out]) == 1


def test_describe_models(tmp_path, tiny_config, capsys):
    out = tmp_path / "r"
    for stage in ("generate", "attack", "featurize"):
        assert run([stage, "--config", tiny_config, "--out", out]) == 0
    assert run(["gate", "--config", tiny_config, "--out", out]) == 0
    capsys.readouterr()
    assert run(["describe", out / "attacked/victim.bin"]) == 0
    assert "victim perceptron" in capsys.readouterr().out
    assert run(["describe", out / "gate/detector.bin"]) == 0
    assert "gate.kind: kmeans" in capsys.readouterr().out
