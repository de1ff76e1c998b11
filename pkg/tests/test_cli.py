import json
from pathlib import Path

import numpy as np
import pytest

from qrn import cli, data, trainer
from qrn.cell import QrnConfig
from qrn.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from qrn.config import ConfigError, build_configs, format_config, load_config, parse_config

DATA = Path(__file__).parent / "data"
QUICK = ["--set", "max_epochs=2", "--set", "restarts=1", "--set", "hidden_size=8"]


# -- config ---------------------------------------------------------------------

def test_parse_config_types_and_comments():
    s = parse_config("hidden_size = 100  # wider\nvector_gates = true\nlearning_rate=0.1\n\nscan = sequential\n")
    assert s == {"hidden_size": 100, "vector_gates": True, "learning_rate": 0.1, "scan": "sequential"}


def test_unknown_key_is_named():
    with pytest.raises(ConfigError) as e:
        parse_config("hiden_size = 10\n")
    assert e.value.key == "hiden_size"


def test_bad_values():
    with pytest.raises(ConfigError):
        parse_config("layers = two\n")
    with pytest.raises(ConfigError):
        parse_config("use_match = maybe\n")
    with pytest.raises(ConfigError):
        parse_config("layers 2\n")
    with pytest.raises(ConfigError):
        build_configs({"precision": "f16"})


def test_shared_keys_reach_both_configs(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("hidden_size = 100\nforget_bias = 1.0\n")
    mc, tc = load_config(p)
    assert mc.hidden_size == tc.hidden_size == 100
    assert mc.forget_bias == tc.forget_bias == 1.0


def test_format_config_round_trip():
    mc, tc = build_configs({"layers": 3, "vector_gates": True, "l2_decay": 0.01})
    assert build_configs(parse_config(format_config(mc, tc))) == (mc, tc)


# -- checkpoint -------------------------------------------------------------------

@pytest.mark.parametrize("precision", ["f32", "f64"])
@pytest.mark.parametrize("head", ["qa", "dialog"])
def test_checkpoint_round_trip(tmp_path, precision, head):
    ds = data.load_dialog_task(DATA, 1) if head == "dialog" else data.load_qa_task(DATA, 2)
    mc = QrnConfig(hidden_size=8, head=head, use_match=head == "dialog", query_decoder=head == "qa")
    tc = trainer.TrainConfig(hidden_size=8, precision=precision)
    model = trainer.build_model(ds, mc, tc, seed=5)
    save_checkpoint(tmp_path / "ck", model, tc, "abc")
    loaded, tc2, manifest = load_checkpoint(tmp_path / "ck")
    assert tc2 == tc and loaded.config == mc and loaded.vocab == model.vocab
    assert manifest["dataset_fingerprint"] == "abc"
    for a, b in zip(model.parameters(), loaded.parameters()):
        assert a.name == b.name and a.data.dtype == b.data.dtype
        np.testing.assert_array_equal(a.data, b.data)
    items = model.prepare(ds.test)
    np.testing.assert_array_equal(model.predict(items), loaded.predict(loaded.prepare(ds.test)))


def test_checkpoint_layout(tmp_path):
    ds = data.load_qa_task(DATA, 1)
    model = trainer.build_model(ds, QrnConfig(hidden_size=4), trainer.TrainConfig(hidden_size=4), 0)
    save_checkpoint(tmp_path, model)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    sizes = [int(np.prod(t["shape"])) for t in manifest["tensors"]]
    assert [t["offset"] for t in manifest["tensors"]] == list(np.cumsum([0] + sizes[:-1]))
    assert (tmp_path / "tensors.bin").stat().st_size == 4 * sum(sizes)
    manifest["format_version"] = 99
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path)


# -- commands ---------------------------------------------------------------------

def test_train_eval_trace(tmp_path, capsys):
    out = tmp_path / "ck"
    assert cli.main(["train", "--data", str(DATA), "--task", "1", "--out", str(out), *QUICK]) == 0
    text = capsys.readouterr().out
    assert text.strip().splitlines()[-1].startswith("test_error=")
    assert "restart=0 epoch=1 " in text
    assert json.loads((out / "manifest.json").read_text())["model_config"]["hidden_size"] == 8

    assert cli.main(["eval", str(out), "--data", str(DATA), "--task", "1"]) == 0
    assert capsys.readouterr().out.startswith("split=test examples=20 error=")

    assert cli.main(["trace", str(out), "--data", str(DATA), "--task", "1", "--example", "0,1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    header = lines[1].split("\t")
    assert header == ["t", "sentence", "z1", "z1_bwd", "r1_fwd", "r1_bwd", "z2"]
    row = lines[2].split("\t")
    assert len(row) == len(header)
    assert all(0.0 <= float(v) <= 1.0 for v in row[2:])
    assert any(line.startswith("predicted\t") for line in lines)
    assert sum(line.startswith("example\t") for line in lines) == 2

    assert cli.main(["trace", str(out), "--data", str(DATA), "--task", "1", "--human"]) == 0
    row = capsys.readouterr().out.splitlines()[2].split("\t")
    assert all(len(v.split(".")[1]) == 2 for v in row[2:])

    assert cli.main(["trace", str(out), "--data", str(DATA), "--task", "1", "--example", "500"]) == 1


def test_config_file_overrides(tmp_path):
    cfg = tmp_path / "wide.cfg"
    cfg.write_text("hidden_size = 12\nmax_epochs = 1\nrestarts = 1\n")
    out = tmp_path / "ck"
    assert cli.main(["train", "--config", str(cfg), "--data", str(DATA), "--out", str(out)]) == 0
    model, _, _ = load_checkpoint(out)
    assert model.config.hidden_size == 12 and model.A.shape[0] == 12


def test_exit_codes(tmp_path, capsys):
    assert cli.main(["train", "--data", str(tmp_path / "missing"), "--out", str(tmp_path / "o")]) == 2
    assert "missing" in capsys.readouterr().err
    assert cli.main(["train", "--data", str(DATA), "--out", str(tmp_path / "o"), "--set", "bogus=1"]) == 1
    assert "bogus" in capsys.readouterr().err
    assert cli.main(["eval", str(tmp_path / "none"), "--data", str(DATA)]) == 2
    assert cli.main(["bench", "--T", "0"]) == 1
    assert cli.main(["gradcheck", "--d", "64"]) == 1
    with pytest.raises(SystemExit) as e:
        cli.main(["frobnicate"])
    assert e.value.code == 1


def test_bench_command(capsys):
    assert cli.main(["bench", "--T", "5", "--d", "4", "--batch", "2", "--repeats", "1"]) == 0
    line = capsys.readouterr().out.strip()
    assert line.startswith("T=5 d=4 batch=2 seq_ms=") and "ratio=" in line


def test_gradcheck_command(capsys):
    assert cli.main(["gradcheck", "--d", "4", "--T", "3"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[-1] == "PASS"
    assert any(line.startswith("parallel\tqrn.W_z\t") for line in out)


def test_gradcheck_reports_failure():
    from qrn.gradcheck import model_gradcheck

    report = model_gradcheck(d=3, T=3, tolerance=1e-30)
    assert not report.passed and report.lines()[-1] == "FAIL"
