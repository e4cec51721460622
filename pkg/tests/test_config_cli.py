import json

import numpy as np
import pytest

from fedmrl.cli import main
from fedmrl.config import (
    ConfigError,
    build_run_config,
    load_config,
    override,
    parse_config_text,
    parse_mode,
    parse_sweep,
)
from fedmrl.core import InferenceVariant
from fedmrl.federation import Mode

GOOD_CONFIG = """\
# minimal working experiment
schema_version = 1
partition = dirichlet
alpha = 2.0
n_clients = 3
rounds = 2
d1 = 2
d2 = 4
classes = 3
input_dim = 4
per_class = 30
spread = 0.5
global_hidden = 6
local_hidden = 8;7
seed = 1
"""


def write_config(tmp_path, text=GOOD_CONFIG, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_parse_good_config():
    cfg = parse_config_text(GOOD_CONFIG)
    assert cfg.partition == "dirichlet" and cfg.alpha == 2.0
    assert cfg.global_hidden == (6,)
    assert cfg.local_hidden == ((8,), (7,))
    assert cfg.mode is Mode.FEDMRL
    assert cfg.inference is InferenceVariant.MIX_LARGE
    assert cfg.target_accuracy is None


def test_defaults_are_applied():
    cfg = parse_config_text(GOOD_CONFIG)
    assert cfg.participation == 1.0
    assert cfg.batch_size == 8
    assert cfg.lr == 0.05 and cfg.lr_global is None
    run = build_run_config(cfg)
    assert run.lr_global == run.lr_local == run.lr_projector == 0.05


def test_lr_overrides_take_precedence():
    cfg = parse_config_text(GOOD_CONFIG + "lr = 0.1\nlr_projector = 0.01\n")
    run = build_run_config(cfg)
    assert run.lr_global == 0.1 and run.lr_local == 0.1 and run.lr_projector == 0.01


def test_unknown_key_is_rejected_with_line_number():
    with pytest.raises(ConfigError, match="line 2: unknown key 'learning_rate'"):
        parse_config_text("schema_version = 1\nlearning_rate = 0.1\n")


def test_duplicate_key_is_rejected():
    with pytest.raises(ConfigError, match="duplicate key"):
        parse_config_text(GOOD_CONFIG + "alpha = 3.0\n")


def test_missing_required_key():
    with pytest.raises(ConfigError, match="missing required key 'rounds'"):
        parse_config_text("schema_version = 1\npartition = dirichlet\nn_clients = 2\nd1 = 2\nd2 = 4\n")


def test_wrong_schema_version():
    with pytest.raises(ConfigError, match="schema_version"):
        parse_config_text(GOOD_CONFIG.replace("schema_version = 1", "schema_version = 2"))


def test_bad_value_carries_line_number():
    bad = GOOD_CONFIG.replace("alpha = 2.0", "alpha = lots")
    with pytest.raises(ConfigError, match="line 4: alpha"):
        parse_config_text(bad)


def test_semantic_validation_via_run_config():
    with pytest.raises(ConfigError, match="d1"):
        parse_config_text(GOOD_CONFIG.replace("d1 = 2", "d1 = 9"))


def test_mode_tokens():
    assert parse_mode("no-mrl") is Mode.NO_MRL
    assert parse_mode("NO_MRL") is Mode.NO_MRL
    assert parse_mode("standalone") is Mode.STANDALONE
    with pytest.raises(ValueError):
        parse_mode("federated")


def test_parse_sweep():
    key, pairs = parse_sweep("d1=2,3,4")
    assert key == "d1" and pairs == [("2", 2), ("3", 3), ("4", 4)]
    key, pairs = parse_sweep("alpha=0.1,1000")
    assert pairs[0] == ("0.1", 0.1)
    with pytest.raises(ConfigError):
        parse_sweep("nope=1")
    with pytest.raises(ConfigError):
        parse_sweep("schema_version=2")
    with pytest.raises(ConfigError):
        parse_sweep("d1")
    with pytest.raises(ConfigError):
        parse_sweep("d1=two")


def test_override_revalidates():
    cfg = parse_config_text(GOOD_CONFIG)
    with pytest.raises(ConfigError):
        override(cfg, d1=100)
    assert override(cfg, seed=9).seed == 9


def test_load_config_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        load_config("/nonexistent/path.cfg")


def test_cli_run_writes_reports(tmp_path, capsys):
    config = write_config(tmp_path)
    out = tmp_path / "out"
    code = main(["run", "--config", str(config), "--out", str(out)])
    assert code == 0
    assert (out / "report.csv").exists()
    assert (out / "report.json").exists()
    doc = json.loads((out / "report.json").read_text())
    assert doc["mode"] == "fedmrl"
    assert len(doc["reports"]) == 2
    assert "final_avg_acc" in capsys.readouterr().out


def test_cli_mode_and_seed_overrides(tmp_path):
    config = write_config(tmp_path)
    out = tmp_path / "out"
    code = main(
        ["run", "--config", str(config), "--mode", "no-mrl", "--seed", "7", "--out", str(out)]
    )
    assert code == 0
    doc = json.loads((out / "report.json").read_text())
    assert doc["mode"] == "no_mrl"
    assert doc["seed"] == 7
    assert doc["reports"][0]["uplink_params"] > 0  # ablation still communicates


def test_cli_standalone_reports_zero_communication(tmp_path):
    config = write_config(tmp_path)
    out = tmp_path / "out"
    assert main(["run", "--config", str(config), "--mode", "standalone", "--out", str(out)]) == 0
    doc = json.loads((out / "report.json").read_text())
    assert all(r["uplink_params"] == 0 and r["downlink_params"] == 0 for r in doc["reports"])


def test_cli_sweep_writes_one_file_pair_per_value(tmp_path):
    config = write_config(tmp_path)
    out = tmp_path / "out"
    code = main(
        ["run", "--config", str(config), "--sweep", "d1=2,4", "--out", str(out)]
    )
    assert code == 0
    for token in ("2", "4"):
        assert (out / f"report_d1_{token}.csv").exists()
        assert (out / f"report_d1_{token}.json").exists()


def test_cli_rerun_is_byte_identical(tmp_path):
    config = write_config(tmp_path)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", str(config), "--out", str(out_a)]) == 0
    assert main(["run", "--config", str(config), "--out", str(out_b)]) == 0
    assert (out_a / "report.csv").read_bytes() == (out_b / "report.csv").read_bytes()
    assert (out_a / "report.json").read_bytes() == (out_b / "report.json").read_bytes()


def test_cli_ablation_pair_shares_partition_fingerprint(tmp_path):
    config = write_config(tmp_path)
    out = tmp_path / "out"
    assert main(["run", "--config", str(config), "--mode", "fedmrl", "--out", str(out)]) == 0
    fed = json.loads((out / "report.json").read_text())
    assert main(["run", "--config", str(config), "--mode", "no-mrl", "--out", str(out)]) == 0
    abl = json.loads((out / "report.json").read_text())
    assert fed["partition_fingerprint"] == abl["partition_fingerprint"]


def test_cli_failure_paths_return_nonzero(tmp_path, capsys):
    missing = main(["run", "--config", str(tmp_path / "absent.cfg")])
    assert missing == 1
    assert "error:" in capsys.readouterr().err
    bad = write_config(tmp_path, GOOD_CONFIG + "bogus = 1\n", name="bad.cfg")
    assert main(["run", "--config", str(bad)]) == 1
    capsys.readouterr()
    config = write_config(tmp_path)
    assert main(["run", "--config", str(config), "--sweep", "nope=1"]) == 1


def test_cli_target_accuracy_round_recorded(tmp_path):
    # target so low the first round reaches it
    config = write_config(tmp_path, GOOD_CONFIG + "target_accuracy = 0.01\n")
    out = tmp_path / "out"
    assert main(["run", "--config", str(config), "--out", str(out)]) == 0
    doc = json.loads((out / "report.json").read_text())
    assert doc["target_accuracy"] == 0.01
    assert doc["first_round_reaching_target"] == 1


def test_csv_dataset_source(tmp_path):
    from fedmrl.data import gen_synthetic, save_csv
    from fedmrl.numerics import make_rng

    ds = gen_synthetic(3, 4, 30, 0.5, make_rng(0))
    csv_path = tmp_path / "data.csv"
    save_csv(ds, csv_path)
    text = GOOD_CONFIG + f"dataset = csv\ncsv_path = {csv_path}\n"
    config = write_config(tmp_path, text)
    out = tmp_path / "out"
    assert main(["run", "--config", str(config), "--out", str(out)]) == 0
    doc = json.loads((out / "report.json").read_text())
    assert len(doc["reports"]) == 2


def test_cli_runs_on_checked_in_fixture(tmp_path):
    from pathlib import Path

    fixture = Path(__file__).parent / "fixtures" / "tiny.csv"
    text = (
        "schema_version = 1\n"
        "partition = class_count\n"
        "classes_per_client = 1\n"
        "n_clients = 2\n"
        "rounds = 3\n"
        "d1 = 2\n"
        "d2 = 4\n"
        "dataset = csv\n"
        f"csv_path = {fixture}\n"
    )
    config = write_config(tmp_path, text)
    out = tmp_path / "out"
    assert main(["run", "--config", str(config), "--out", str(out)]) == 0
    doc = json.loads((out / "report.json").read_text())
    assert len(doc["reports"]) == 3
    assert len(doc["reports"][0]["per_client_accuracy"]) == 2


def test_sweep_alpha_filenames_keep_decimal_token(tmp_path):
    config = write_config(tmp_path)
    out = tmp_path / "out"
    assert main(["run", "--config", str(config), "--sweep", "alpha=0.1,1000", "--out", str(out)]) == 0
    assert (out / "report_alpha_0.1.json").exists()
    assert (out / "report_alpha_1000.json").exists()
    # the swept value actually differs between the runs
    lo = json.loads((out / "report_alpha_0.1.json").read_text())
    hi = json.loads((out / "report_alpha_1000.json").read_text())
    assert lo["partition_fingerprint"] != hi["partition_fingerprint"]
