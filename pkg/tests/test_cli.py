"""Command-line interface: config handling, outputs, exit codes, determinism."""

import json

import pytest

from edwards3d.cli import ConfigError, load_config, main, write_csv


def run(args):
    return main(args)


def test_defaults_and_overrides():
    cfg = load_config(None, ["lambda=2.5", "n_steps=64"])
    assert cfg["lambda"] == "2.5"
    assert cfg["n_steps"] == "64"
    assert cfg["direction_preset"] == "linear"


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        load_config(None, ["bogus=1"])
    with pytest.raises(ConfigError):
        load_config(None, ["notkeyvalue"])


def test_config_file_parsing(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[run]\nlambda = 0.5\nseed = 123\n")
    cfg = load_config(str(ini), ["seed=456"])
    assert cfg["lambda"] == "0.5"
    assert cfg["seed"] == "456"  # overrides beat the file
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.ini"), [])


def test_config_file_unknown_key(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[run]\nwhatever = 1\n")
    with pytest.raises(ConfigError):
        load_config(str(ini), [])


def test_csv_17_significant_digits(tmp_path):
    out = tmp_path / "x.csv"
    write_csv(out, ["a", "b"], [(1.0 / 3.0, "tag")])
    text = out.read_text()
    assert "0.33333333333333331" in text
    assert text.startswith("a,b\n")


def test_bad_value_exits_1(tmp_path):
    assert run(["sample", "--set", "replicas=abc",
                "--set", f"output_dir={tmp_path}"]) == 1
    assert run(["sample", "--set", "nonsense=1"]) == 1


def test_verify_requires_seed(tmp_path):
    assert run(["verify", "--set", f"output_dir={tmp_path}"]) == 1


def test_renorm_writes_csv_and_manifest(tmp_path):
    code = run(["renorm", "--set", "eps_list=0.5,0.25",
                "--set", f"output_dir={tmp_path}"])
    assert code == 0
    rows = (tmp_path / "renorm_constants.csv").read_text().strip().split("\n")
    assert len(rows) == 3  # header + two values
    manifest = json.loads((tmp_path / "renorm_manifest.json").read_text())
    assert manifest["command"] == "renorm"
    assert len(manifest["content_hash"]) == 64


def test_moments_deterministic_given_seed(tmp_path):
    argv = ["moments", "--set", "replicas=200", "--set", "seed=5",
            "--set", "eps_list=0.25", "--set", "a_list=0.1"]
    d1, d2 = tmp_path / "r1", tmp_path / "r2"
    assert run(argv + ["--set", f"output_dir={d1}"]) == 0
    assert run(argv + ["--set", f"output_dir={d2}"]) == 0
    assert (d1 / "moments.csv").read_bytes() == (d2 / "moments.csv").read_bytes()


def test_sample_outputs_are_consistent(tmp_path):
    code = run(["sample", "--set", "replicas=300", "--set", "seed=4",
                "--set", "n_steps=64", "--set", "eps=0.2", "--set", "a=0.1",
                "--set", f"output_dir={tmp_path}"])
    assert code == 0
    summary = (tmp_path / "sample_summary.csv").read_text().strip().split("\n")
    header, row = summary
    values = dict(zip(header.split(","), row.split(",")))
    assert float(values["replicas"]) == 300
    assert 0.0 < float(values["ess"]) <= 300.0


def test_verify_subset_via_scale_writes_verdicts(tmp_path):
    # full verify is exercised elsewhere; here a tiny-scale run checks the
    # wiring: criteria CSV, detail CSV, manifest, and the failure exit code
    code = run(["verify", "--set", "seed=11", "--set", "replicas_scale=0.01",
                "--set", f"output_dir={tmp_path}"])
    assert code in (0, 2)
    text = (tmp_path / "verify_criteria.csv").read_text()
    assert text.count("\n") == 11  # header + 10 criteria
    assert (tmp_path / "verify_details.csv").exists()
    manifest = json.loads((tmp_path / "verify_manifest.json").read_text())
    assert manifest["seed"] == "11"
