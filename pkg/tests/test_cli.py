import csv
import json

import pytest

from aklab import DEFAULT_SEED
from aklab.cli import DEFAULTS, EXIT_CHECK, EXIT_CONFIG, EXIT_IO, EXIT_OK, ConfigError, main, resolve_config


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestConfig:
    def test_defaults_filled(self):
        cfg = resolve_config({"experiment": "solve"})
        assert cfg["seed"] == DEFAULT_SEED and cfg["n"] == DEFAULTS["solve"]["n"]

    def test_model_merged_over_defaults(self):
        cfg = resolve_config({"experiment": "solve", "model": {"f": {"kind": "constant", "coefficients": [0.0]}}})
        assert cfg["model"]["sigma"] == DEFAULTS["solve"]["model"]["sigma"]

    def test_foreign_field(self):
        with pytest.raises(ConfigError, match="eps_list"):
            resolve_config({"experiment": "solve", "eps_list": [0.1]})

    def test_schema_error_names_field(self):
        with pytest.raises(ConfigError, match="n_paths"):
            resolve_config({"experiment": "solve", "n_paths": -5})

    def test_unknown_experiment(self):
        with pytest.raises(ConfigError):
            resolve_config({"experiment": "fourier"})

    def test_unbounded_f_rejected(self):
        with pytest.raises(ConfigError):
            resolve_config({"experiment": "solve", "model": {"f": {"kind": "polynomial", "coefficients": [0.0, 1.0]}}})

    def test_seed_override(self):
        assert resolve_config({"experiment": "solve", "seed": 3}, seed=9)["seed"] == 9


class TestRun:
    def test_solve_outputs(self, tmp_path):
        out = tmp_path / "out"
        assert main(["run", str(write(tmp_path, {"experiment": "solve"})), "--out", str(out)]) == EXIT_OK
        rows = read_rows(out / "trajectories.csv")
        assert len(rows) == 170
        assert rows[0]["residual"] == "" and rows[1]["residual"] != ""
        assert (out / "trajectories.csv").read_bytes().count(b"\r\n") == 171
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["seed"] == DEFAULT_SEED
        assert {"checks.csv", "summary.txt"} <= {p.name for p in out.iterdir()}

    def test_rerun_from_manifest_is_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["run", str(write(tmp_path, {"experiment": "solve", "n_paths": 3})), "--out", str(a)]) == EXIT_OK
        assert main(["run", str(a / "manifest.json"), "--out", str(b)]) == EXIT_OK
        for f in a.iterdir():
            assert f.read_bytes() == (b / f.name).read_bytes()

    def test_threads_do_not_change_output(self, tmp_path):
        cfg = write(tmp_path, {"experiment": "solve", "n_paths": 4})
        assert main(["run", str(cfg), "--out", str(tmp_path / "a")]) == EXIT_OK
        assert main(["run", str(cfg), "--out", str(tmp_path / "b"), "--threads", "3"]) == EXIT_OK
        assert (tmp_path / "a" / "trajectories.csv").read_bytes() == (tmp_path / "b" / "trajectories.csv").read_bytes()

    def test_failed_check_exit_code(self, tmp_path):
        cfg = write(tmp_path, {"experiment": "nearmart", "fixture": "drift", "n_paths": 1000})
        assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CHECK
        assert "overall: FAIL" in (tmp_path / "o" / "summary.txt").read_text()

    def test_invalid_config_exit_code(self, tmp_path, capsys):
        cfg = write(tmp_path, {"experiment": "solve", "n": "many"})
        assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
        assert "n:" in capsys.readouterr().err
        assert not (tmp_path / "o").exists()

    def test_malformed_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{")
        assert main(["run", str(p)]) == EXIT_CONFIG

    def test_missing_file(self, tmp_path):
        assert main(["run", str(tmp_path / "none.json")]) == EXIT_IO

    def test_check_only(self, tmp_path, capsys):
        cfg = write(tmp_path, {"experiment": "ldp-rate"})
        assert main(["run", str(cfg), "--check", "--out", str(tmp_path / "o")]) == EXIT_OK
        assert "valid ldp-rate" in capsys.readouterr().out
        assert not (tmp_path / "o").exists()

    def test_environment_output_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("AKLAB_OUT", str(tmp_path / "env"))
        assert main(["run", str(write(tmp_path, {"experiment": "solve", "n_paths": 2}))]) == EXIT_OK
        assert (tmp_path / "env" / "manifest.json").exists()

    def test_bad_threads(self, tmp_path):
        assert main(["run", str(write(tmp_path, {"experiment": "solve"})), "--threads", "0"]) == EXIT_CONFIG

    @pytest.mark.parametrize(
        "cfg,sweep",
        [
            ({"experiment": "integral-refinement", "levels": [16, 32, 64], "n_paths": 5}, True),
            ({"experiment": "optional-stopping", "n": 32, "n_paths": 2000}, False),
            ({"experiment": "ldp-rate", "n": 16}, False),
            ({"experiment": "ldp-mc", "n": 8, "n_paths": 2000, "eps_list": [0.5, 0.3], "tilt": True}, True),
            ({"experiment": "exp-equiv", "n": 8, "n_paths": 500}, True),
        ],
    )
    def test_every_experiment_runs(self, tmp_path, cfg, sweep):
        out = tmp_path / "o"
        assert main(["run", str(write(tmp_path, cfg)), "--out", str(out)]) in (EXIT_OK, EXIT_CHECK)
        assert (out / "checks.csv").exists() and (out / "summary.txt").exists()
        if sweep:
            assert any(p.suffix == ".svg" for p in out.iterdir())
