"""End-to-end tests for the iqclab command line: configs in, JSON/CSV artifacts out, exit codes."""
import json
import logging

import pytest

from iqclab import iqclab
from iqclab.core.settings import Settings
from iqclab.version import VERSION

NEMATIC = {"model": "nematic", "rho": [-1.0, 0.0, 1.0]}


def _config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


def _error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


class TestEvalEnvelope:
    def test_value_and_region(self, tmp_path, capsys):
        config = _config(tmp_path, {"kind": "iqc", "rho": [-1, 0, 1], "Z": [-2, 0, 0, 0, 0, 0, 0, 0, 2]})
        assert iqclab.run(["eval-envelope", "--config", config]) == 0
        artifact = json.loads(capsys.readouterr().out)
        assert artifact["result"]["value"] == pytest.approx(4.0)
        assert artifact["result"]["region"] == 3
        assert artifact["config"]["command"] == "eval-envelope"
        assert artifact["config"]["version"] == VERSION
        assert artifact["config"]["seed"] == 0

    def test_infinite_value_is_written_as_a_string(self, tmp_path, capsys):
        config = _config(tmp_path, {"kind": "iqc", "rho": [-1, 0, 1], "Z": [[1, 0, 0], [0, 1, 0], [0, 0, 1]]})
        assert iqclab.run(["eval-envelope", "-c", config]) == 0
        result = json.loads(capsys.readouterr().out)["result"]
        assert result["value"] == "Infinity"
        assert result["region"] is None

    def test_scaled_limit_csv(self, tmp_path, capsys):
        config = _config(tmp_path, {"kind": "scaled_limit", "rho": [-1, 0, 1], "Z": [-2, 0, 0, 0, 0, 0, 0, 0, 2]})
        assert iqclab.run(["eval-envelope", "-c", config, "--format", "csv"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].startswith("# config: ")
        assert lines[1] == "eps,value,limit,gap,seed"
        assert len(lines) == 5


class TestErrors:
    def test_malformed_config_writes_nothing(self, tmp_path, capsys):
        config = _config(tmp_path, {"kind": "iqc", "rho": [-1, 0, 1]})
        output = tmp_path / "out.json"
        assert iqclab.run(["eval-envelope", "-c", config, "-o", str(output)]) == 2
        assert not output.exists()
        assert _error(capsys)["error"] == "validation"

    def test_unsorted_rho(self, tmp_path, capsys):
        config = _config(tmp_path, {"model": {"model": "nematic", "rho": [1, 0, -1]}, "X": [0] * 9})
        assert iqclab.run(["eval-density", "-c", config]) == 2
        assert _error(capsys)["details"]

    def test_unknown_keys_rejected(self, tmp_path, capsys):
        config = _config(tmp_path, {"kind": "iqc", "rho": [-1, 0, 1], "Z": [0] * 9, "colour": "red"})
        assert iqclab.run(["eval-envelope", "-c", config]) == 2

    def test_missing_config(self, capsys):
        assert iqclab.run(["eval-envelope"]) == 2
        assert "--config" in _error(capsys)["message"]

    def test_missing_file(self, tmp_path, capsys):
        assert iqclab.run(["eval-envelope", "-c", str(tmp_path / "absent.json")]) == 2

    def test_unknown_command(self, capsys):
        assert iqclab.run(["frobnicate"]) == 2

    def test_q_fd_needs_a_single_well(self, tmp_path, capsys):
        config = _config(tmp_path, {"model": NEMATIC, "kind": "Q_fd", "X": [1, 0, 0, 0, -1, 0, 0, 0, 0]})
        assert iqclab.run(["eval-density", "-c", config]) == 2

    def test_bad_jobs(self, tmp_path, capsys):
        config = _config(tmp_path, {"kind": "iqc", "rho": [-1, 0, 1], "Z": [0] * 9})
        assert iqclab.run(["eval-envelope", "-c", config, "--jobs", "0"]) == 2


class TestSchemaAndSeeds:
    def test_print_schema(self, capsys):
        assert iqclab.run(["check-c", "--print-schema"]) == 0
        schema = json.loads(capsys.readouterr().out)
        assert "samples" in schema["properties"]

    def test_log_level_from_settings(self, monkeypatch, capsys):
        seen = {}
        monkeypatch.setattr(iqclab, "settings", Settings(LOG_LEVEL="debug"))
        monkeypatch.setattr(iqclab.logging, "basicConfig", lambda **kwargs: seen.update(kwargs))
        assert iqclab.run(["check-c", "--print-schema"]) == 0
        assert seen["level"] == logging.DEBUG

    def test_log_level_flag_wins(self, monkeypatch, capsys):
        seen = {}
        monkeypatch.setattr(iqclab, "settings", Settings(LOG_LEVEL="debug"))
        monkeypatch.setattr(iqclab.logging, "basicConfig", lambda **kwargs: seen.update(kwargs))
        assert iqclab.run(["check-c", "--print-schema", "--log-level", "ERROR"]) == 0
        assert seen["level"] == "ERROR"

    def test_flag_overrides_config_seed(self, tmp_path, capsys):
        config = _config(tmp_path, {"kind": "iqc", "rho": [-1, 0, 1], "Z": [0] * 9, "seed": 5})
        assert iqclab.run(["eval-envelope", "-c", config, "--seed", "7"]) == 0
        artifact = json.loads(capsys.readouterr().out)
        assert artifact["config"]["seed"] == 7
        assert artifact["result"]["seed"] == 7

    def test_config_seed_used(self, tmp_path, capsys):
        config = _config(tmp_path, {"kind": "iqc", "rho": [-1, 0, 1], "Z": [0] * 9, "seed": 5})
        assert iqclab.run(["eval-envelope", "-c", config]) == 0
        assert json.loads(capsys.readouterr().out)["result"]["seed"] == 5

    def test_check_c_is_reproducible(self, tmp_path):
        config = _config(tmp_path, {"model": NEMATIC, "r": 1.0, "eps_list": [0.1, 0.05], "samples": 1000})
        first, second = tmp_path / "a.csv", tmp_path / "b.csv"
        assert iqclab.run(["check-c", "-c", config, "--seed", "3", "-f", "csv", "-o", str(first)]) == 0
        assert iqclab.run(["check-c", "-c", config, "--seed", "3", "-f", "csv", "-o", str(second)]) == 0
        assert first.read_bytes() == second.read_bytes()
        assert first.read_text().splitlines()[1].startswith("eps,sup_deviation")


class TestDensityAndFieldCommands:
    def test_eval_density_identity(self, tmp_path, capsys):
        config = _config(tmp_path, {"model": NEMATIC, "kind": "W", "eps": 0.1, "X": [1, 0, 0, 0, 1, 0, 0, 0, 1]})
        assert iqclab.run(["eval-density", "-c", config]) == 0
        assert json.loads(capsys.readouterr().out)["result"]["value"] == pytest.approx(0.0401, abs=1e-4)

    def test_eval_density_limit(self, tmp_path, capsys):
        config = _config(tmp_path, {"model": NEMATIC, "kind": "V", "X": [-2, 0, 0, 0, 0, 0, 0, 0, 2]})
        assert iqclab.run(["eval-density", "-c", config]) == 0
        assert json.loads(capsys.readouterr().out)["result"]["value"] == pytest.approx(4.0)

    def test_flow(self, tmp_path, capsys):
        config = _config(tmp_path, {"n": 2, "m": 8, "eps": 0.1, "steps": 16})
        assert iqclab.run(["flow", "-c", config]) == 0
        result = json.loads(capsys.readouterr().out)["result"]
        assert result["det_residual"] < 1e-6
        assert result["residual_source"] == "tangent"

    def test_correct_div_and_extend(self, tmp_path, capsys):
        config = _config(tmp_path, {"n": 2, "m": 8, "outer_m": 12})
        assert iqclab.run(["correct-div", "-c", config]) == 0
        result = json.loads(capsys.readouterr().out)["result"]
        assert result["max_divergence"] < 1e-8
        assert result["field"]["m"] == 12

    def test_cell_problem(self, tmp_path, capsys):
        config = _config(tmp_path, {
            "density": {"kind": "quadratic"},
            "X": [0.2, 0, 0, 0, -0.2, 0, 0, 0, 0],
            "m": 4,
            "optimizer": {"restarts": 1, "max_iters": 50},
        })
        assert iqclab.run(["cell-problem", "-c", config]) == 0
        result = json.loads(capsys.readouterr().out)["result"]
        assert result["value"] == pytest.approx(result["base_value"], abs=1e-10)
        assert result["constraint"] == "div-free"

    def test_cell_problem_zero_density(self, tmp_path, capsys):
        config = _config(tmp_path, {
            "density": {"kind": "zero"},
            "X": [0.3, 0, 0, 0, -0.1, 0, 0, 0, -0.2],
            "m": 4,
            "constraint": "none",
            "optimizer": {"restarts": 2, "max_iters": 20},
        })
        assert iqclab.run(["cell-problem", "-c", config]) == 0
        result = json.loads(capsys.readouterr().out)["result"]
        assert result["value"] == 0.0
        assert result["base_value"] == 0.0

    def test_output_file(self, tmp_path, capsys):
        config = _config(tmp_path, {"kind": "iqc", "rho": [-1, 0, 1], "Z": [0] * 9})
        output = tmp_path / "nested" / "value.json"
        assert iqclab.run(["eval-envelope", "-c", config, "-o", str(output)]) == 0
        assert capsys.readouterr().out == ""
        assert json.loads(output.read_text())["result"]["value"] == 0.0
        assert not [p for p in output.parent.iterdir() if p.name.endswith(".tmp")]
