"""
Tests for the command-line entry point, run in-process through main().
"""

import numpy as np
import pytest

from toddlerlab.agent import AgentNetwork
from toddlerlab.cli import (
    AGENT_CHECKPOINT,
    AUTOENCODER_CHECKPOINT,
    DATASET_FILE,
    EXIT_CONFIG,
    EXIT_NUMERICAL,
    EXIT_OK,
    METRICS_FILE,
    main,
)
from toddlerlab.config import dump_config
from toddlerlab.exceptions import NumericalException
from toddlerlab.models import Regime, Task
from toddlerlab.provenance import CONFIG_FILE, PROVENANCE_FILE
from toddlerlab.report import RESULTS_CSV, RESULTS_MD, aggregate, results_csv
from toddlerlab.transfer import CellResult


@pytest.fixture
def config_file(tmp_path, small_run_config):
    path = tmp_path / "run.toml"
    path.write_text(dump_config(small_run_config), encoding="utf-8")
    return str(path)


class TestUsage:
    """Usage and configuration errors exit with status 1."""

    def test_no_command(self, capsys):
        assert main([]) == EXIT_CONFIG
        assert "usage:" in capsys.readouterr().err

    def test_unknown_command(self):
        assert main(["fly"]) == EXIT_CONFIG

    def test_missing_required_option(self):
        assert main(["transfer"]) == EXIT_CONFIG

    def test_missing_config_file(self, tmp_path, capsys):
        code = main(["gen-data", "--config", str(tmp_path / "nope.toml"), "--out", str(tmp_path)])
        assert code == EXIT_CONFIG
        assert "Config file not found" in capsys.readouterr().err

    def test_invalid_config_value(self, tmp_path, capsys):
        path = tmp_path / "bad.toml"
        path.write_text("[sac]\ngamma = 2.0\n", encoding="utf-8")
        code = main(["gen-data", "--config", str(path), "--out", str(tmp_path / "out")])
        assert code == EXIT_CONFIG
        assert "sac.gamma" in capsys.readouterr().err

    def test_unknown_regime(self, tmp_path, capsys):
        code = main(["transfer", "--dataset", str(tmp_path / "d.tdsv"), "--regimes", "magic"])
        assert code == EXIT_CONFIG
        assert "--regimes" in capsys.readouterr().err

    def test_bad_seed_list(self, tmp_path):
        assert main(["transfer", "--dataset", str(tmp_path / "d.tdsv"), "--seeds", "1,x"]) == 1


class TestCommands:
    """Commands against a small configuration."""

    def test_gen_data(self, tmp_path, config_file, capsys):
        out = tmp_path / "data"
        assert main(["gen-data", "--config", config_file, "--size", "8", "--out", str(out)]) == 0
        printed = capsys.readouterr().out
        assert "train: 7  test: 1" in printed
        assert "train classes:" in printed
        for name in (DATASET_FILE, CONFIG_FILE, PROVENANCE_FILE):
            assert (out / name).is_file()

    def test_render_sample(self, tmp_path, config_file, capsys):
        out = tmp_path / "render"
        args = ["render-sample", "--config", config_file, "--seed", "5", "--out", str(out)]
        assert main(args + ["--object", "ball"]) == EXIT_OK
        printed = capsys.readouterr().out
        assert "class: ball" in printed
        assert "distance:" in printed
        assert (out / "sample_5_L.png").is_file()
        assert (out / "sample_5_R.png").is_file()

    def test_render_empty_scene(self, tmp_path, config_file, capsys):
        out = tmp_path / "empty"
        args = ["render-sample", "--config", config_file, "--empty-scene", "--out", str(out)]
        assert main(args) == EXIT_OK
        assert "empty scene" in capsys.readouterr().out
        assert (out / "sample_3_L.png").is_file()

    def test_train_rl_without_frames(self, tmp_path, config_file, capsys):
        out = tmp_path / "rl"
        args = ["train-rl", "--config", config_file, "--frames", "0", "--skip-eval", "--out"]
        assert main(args + [str(out)]) == EXIT_OK
        assert (out / AGENT_CHECKPOINT).is_file()
        assert (out / METRICS_FILE).read_text(encoding="utf-8").count("\n") == 1
        assert "wrote" in capsys.readouterr().out

    def test_train_autoencoder(self, tmp_path, config_file, capsys):
        out = tmp_path / "ae"
        assert main(["train-autoencoder", "--config", config_file, "--out", str(out)]) == EXIT_OK
        assert "held-out mse:" in capsys.readouterr().out
        assert (out / AUTOENCODER_CHECKPOINT).is_file()

    def test_numerical_failure_exits_2(self, tmp_path, config_file, mocker):
        mocker.patch(
            "toddlerlab.cli.train", side_effect=NumericalException("NaN in loss", "q1", 17)
        )
        out = tmp_path / "nan"
        assert main(["train-rl", "--config", config_file, "--out", str(out)]) == EXIT_NUMERICAL

    def test_eval(self, tmp_path, config_file, small_run_config, capsys):
        network = AgentNetwork.build(small_run_config.agent, 16, np.random.default_rng(0))
        checkpoint = network.save(tmp_path / "agent.ckpt")
        args = ["eval", "--config", config_file, "--checkpoint", str(checkpoint)]
        assert main(args + ["--episodes", "1"]) == EXIT_OK
        assert "eval: episodes=1" in capsys.readouterr().out

    def test_transfer(self, tmp_path, config_file, capsys):
        data = tmp_path / "data"
        assert main(["gen-data", "--config", config_file, "--size", "8", "--out", str(data)]) == 0
        out = tmp_path / "transfer"
        args = [
            "transfer",
            "--config",
            config_file,
            "--dataset",
            str(data / DATASET_FILE),
            "--regimes",
            "random",
            "--tasks",
            "distance",
            "--seeds",
            "0",
            "--out",
            str(out),
        ]
        assert main(args) == EXIT_OK
        assert "1 result rows written" in capsys.readouterr().out
        assert (out / RESULTS_CSV).is_file()
        assert (out / RESULTS_MD).is_file()

    def test_transfer_without_checkpoint(self, tmp_path, config_file, capsys):
        data = tmp_path / "data"
        assert main(["gen-data", "--config", config_file, "--size", "8", "--out", str(data)]) == 0
        args = ["transfer", "--config", config_file, "--dataset", str(data / DATASET_FILE)]
        code = main(args + ["--regimes", "proposed", "--out", str(tmp_path / "t")])
        assert code == EXIT_CONFIG
        assert "checkpoint" in capsys.readouterr().err

    def test_report(self, tmp_path, config_file, capsys):
        rows = aggregate([CellResult(Regime.RANDOM, Task.DISTANCE, 0, 12.5, (1.0,))])
        source = tmp_path / RESULTS_CSV
        source.write_text(results_csv(rows), encoding="utf-8")
        assert main(["report", "--config", config_file, "--results", str(source)]) == EXIT_OK
        assert "| Distance estimation (L1 error) | 12.5 ± 0.0 |" in capsys.readouterr().out
        assert (tmp_path / "results.md").is_file()

    def test_report_missing_results(self, tmp_path):
        assert main(["report", "--results", str(tmp_path / "none.csv")]) == EXIT_CONFIG

    def test_report_write_failure_exits_1(self, tmp_path, config_file, mocker, capsys):
        rows = aggregate([CellResult(Regime.RANDOM, Task.DISTANCE, 0, 12.5, (1.0,))])
        source = tmp_path / RESULTS_CSV
        source.write_text(results_csv(rows), encoding="utf-8")
        writer = mocker.patch(
            "toddlerlab.cli.atomic_write_bytes", side_effect=OSError("No space left on device")
        )
        args = ["report", "--config", config_file, "--results", str(source)]
        assert main(args) == EXIT_CONFIG
        assert writer.call_args.args[0] == tmp_path / RESULTS_MD
        assert "No space left on device" in capsys.readouterr().err
        assert not (tmp_path / RESULTS_MD).exists()
