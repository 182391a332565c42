"""End-to-end command-line workflow on a small synthetic problem."""

import json
import subprocess
import sys

import pytest
from click.testing import CliRunner

from symcheck import random_knowledge_base
from symcheck.cli import cli
from symcheck.errors import SymcheckError

VAE_CFG = {
    "epochs": 2, "seed": 0,
    "model": {"latent_dim": 8, "embed_dim": 4,
              "enc_hidden": [32], "dec_hidden": [32]},
}
DIAG_CFG = {"epochs": 2, "hidden": [32], "seed": 0}
TRAIN_CFG = {
    "n_max": 4, "total_iterations": 2, "transitions_per_iter": 128,
    "batch_size": 64, "ppo_epochs": 2, "n_envs": 16,
    "actor_lr": 1e-3, "critic_lr": 1e-3, "eval_records": 40, "eval_every": 1,
    "critic_hidden": [32], "mlp_hidden": [32],
    "vae": VAE_CFG, "diagnoser": DIAG_CFG,
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """KB file, synthesized dataset, and a trained model directory."""
    root = tmp_path_factory.mktemp("cli")
    kb = random_knowledge_base(5, 12, (3, 5), (0.3, 0.9), seed=4)
    kb.save(root / "kb.json")
    (root / "train_cfg.json").write_text(json.dumps(TRAIN_CFG))
    runner = CliRunner()

    r = runner.invoke(cli, ["synth", "--kb", str(root / "kb.json"),
                            "--out", str(root / "data"),
                            "--train", "400", "--valid", "80", "--test", "80",
                            "--seed", "1"])
    assert r.exit_code == 0, r.output

    r = runner.invoke(cli, ["train", "--kb", str(root / "kb.json"),
                            "--data", str(root / "data"),
                            "--out", str(root / "model"),
                            "--config", str(root / "train_cfg.json"),
                            "--variant", "full", "--seed", "0"])
    assert r.exit_code == 0, r.output
    return root


class TestSynth:
    def test_outputs(self, workspace):
        data = workspace / "data"
        assert (data / "kb.json").exists()
        assert len((data / "train.jsonl").read_text().splitlines()) == 400
        assert len((data / "test.jsonl").read_text().splitlines()) == 80


class TestComponentPretraining:
    def test_pretrain_vae(self, workspace, tmp_path):
        cfg = tmp_path / "vae.json"
        cfg.write_text(json.dumps(VAE_CFG))
        r = CliRunner().invoke(cli, ["pretrain-vae",
                                     "--data", str(workspace / "data"),
                                     "--out", str(tmp_path / "vae.pt"),
                                     "--config", str(cfg)])
        assert r.exit_code == 0, r.output
        assert (tmp_path / "vae.pt").exists()

    def test_train_diagnoser(self, workspace, tmp_path):
        cfg = tmp_path / "diag.json"
        cfg.write_text(json.dumps(DIAG_CFG))
        r = CliRunner().invoke(cli, ["train-diagnoser",
                                     "--data", str(workspace / "data"),
                                     "--out", str(tmp_path / "diag.pt"),
                                     "--config", str(cfg)])
        assert r.exit_code == 0, r.output
        assert (tmp_path / "diag.pt").exists()


class TestTrain:
    def test_artifacts(self, workspace):
        model = workspace / "model"
        for name in ("agent.pt", "diagnoser.pt", "vae.pt", "config.json",
                     "metrics.jsonl"):
            assert (model / name).exists(), name
        saved = json.loads((model / "config.json").read_text())
        assert saved["variant"] == "full"
        assert saved["total_iterations"] == 2

    def test_cli_overrides_beat_config_file(self, workspace, tmp_path):
        r = CliRunner().invoke(cli, ["train", "--kb", str(workspace / "kb.json"),
                                     "--data", str(workspace / "data"),
                                     "--out", str(tmp_path / "m"),
                                     "--config", str(workspace / "train_cfg.json"),
                                     "--variant", "no_vae", "--seed", "7",
                                     "--iterations", "1"])
        assert r.exit_code == 0, r.output
        saved = json.loads((tmp_path / "m" / "config.json").read_text())
        assert saved["variant"] == "no_vae"
        assert saved["seed"] == 7
        assert saved["total_iterations"] == 1
        assert not (tmp_path / "m" / "vae.pt").exists()


class TestEvalAndBaselines:
    def test_eval_prints_report(self, workspace):
        r = CliRunner().invoke(cli, ["eval", "--model-dir", str(workspace / "model"),
                                     "--data", str(workspace / "data"),
                                     "--split", "test", "--limit", "40"])
        assert r.exit_code == 0, r.output
        report = json.loads(r.output)
        assert report["n_records"] == 40
        assert set(report["top_k"]) == {"1", "3", "5"}

    def test_baseline_random(self, workspace):
        r = CliRunner().invoke(cli, ["baseline",
                                     "--model-dir", str(workspace / "model"),
                                     "--data", str(workspace / "data"),
                                     "--kind", "random", "--budget", "3",
                                     "--limit", "40", "--seed", "0"])
        assert r.exit_code == 0, r.output
        report = json.loads(r.output)
        assert report["mean_turns"] == 3.0

    def test_baseline_full(self, workspace):
        r = CliRunner().invoke(cli, ["baseline",
                                     "--model-dir", str(workspace / "model"),
                                     "--data", str(workspace / "data"),
                                     "--kind", "full", "--limit", "40"])
        assert r.exit_code == 0, r.output
        report = json.loads(r.output)
        assert report["mean_turns"] is None


class TestAblate:
    def test_reports_every_variant(self, workspace, tmp_path):
        cfg = dict(TRAIN_CFG, total_iterations=1)
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        r = CliRunner().invoke(cli, ["ablate", "--kb", str(workspace / "kb.json"),
                                     "--data", str(workspace / "data"),
                                     "--out", str(tmp_path / "ablation"),
                                     "--config", str(path), "--limit", "40"])
        assert r.exit_code == 0, r.output
        summary = json.loads(r.output)
        assert set(summary) == {"full", "no_reward_shaping", "no_vae"}
        assert (tmp_path / "ablation" / "ablation.json").exists()


class TestErrors:
    def test_unknown_config_key_surfaces(self, workspace, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"learning_rate": 1e-3}))
        r = CliRunner().invoke(cli, ["train", "--kb", str(workspace / "kb.json"),
                                     "--out", str(tmp_path / "m"),
                                     "--config", str(bad)])
        assert r.exit_code != 0
        assert isinstance(r.exception, SymcheckError)

    def test_missing_model_dir_rejected(self, workspace, tmp_path):
        r = CliRunner().invoke(cli, ["eval", "--model-dir",
                                     str(tmp_path / "nope"),
                                     "--data", str(workspace / "data")])
        assert r.exit_code == 2

    def test_console_script_help(self):
        out = subprocess.run([sys.executable, "-m", "symcheck.cli", "--help"],
                             capture_output=True, text=True)
        assert out.returncode == 0
        for command in ("synth", "pretrain-vae", "train-diagnoser", "train",
                        "eval", "baseline", "ablate", "serve"):
            assert command in out.stdout
