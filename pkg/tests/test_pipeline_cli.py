import json
import shutil

import numpy as np
import pytest

from projsynth import cli
from projsynth.errors import ConfigurationError, IncompatibleCheckpointError, UnknownPromptError
from projsynth.io.checkpoint import Checkpoint
from projsynth.io.previews import read_loss_log, read_pgm
from projsynth.io.prot import read_prot, write_prot
from projsynth.pipeline import (RunConfig, cmd_build_dataset, cmd_evaluate, cmd_metrics, cmd_sample, cmd_train,
                                generate, load_models)

TINY = {
    "prompts": ["disks", "bars"], "image_size": 32, "phantoms_per_prompt": 6, "views": 32, "detectors": 32,
    "autoencoder": {"epochs": 1, "base_channels": 8, "num_res_blocks": 1, "codebook_size": 16},
    "diffusion": {"steps": 3, "base_channels": 8, "channel_mult": [1, 2], "num_res_blocks": 1, "lr": 1e-3,
                  "batch_size": 4, "embedding_dim": 8},
    "sharpnet": {"epochs": 1, "base_channels": 4},
    "steps": 4, "n_samples": 3,
}
REPORT_KEYS = {"fid", "is_mean", "is_std", "kid_mean", "kid_std", "n_real", "n_gen", "extractor", "kernel", "seed"}


def tiny_config(root, **extra):
    return RunConfig.from_dict({**TINY, "dataset": str(root / "data"), "out": str(root / "run"), **extra})


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    cfg = tiny_config(root)
    cmd_build_dataset(cfg)
    cmd_train(cfg, log=None)
    return root, cfg


class TestConfig:
    def test_defaults(self):
        cfg = RunConfig()
        assert cfg.diffusion["lr"] == 2e-6 and cfg.diffusion["optimizer"] == "adamw"
        assert cfg.sharpnet["lr"] == 1e-3 and cfg.steps == 72 and cfg.eta == 1.0

    def test_override_and_validation(self):
        cfg = RunConfig().override(seed=5, steps=None, factor=8)
        assert cfg.seed == 5 and cfg.steps == 72 and cfg.factor == 8
        with pytest.raises(ConfigurationError):
            RunConfig.from_dict({"bogus": 1})
        with pytest.raises(ConfigurationError):
            RunConfig(factor=2)
        with pytest.raises(ConfigurationError):
            RunConfig(seed=None)

    def test_json(self, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps({"seed": 3, "prompts": ["  Disks "]}))
        cfg = RunConfig.from_json(tmp_path / "c.json")
        assert cfg.seed == 3 and cfg.prompts == ["disks"]
        with pytest.raises(ConfigurationError):
            RunConfig.from_json(tmp_path / "missing.json")


class TestTrain:
    def test_missing_dataset(self, tmp_path):
        with pytest.raises(ConfigurationError, match="dataset"):
            cmd_train(tiny_config(tmp_path), log=None)
        assert not (tmp_path / "run").exists()

    def test_stages_and_logs(self, trained):
        root, cfg = trained
        for stage in ("autoencoder", "diffusion", "sharpnet"):
            assert Checkpoint.exists(root / "run" / stage)
        for log in ("autoencoder", "diffusion", "sharpnet"):
            assert len(read_loss_log(root / "run" / "logs" / f"{log}_loss.csv")) > 0
        diff = Checkpoint.load(root / "run" / "diffusion")
        assert diff.config["autoencoder_hash"] == Checkpoint.load(root / "run" / "autoencoder").config["hash"]

    def test_resume_skips_completed(self, trained, tmp_path):
        root, cfg = trained
        run = tmp_path / "run"
        shutil.copytree(root / "run", run)
        shutil.rmtree(run / "sharpnet")
        before = (run / "diffusion" / "manifest.json").read_text()
        messages = []
        cmd_train(cfg.override(out=str(run)), log=messages.append)
        assert "skipping" in messages[0] and "skipping" in messages[1] and "skipping" not in messages[2]
        assert (run / "diffusion" / "manifest.json").read_text() == before
        assert Checkpoint.exists(run / "sharpnet")

    def test_deterministic(self, trained, tmp_path):
        root, cfg = trained
        cmd_train(cfg.override(out=str(tmp_path / "again")), log=None)
        for stage in ("autoencoder", "diffusion", "sharpnet"):
            a = Checkpoint.load(root / "run" / stage)
            b = Checkpoint.load(tmp_path / "again" / stage)
            assert a.config == b.config
            assert all(np.array_equal(a.tensors[k], b.tensors[k]) for k in a.tensors)


class TestSample:
    def test_outputs(self, trained, tmp_path):
        root, cfg = trained
        out = cmd_sample(cfg, "disks", n=2, out_dir=tmp_path / "s")
        for arm in ("sinograms", "coarse", "refined"):
            assert len(list((out / arm).glob("*.prot"))) == 2
        assert read_prot(out / "sinograms" / "00000.prot").shape == (32, 32)
        assert read_pgm(out / "previews" / "00001.pgm").shape == (32, 32)

    def test_same_seed_bit_identical(self, trained):
        _, cfg = trained
        a = generate(cfg, "bars", 2, seed=4)
        b = generate(cfg, "bars", 2, seed=4)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_skip_refine_without_sharpnet(self, trained, tmp_path):
        root, cfg = trained
        run = tmp_path / "run"
        shutil.copytree(root / "run", run)
        shutil.rmtree(run / "sharpnet")
        local = cfg.override(out=str(run))
        sinos, coarse, refined = generate(local, "disks", 2, skip_refine=True)
        assert refined is None and coarse.shape == (2, 32, 32)
        with pytest.raises(ConfigurationError):
            generate(local, "disks", 2)

    def test_unknown_prompt(self, trained):
        _, cfg = trained
        with pytest.raises(UnknownPromptError):
            generate(cfg, "lung", 1)

    def test_incompatible_checkpoints(self, trained, tmp_path):
        root, cfg = trained
        run = tmp_path / "run"
        shutil.copytree(root / "run", run)
        path = run / "diffusion" / "manifest.json"
        manifest = json.loads(path.read_text())
        manifest["config"]["autoencoder_hash"] = "0" * 16
        path.write_text(json.dumps(manifest))
        with pytest.raises(IncompatibleCheckpointError):
            load_models(cfg.override(out=str(run)))
        with pytest.raises(IncompatibleCheckpointError):
            load_models(cfg.override(views=16))


class TestEvaluate:
    def test_identical_dirs(self, tmp_path):
        imgs = np.random.default_rng(0).random((6, 32, 32))
        for i, im in enumerate(imgs):
            write_prot(tmp_path / "a" / f"{i}.prot", im)
        report = cmd_evaluate(tmp_path / "a", tmp_path / "a", out=tmp_path / "r.json")
        assert REPORT_KEYS <= set(report) and report["fid"] <= 1e-6
        assert json.loads((tmp_path / "r.json").read_text()) == report
        assert 1.0 <= report["is_mean"] <= 5.0

    def test_external_features(self, tmp_path):
        rng = np.random.default_rng(1)
        write_prot(tmp_path / "r.prot", rng.normal(size=(20, 4)))
        write_prot(tmp_path / "g.prot", rng.normal(size=(20, 4)))
        report = cmd_metrics(tmp_path / "r.prot", tmp_path / "g.prot", standard_mmd=True)
        assert report["extractor"] == "external" and report["is_mean"] is None
        assert "mmd2_unbiased_mean" in report

    def test_empty_dir(self, tmp_path):
        (tmp_path / "e").mkdir()
        with pytest.raises(Exception, match="no PROT images"):
            cmd_evaluate(tmp_path / "e", tmp_path / "e")


class TestCLI:
    def test_end_to_end(self, trained, tmp_path, capsys):
        root, cfg = trained
        conf = tmp_path / "cfg.json"
        conf.write_text(json.dumps(cfg.to_dict()))
        samples = tmp_path / "samples"
        assert cli.main(["sample", "--config", str(conf), "--prompt", "bars", "--n", "2", "--steps", "3",
                         "--samples-dir", str(samples)]) == 0
        assert cli.main(["sample", "--config", str(conf), "--prompt", "bars", "--n", "2", "--skip-refine",
                         "--samples-dir", str(tmp_path / "skip")]) == 0
        assert not (tmp_path / "skip" / "refined").exists()
        capsys.readouterr()
        assert cli.main(["evaluate", "--gen", str(samples / "refined"), "--ref", str(samples / "coarse"),
                         "--out", str(tmp_path / "rep.json")]) == 0
        assert REPORT_KEYS <= set(json.loads(capsys.readouterr().out))
        assert cli.main(["export", "--config", str(conf), "--input", str(samples / "sinograms"),
                         "--mode", "sparse-view", "--views", "8", "--out", str(tmp_path / "exp")]) == 0
        assert len(json.loads((tmp_path / "exp" / "index.json").read_text())["items"]) == 2

    def test_phantoms_command(self, tmp_path):
        assert cli.main(["phantoms", "--prompt", "ellipses", "--n", "2", "--size", "32",
                         "--out", str(tmp_path / "p")]) == 0
        assert len(list((tmp_path / "p").glob("*.prot"))) == 2

    @pytest.mark.parametrize("argv, code", [
        (["sample", "--prompt", "disks", "--config", "/nonexistent.json"], "configuration"),
        (["phantoms", "--prompt", "lung", "--out", "/tmp/unused"], "invalid-argument"),
    ])
    def test_errors_single_line(self, argv, code, capsys):
        assert cli.main(argv) != 0
        err = capsys.readouterr().err.strip().splitlines()
        assert len(err) == 1 and err[0].startswith(f"error[{code}]: ")

    def test_unknown_prompt_cli(self, trained, tmp_path, capsys):
        _, cfg = trained
        conf = tmp_path / "cfg.json"
        conf.write_text(json.dumps(cfg.to_dict()))
        assert cli.main(["sample", "--config", str(conf), "--prompt", "lung", "--n", "1"]) == 1
        assert capsys.readouterr().err.startswith("error[unknown-prompt]: ")

    def test_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["train", "--factor", "3"])
        assert exc.value.code == 2
        assert capsys.readouterr().err.startswith("error[usage]: ")
