import subprocess
import sys

import pytest

from taskhg.cli import main

TRAIN_FLAGS = [
    "--dim", "8", "--epochs-pretrain", "3", "--epochs-finetune", "3",
]


def run_cli(args):
    return main(list(args))


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "synth"
    code = run_cli(["synth", "--out", str(out), "--users", "40", "--items", "20",
                    "--blocks", "4", "--noise", "0.1", "--seed", "5",
                    "--interactions-per-user", "4"])
    assert code == 0
    return out


class TestPipeline:
    def test_full_pipeline(self, synth_dir, tmp_path):
        ckpt = tmp_path / "pre.ckpt"
        code = run_cli(["pretrain", "--data", str(synth_dir), "--seed", "3",
                        "--out", str(ckpt), *TRAIN_FLAGS])
        assert code == 0 and ckpt.exists()
        ckpt2 = tmp_path / "fine.ckpt"
        code = run_cli(["finetune", "--data", str(synth_dir), "--seed", "3",
                        "--checkpoint", str(ckpt), "--out", str(ckpt2), *TRAIN_FLAGS])
        assert code == 0 and ckpt2.exists()
        report = tmp_path / "report.tsv"
        code = run_cli(["evaluate", "--data", str(synth_dir),
                        "--checkpoint", str(ckpt2), "--report", str(report)])
        assert code == 0
        lines = report.read_text().strip().splitlines()
        assert any(line.startswith("overall/recall@10\t") for line in lines)

    def test_identical_seeds_byte_identical_reports(self, synth_dir, tmp_path):
        reports = []
        for tag in ("a", "b"):
            ckpt = tmp_path / f"{tag}.ckpt"
            ckpt2 = tmp_path / f"{tag}2.ckpt"
            report = tmp_path / f"{tag}.tsv"
            assert run_cli(["pretrain", "--data", str(synth_dir), "--seed", "9",
                            "--out", str(ckpt), *TRAIN_FLAGS]) == 0
            assert run_cli(["finetune", "--data", str(synth_dir), "--seed", "9",
                            "--checkpoint", str(ckpt), "--out", str(ckpt2),
                            *TRAIN_FLAGS]) == 0
            assert run_cli(["evaluate", "--data", str(synth_dir),
                            "--checkpoint", str(ckpt2), "--report", str(report)]) == 0
            reports.append(report.read_bytes())
        assert reports[0] == reports[1]

    def test_checkpoints_byte_identical_across_runs(self, synth_dir, tmp_path):
        blobs = []
        for tag in ("x", "y"):
            ckpt = tmp_path / f"{tag}.ckpt"
            assert run_cli(["pretrain", "--data", str(synth_dir), "--seed", "4",
                            "--out", str(ckpt), *TRAIN_FLAGS]) == 0
            blobs.append(ckpt.read_bytes())
        assert blobs[0] == blobs[1]

    def test_checkpoints_byte_identical_across_processes(self, synth_dir, tmp_path):
        blobs = []
        for tag in ("p", "q"):
            ckpt = tmp_path / f"{tag}.ckpt"
            proc = subprocess.run(
                [sys.executable, "-m", "taskhg.cli", "pretrain",
                 "--data", str(synth_dir), "--seed", "4", "--out", str(ckpt),
                 *TRAIN_FLAGS],
                capture_output=True,
            )
            assert proc.returncode == 0, proc.stderr
            blobs.append(ckpt.read_bytes())
        assert blobs[0] == blobs[1]

    def test_ablate_emits_both_grids(self, synth_dir, tmp_path):
        report = tmp_path / "ablate.tsv"
        code = run_cli(["ablate", "--data", str(synth_dir), "--seed", "2",
                        "--report", str(report), "--dim", "8",
                        "--epochs-pretrain", "2", "--epochs-finetune", "2"])
        assert code == 0
        text = report.read_text()
        ta_rows = {line.split("/")[1] for line in text.splitlines()
                   if line.startswith("ta/")}
        loss_rows = {line.split("/")[1] for line in text.splitlines()
                     if line.startswith("loss/")}
        assert ta_rows == {"ta=full", "ta=no_ta", "ta=sum", "ta=concat"}
        assert len(loss_rows) == 10

    def test_variant_flags_accepted(self, synth_dir, tmp_path):
        ckpt = tmp_path / "variant.ckpt"
        code = run_cli(["pretrain", "--data", str(synth_dir), "--seed", "3",
                        "--out", str(ckpt), "--ta-variant", "concat",
                        "--non-unified-attributes", *TRAIN_FLAGS])
        assert code == 0 and ckpt.exists()

    def test_coldstart_reports_both_variants(self, synth_dir, tmp_path):
        report = tmp_path / "cold.tsv"
        code = run_cli(["coldstart", "--data", str(synth_dir), "--seed", "2",
                        "--ratio", "0.2", "--report", str(report), "--dim", "8",
                        "--epochs-pretrain", "2", "--epochs-finetune", "2"])
        assert code == 0
        text = report.read_text()
        assert "full/recall@10\t" in text
        assert "no_auxiliary/recall@10\t" in text
        assert "meta/cold_start_ratio\t0.2" in text


class TestExitCodes:
    def test_usage_error_is_one(self):
        proc = subprocess.run(
            [sys.executable, "-m", "taskhg.cli", "pretrain", "--data", "/tmp/x"],
            capture_output=True,
        )
        assert proc.returncode == 1  # --seed and --out missing

    def test_unknown_command_is_one(self):
        proc = subprocess.run(
            [sys.executable, "-m", "taskhg.cli", "frobnicate"], capture_output=True
        )
        assert proc.returncode == 1

    def test_data_error_is_two(self, tmp_path):
        code = run_cli(["pretrain", "--data", str(tmp_path), "--seed", "1",
                        "--out", str(tmp_path / "c.bin")])
        assert code == 2

    def test_bad_flag_value_is_one(self, synth_dir, tmp_path):
        code = run_cli(["pretrain", "--data", str(synth_dir), "--seed", "1",
                        "--beta", "1.5", "--out", str(tmp_path / "c.bin")])
        assert code == 1

    def test_bad_train_fraction_is_one(self, synth_dir, tmp_path):
        code = run_cli(["pretrain", "--data", str(synth_dir), "--seed", "1",
                        "--train-fraction", "1.0", "--out", str(tmp_path / "c.bin")])
        assert code == 1

    def test_divergent_run_is_three(self, synth_dir, tmp_path):
        import numpy as np

        # An absurd learning rate overflows the embeddings quickly.
        with np.errstate(over="ignore", invalid="ignore"):
            code = run_cli(["pretrain", "--data", str(synth_dir), "--seed", "1",
                            "--lr", "1e300", "--epochs-pretrain", "30",
                            "--out", str(tmp_path / "c.bin"), "--dim", "8"])
        assert code == 3

    def test_help_is_zero(self):
        proc = subprocess.run(
            [sys.executable, "-m", "taskhg.cli", "--help"], capture_output=True
        )
        assert proc.returncode == 0
