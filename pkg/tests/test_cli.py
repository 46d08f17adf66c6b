import os
import subprocess
import sys

import pytest

PKG_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

FAST = [
    "--preset", "synthetic-small",
    "--per-class", "30",
    "--teacher-epochs", "20",
    "--iterations", "30",
    "--episodes", "20",
]


def run_cli(*args, env_extra=None, cwd=None):
    env = dict(os.environ)
    env["PYTHONPATH"] = os.path.join(PKG_ROOT, "src")
    if env_extra:
        env.update(env_extra)
    return subprocess.run(
        [sys.executable, "-m", "sacl", *args],
        capture_output=True, text=True, env=env, cwd=cwd,
    )


@pytest.fixture(scope="module")
def trained_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    result = run_cli("train", *FAST, "--out", str(out), "--seed", "5")
    assert result.returncode == 0, result.stderr
    return out


class TestTrain:
    def test_smoke_writes_four_artifacts(self, trained_dir):
        names = sorted(p.name for p in trained_dir.iterdir())
        assert names == ["config.txt", "encoder.bin", "teacher.bin", "train_log.csv"]

    def test_config_echo_records_teacher_accuracy(self, trained_dir):
        text = (trained_dir / "config.txt").read_text()
        assert "# teacher_train_accuracy = " in text
        assert "iterations = 30" in text
        assert "seed = 5" in text

    def test_rerun_is_byte_identical(self, tmp_path, trained_dir):
        out = tmp_path / "again"
        result = run_cli("train", *FAST, "--out", str(out), "--seed", "5")
        assert result.returncode == 0, result.stderr
        for name in ("train_log.csv", "teacher.bin", "encoder.bin"):
            assert (out / name).read_bytes() == (trained_dir / name).read_bytes()

    def test_unwritable_out_leaves_nothing_behind(self, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("a file, not a directory")
        out = blocker / "nested"
        result = run_cli("train", *FAST, "--out", str(out))
        assert result.returncode != 0
        assert result.stderr.strip() != ""
        assert list(tmp_path.iterdir()) == [blocker]


class TestEval:
    def test_both_modes_summary(self, trained_dir):
        result = run_cli("eval", *FAST, "--out", str(trained_dir), "--seed", "5",
                         "--mode", "both")
        assert result.returncode == 0, result.stderr
        lines = (trained_dir / "summary.csv").read_text().strip().split("\n")
        assert lines[0] == "mode,mean,ci95,episodes,way,shot,query"
        assert len(lines) == 3
        assert lines[1].startswith("inductive,")
        assert lines[2].startswith("transductive,")
        episodes = (trained_dir / "episodes.csv").read_text().strip().split("\n")
        assert episodes[0] == "episode,acc_inductive,acc_transductive"
        assert len(episodes) == 21

    def test_single_episode_rejected(self, trained_dir):
        result = run_cli("eval", *FAST, "--out", str(trained_dir), "--episodes", "1")
        assert result.returncode != 0

    def test_missing_checkpoint_rejected(self, tmp_path):
        result = run_cli("eval", *FAST, "--out", str(tmp_path))
        assert result.returncode != 0
        assert "encoder checkpoint" in result.stderr

    def test_thread_count_does_not_change_bytes(self, trained_dir, tmp_path):
        def eval_into(out):
            out.mkdir(exist_ok=True)
            for name in ("encoder.bin", "teacher.bin"):
                (out / name).write_bytes((trained_dir / name).read_bytes())
            result = run_cli("eval", *FAST, "--out", str(out), "--seed", "5",
                             "--mode", "both", "--threads", "8")
            assert result.returncode == 0, result.stderr
            return (out / "episodes.csv").read_bytes(), (out / "summary.csv").read_bytes()

        threaded = eval_into(tmp_path / "t8")
        result = run_cli("eval", *FAST, "--out", str(trained_dir), "--seed", "5",
                         "--mode", "both", "--threads", "1")
        assert result.returncode == 0
        serial = ((trained_dir / "episodes.csv").read_bytes(),
                  (trained_dir / "summary.csv").read_bytes())
        assert serial == threaded

    def test_gfsl_report_written(self, trained_dir):
        result = run_cli("eval", *FAST, "--out", str(trained_dir), "--seed", "5",
                         "--mode", "inductive", "--gfsl", "--gfsl-test-per-class", "10")
        assert result.returncode == 0, result.stderr
        lines = (trained_dir / "gfsl.csv").read_text().strip().split("\n")
        assert lines[0] == "acc_base,acc_novel,acc_joint,acc_harmonic,base_classes,novel_classes"
        cells = lines[1].split(",")
        assert cells[4] == "12" and cells[5] == "5"

    def test_gfsl_fixture_reproduces_published_joint_accuracy(self, tmp_path):
        result = run_cli("eval", "--out", str(tmp_path),
                         "--gfsl-fixture", "0.5614,0.2535,80,20")
        assert result.returncode == 0, result.stderr
        line = (tmp_path / "gfsl_fixture.csv").read_text().strip().split("\n")[1]
        joint = float(line.split(",")[2])
        assert abs(joint - 0.4998) < 5e-4


class TestConfigResolution:
    def test_config_file_applies_and_flags_win(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "# comment line\n"
            "per_class = 30\n"
            "teacher_epochs = 20\n"
            "iterations = 25\n"
            "episodes = 20\n"
            "seed = 9\n"
        )
        out = tmp_path / "out"
        result = run_cli("train", "--preset", "synthetic-small",
                         "--config", str(cfg), "--out", str(out),
                         "--iterations", "35")
        assert result.returncode == 0, result.stderr
        text = (out / "config.txt").read_text()
        assert "iterations = 35" in text      # flag beats file
        assert "per_class = 30" in text        # file beats preset
        assert "seed = 9" in text
        log = (out / "train_log.csv").read_text().strip().split("\n")
        assert len(log) == 36

    def test_unknown_config_key_rejected(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("warp_factor = 9\n")
        result = run_cli("train", "--config", str(cfg), "--out", str(tmp_path / "o"))
        assert result.returncode != 0
        assert "warp_factor" in result.stderr

    def test_unknown_preset_rejected(self, tmp_path):
        result = run_cli("train", "--preset", "nonexistent", "--out", str(tmp_path / "o"))
        assert result.returncode != 0
        assert "preset" in result.stderr

    def test_seed_env_fallback(self, tmp_path):
        out = tmp_path / "env_seed"
        result = run_cli("train", *FAST, "--out", str(out),
                         env_extra={"SACL_SEED": "5"})
        assert result.returncode == 0, result.stderr
        assert "seed = 5" in (out / "config.txt").read_text()

    def test_echoed_config_is_loadable(self, trained_dir, tmp_path):
        # the echo contains every train key (plus comments) and round-trips
        out = tmp_path / "replay"
        result = run_cli("train", "--config", str(trained_dir / "config.txt"),
                         "--out", str(out))
        assert result.returncode == 0, result.stderr
        assert (out / "train_log.csv").read_bytes() == \
            (trained_dir / "train_log.csv").read_bytes()


class TestStudies:
    def test_grad_check_passes_and_reports(self, tmp_path):
        result = run_cli("grad-check", "--out", str(tmp_path), "--reps", "1")
        assert result.returncode == 0, result.stderr
        assert "max relative error" in result.stdout
        lines = (tmp_path / "grad_check.csv").read_text().strip().split("\n")
        assert lines[0] == "config,views,dim,lambda,tau_cold,level,rel_error"
        assert len(lines) == 1 + 2 * 24

    def test_theorem_monotone_exit_zero(self, tmp_path):
        result = run_cli("theorem", "--out", str(tmp_path),
                         "--sizes", "200,1000", "--reps", "6")
        assert result.returncode == 0, result.stderr
        summary = (tmp_path / "theorem_summary.csv").read_text().strip().split("\n")
        errs = [float(line.split(",")[1]) for line in summary[1:]]
        assert errs[1] < errs[0]
        assert (tmp_path / "theorem_error.svg").read_text().startswith("<svg")

    def test_ablate_batch_grid(self, tmp_path):
        result = run_cli("ablate", *FAST, "--out", str(tmp_path),
                         "--grid", "batch", "--iterations", "10", "--episodes", "10")
        assert result.returncode == 0, result.stderr
        lines = (tmp_path / "batch_grid.csv").read_text().strip().split("\n")
        assert lines[0] == "batch_size,accuracy,ci95"
        assert len(lines) == 6

    def test_ablate_temperature_grid_layout(self, tmp_path):
        result = run_cli("ablate", *FAST, "--out", str(tmp_path),
                         "--grid", "temperature", "--iterations", "10",
                         "--episodes", "10")
        assert result.returncode == 0, result.stderr
        lines = (tmp_path / "temperature_grid.csv").read_text().strip().split("\n")
        assert lines[0] == "tau_cold,2.5,5.0,7.5"
        assert [line.split(",")[0] for line in lines[1:]] == ["0.05", "0.1", "0.5"]
        assert len(lines[1].split(",")) == 4

    def test_compare_losses_artifacts(self, tmp_path):
        result = run_cli("compare-losses", *FAST, "--out", str(tmp_path),
                         "--trend-every", "15", "--trend-episodes", "10")
        assert result.returncode == 0, result.stderr
        lines = (tmp_path / "loss_compare.csv").read_text().strip().split("\n")
        assert lines[0] == "loss,mode,mean,ci95,episodes"
        assert len(lines) == 7  # 3 losses x 2 modes
        trend = (tmp_path / "accuracy_trend.csv").read_text().strip().split("\n")
        assert trend[0] == "iteration,cl,scl,sacl"
        assert (tmp_path / "accuracy_trend.svg").read_text().startswith("<svg")
