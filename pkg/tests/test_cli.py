import pytest

from rllg.cli import main
from rllg.harness import RunConfig, read_summary_csv

SMALL = ["--env", "point-circle", "--epochs", "2", "--steps-per-epoch", "20",
         "--updates-per-epoch", "2", "--eval-trials", "2", "--batch-size", "8",
         "--hidden", "8", "--set", "env.max_episode_steps=10", "--quiet"]


def test_run_writes_outputs(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", "--agent", "pag", "--phi", "0.5", "--seed", "0", "1", *SMALL,
                 "--out", str(out)]) == 0
    assert {p.name for p in out.iterdir()} == {"epochs.csv", "config.txt", "summary.csv",
                                               "learning_curve.svg"}
    cfg = RunConfig.from_text((out / "config.txt").read_text())
    assert cfg.agent == "pag" and cfg.phi == 0.5 and cfg.hidden == (8,)
    assert cfg.env_params == {"max_episode_steps": 10}
    assert read_summary_csv(out / "summary.csv")["pag"]["seeds"] == "2"
    assert "AUC" in capsys.readouterr().out


def test_config_file_with_flag_override(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("agent = sag\nphi = 0.9\n")
    out = tmp_path / "run"
    assert main(["run", "--config", str(conf), "--phi", "0.3", *SMALL, "--out", str(out)]) == 0
    cfg = RunConfig.from_text((out / "config.txt").read_text())
    assert cfg.agent == "sag" and cfg.phi == 0.3


def test_auc_recomputes_summary(tmp_path, capsys):
    out = tmp_path / "run"
    main(["run", "--agent", "sac", "--seed", "0", "1", *SMALL, "--out", str(out)])
    capsys.readouterr()
    assert main(["auc", "--in", str(out / "epochs.csv")]) == 0
    printed = capsys.readouterr().out.splitlines()
    stored = read_summary_csv(out / "summary.csv")["sac"]
    mean = float(printed[-1].split()[1])
    assert mean == float(stored["auc_mean"])


def test_bench(tmp_path):
    suite = tmp_path / "grid.suite"
    suite.write_text("env = point-mass\nepochs = 1\nsteps_per_epoch = 10\nupdates_per_epoch = 1\n"
                     "eval_trials = 1\nbatch_size = 4\nhidden = 4\nenv.max_episode_steps = 5\n"
                     "seeds = 0\nagents = pig\npig.beta0 = 0.5 2\n")
    out = tmp_path / "bench"
    assert main(["bench", "--suite", str(suite), "--out", str(out), "--cache",
                 str(tmp_path / "cache"), "--quiet"]) == 0
    assert list(read_summary_csv(out / "summary.csv")) == ["pig[beta0=0.5]", "pig[beta0=2]"]


@pytest.mark.parametrize("argv", [
    ["run", "--env", "chain-mdp", "--out", "x"],
    ["run", "--set", "colour=red", "--out", "x"],
    ["auc", "--in", "/nonexistent/epochs.csv"],
])
def test_errors_exit_2(argv, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 2
    assert "rllg: error" in capsys.readouterr().err
