import json

import pytest

from regretrl.cli import EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_OK, main


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "exp.toml"
    path.write_text(
        'environment = "twolane"\n'
        'learners = ["dqn", "drn"]\n'
        'adversaries = ["none", "myopic", "actor"]\n'
        "train_seeds = 2\neval_seeds = 2\nepisodes = 4\n"
        "selection_seeds = 1\nselection_episodes = 2\n"
        "inflations = [0.0, 0.5]\n"
        "verify_seeds = 3\nsubstructure_instances = 2\n"
        "[learner]\nepisodes = 1500\nselector_episodes = 500\n"
        "[actor]\nepisodes = 800\n")
    return path


def run(config, tmp_path, *args):
    out = tmp_path / "out"
    return main([*args, "--config", str(config), "--out", str(out)]), out


def test_train(config, tmp_path, capsys):
    code, out = run(config, tmp_path, "train")
    assert code == EXIT_OK
    model = json.loads((out / "dqn_model.json").read_text())
    assert model["policy"][:3] == [1, 0, 1]
    assert (out / "drn_curve.csv").read_text().startswith("episode,")
    assert "drn: seed 1" in capsys.readouterr().out


def test_train_single_seed_json(config, tmp_path):
    code, out = run(config, tmp_path, "train", "--seed", "3", "--format", "json")
    assert code == EXIT_OK
    assert json.loads((out / "drn_model.json").read_text())["seed"] == 3
    assert isinstance(json.loads((out / "dqn_curve.json").read_text()), list)


def test_attack_train(config, tmp_path):
    code, out = run(config, tmp_path, "attack-train")
    assert code == EXIT_OK
    lines = (out / "actors.csv").read_text().splitlines()
    assert lines[0] == "victim,state,shown" and len(lines) == 1 + 2 * 4


def test_eval_and_matrix(config, tmp_path):
    code, out = run(config, tmp_path, "eval")
    assert code == EXIT_OK
    summary = (out / "summary.csv").read_text()
    assert "actor[dqn]" not in [row.split(",")[1] for row in summary.splitlines() if row.startswith("drn,")]
    code, out = run(config, tmp_path, "matrix")
    assert code == EXIT_OK
    assert "drn,actor[dqn]@t2" in (out / "summary.csv").read_text()
    assert (out / "episodes.csv").exists()


def test_matrix_is_reproducible(config, tmp_path):
    main(["matrix", "--config", str(config), "--out", str(tmp_path / "a")])
    main(["matrix", "--config", str(config), "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "summary.csv").read_bytes() == (tmp_path / "b" / "summary.csv").read_bytes()


def test_matrix_json(config, tmp_path):
    code, out = run(config, tmp_path, "matrix", "--format", "json")
    assert code == EXIT_OK
    doc = json.loads((out / "report.json").read_text())
    assert {c["victim"] for c in doc["cells"]} == {"dqn", "drn"}


def test_sweep(config, tmp_path):
    code, out = run(config, tmp_path, "sweep")
    assert code == EXIT_OK
    lines = (out / "sweep.csv").read_text().splitlines()
    assert len(lines) == 1 + 2 * 2


def test_verify_exit_code(config, tmp_path):
    code, out = run(config, tmp_path, "verify")
    text = (out / "certificate.csv").read_text()
    failed = ",False," in text
    assert code == (EXIT_CHECK_FAILED if failed else EXIT_OK)


def test_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text('environment = "twolane"\nunknown_key = 1\n')
    assert main(["train", "--config", str(bad)]) == EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err
    assert main(["train", "--config", str(tmp_path / "missing.toml")]) == EXIT_CONFIG
    env = tmp_path / "env.json"
    env.write_text(json.dumps({"environment": "highway"}))
    assert main(["eval", "--config", str(env)]) == EXIT_CONFIG


def test_unknown_command():
    with pytest.raises(SystemExit):
        main(["fly"])
