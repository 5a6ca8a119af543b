import csv
import json

import pytest

from handcontact.cli import main

TINY_INI = """
[model]
encoder_size = 8
hidden_size = 8
n_layers = 1
head_sizes = 8
[train]
n_iter = 20
eval_every = 10
[gplc]
m = 3
rounds = 2
pretrain_f = 10
pretrain_g = 5
"""


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--n", "8", "--seed", "1", "--out", str(root / "corpus")]) == 0
    (root / "tiny.ini").write_text(TINY_INI)
    return root


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_synth_layout(corpus):
    c = corpus / "corpus"
    assert {p.name for p in c.iterdir()} >= {"noisy", "trusted", "test", "checksums.csv", "run.json"}
    rows = read_csv(c / "checksums.csv")
    assert rows[0] == ["track_id", "sha256"] and len(rows) == 9
    run = json.loads((c / "run.json").read_text())
    assert run["command"] == "synth" and run["seed"] == 1 and "git" in run


def test_synth_single_spec(tmp_path):
    from importlib import resources

    spec = resources.files("handcontact") / "specs" / "01_grasp_release.json"
    assert main(["synth", "--spec", str(spec), "--n", "2", "--out", str(tmp_path / "b")]) == 0
    assert len(read_csv(tmp_path / "b" / "checksums.csv")) == 3


def test_pseudolabel_writes_labels(corpus, capsys):
    out = corpus / "pl"
    assert main(["pseudolabel", "--in", str(corpus / "corpus" / "noisy"), "--out", str(out)]) == 0
    rows = read_csv(out / "diagnostics.csv")
    assert rows[0][:3] == ["track_id", "frames", "labeled"]
    assert all((out / r[0] / "labels.txt").is_file() for r in rows[1:])
    assert "coverage=" in capsys.readouterr().out


def test_train_eval_report(corpus, capsys):
    c = corpus / "corpus"
    out = corpus / "gplc"
    args = ["train", "--mode", "gplc", "--config", str(corpus / "tiny.ini"), "--noisy", str(c / "noisy"),
            "--trusted", str(c / "trusted"), "--out", str(out)]
    assert main(args) == 0
    rounds = read_csv(out / "rounds.csv")
    assert rounds[0][:3] == ["round", "delta", "flips"] and len(rounds) == 4
    assert (out / "model.ckpt").is_file() and (out / "corrected").is_dir()

    assert main(["eval", "--gt", str(c / "test"), "--model", str(out / "model.ckpt"),
                 "--pred-out", str(corpus / "pred"), "--out", str(corpus / "eval.csv")]) == 0
    head, row = read_csv(corpus / "eval.csv")
    assert head == ["method", "frame_acc", "boundary_f", "peripheral_acc", "edit_score", "correct_track_ratio"]
    assert main(["eval", "--gt", str(c / "test"), "--pred", str(corpus / "pred"),
                 "--out", str(corpus / "eval2.csv")]) == 0
    assert read_csv(corpus / "eval2.csv")[1] == row

    assert main(["report", "--gt", str(c / "test"), "--baselines", "--model", f"gplc={out / 'model.ckpt'}",
                 "--out", str(corpus / "table.csv")]) == 0
    assert [r[0] for r in read_csv(corpus / "table.csv")[1:]] == ["Fixed", "IoU", "gplc"]
    capsys.readouterr()


def test_perfect_predictions_score_one(corpus):
    c = corpus / "corpus" / "test"
    assert main(["eval", "--gt", str(c), "--pred", str(c), "--out", str(corpus / "perfect.csv")]) == 0
    row = read_csv(corpus / "perfect.csv")[1]
    assert row[1] == row[2] == row[4] == row[5] == "1.000000"


def test_train_modes_run(corpus):
    c = corpus / "corpus"
    for mode in ("supervised", "noisy_only", "joint", "plc", "pseudo_labeling"):
        out = corpus / mode
        assert main(["train", "--mode", mode, "--config", str(corpus / "tiny.ini"), "--noisy", str(c / "noisy"),
                     "--trusted", str(c / "trusted"), "--out", str(out)]) == 0
        assert (out / "model.ckpt").is_file()


def test_missing_input_is_reported(tmp_path, capsys):
    code = main(["train", "--mode", "supervised", "--trusted", str(tmp_path / "nope"), "--out", str(tmp_path)])
    assert code == 2
    err = capsys.readouterr().err.strip()
    assert err.startswith("error\tMissingPath\t")
    assert "\n" not in err


def test_bad_config_exit_code(tmp_path, capsys):
    (tmp_path / "bad.ini").write_text("[train]\nn_iter = -3\n[gplc]\nalpha = 7\n")
    code = main(["train", "--config", str(tmp_path / "bad.ini"), "--out", str(tmp_path / "o")])
    assert code == 2
    err = capsys.readouterr().err
    assert err.startswith("error\tConfigError\t") and "n_iter" in err and "alpha" in err


def test_mode_needs_paths(tmp_path, capsys):
    assert main(["train", "--mode", "gplc", "--out", str(tmp_path)]) == 2
    assert "--noisy --trusted" in capsys.readouterr().err


def test_eval_missing_prediction(corpus, tmp_path, capsys):
    (tmp_path / "pred").mkdir()
    code = main(["eval", "--gt", str(corpus / "corpus" / "test"), "--pred", str(tmp_path / "pred"),
                 "--out", str(tmp_path / "e.csv")])
    assert code == 1
    assert "missing predictions" in capsys.readouterr().err


def test_synth_refuses_overwrite(corpus, capsys):
    assert main(["synth", "--n", "3", "--out", str(corpus / "corpus")]) == 1
    assert "FileExistsError" in capsys.readouterr().err


def test_gradcheck_command(capsys):
    assert main(["gradcheck", "--seeds", "1"]) == 0
    assert capsys.readouterr().out.strip().splitlines()[-1].startswith("PASS")


def test_help_lists_defaults(capsys):
    with pytest.raises(SystemExit):
        main(["train", "--help"])
    out = capsys.readouterr().out
    assert "delta0=0.05" in out and "lr=0.0003" in out
