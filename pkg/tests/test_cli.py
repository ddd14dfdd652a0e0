import json
import subprocess
import sys

import numpy as np
import pytest

from ssvep_align.cli import build_parser, main
from ssvep_align.data import EpochSet, read_epoc, save_epochs
from ssvep_align.align import DanConfig, DanModel, save_model

SUBCOMMANDS = [["synth"], ["preprocess"], ["align"], ["align", "train"], ["align", "apply"], ["decode"],
               ["evaluate"], ["psd"]]

FAST = """
[synth]
n_subjects = 3
snr_db = 0.0
[dan]
pretrain_epochs = 3
finetune_epochs = 2
[task]
repeats = 1
"""


def run(*args):
    return subprocess.run([sys.executable, "-m", "ssvep_align.cli", *args], capture_output=True, text=True)


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "run.toml").write_text(FAST)
    assert main(["synth", "--config", str(tmp_path / "run.toml"), "--out", str(tmp_path / "cohort")]) == 0
    return tmp_path


@pytest.mark.parametrize("cmd", SUBCOMMANDS)
def test_help_exits_zero_and_lists_flags(cmd, capsys):
    with pytest.raises(SystemExit) as info:
        main(cmd + ["--help"])
    assert info.value.code == 0
    text = capsys.readouterr().out
    if cmd == ["evaluate"]:
        for flag in ("--config", "--out", "--seed", "--jobs", "--schemes", "--calib", "--sources", "--repeats",
                     "--dry-run", "--format", "--ablations"):
            assert flag in text


def test_every_option_has_help():
    parser = build_parser()
    stack = [parser]
    while stack:
        p = stack.pop()
        for action in p._actions:
            if action.choices and isinstance(action.choices, dict):
                stack.extend(action.choices.values())
            elif action.option_strings:
                assert action.help, f"{p.prog} {action.option_strings}"


def test_synth_files_sidecar_and_determinism(workdir):
    files = sorted(p.name for p in (workdir / "cohort").iterdir())
    assert files == ["S01.epoc", "S02.epoc", "S03.epoc", "ground_truth.json"]
    truth = json.loads((workdir / "cohort" / "ground_truth.json").read_text())
    assert np.array(truth["mixing"]["S01"]).shape == (8, 6)
    assert main(["synth", "--config", str(workdir / "run.toml"), "--out", str(workdir / "again")]) == 0
    for name in files:
        assert (workdir / "cohort" / name).read_bytes() == (workdir / "again" / name).read_bytes()


def test_decode_end_to_end(workdir, capsys):
    assert main(["decode", str(workdir / "cohort" / "S01.epoc"), "--out", str(workdir / "dec")]) == 0
    result = json.loads((workdir / "dec" / "decode.json").read_text())
    assert result["accuracy"] >= 0.9 and len(result["predictions"]) == 32
    assert "eigenvalue" in (workdir / "dec" / "trca_summary.txt").read_text()


def test_preprocess(tmp_path):
    rng = np.random.default_rng(0)
    names = ("PO3", "PO4", "PO5", "PO6", "POz", "O1", "O2", "Oz", "Cz", "Pz")
    raw = EpochSet(rng.standard_normal((2, 10, 2000)).astype(np.float32), [0, 1], [8.0, 8.2], [0.0, 1.57], 1000.0,
                   "S01", names)
    save_epochs(raw, tmp_path / "raw.epoc")
    (tmp_path / "m.toml").write_text('[manifest]\nsubject_ids = ["S01"]\nchannel_subset = ["PO3", "PO4", "PO5", '
                                     '"PO6", "POz", "O1", "O2", "Oz"]\n')
    assert main(["preprocess", str(tmp_path / "raw.epoc"), "--manifest", str(tmp_path / "m.toml"),
                 "--out", str(tmp_path / "pre.epoc")]) == 0
    out = read_epoc(tmp_path / "pre.epoc")
    assert (out.fs, out.n_channels, out.n_samples) == (250.0, 8, 375)
    # identity manifest leaves the data untouched, and is idempotent
    (tmp_path / "id.toml").write_text('[manifest]\nsubject_ids = ["S01"]\nfs_raw = 250.0\ndecim_factor = 1\n'
                                      'notch_hz = 0.0\nlatency_s = 0.0\nwindow_s = 1.5\n')
    assert main(["preprocess", str(tmp_path / "pre.epoc"), "--manifest", str(tmp_path / "id.toml"),
                 "--out", str(tmp_path / "same.epoc")]) == 0
    assert (tmp_path / "same.epoc").read_bytes() == (tmp_path / "pre.epoc").read_bytes()


def test_align_train_and_apply(workdir):
    c = workdir / "cohort"
    assert main(["align", "train", "--config", str(workdir / "run.toml"), "--target", str(c / "S01.epoc"),
                 "--sources", str(c / "S02.epoc"), str(c / "S03.epoc"), "--test-trials", "2",
                 "--out", str(workdir / "models")]) == 0
    checkpoints = sorted(p.name for p in (workdir / "models").glob("*.danm"))
    assert checkpoints == ["G0.danm", "S02.danm", "S03.danm"]
    assert main(["align", "apply", "--sources", str(c / "S02.epoc"), str(c / "S03.epoc"),
                 "--models", str(workdir / "models"), "--out", str(workdir / "aligned")]) == 0
    aligned = read_epoc(workdir / "aligned" / "S02_aligned.epoc")
    assert aligned.trials.shape == read_epoc(c / "S02.epoc").trials.shape


def test_apply_zero_checkpoint(workdir):
    save_model(DanModel.zeros(DanConfig()), workdir / "zero.danm")
    assert main(["align", "apply", "--sources", str(workdir / "cohort" / "S02.epoc"), "--model",
                 str(workdir / "zero.danm"), "--out", str(workdir / "z.epoc")]) == 0
    assert not read_epoc(workdir / "z.epoc").trials.any()


def test_apply_corrupt_checkpoint(workdir, capsys):
    save_model(DanModel.zeros(DanConfig()), workdir / "bad.danm")
    data = bytearray((workdir / "bad.danm").read_bytes())
    data[100] ^= 1
    (workdir / "bad.danm").write_bytes(bytes(data))
    code = main(["align", "apply", "--sources", str(workdir / "cohort" / "S02.epoc"), "--model",
                 str(workdir / "bad.danm"), "--out", str(workdir / "z.epoc")])
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert code == 3 and record["error"] == "ChecksumMismatch"


def test_evaluate_csv_rows_and_determinism(workdir):
    args = ["evaluate", "--config", str(workdir / "run.toml"), "--schemes", "baseline,dan", "--calib", "2",
            "--repeats", "2", "--no-timing", "--jobs", "1"]
    assert main(args + ["--out", str(workdir / "e1")]) == 0
    assert main(args + ["--out", str(workdir / "e2")]) == 0
    rows = (workdir / "e1" / "report.csv").read_text().splitlines()
    assert len(rows) == 1 + 3 * 2 * 2
    for name in ("report.csv", "report.jsonl", "run_manifest.json"):
        assert (workdir / "e1" / name).read_bytes() == (workdir / "e2" / name).read_bytes()


def test_evaluate_ablations_rows(workdir):
    assert main(["evaluate", "--config", str(workdir / "run.toml"), "--schemes", "dan", "--ablations",
                 "--no-timing", "--format", "csv", "--out", str(workdir / "abl")]) == 0
    schemes = {line.split(",")[1] for line in (workdir / "abl" / "report.csv").read_text().splitlines()[1:]}
    assert schemes == {"dan", "dan_no_stim_indep", "dan_no_pretrain", "dan_no_finetune", "dan_no_tanh"}
    assert not (workdir / "abl" / "report.jsonl").exists()


def test_evaluate_dry_run_touches_nothing(tmp_path, capsys):
    (tmp_path / "t.toml").write_text('[task]\nname = "benchmark"\nsubjects = ["S01", "S02"]\nroot = "nowhere"\n')
    assert main(["evaluate", "--config", str(tmp_path / "t.toml"), "--dry-run", "--out", str(tmp_path / "o")]) == 0
    resolved = json.loads(capsys.readouterr().out)
    assert resolved["task"]["n_calib_range"] == [2, 4] and len(resolved["missing_files"]) == 2
    assert not (tmp_path / "o").exists()


@pytest.mark.parametrize("args, code, field", [
    (["evaluate", "--schemes", "bogus", "--dry-run"], 2, "schemes"),
    (["evaluate", "--calib", "2,x", "--dry-run"], 2, "calib"),
    (["evaluate", "--jobs", "0", "--dry-run"], 2, "jobs"),
    (["decode", "missing.epoc"], 3, None),
])
def test_error_records(args, code, field, capsys):
    assert main(args) == code
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["exit_code"] == code and record["field"] == field


def test_config_error_names_field(tmp_path):
    (tmp_path / "bad.toml").write_text("[dan]\nlearning_rate = -1.0\n")
    res = run("evaluate", "--config", str(tmp_path / "bad.toml"), "--dry-run")
    assert res.returncode == 2 and "Traceback" not in res.stderr
    assert json.loads(res.stderr.strip())["field"] == "dan.learning_rate"


def test_psd_peak_and_selectors(tmp_path):
    t = np.arange(375) / 250.0
    x = np.sin(2 * np.pi * 12.6 * t)
    trials = np.broadcast_to(x, (3, 8, 375)).copy()
    names = ("PO3", "PO4", "PO5", "PO6", "POz", "O1", "O2", "Oz")
    save_epochs(EpochSet(trials, [0, 0, 0], [12.6], [0.0], 250.0, "S01", names), tmp_path / "s.epoc")
    assert main(["psd", str(tmp_path / "s.epoc"), "--channel", "Oz", "--out", str(tmp_path / "all.csv")]) == 0
    assert main(["psd", str(tmp_path / "s.epoc"), "--trials", "1", "--out", str(tmp_path / "one.csv")]) == 0
    all_rows = np.loadtxt(tmp_path / "all.csv", delimiter=",", skiprows=1)
    one_rows = np.loadtxt(tmp_path / "one.csv", delimiter=",", skiprows=1)
    assert all_rows[np.argmax(all_rows[:, 1]), 0] == 13.0
    np.testing.assert_allclose(all_rows, one_rows, rtol=1e-12)
    assert main(["psd", str(tmp_path / "s.epoc"), "--trials", "5", "--out", str(tmp_path / "x.csv")]) == 2
    assert main(["psd", str(tmp_path / "s.epoc"), "--stimulus", "3", "--out", str(tmp_path / "x.csv")]) == 2


def test_psd_zero_signal(tmp_path):
    save_epochs(EpochSet(np.zeros((1, 1, 500)), [0], [10.0], [0.0], 250.0, "Z", ("Oz",)), tmp_path / "z.epoc")
    assert main(["psd", str(tmp_path / "z.epoc"), "--out", str(tmp_path / "z.csv")]) == 0
    assert not np.loadtxt(tmp_path / "z.csv", delimiter=",", skiprows=1)[:, 1].any()
