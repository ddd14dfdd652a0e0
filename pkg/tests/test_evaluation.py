import json
import math

import numpy as np
import pytest
from scipy.stats import spearmanr

from ssvep_align.align import DanConfig
from ssvep_align.errors import CountExceedsSources, FoldLeak, InvalidConfig
from ssvep_align.evaluation import (
    CSV_COLUMNS,
    EvaluationReport,
    SchemeId,
    TaskData,
    TaskSpec,
    emit_report,
    format_report,
    parse_schemes,
    read_cells,
    run_loso,
    scheme_pool,
    sweep_calibration,
    sweep_sources,
    table_one_task,
    take_calibration,
    write_run_manifest,
)
from ssvep_align.evaluation import harness
from ssvep_align.synth import SynthConfig

FAST_DAN = DanConfig(pretrain_epochs=2, finetune_epochs=1)


def small_synth(seed=0, snr_db=0.0, **kw):
    base = dict(n_subjects=5, n_stimuli=4, freqs=(8.0, 10.0, 12.0, 14.0), phases=(0.0, 0.5, 1.0, 1.5),
                window_s=1.0, snr_db=snr_db, mixing_seed=seed, noise_seed=seed + 1000)
    base.update(kw)
    return SynthConfig(**base)


def test_scheme_parsing():
    assert parse_schemes("baseline, Dan,lst") == (SchemeId.BASELINE, SchemeId.DAN, SchemeId.LST)
    assert SchemeId.parse("dan-no-tanh") is SchemeId.DAN_NO_TANH
    assert SchemeId.DAN_NO_PRETRAIN.strategy == "no_pretrain" and SchemeId.DAN_NO_TANH.activation == "identity"
    assert not SchemeId.CONCAT.is_dan
    with pytest.raises(InvalidConfig):
        parse_schemes("")


def test_task_spec_validation(tmp_path):
    with pytest.raises(InvalidConfig):
        TaskSpec(synth=SynthConfig(), n_calib_range=(1, 2))
    with pytest.raises(InvalidConfig):
        TaskSpec(synth=SynthConfig(), repeats=0)
    with pytest.raises(InvalidConfig):
        TaskSpec()
    t = table_one_task("dry_to_wet", ["a", "b"], tmp_path)
    assert t.source.path_template == "{subject}_dry.epoc" and t.target.path_template == "{subject}_wet.epoc"
    assert t.n_bands == 3 and t.n_calib_range == (2, 6) and t.n_test == 4
    b = table_one_task("benchmark", ["a"], tmp_path)
    assert b.n_bands == 5 and b.n_calib_range == (2, 4) and b.n_test == 2 and b.source is None


def test_cardinality_and_determinism():
    task = TaskSpec(synth=small_synth(), repeats=3)
    r1 = run_loso(task, ["baseline", "dan"], FAST_DAN, timing=False)
    assert len(r1.cells) == 5 * 2 * 1 * 3 and not r1.errors
    r2 = run_loso(task, ["baseline", "dan"], FAST_DAN, timing=False)
    assert format_report(r1, "csv") == format_report(r2, "csv")
    assert all(0 <= c.accuracy <= 1 for c in r1.cells)


def test_parallel_matches_serial():
    task = TaskSpec(synth=small_synth(1), repeats=1)
    serial = run_loso(task, ["baseline", "lst", "dan"], FAST_DAN, timing=False)
    parallel = run_loso(task, ["baseline", "lst", "dan"], FAST_DAN, timing=False, jobs=2)
    assert format_report(serial, "jsonl") == format_report(parallel, "jsonl")


def test_pool_sizes():
    data = TaskData.from_synth(small_synth())
    target = data.targets["S01"]
    calib = take_calibration(target, 2)
    sources = [data.sources[s] for s in data.source_ids_for("S01")]
    total = calib.n_trials + sum(s.n_trials for s in sources)
    sizes = {}
    for scheme in (SchemeId.BASELINE, SchemeId.CONCAT, SchemeId.LST, SchemeId.DAN):
        pool, blocks = scheme_pool(scheme, calib, sources, FAST_DAN, 0)
        sizes[scheme] = pool.n_trials
        assert sum(len(ids) for _, ids in blocks) == pool.n_trials
    assert sizes[SchemeId.BASELINE] == calib.n_trials
    assert sizes[SchemeId.CONCAT] == sizes[SchemeId.LST] == sizes[SchemeId.DAN] == total


def test_hygiene_checks_counted_and_leak_detected(monkeypatch):
    task = TaskSpec(synth=small_synth(), repeats=1)
    report = run_loso(task, ["baseline", "concat"], timing=False)
    assert report.hygiene_checks > 0
    real_split = harness.split_designated_test
    monkeypatch.setattr(harness, "split_designated_test", lambda e, n: (e, real_split(e, n)[1]))
    monkeypatch.setattr(harness, "take_calibration", lambda pool, n, seed=None: pool)
    with pytest.raises(FoldLeak):
        run_loso(task, ["baseline"], timing=False)


def test_target_never_among_sources(monkeypatch):
    data = TaskData.from_synth(small_synth())
    monkeypatch.setattr(TaskData, "source_ids_for", lambda self, t: sorted(self.sources))
    with pytest.raises(FoldLeak):
        run_loso(TaskSpec(synth=small_synth(), repeats=1), ["concat"], data=data)


def test_failed_fold_is_recorded_not_fatal():
    data = TaskData.from_synth(small_synth())
    data.target_failures["S99"] = "MissingFile: gone"
    report = run_loso(TaskSpec(synth=small_synth(), repeats=1), ["baseline"], data=data, timing=False)
    assert len(report.cells) == 5
    assert [e.target_subject for e in report.errors] == ["S99"]
    assert report.errors[0].error == "SubjectLoadFailure"


def test_sweep_calibration_sub_reports():
    task = TaskSpec(synth=small_synth(), n_calib_range=(2, 4), repeats=1)
    report = sweep_calibration(task, ["baseline"], [2, 3, 4], timing=False)
    subs = report.sub_reports("n_calib")
    assert sorted(subs) == [2, 3, 4] and all(len(s.cells) == 5 for s in subs.values())
    single = sweep_calibration(task, ["baseline"], [2], timing=False)
    loso = run_loso(task, ["baseline"], n_calib=2, timing=False)
    assert single.cells == loso.cells
    with pytest.raises(InvalidConfig):
        sweep_calibration(task, ["baseline"], [5])
    with pytest.raises(InvalidConfig):
        sweep_calibration(task, ["baseline"], [1])


def test_more_calibration_never_hurts_noiseless():
    wins = 0
    for seed in range(10):
        task = TaskSpec(synth=small_synth(seed, snr_db=200.0), n_calib_range=(2, 4), repeats=1)
        r = sweep_calibration(task, ["baseline"], [2, 4], timing=False)
        wins += r.mean_accuracy("baseline", n_calib=4) >= r.mean_accuracy("baseline", n_calib=2)
    assert wins >= 8


def test_sweep_sources_structure():
    task = TaskSpec(synth=small_synth(), repeats=2)
    report = sweep_sources(task, ["baseline", "concat"], [1, 2, 3], timing=False)
    subs = report.sub_reports("n_sources")
    assert sorted(subs) == [1, 2, 3]
    assert all(len(s.cells) == 5 * 2 * 2 for s in subs.values())
    assert {c.n_calib for c in report.cells} == {2}
    with pytest.raises(CountExceedsSources):
        sweep_sources(task, ["baseline"], [5])


def test_all_sources_gives_identical_subsets():
    task = TaskSpec(synth=small_synth(), repeats=3)
    report = sweep_sources(task, ["concat"], [4], timing=False)
    by_target = {}
    for c in report.cells:
        by_target.setdefault(c.target_subject, set()).add(c.accuracy)
    assert all(len(v) == 1 for v in by_target.values())  # concat has no model randomness


@pytest.mark.slow
def test_dan_benefits_from_more_sources():
    cfg = DanConfig(pretrain_epochs=60, finetune_epochs=20)
    counts = [1, 2, 3]
    ok = 0
    for seed in range(10):
        task = TaskSpec(synth=small_synth(seed, snr_db=-15.0, n_subjects=4), repeats=1)
        report = sweep_sources(task, ["dan"], counts, dan_config=cfg, timing=False)
        means = [report.mean_accuracy("dan", n_sources=n) for n in counts]
        if len(set(means)) == 1:
            ok += 1  # constant means count as non-decreasing
        else:
            ok += spearmanr(counts, means).statistic >= 0
    assert ok >= 8


def test_report_output_and_roundtrip(tmp_path):
    task = TaskSpec(synth=small_synth(), repeats=2)
    report = run_loso(task, ["baseline", "concat", "lst"], timing=False)
    emit_report(report, tmp_path / "r.csv", "csv")
    emit_report(report, tmp_path / "r.jsonl", "jsonl")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS) and len(lines) == 1 + 30
    for path in ("r.csv", "r.jsonl"):
        cells = read_cells(tmp_path / path)
        assert cells == report.cells
        reloaded = EvaluationReport(report.task, report.schemes, cells)
        for a, b in zip(reloaded.aggregates(), report.aggregates()):
            assert abs(a["mean"] - b["mean"]) <= 1e-12
    for row in report.aggregates():
        values = [c.accuracy for c in report.select(row["scheme"])]
        assert abs(row["mean"] - sum(values) / len(values)) <= 1e-15
    write_run_manifest(report, tmp_path / "m.json")
    manifest = json.loads((tmp_path / "m.json").read_text())
    assert manifest["config"]["task"]["repeats"] == 2 and manifest["n_cells"] == 30


def test_empty_report_is_header_only():
    assert format_report(EvaluationReport("custom", ("baseline",)), "csv") == ",".join(CSV_COLUMNS) + "\n"
    with pytest.raises(InvalidConfig):
        format_report(EvaluationReport("custom", ()), "xml")


def test_significance_uses_subject_means():
    cells = []
    from ssvep_align.evaluation import Cell

    for s in range(6):
        for r in range(2):
            cells.append(Cell("t", "dan", f"S{s}", 2, 5, r, 0.9 + 0.01 * s, 0.0))
            cells.append(Cell("t", "baseline", f"S{s}", 2, 5, r, 0.5 + 0.02 * r, 0.0))
    report = EvaluationReport("t", ("baseline", "dan"), cells)
    (row,) = report.significance()
    assert row["n_subjects"] == 6 and row["statistic"] == 21.0 and row["pvalue"] == pytest.approx(2 / 64)
    assert 0 < row["pvalue"] <= 1
    tied = EvaluationReport("t", ("baseline", "dan"), [c._replace(scheme="dan") for c in cells if c.scheme == "dan"]
                            + [c._replace(scheme="baseline") for c in cells if c.scheme == "dan"])
    assert tied.significance()[0]["pvalue"] is None
