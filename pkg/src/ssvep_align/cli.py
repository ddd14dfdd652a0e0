"""ssvep-align: synthesis, preprocessing, alignment, decoding, evaluation and PSD export.

Settings come from a TOML file (``--config``) and command-line flags, flags
winning. Failures print one JSON error record on stderr and exit with 2
(configuration), 3 (data) or 4 (numerical).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .align import DanModel, fit_alignment, load_model, save_model
from .align.training import align_transform
from .config import load_run_config
from .data import EpochSet, load_epochs, read_epoc, save_epochs, split_designated_test
from .decode import accuracy, trca_fit, trca_predict
from .dsp import psd_welch
from .errors import InvalidConfig, IoFailure, SelectorOutOfRange, SsvepAlignError
from .evaluation import (
    ABLATIONS,
    MAIN_SCHEMES,
    SchemeId,
    default_jobs,
    emit_report,
    parse_schemes,
    run_loso,
    sweep_calibration,
    sweep_sources,
    take_calibration,
    write_run_manifest,
)
from .preprocess import preprocess
from .synth import synth_generate

log = logging.getLogger("ssvep_align")

EXIT_CODES = {"config": 2, "data": 3, "numerical": 4}


def _int_list(text: str, name: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InvalidConfig(f"expected comma-separated integers, got {text!r}", field=name) from None


def _out_dir(path) -> Path:
    if path is None:
        raise InvalidConfig("an output location is required (--out or [output] dir)", field="out")
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {p}: {exc}") from exc
    return p


def _write_json(path: Path, obj) -> None:
    try:
        path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


# ------------------------------------------------------------------ commands


def cmd_synth(args) -> int:
    cfg = load_run_config(args.config)
    synth = cfg.synth
    changes = {}
    if args.seed is not None:
        changes.update(mixing_seed=args.seed, noise_seed=args.seed + 1)
    if args.subjects is not None:
        changes["n_subjects"] = args.subjects
    if args.snr_db is not None:
        changes["snr_db"] = args.snr_db
    if changes:
        synth = dataclasses.replace(synth, **changes)
    out = _out_dir(args.out or cfg.out)
    cohort = synth_generate(synth)
    for subject in cohort.subjects:
        save_epochs(subject, out / f"{subject.subject_id}.epoc")
    _write_json(out / "ground_truth.json", {
        "config": synth.to_dict(),
        "mixing": {s.subject_id: m.tolist() for s, m in zip(cohort.subjects, cohort.mixing)},
    })
    print(f"wrote {len(cohort.subjects)} subjects to {out}")
    return 0


def cmd_preprocess(args) -> int:
    cfg = load_run_config(args.config)
    manifest = cfg.manifest
    if args.manifest is not None:
        from .data import load_manifest

        manifest = load_manifest(args.manifest)
    if manifest is None:
        raise InvalidConfig("a dataset manifest is required (--manifest or [manifest])", field="manifest")
    subject = args.subject
    if subject is None:
        subject = read_epoc(args.input).subject_id
    epochs = load_epochs(args.input, manifest, subject)
    out = preprocess(epochs, manifest)
    if args.out is None:
        raise InvalidConfig("an output file is required", field="out")
    save_epochs(out, args.out)
    print(f"{subject}: {out.n_trials} trials, {out.n_channels} channels, {out.n_samples} samples at {out.fs:g} Hz")
    return 0


def _target_calibration(path, n_calib: int, n_test: int) -> tuple:
    target = read_epoc(path)
    test = None
    if n_test:
        target, test = split_designated_test(target, n_test)
    return take_calibration(target, n_calib), test


def cmd_align_train(args) -> int:
    cfg = load_run_config(args.config)
    dan = cfg.dan
    if args.seed is not None:
        dan = dataclasses.replace(dan, seed=args.seed)
    if args.dry_run:
        print(json.dumps({"dan": dan.to_dict(), "strategy": args.strategy}, indent=2, sort_keys=True))
        return 0
    calib, _ = _target_calibration(args.target, args.calib, args.test_trials)
    sources = [read_epoc(p) for p in args.sources]
    d = dan.to_dict()
    d.update(n_in_channels=calib.n_channels, n_out_channels=calib.n_channels, n_samples=calib.n_samples,
             n_filters=None, hidden_dim=None)
    from .align import DanConfig

    dan = DanConfig(**d)
    fit = fit_alignment(sources, calib, dan, args.strategy)
    out = _out_dir(args.out or cfg.out)
    written = []
    pretrained = fit.pretrained if isinstance(fit.pretrained, dict) else {None: fit.pretrained}
    for k, model in pretrained.items():
        if model is not None:
            name = "G0.danm" if k is None else f"G0_k{k}.danm"
            save_model(model, out / name)
            written.append(name)
    for key, model in fit.per_source.items():
        name = f"{key}.danm" if not isinstance(key, tuple) else f"{key[0]}_k{key[1]}.danm"
        save_model(model, out / name)
        written.append(name)
    _write_json(out / "training.json", {
        "strategy": args.strategy, "dan": dan.to_dict(), "target": calib.subject_id,
        "sources": [s.subject_id for s in sources], "checkpoints": written, "fallback": fit.fallback,
    })
    print(f"wrote {len(written)} checkpoints to {out}")
    return 0


def cmd_align_apply(args) -> int:
    sources = [read_epoc(p) for p in args.sources]
    if args.model is not None:
        if len(sources) != 1:
            raise InvalidConfig("--model applies to exactly one source; use --models for several", field="model")
        models = {sources[0].subject_id: load_model(args.model)}
    elif args.models is not None:
        models = {s.subject_id: load_model(Path(args.models) / f"{s.subject_id}.danm") for s in sources}
    else:
        raise InvalidConfig("give --model or --models", field="model")
    out = Path(args.out)
    many = len(sources) > 1 or out.suffix != ".epoc"
    if many:
        out = _out_dir(out)
    for s in sources:
        aligned = align_transform(models[s.subject_id], s, args.target_id)
        path = out / f"{s.subject_id}_aligned.epoc" if many else out
        save_epochs(aligned, path)
    print(f"transformed {len(sources)} source set(s)")
    return 0


def cmd_decode(args) -> int:
    cfg = load_run_config(args.config)
    n_bands = args.bands or cfg.n_bands or 3
    target = read_epoc(args.input)
    pool, test = split_designated_test(target, args.test_trials)
    calib = take_calibration(pool, args.calib)
    parts = [calib] + [read_epoc(p) for p in args.pool]
    from .data import concat_epochs

    model = trca_fit(concat_epochs(parts, calib.subject_id), n_bands=n_bands)
    pred = trca_predict(test.trials, model)
    result = {
        "subject": target.subject_id, "n_calib": args.calib, "n_test_per_stimulus": args.test_trials,
        "n_bands": n_bands, "pool_trials": int(sum(p.n_trials for p in parts)),
        "accuracy": accuracy(pred, test.labels),
        "predictions": pred.tolist(), "labels": test.labels.tolist(), "trial_ids": test.trial_ids.tolist(),
    }
    if args.out is not None:
        out = _out_dir(args.out)
        _write_json(out / "decode.json", result)
        try:
            (out / "trca_summary.txt").write_text(model.summary() + "\n")
        except OSError as exc:
            raise IoFailure(f"cannot write summary: {exc}") from exc
    print(f"{target.subject_id}: accuracy {result['accuracy']:.4f} on {test.n_trials} test trials")
    return 0


def _missing_files(task) -> list:
    """Subject files a task refers to but which do not exist (checked without reading them)."""
    missing = []
    for manifest in (task.target, task.source):
        if manifest is not None:
            missing += [str(manifest.path_for(s)) for s in manifest.subject_ids if not manifest.path_for(s).is_file()]
    return sorted(set(missing))


def cmd_evaluate(args) -> int:
    cfg = load_run_config(args.config)
    dan = cfg.dan
    overrides = {"repeats": args.repeats, "seed": args.seed}
    task = cfg.task_spec(**overrides)
    schemes = list(parse_schemes(args.schemes)) if args.schemes else list(MAIN_SCHEMES)
    if args.ablations:
        if SchemeId.DAN not in schemes:
            schemes.append(SchemeId.DAN)
        schemes += [s for s in ABLATIONS if s not in schemes]
    calib = _int_list(args.calib, "calib") if args.calib else None
    counts = _int_list(args.sources, "sources") if args.sources else None
    if calib and counts:
        raise InvalidConfig("--calib and --sources select different sweeps; give one", field="sources")
    fmt = args.format or cfg.fmt
    if fmt not in (None, "csv", "jsonl"):
        raise InvalidConfig(f"unknown format {fmt!r}", field="format")
    jobs = args.jobs if args.jobs is not None else default_jobs()
    if jobs < 1:
        raise InvalidConfig("must be >= 1", field="jobs")
    resolved = {
        "task": task.to_dict(), "schemes": [s.value for s in schemes], "dan": dan.to_dict(),
        "calib": calib, "sources": counts, "jobs": jobs, "format": fmt or "csv+jsonl",
    }
    if args.dry_run:
        resolved["missing_files"] = _missing_files(task)
        print(json.dumps(resolved, indent=2, sort_keys=True))
        return 0
    out = _out_dir(args.out or cfg.out)
    timing = not args.no_timing
    if counts:
        report = sweep_sources(task, schemes, counts, dan_config=dan, jobs=jobs, timing=timing)
    elif calib and len(calib) > 1:
        report = sweep_calibration(task, schemes, calib, dan_config=dan, jobs=jobs, timing=timing)
    else:
        report = run_loso(task, schemes, dan, n_calib=calib[0] if calib else None, jobs=jobs, timing=timing)
    if fmt in (None, "csv"):
        emit_report(report, out / "report.csv", "csv")
    if fmt in (None, "jsonl"):
        emit_report(report, out / "report.jsonl", "jsonl")
    write_run_manifest(report, out / "run_manifest.json")
    for row in report.aggregates():
        print(f"{row['scheme']:>18s}  n_calib={row['n_calib']}  n_sources={row['n_sources']}  "
              f"accuracy {row['mean']:.4f} +- {row['std']:.4f}  (n={row['n']})")
    if report.errors:
        print(f"{len(report.errors)} fold(s) failed; see run_manifest.json", file=sys.stderr)
    return 0


def _select_trials(epochs: EpochSet, trials: str | None, stimulus: int | None) -> np.ndarray:
    idx = np.arange(epochs.n_trials)
    if stimulus is not None:
        if not 0 <= stimulus < epochs.n_stimuli:
            raise SelectorOutOfRange(f"stimulus {stimulus} outside 0..{epochs.n_stimuli - 1}", field="stimulus")
        idx = idx[epochs.labels == stimulus]
    if trials not in (None, "all"):
        chosen = _int_list(trials, "trials")
        bad = [t for t in chosen if not 0 <= t < idx.size]
        if bad:
            raise SelectorOutOfRange(f"trial positions {bad} outside 0..{idx.size - 1}", field="trials")
        idx = idx[chosen]
    if idx.size == 0:
        raise SelectorOutOfRange("the selection contains no trials", field="trials")
    return idx


def cmd_psd(args) -> int:
    epochs = read_epoc(args.input)
    if args.channel not in epochs.channel_names:
        raise SelectorOutOfRange(f"channel {args.channel!r} not in {list(epochs.channel_names)}", field="channel")
    ch = epochs.channel_names.index(args.channel)
    idx = _select_trials(epochs, args.trials, args.stimulus)
    signal = epochs.trials[idx, ch, :].mean(axis=0)
    spectrum = psd_welch(signal, epochs.fs, args.seg_len, args.overlap)
    spectrum.to_csv(args.out)
    print(f"peak at {spectrum.peak_frequency():g} Hz ({idx.size} trial(s) averaged)")
    return 0


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssvep-align", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("synth", help="generate a synthetic cohort as EPOC files")
    p.add_argument("--config", help="TOML file with a [synth] table")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="mixing seed (noise seed becomes seed + 1)")
    p.add_argument("--subjects", type=int, help="number of subjects")
    p.add_argument("--snr-db", type=float, help="signal-to-noise ratio in dB")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="notch, decimate, select channels and window one raw EPOC file")
    p.add_argument("input", help="raw EPOC file")
    p.add_argument("--config", help="TOML file with a [manifest] table")
    p.add_argument("--manifest", help="TOML dataset manifest (overrides [manifest] in --config)")
    p.add_argument("--subject", help="subject id (default: the id stored in the file)")
    p.add_argument("--out", help="output EPOC file")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("align", help="train alignment networks or apply them")
    asub = p.add_subparsers(dest="align_command", required=True, metavar="ACTION")
    t = asub.add_parser("train", help="pre-train and fine-tune one network per source")
    t.add_argument("--config", help="TOML file with a [dan] table")
    t.add_argument("--target", required=True, help="target subject EPOC file")
    t.add_argument("--sources", required=True, nargs="+", help="source subject EPOC files")
    t.add_argument("--calib", type=int, default=2, help="calibration trials per stimulus (default 2)")
    t.add_argument("--test-trials", type=int, default=0,
                   help="trials per stimulus held out at the end of the target before calibration (default 0)")
    t.add_argument("--strategy", default="full", choices=("full", "no_stim_indep", "no_pretrain", "no_finetune"),
                   help="training variant")
    t.add_argument("--seed", type=int, help="training seed")
    t.add_argument("--out", help="checkpoint directory")
    t.add_argument("--dry-run", action="store_true", help="print the resolved configuration and exit")
    t.set_defaults(func=cmd_align_train)
    a = asub.add_parser("apply", help="transform source data with trained checkpoints")
    a.add_argument("--sources", required=True, nargs="+", help="source subject EPOC files")
    a.add_argument("--model", help="checkpoint for a single source")
    a.add_argument("--models", help="directory holding <subject>.danm checkpoints")
    a.add_argument("--target-id", default="target", help="target label for transformed subject ids")
    a.add_argument("--out", required=True, help="output EPOC file (one source) or directory")
    a.set_defaults(func=cmd_align_apply)

    p = sub.add_parser("decode", help="fit filter-bank ensemble TRCA and classify held-out trials")
    p.add_argument("input", help="preprocessed target EPOC file")
    p.add_argument("--config", help="TOML file with a [decode] table")
    p.add_argument("--calib", type=int, default=2, help="calibration trials per stimulus (default 2)")
    p.add_argument("--test-trials", type=int, default=4, help="held-out trials per stimulus (default 4)")
    p.add_argument("--bands", type=int, help="number of filter-bank bands (default 3)")
    p.add_argument("--pool", nargs="*", default=[], help="extra EPOC files added to the calibration pool")
    p.add_argument("--out", help="directory for decode.json and the model summary")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("evaluate", help="leave-one-subject-out comparison of calibration schemes")
    p.add_argument("--config", help="TOML file with [task], [dan], [synth] tables")
    p.add_argument("--out", help="output directory for report files")
    p.add_argument("--seed", type=int, help="task seed")
    p.add_argument("--jobs", type=int, help="worker processes (default: available processors)")
    p.add_argument("--schemes", help="comma-separated schemes: " + ", ".join(s.value for s in SchemeId))
    p.add_argument("--ablations", action="store_true", help="add the four ablation variants of dan")
    p.add_argument("--calib", help="calibration size(s); several values run a calibration sweep")
    p.add_argument("--sources", help="source-subject counts; runs a source sweep at 2 calibration trials")
    p.add_argument("--repeats", type=int, help="repeats per fold")
    p.add_argument("--format", choices=("csv", "jsonl"), help="write only this report format")
    p.add_argument("--no-timing", action="store_true", help="record 0 seconds per cell for byte-stable reports")
    p.add_argument("--dry-run", action="store_true", help="validate the configuration without touching data")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("psd", help="Welch power spectrum of selected trials as CSV")
    p.add_argument("input", help="EPOC file")
    p.add_argument("--channel", default="Oz", help="channel name (default Oz)")
    p.add_argument("--trials", help="comma-separated trial positions within the selection, or 'all'")
    p.add_argument("--stimulus", type=int, help="restrict to trials of this stimulus index")
    p.add_argument("--seg-len", type=int, help="Welch segment length in samples (default: 1 s)")
    p.add_argument("--overlap", type=float, default=0.5, help="segment overlap fraction (default 0.5)")
    p.add_argument("--out", required=True, help="output CSV file")
    p.set_defaults(func=cmd_psd)
    return parser


def _configure_logging() -> None:
    level = os.environ.get("SSVEP_ALIGN_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def error_record(exc: BaseException) -> dict:
    category = getattr(exc, "category", "data")
    return {
        "error": type(exc).__name__,
        "category": category,
        "field": getattr(exc, "field", None),
        "message": str(exc),
        "exit_code": EXIT_CODES.get(category, 3),
    }


def main(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SsvepAlignError as exc:
        record = error_record(exc)
    except OSError as exc:
        record = error_record(IoFailure(str(exc)))
    print(json.dumps(record, sort_keys=True), file=sys.stderr)
    return record["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
