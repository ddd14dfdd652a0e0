"""Leave-one-subject-out evaluation of the calibration schemes.

A fold is one (target subject, calibration size, source subset, repeat). The
target's last ``n_test`` trials per stimulus are held out, its first
``n_calib`` remaining trials per stimulus form the calibration set, and each
scheme builds a decoder pool from that set plus (possibly transformed) source
trials. Every fold draws its randomness from its own seed, so results do not
depend on execution order or on the number of worker processes.
"""
from __future__ import annotations

import logging
import os
import time
import warnings
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .. import kernels
from ..align import DanConfig, fit_alignment, lst_fit, lst_transform
from ..data import EpochSet, concat_epochs, split_designated_test
from ..decode import accuracy, trca_fit, trca_predict
from ..errors import (
    CountExceedsSources,
    FoldLeak,
    InsufficientTrials,
    InvalidConfig,
    SsvepAlignError,
    SubjectLoadFailure,
)
from ..profiles import MIN_CALIB_TRIALS
from .report import Cell, EvaluationReport, FoldError
from .tasks import SchemeId, TaskData, TaskSpec, check_task_data, parse_schemes

log = logging.getLogger(__name__)


def default_jobs() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def _crc(text: str) -> int:
    return zlib.crc32(text.encode("utf-8"))


def fold_seed(task_seed: int, subject: str, repeat: int, *extra: int) -> int:
    """Seed of one fold's random stream, derived from the task seed, subject and repeat."""
    seq = np.random.SeedSequence([int(task_seed), _crc(subject), int(repeat), *map(int, extra)])
    return int(seq.generate_state(1, dtype=np.uint32)[0])


@dataclass(frozen=True)
class FoldJob:
    target_id: str
    n_calib: int
    n_sources: int
    repeat: int
    source_ids: tuple


class FoldAudit:
    """Trial-identity bookkeeping that proves test trials stay out of every fitted quantity."""

    def __init__(self, target_id: str, test: EpochSet):
        self.target_id = target_id
        self.test_ids = frozenset(test.trial_ids.tolist())
        self.checks = 0

    def check(self, stage: str, origin: str, trial_ids) -> None:
        self.checks += 1
        if origin != self.target_id:
            return
        leaked = self.test_ids.intersection(np.asarray(trial_ids).tolist())
        if leaked:
            raise FoldLeak(f"{stage}: test trials {sorted(leaked)[:5]} of {self.target_id} were used")

    def check_sources(self, source_ids) -> None:
        self.checks += 1
        if self.target_id in source_ids:
            raise FoldLeak(f"target subject {self.target_id} is among its own sources")


def take_calibration(pool: EpochSet, n_calib: int, seed: int | None = None) -> EpochSet:
    """First ``n_calib`` trials per stimulus of ``pool``, or a seeded draw when ``seed`` is given."""
    rng = None if seed is None else np.random.default_rng(seed)
    picked = []
    for k in range(pool.n_stimuli):
        idx = np.flatnonzero(pool.labels == k)
        if idx.size < n_calib:
            raise InsufficientTrials(f"stimulus {k} has {idx.size} trials outside the test set, need {n_calib}")
        if rng is not None:
            idx = np.sort(rng.permutation(idx)[:n_calib])
        picked.append(idx[:n_calib])
    return pool.subset(np.sort(np.concatenate(picked)))


def resolve_n_test(task: TaskSpec, target: EpochSet) -> int:
    if task.n_test is not None:
        return task.n_test
    n_test = int(target.counts_per_stimulus().min()) - task.n_calib_range[1]
    if n_test < 1:
        raise InsufficientTrials(
            f"{target.subject_id}: no trials left for testing after {task.n_calib_range[1]} calibration trials"
        )
    return n_test


def dan_config_for(base: DanConfig, data: EpochSet, seed: int, activation: str) -> DanConfig:
    """Adapt ``base`` to the data's channel and sample counts."""
    d = base.to_dict()
    custom_filters = d["n_filters"] != d["n_in_channels"]
    custom_hidden = d["hidden_dim"] != d["n_out_channels"]
    d.update(n_in_channels=data.n_channels, n_out_channels=data.n_channels, n_samples=data.n_samples,
             seed=seed, activation=activation)
    if not custom_filters:
        d["n_filters"] = None
    if not custom_hidden:
        d["hidden_dim"] = None
    return DanConfig(**d)


def scheme_pool(scheme: SchemeId, calib: EpochSet, sources: list, dan_config: DanConfig, seed: int):
    """Decoder pool of one scheme and the origin subject of each pooled block.

    Returns ``(pool, blocks)`` where ``blocks`` lists ``(origin subject,
    trial ids)`` in pool order.
    """
    target_id = calib.subject_id
    parts = [calib]
    origins = [target_id]
    if scheme is SchemeId.CONCAT:
        parts += sources
    elif scheme is SchemeId.LST:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            parts += [lst_transform(lst_fit(s, calib), s, target_id) for s in sources]
    elif scheme.is_dan:
        cfg = dan_config_for(dan_config, calib, seed, scheme.activation)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fit = fit_alignment(sources, calib, cfg, scheme.strategy)
        parts += [fit.transform(s, target_id) for s in sources]
    if scheme is not SchemeId.BASELINE:
        origins += [s.subject_id for s in sources]
    blocks = [(o, p.trial_ids) for o, p in zip(origins, parts)]
    return concat_epochs(parts, subject_id=f"{target_id}:{scheme.value}"), blocks


def run_fold(job: FoldJob, task: TaskSpec, data: TaskData, schemes, dan_config: DanConfig, timing: bool = True):
    """Evaluate every scheme on one fold; returns ``(cells, errors, hygiene checks)``."""
    cells, errors = [], []

    def fail(exc, scheme=""):
        errors.append(FoldError(task.name, job.target_id, job.n_calib, job.n_sources, job.repeat, scheme,
                                type(exc).__name__, getattr(exc, "category", "data"), str(exc)))

    if job.target_id not in data.targets:
        reason = data.target_failures.get(job.target_id, "not loaded")
        fail(SubjectLoadFailure(f"subject {job.target_id}: {reason}"))
        return cells, errors, 0
    target = data.targets[job.target_id]
    seed = fold_seed(task.seed, job.target_id, job.repeat)
    try:
        pool, test = split_designated_test(target, resolve_n_test(task, target))
        split_seed = fold_seed(task.seed, job.target_id, job.repeat, 1) if task.reshuffle_splits else None
        calib = take_calibration(pool, job.n_calib, split_seed)
    except SsvepAlignError as exc:
        fail(exc)
        return cells, errors, 0
    audit = FoldAudit(job.target_id, test)
    audit.check("calibration", job.target_id, calib.trial_ids)
    audit.check_sources(job.source_ids)
    sources = [data.sources[s] for s in job.source_ids]

    for scheme in schemes:
        start = time.perf_counter()
        try:
            pool_set, blocks = scheme_pool(scheme, calib, sources, dan_config, seed)
            for origin, ids in blocks:
                audit.check(f"{scheme.value} decoder pool", origin, ids)
            model = trca_fit(pool_set, n_bands=task.n_bands)
            acc = accuracy(trca_predict(test.trials, model), test.labels)
        except FoldLeak:
            raise
        except SsvepAlignError as exc:
            fail(exc, scheme.value)
            continue
        seconds = time.perf_counter() - start if timing else 0.0
        cells.append(Cell(task.name, scheme.value, job.target_id, job.n_calib, job.n_sources, job.repeat, acc, seconds))
        log.debug("%s %s n_calib=%d repeat=%d: %.4f", job.target_id, scheme.value, job.n_calib, job.repeat, acc)
    return cells, errors, audit.checks


# worker-process state, set once per process by the pool initializer
_WORKER: dict = {}


def _init_worker(task, data, schemes, dan_config, timing):
    _WORKER.update(task=task, data=data, schemes=schemes, dan_config=dan_config, timing=timing)


def _run_in_worker(job):
    w = _WORKER
    return run_fold(job, w["task"], w["data"], w["schemes"], w["dan_config"], w["timing"])


def _execute(jobs, task, data, schemes, dan_config, n_workers, timing):
    if n_workers <= 1 or len(jobs) <= 1:
        return [run_fold(j, task, data, schemes, dan_config, timing) for j in jobs]
    with ProcessPoolExecutor(
        max_workers=min(n_workers, len(jobs)), initializer=_init_worker,
        initargs=(task, data, schemes, dan_config, timing),
    ) as pool:
        return list(pool.map(_run_in_worker, jobs))


def _sample_sources(available: list, count: int, seed: int) -> tuple:
    if count >= len(available):
        return tuple(available)
    rng = np.random.default_rng(seed)
    return tuple(sorted(rng.choice(np.array(available, dtype=object), size=count, replace=False).tolist()))


def _prepare(task, schemes, dan_config, data):
    schemes = parse_schemes(schemes)
    dan_config = DanConfig() if dan_config is None else dan_config
    data = TaskData.load(task) if data is None else data
    check_task_data(data)
    return schemes, dan_config, data


def _evaluate(task, schemes, dan_config, data, jobs, n_workers, timing, extra_config) -> EvaluationReport:
    order = {s.value: i for i, s in enumerate(schemes)}
    results = _execute(jobs, task, data, schemes, dan_config, n_workers, timing)
    cells = [c for r in results for c in r[0]]
    errors = [e for r in results for e in r[1]]
    for sid, reason in sorted(data.source_failures.items()):
        if sid in data.targets or sid in data.target_failures:
            continue
        errors.append(FoldError(task.name, sid, 0, 0, 0, "", "SubjectLoadFailure", "data",
                                f"source subject {sid} excluded: {reason}"))
    cells.sort(key=lambda c: (c.n_calib, c.n_sources, c.target_subject, c.repeat, order[c.scheme]))
    config = {
        "task": task.to_dict(),
        "schemes": [s.value for s in schemes],
        "dan": dan_config.to_dict(),
        "kernel_backend": kernels.BACKEND,
        "timing": timing,
        **extra_config,
    }
    return EvaluationReport(task=task.name, schemes=tuple(s.value for s in schemes), cells=cells, errors=errors,
                            config=config, hygiene_checks=sum(r[2] for r in results))


def _loso_jobs(task, data, n_calib_values):
    jobs = []
    for n_calib in n_calib_values:
        for target_id in data.target_ids():
            available = data.source_ids_for(target_id)
            for repeat in range(task.repeats):
                if task.n_source_subjects is not None:
                    chosen = _sample_sources(available, task.n_source_subjects,
                                             fold_seed(task.seed, target_id, repeat, 2))
                else:
                    chosen = tuple(available)
                jobs.append(FoldJob(target_id, n_calib, len(chosen), repeat, chosen))
    return jobs


def _check_calib(task, values):
    values = sorted({int(v) for v in values})
    if not values:
        raise InvalidConfig("at least one calibration size is required", field="calib")
    bad = [v for v in values if v < MIN_CALIB_TRIALS]
    if bad:
        raise InvalidConfig(f"calibration sizes {bad} are below {MIN_CALIB_TRIALS}", field="calib")
    if task.n_test is None and values[-1] > task.n_calib_range[1]:
        raise InvalidConfig(
            f"calibration size {values[-1]} exceeds the task range {task.n_calib_range}", field="calib"
        )
    return values


def run_loso(task: TaskSpec, schemes, dan_config: DanConfig | None = None, n_calib: int | None = None,
             data: TaskData | None = None, jobs: int = 1, timing: bool = True) -> EvaluationReport:
    """Leave-one-subject-out evaluation at one calibration size (default: the task minimum)."""
    schemes, dan_config, data = _prepare(task, schemes, dan_config, data)
    values = _check_calib(task, [task.n_calib_range[0] if n_calib is None else n_calib])
    return _evaluate(task, schemes, dan_config, data, _loso_jobs(task, data, values), jobs, timing,
                     {"sweep": "single", "calib_values": values})


def sweep_calibration(task: TaskSpec, schemes, calib_values, dan_config: DanConfig | None = None,
                      data: TaskData | None = None, jobs: int = 1, timing: bool = True) -> EvaluationReport:
    """:func:`run_loso` at every calibration size; split with ``report.sub_reports("n_calib")``."""
    schemes, dan_config, data = _prepare(task, schemes, dan_config, data)
    values = _check_calib(task, calib_values)
    return _evaluate(task, schemes, dan_config, data, _loso_jobs(task, data, values), jobs, timing,
                     {"sweep": "calibration", "calib_values": values})


def sweep_sources(task: TaskSpec, schemes, counts, repeats: int | None = None,
                  dan_config: DanConfig | None = None, data: TaskData | None = None, jobs: int = 1,
                  timing: bool = True) -> EvaluationReport:
    """Vary the number of source subjects, sampled per repeat; calibration fixed at the minimum."""
    schemes, dan_config, data = _prepare(task, schemes, dan_config, data)
    counts = sorted({int(c) for c in counts})
    if not counts or counts[0] < 1:
        raise InvalidConfig("source counts must be >= 1", field="sources")
    repeats = task.repeats if repeats is None else int(repeats)
    if repeats < 1:
        raise InvalidConfig("must be >= 1", field="repeats")
    targets = data.target_ids()
    fewest = min((len(data.source_ids_for(t)) for t in targets if t in data.targets), default=0)
    if counts[-1] > fewest:
        raise CountExceedsSources(
            f"{counts[-1]} source subjects requested, only {fewest} available per target", field="sources"
        )
    fold_jobs = []
    for count in counts:
        for target_id in targets:
            available = data.source_ids_for(target_id)
            for repeat in range(repeats):
                chosen = _sample_sources(available, count, fold_seed(task.seed, target_id, repeat, 3, count))
                fold_jobs.append(FoldJob(target_id, MIN_CALIB_TRIALS, count, repeat, chosen))
    task = replace(task, repeats=repeats)
    return _evaluate(task, schemes, dan_config, data, fold_jobs, jobs, timing,
                     {"sweep": "sources", "source_counts": counts})
