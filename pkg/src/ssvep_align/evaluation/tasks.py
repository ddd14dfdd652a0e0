"""Calibration schemes, task definitions and the subject data a task runs on."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum

from ..data import DatasetManifest, EpochSet
from ..errors import InvalidConfig, SsvepAlignError, SubjectLoadFailure
from ..preprocess import load_preprocessed
from ..profiles import BENCHMARK, MIN_CALIB_TRIALS, WEARABLE
from ..synth import SynthConfig, synth_generate

log = logging.getLogger(__name__)


class SchemeId(str, Enum):
    """How the target's calibration pool is assembled."""

    BASELINE = "baseline"
    CONCAT = "concat"
    LST = "lst"
    DAN = "dan"
    DAN_NO_STIM_INDEP = "dan_no_stim_indep"
    DAN_NO_PRETRAIN = "dan_no_pretrain"
    DAN_NO_FINETUNE = "dan_no_finetune"
    DAN_NO_TANH = "dan_no_tanh"

    @property
    def is_dan(self) -> bool:
        return self.value.startswith("dan")

    @property
    def strategy(self) -> str:
        """Training strategy of a DAN-lineage scheme."""
        return {
            SchemeId.DAN_NO_STIM_INDEP: "no_stim_indep",
            SchemeId.DAN_NO_PRETRAIN: "no_pretrain",
            SchemeId.DAN_NO_FINETUNE: "no_finetune",
        }.get(self, "full")

    @property
    def activation(self) -> str:
        return "identity" if self is SchemeId.DAN_NO_TANH else "tanh"

    @classmethod
    def parse(cls, text: str) -> "SchemeId":
        key = str(text).strip().lower().replace("-", "_").replace(".", "")
        aliases = {
            "danmodel": "dan", "ssvep_dan": "dan", "dannostimindep": "dan_no_stim_indep",
            "dannopretrain": "dan_no_pretrain", "dannofinetune": "dan_no_finetune", "dannotanh": "dan_no_tanh",
        }
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            choices = ", ".join(s.value for s in cls)
            raise InvalidConfig(f"unknown scheme {text!r}; choose from {choices}", field="schemes") from None


MAIN_SCHEMES = (SchemeId.BASELINE, SchemeId.CONCAT, SchemeId.LST, SchemeId.DAN)
ABLATIONS = (SchemeId.DAN_NO_STIM_INDEP, SchemeId.DAN_NO_PRETRAIN, SchemeId.DAN_NO_FINETUNE, SchemeId.DAN_NO_TANH)
TASK_NAMES = ("benchmark", "dry_to_dry", "wet_to_wet", "dry_to_wet", "wet_to_dry", "custom")


def parse_schemes(items) -> tuple:
    if isinstance(items, str):
        items = [s for s in items.split(",") if s.strip()]
    schemes = []
    for item in items:
        s = item if isinstance(item, SchemeId) else SchemeId.parse(item)
        if s not in schemes:
            schemes.append(s)
    if not schemes:
        raise InvalidConfig("at least one scheme is required", field="schemes")
    return tuple(schemes)


@dataclass(frozen=True)
class TaskSpec:
    """One domain-adaptation task.

    Subjects come either from manifests (``source``/``target``; a missing
    source means the target dataset also supplies the sources) or from an
    in-memory synthetic cohort (``synth``). ``n_test`` trials per stimulus
    are held out at the end of every target subject's recording; ``None``
    holds out everything beyond the largest calibration size.
    """

    name: str = "custom"
    target: DatasetManifest | None = None
    source: DatasetManifest | None = None
    synth: SynthConfig | None = None
    n_calib_range: tuple = (2, 2)
    n_source_subjects: int | None = None
    repeats: int = 10
    seed: int = 0
    n_bands: int = 3
    n_test: int | None = None
    reshuffle_splits: bool = False

    def __post_init__(self):
        if self.name not in TASK_NAMES:
            raise InvalidConfig(f"unknown task {self.name!r}; choose from {', '.join(TASK_NAMES)}", field="task.name")
        lo, hi = (int(v) for v in self.n_calib_range)
        object.__setattr__(self, "n_calib_range", (lo, hi))
        if lo < MIN_CALIB_TRIALS:
            raise InvalidConfig(f"must be >= {MIN_CALIB_TRIALS}", field="task.n_calib_range")
        if hi < lo:
            raise InvalidConfig("upper bound below lower bound", field="task.n_calib_range")
        if self.repeats < 1:
            raise InvalidConfig("must be >= 1", field="task.repeats")
        if self.n_bands < 1:
            raise InvalidConfig("must be >= 1", field="task.n_bands")
        if self.n_source_subjects is not None and self.n_source_subjects < 1:
            raise InvalidConfig("must be >= 1", field="task.n_source_subjects")
        if self.n_test is not None and self.n_test < 1:
            raise InvalidConfig("must be >= 1", field="task.n_test")
        if (self.synth is None) == (self.target is None):
            raise InvalidConfig("give exactly one of a target manifest or a synthetic cohort", field="task.target")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "target": None if self.target is None else self.target.to_dict(),
            "source": None if self.source is None else self.source.to_dict(),
            "synth": None if self.synth is None else self.synth.to_dict(),
            "n_calib_range": list(self.n_calib_range),
            "n_source_subjects": self.n_source_subjects,
            "repeats": self.repeats,
            "seed": self.seed,
            "n_bands": self.n_bands,
            "n_test": self.n_test,
            "reshuffle_splits": self.reshuffle_splits,
        }


_ELECTRODE = {"dry": "{subject}_dry.epoc", "wet": "{subject}_wet.epoc"}


def table_one_task(name: str, subject_ids, root=".", **overrides) -> TaskSpec:
    """The benchmark and the four electrode-transfer tasks with their dataset profiles.

    Wearable subjects are expected as ``<id>_dry.epoc`` / ``<id>_wet.epoc``.
    """
    if name == "benchmark":
        profile = BENCHMARK
        target = replace(profile.manifest, subject_ids=tuple(subject_ids), root=str(root))
        source = None
    elif name in ("dry_to_dry", "wet_to_wet", "dry_to_wet", "wet_to_dry"):
        profile = WEARABLE
        src_kind, tgt_kind = name.split("_to_")
        base = replace(profile.manifest, subject_ids=tuple(subject_ids), root=str(root))
        target = replace(base, path_template=_ELECTRODE[tgt_kind])
        source = replace(base, path_template=_ELECTRODE[src_kind])
    else:
        raise InvalidConfig(f"{name!r} is not a fixed task; build a custom TaskSpec", field="task.name")
    fields = dict(
        name=name, target=target, source=source, n_calib_range=profile.calib_range,
        n_bands=profile.n_bands, n_test=profile.n_test,
    )
    fields.update(overrides)
    return TaskSpec(**fields)


@dataclass
class TaskData:
    """Preprocessed subjects of a task, with per-subject load failures."""

    targets: dict
    sources: dict
    target_failures: dict = field(default_factory=dict)
    source_failures: dict = field(default_factory=dict)

    @classmethod
    def from_synth(cls, config: SynthConfig) -> "TaskData":
        subjects = synth_generate(config).subjects
        by_id = {s.subject_id: s for s in subjects}
        return cls(targets=by_id, sources=by_id)

    @classmethod
    def from_subjects(cls, targets, sources=None) -> "TaskData":
        targets = {s.subject_id: s for s in targets}
        sources = targets if sources is None else {s.subject_id: s for s in sources}
        return cls(targets=targets, sources=sources)

    @classmethod
    def load(cls, task: TaskSpec) -> "TaskData":
        if task.synth is not None:
            return cls.from_synth(task.synth)

        def load_all(manifest):
            out, failed = {}, {}
            for sid in manifest.subject_ids:
                try:
                    out[sid] = load_preprocessed(manifest, sid)
                except SsvepAlignError as exc:
                    log.warning("cannot load subject %s: %s", sid, exc)
                    failed[sid] = f"{type(exc).__name__}: {exc}"
            return out, failed

        targets, t_fail = load_all(task.target)
        sources, s_fail = (targets, t_fail) if task.source is None else load_all(task.source)
        return cls(targets=targets, sources=sources, target_failures=t_fail, source_failures=s_fail)

    def target_ids(self) -> list:
        """Every target subject, including those that failed to load."""
        return sorted(set(self.targets) | set(self.target_failures))

    def source_ids_for(self, target_id: str) -> list:
        """Every loadable source subject except the target itself."""
        return sorted(s for s in self.sources if s != target_id)


def check_task_data(data: TaskData) -> None:
    sets = list(data.targets.values()) + list(data.sources.values())
    if not sets:
        raise SubjectLoadFailure("no subject could be loaded")
    first = sets[0]
    for s in sets[1:]:
        if s.fs != first.fs or s.trials.shape[1:] != first.trials.shape[1:]:
            raise InvalidConfig(
                f"subject {s.subject_id} has shape {s.trials.shape[1:]} at {s.fs} Hz, "
                f"{first.subject_id} has {first.trials.shape[1:]} at {first.fs} Hz",
                field="task",
            )


def reference_shape(data: TaskData) -> EpochSet:
    return next(iter(data.targets.values()))
