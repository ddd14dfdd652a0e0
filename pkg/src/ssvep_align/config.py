"""TOML run configuration: one table per component, validated with field paths."""
from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .align import DanConfig
from .data import DatasetManifest, manifest_from_dict
from .errors import InvalidConfig, MissingFile
from .evaluation import TaskSpec, table_one_task
from .synth import SynthConfig

SECTIONS = ("manifest", "synth", "dan", "task", "decode", "output")
TASK_KEYS = {
    "name", "repeats", "seed", "n_calib_range", "n_bands", "n_test", "n_source_subjects", "reshuffle_splits",
    "subjects", "root", "synthetic", "target", "source",
}


def build(cls, values: dict, prefix: str):
    """Instantiate a config dataclass, reporting bad keys and values by field path."""
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise InvalidConfig("unknown field", field=f"{prefix}.{unknown[0]}")
    try:
        return cls(**values)
    except InvalidConfig as exc:
        name = exc.field or prefix
        name = name if name.startswith(prefix) else f"{prefix}.{name.split('.')[-1]}"
        raise InvalidConfig(str(exc).split(": ", 1)[-1], field=name) from None
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(str(exc), field=prefix) from None


@dataclass
class RunConfig:
    manifest: DatasetManifest | None = None
    synth: SynthConfig = field(default_factory=SynthConfig)
    dan: DanConfig = field(default_factory=DanConfig)
    task: dict = field(default_factory=dict)
    n_bands: int | None = None
    out: str | None = None
    fmt: str | None = None
    root: Path = field(default_factory=Path)

    def task_spec(self, **overrides) -> TaskSpec:
        """Resolve the ``[task]`` table; without manifests the synthetic cohort is used."""
        t = dict(self.task)
        t.update({k: v for k, v in overrides.items() if v is not None})
        unknown = sorted(set(t) - TASK_KEYS)
        if unknown:
            raise InvalidConfig("unknown field", field=f"task.{unknown[0]}")
        name = t.pop("name", "custom")
        root = Path(self.root) / t.pop("root", ".")
        subjects = t.pop("subjects", None)
        synthetic = t.pop("synthetic", None)
        target = t.pop("target", None)
        source = t.pop("source", None)
        if "n_calib_range" in t:
            t["n_calib_range"] = tuple(t["n_calib_range"])
        if self.n_bands is not None and "n_bands" not in t:
            t["n_bands"] = self.n_bands
        try:
            if name != "custom":
                if subjects is None:
                    raise InvalidConfig("a fixed task needs a subject list", field="task.subjects")
                return table_one_task(name, subjects, root, **t)
            if target is not None and not synthetic:
                tgt = manifest_from_dict(target, root, "task.target")
                src = None if source is None else manifest_from_dict(source, root, "task.source")
                return TaskSpec(name=name, target=tgt, source=src, **t)
            return TaskSpec(name=name, synth=self.synth, **t)
        except TypeError as exc:
            raise InvalidConfig(str(exc), field="task") from None
        except InvalidConfig as exc:
            if exc.field and not exc.field.startswith("task"):
                exc.field = f"task.{exc.field}"
            raise


def load_run_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"config file {path} does not exist")
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise InvalidConfig(f"not valid TOML: {exc}", field="config") from None
    return config_from_dict(raw, path.parent)


def config_from_dict(raw: dict, root=".") -> RunConfig:
    unknown = sorted(set(raw) - set(SECTIONS))
    if unknown:
        raise InvalidConfig("unknown section", field=unknown[0])
    cfg = RunConfig(root=Path(root))
    if "manifest" in raw:
        cfg.manifest = manifest_from_dict(raw["manifest"], root, "manifest")
    if "synth" in raw:
        cfg.synth = build(SynthConfig, raw["synth"], "synth")
    if "dan" in raw:
        cfg.dan = build(DanConfig, raw["dan"], "dan")
    cfg.task = dict(raw.get("task", {}))
    decode = dict(raw.get("decode", {}))
    if set(decode) - {"n_bands"}:
        raise InvalidConfig("unknown field", field=f"decode.{sorted(set(decode) - {'n_bands'})[0]}")
    cfg.n_bands = decode.get("n_bands")
    output = dict(raw.get("output", {}))
    if set(output) - {"dir", "format"}:
        raise InvalidConfig("unknown field", field=f"output.{sorted(set(output) - {'dir', 'format'})[0]}")
    cfg.out = output.get("dir")
    cfg.fmt = output.get("format")
    return cfg
