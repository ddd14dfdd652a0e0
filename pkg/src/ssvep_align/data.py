"""Epoch containers, the EPOC file format, manifests and trial bookkeeping.

EPOC layout (all integers little-endian)::

    b"EPOC"                       magic
    u16                           format version (1)
    u32 u32 u32                   n_trials, n_channels, n_samples
    f64                           sampling rate in Hz
    f32[n_trials*n_channels*n_samples]   trials, trial-major then channel-major
    u32                           byte length of the metadata block
    utf-8 JSON                    labels, stim_freqs, stim_phases,
                                  channel_names, subject_id, trial_ids

Samples are stored as float32; loading upcasts to float64 exactly, so any
EpochSet whose samples are float32-representable round-trips bit for bit.
"""
from __future__ import annotations

import json
import math
import struct
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    CalibTooSmall,
    FormatViolation,
    InsufficientTrials,
    InvalidConfig,
    InvalidEpochs,
    IoFailure,
    MissingFile,
    SubjectUnknown,
    UnknownChannel,
    WindowOutOfRange,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EPOC_MAGIC = b"EPOC"
EPOC_VERSION = 1
_HEADER = struct.Struct("<4sHIIId")
_LEN = struct.Struct("<I")


def sample_index(seconds: float, fs: float) -> int:
    """Convert a time to a sample count, rounding half away from zero."""
    x = seconds * fs
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


@dataclass(frozen=True, eq=False)
class EpochSet:
    """Labelled, rectangular collection of multichannel trials.

    ``trials`` is ``(n_trials, n_channels, n_samples)`` in microvolts. ``labels``
    index into ``stim_freqs``/``stim_phases``. ``trial_ids`` identify trials
    within ``subject_id`` and survive slicing, so calibration and test trials
    can be traced through the pipeline.
    """

    trials: np.ndarray
    labels: np.ndarray
    stim_freqs: np.ndarray
    stim_phases: np.ndarray
    fs: float
    subject_id: str = ""
    channel_names: tuple = ()
    trial_ids: np.ndarray | None = None

    def __post_init__(self):
        trials = np.asarray(self.trials, dtype=np.float64)
        if trials.ndim != 3:
            raise InvalidEpochs(f"trials must be 3-D (trials, channels, samples), got shape {trials.shape}")
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        freqs = np.asarray(self.stim_freqs, dtype=np.float64).reshape(-1)
        phases = np.asarray(self.stim_phases, dtype=np.float64).reshape(-1)
        names = tuple(str(n) for n in self.channel_names) or tuple(
            f"Ch{i + 1:02d}" for i in range(trials.shape[1])
        )
        ids = (
            np.arange(trials.shape[0], dtype=np.int64)
            if self.trial_ids is None
            else np.asarray(self.trial_ids, dtype=np.int64).reshape(-1)
        )
        if labels.shape[0] != trials.shape[0]:
            raise InvalidEpochs(f"{labels.shape[0]} labels for {trials.shape[0]} trials")
        if ids.shape[0] != trials.shape[0]:
            raise InvalidEpochs(f"{ids.shape[0]} trial ids for {trials.shape[0]} trials")
        if phases.shape != freqs.shape:
            raise InvalidEpochs("stim_phases and stim_freqs differ in length")
        if labels.size and (labels.min() < 0 or labels.max() >= freqs.size):
            raise InvalidEpochs("label outside the stimulus table")
        if len(names) != trials.shape[1]:
            raise InvalidEpochs(f"{len(names)} channel names for {trials.shape[1]} channels")
        if not (np.isfinite(self.fs) and self.fs > 0):
            raise InvalidEpochs(f"sampling rate must be positive, got {self.fs}")
        if not np.all(np.isfinite(trials)):
            raise InvalidEpochs("trials contain non-finite samples")
        object.__setattr__(self, "trials", trials)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "stim_freqs", freqs)
        object.__setattr__(self, "stim_phases", phases)
        object.__setattr__(self, "fs", float(self.fs))
        object.__setattr__(self, "subject_id", str(self.subject_id))
        object.__setattr__(self, "channel_names", names)
        object.__setattr__(self, "trial_ids", ids)

    @property
    def n_trials(self) -> int:
        return self.trials.shape[0]

    @property
    def n_channels(self) -> int:
        return self.trials.shape[1]

    @property
    def n_samples(self) -> int:
        return self.trials.shape[2]

    @property
    def n_stimuli(self) -> int:
        return self.stim_freqs.shape[0]

    def with_trials(self, trials, **changes) -> "EpochSet":
        return replace(self, trials=trials, **changes)

    def subset(self, index) -> "EpochSet":
        index = np.asarray(index)
        return replace(
            self, trials=self.trials[index], labels=self.labels[index], trial_ids=self.trial_ids[index]
        )

    def counts_per_stimulus(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_stimuli)

    def same_as(self, other: "EpochSet") -> bool:
        """Exact equality of every field, bitwise for arrays."""
        return (
            self.trials.shape == other.trials.shape
            and np.array_equal(self.trials, other.trials)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.stim_freqs, other.stim_freqs)
            and np.array_equal(self.stim_phases, other.stim_phases)
            and np.array_equal(self.trial_ids, other.trial_ids)
            and self.fs == other.fs
            and self.subject_id == other.subject_id
            and self.channel_names == other.channel_names
        )


def concat_epochs(sets: Sequence[EpochSet], subject_id: str | None = None) -> EpochSet:
    """Stack trials of several sets sharing the stimulus table, channel count and rate."""
    if not sets:
        raise InvalidEpochs("nothing to concatenate")
    first = sets[0]
    for other in sets[1:]:
        if other.trials.shape[1:] != first.trials.shape[1:] or other.fs != first.fs:
            raise InvalidEpochs("cannot concatenate sets with different shapes or sampling rates")
        if not np.array_equal(other.stim_freqs, first.stim_freqs):
            raise InvalidEpochs("cannot concatenate sets with different stimulus tables")
    return replace(
        first,
        trials=np.concatenate([s.trials for s in sets]),
        labels=np.concatenate([s.labels for s in sets]),
        trial_ids=np.arange(sum(s.n_trials for s in sets)),
        subject_id=first.subject_id if subject_id is None else subject_id,
    )


# ------------------------------------------------------------------ manifest


@dataclass(frozen=True)
class DatasetManifest:
    """Where a dataset lives and how its raw epochs are preprocessed."""

    subject_ids: tuple = ()
    path_template: str = "{subject}.epoc"
    fs_raw: float = 1000.0
    onset_offset_s: float = 0.0
    latency_s: float = 0.14
    window_s: float = 1.5
    channel_subset: tuple = ()
    notch_hz: float = 50.0
    decim_factor: int = 4
    notch_q: float = 35.0
    root: str = "."

    def __post_init__(self):
        object.__setattr__(self, "subject_ids", tuple(str(s) for s in self.subject_ids))
        object.__setattr__(self, "channel_subset", tuple(self.channel_subset))
        if self.latency_s < 0:
            raise InvalidConfig("must be >= 0", field="latency_s")
        if not self.window_s > 0:
            raise InvalidConfig("must be > 0", field="window_s")
        if int(self.decim_factor) != self.decim_factor or self.decim_factor < 1:
            raise InvalidConfig("must be a positive integer", field="decim_factor")
        if not self.fs_raw > 0:
            raise InvalidConfig("must be > 0", field="fs_raw")
        if not float(self.fs_raw / self.decim_factor).is_integer():
            raise InvalidConfig(
                f"fs_raw {self.fs_raw} is not divisible by decim_factor {self.decim_factor}",
                field="decim_factor",
            )
        if self.notch_hz < 0:
            raise InvalidConfig("must be >= 0 (0 disables the notch)", field="notch_hz")

    @property
    def fs(self) -> float:
        """Sampling rate after decimation."""
        return self.fs_raw / self.decim_factor

    def path_for(self, subject: str) -> Path:
        if subject not in self.subject_ids:
            raise SubjectUnknown(f"subject {subject!r} is not listed in the manifest")
        return Path(self.root) / self.path_template.format(subject=subject)

    def to_dict(self) -> dict:
        return {
            "subject_ids": list(self.subject_ids),
            "path_template": self.path_template,
            "fs_raw": float(self.fs_raw),
            "onset_offset_s": float(self.onset_offset_s),
            "latency_s": float(self.latency_s),
            "window_s": float(self.window_s),
            "channel_subset": list(self.channel_subset),
            "notch_hz": float(self.notch_hz),
            "decim_factor": int(self.decim_factor),
            "notch_q": float(self.notch_q),
        }


_MANIFEST_FIELDS = set(DatasetManifest.__dataclass_fields__) - {"root"}


def manifest_from_dict(d: dict, root=".", prefix="manifest") -> DatasetManifest:
    unknown = set(d) - _MANIFEST_FIELDS
    if unknown:
        raise InvalidConfig("unknown field", field=f"{prefix}.{sorted(unknown)[0]}")
    try:
        return DatasetManifest(root=str(root), **d)
    except InvalidConfig as exc:
        raise InvalidConfig(str(exc).split(": ", 1)[-1], field=f"{prefix}.{exc.field}") from None
    except TypeError as exc:
        raise InvalidConfig(str(exc), field=prefix) from None


def load_manifest(path) -> DatasetManifest:
    """Read a TOML manifest; relative data paths resolve against its directory."""
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"manifest {path} does not exist")
    with open(path, "rb") as fh:
        d = tomllib.load(fh)
    return manifest_from_dict(d.get("manifest", d), root=path.parent)


# ------------------------------------------------------------------ EPOC I/O


def encode_epochs(epochs: EpochSet) -> bytes:
    meta = {
        "labels": [int(v) for v in epochs.labels],
        "stim_freqs": [float(v) for v in epochs.stim_freqs],
        "stim_phases": [float(v) for v in epochs.stim_phases],
        "channel_names": list(epochs.channel_names),
        "subject_id": epochs.subject_id,
        "trial_ids": [int(v) for v in epochs.trial_ids],
    }
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    n, c, s = epochs.trials.shape
    return b"".join(
        (
            _HEADER.pack(EPOC_MAGIC, EPOC_VERSION, n, c, s, epochs.fs),
            epochs.trials.astype("<f4").tobytes(order="C"),
            _LEN.pack(len(blob)),
            blob,
        )
    )


def decode_epochs(buf: bytes) -> EpochSet:
    if len(buf) < _HEADER.size:
        raise FormatViolation("truncated header")
    magic, version, n, c, s, fs = _HEADER.unpack_from(buf, 0)
    if magic != EPOC_MAGIC:
        raise FormatViolation(f"bad magic {magic!r}")
    if version != EPOC_VERSION:
        raise FormatViolation(f"unsupported EPOC version {version}")
    off = _HEADER.size
    n_bytes = 4 * n * c * s
    if len(buf) < off + n_bytes + _LEN.size:
        raise FormatViolation("file shorter than its declared shape")
    trials = np.frombuffer(buf, dtype="<f4", count=n * c * s, offset=off).reshape(n, c, s)
    off += n_bytes
    (meta_len,) = _LEN.unpack_from(buf, off)
    off += _LEN.size
    if len(buf) != off + meta_len:
        raise FormatViolation("metadata block length does not match file size")
    try:
        meta = json.loads(buf[off:].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatViolation(f"unreadable metadata block: {exc}") from None
    try:
        return EpochSet(
            trials=trials.astype(np.float64),
            labels=np.asarray(meta["labels"], dtype=np.int64).reshape(-1),
            stim_freqs=meta["stim_freqs"],
            stim_phases=meta["stim_phases"],
            fs=fs,
            subject_id=meta["subject_id"],
            channel_names=tuple(meta["channel_names"]),
            trial_ids=np.asarray(meta.get("trial_ids", np.arange(n)), dtype=np.int64).reshape(-1),
        )
    except (KeyError, InvalidEpochs) as exc:
        raise FormatViolation(f"metadata inconsistent with tensor: {exc}") from None


def save_epochs(epochs: EpochSet, path) -> None:
    """Write ``epochs`` as an EPOC file; identical input gives identical bytes."""
    data = encode_epochs(epochs)
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_epoc(path) -> EpochSet:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"{path} does not exist")
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return decode_epochs(buf)


def load_epochs(path, manifest: DatasetManifest, subject: str) -> EpochSet:
    """Load the raw epochs of ``subject``; ``path=None`` uses the manifest template."""
    if subject not in manifest.subject_ids:
        raise SubjectUnknown(f"subject {subject!r} is not listed in the manifest")
    if path is None:
        path = manifest.path_for(subject)
    epochs = read_epoc(path)
    if epochs.fs != manifest.fs_raw:
        raise FormatViolation(f"{path}: sampling rate {epochs.fs} Hz, manifest says {manifest.fs_raw} Hz")
    if epochs.subject_id and epochs.subject_id != subject:
        raise FormatViolation(f"{path} holds subject {epochs.subject_id!r}, expected {subject!r}")
    return epochs


# ------------------------------------------------------------------ slicing


def extract_window(epochs: EpochSet, latency_s: float, window_s: float, onset_offset_s: float = 0.0) -> EpochSet:
    """Cut ``[onset + latency, onset + latency + window)`` seconds out of every trial."""
    start = sample_index(onset_offset_s + latency_s, epochs.fs)
    length = sample_index(window_s, epochs.fs)
    if start < 0 or length <= 0 or start + length > epochs.n_samples:
        raise WindowOutOfRange(
            f"window [{start}, {start + length}) does not fit in {epochs.n_samples} samples"
        )
    return epochs.with_trials(epochs.trials[:, :, start:start + length])


def select_channels(epochs: EpochSet, names: Sequence[str]) -> EpochSet:
    lookup = {n: i for i, n in enumerate(epochs.channel_names)}
    missing = [n for n in names if n not in lookup]
    if missing:
        raise UnknownChannel(f"channels not present: {missing}")
    idx = [lookup[n] for n in names]
    return epochs.with_trials(epochs.trials[:, idx, :], channel_names=tuple(names))


def split_calibration_test(epochs: EpochSet, n_calib: int, order: str = "first_n", seed=None):
    """Per stimulus, send ``n_calib`` trials to calibration and the rest to test.

    ``first_n`` keeps recording order; ``seeded_shuffle`` draws the calibration
    trials with ``numpy.random.default_rng(seed)``. Both outputs keep the
    original relative trial order.
    """
    if n_calib < 2:
        raise CalibTooSmall(f"n_calib must be >= 2, got {n_calib}", field="n_calib")
    if order not in ("first_n", "seeded_shuffle"):
        raise InvalidConfig(f"unknown order {order!r}", field="order")
    counts = epochs.counts_per_stimulus()
    short = np.flatnonzero(counts <= n_calib)
    if short.size:
        raise InsufficientTrials(
            f"stimuli {short.tolist()} have <= {n_calib} trials; need more than n_calib"
        )
    rng = np.random.default_rng(seed) if order == "seeded_shuffle" else None
    calib = []
    for k in range(epochs.n_stimuli):
        idx = np.flatnonzero(epochs.labels == k)
        if rng is not None:
            idx = np.sort(rng.permutation(idx)[:n_calib])
        calib.append(idx[:n_calib])
    calib_idx = np.sort(np.concatenate(calib))
    mask = np.ones(epochs.n_trials, dtype=bool)
    mask[calib_idx] = False
    return epochs.subset(calib_idx), epochs.subset(np.flatnonzero(mask))


def split_designated_test(epochs: EpochSet, n_test: int):
    """Reserve the last ``n_test`` trials of every stimulus as test data.

    Returns ``(pool, test)``; calibration trials are then drawn from ``pool``.
    """
    test = []
    for k in range(epochs.n_stimuli):
        idx = np.flatnonzero(epochs.labels == k)
        if idx.size <= n_test:
            raise InsufficientTrials(f"stimulus {k} has {idx.size} trials, cannot hold out {n_test}")
        test.append(idx[idx.size - n_test:])
    test_idx = np.sort(np.concatenate(test))
    mask = np.ones(epochs.n_trials, dtype=bool)
    mask[test_idx] = False
    return epochs.subset(np.flatnonzero(mask)), epochs.subset(test_idx)


def stimulus_templates(epochs: EpochSet) -> np.ndarray:
    """Per-stimulus trial means, ``(n_stimuli, channels, samples)``; NaN rows for absent stimuli."""
    out = np.full((epochs.n_stimuli,) + epochs.trials.shape[1:], np.nan)
    for k in range(epochs.n_stimuli):
        sel = epochs.labels == k
        if sel.any():
            out[k] = epochs.trials[sel].mean(axis=0)
    return out
