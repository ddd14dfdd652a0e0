"""Source-trial / target-template training pairs."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from ..data import EpochSet
from ..errors import StimulusMismatch, TargetTooFew


class TrainPair(NamedTuple):
    x: np.ndarray
    y: np.ndarray
    stimulus: int
    source: str
    trial_id: int


@dataclass(frozen=True, eq=False)
class PairSet:
    """Pairs stored as stacked arrays; indexing yields :class:`TrainPair`."""

    x: np.ndarray
    y: np.ndarray
    stimulus: np.ndarray
    source: np.ndarray
    trial_id: np.ndarray

    def __len__(self):
        return self.x.shape[0]

    def __getitem__(self, i) -> TrainPair:
        return TrainPair(self.x[i], self.y[i], int(self.stimulus[i]), str(self.source[i]), int(self.trial_id[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def take(self, index) -> "PairSet":
        index = np.asarray(index, dtype=np.int64)
        return PairSet(self.x[index], self.y[index], self.stimulus[index], self.source[index], self.trial_id[index])

    def for_stimulus(self, k: int) -> "PairSet":
        return self.take(np.flatnonzero(self.stimulus == k))

    @staticmethod
    def concat(sets: Sequence["PairSet"]) -> "PairSet":
        return PairSet(
            np.concatenate([s.x for s in sets]),
            np.concatenate([s.y for s in sets]),
            np.concatenate([s.stimulus for s in sets]),
            np.concatenate([s.source for s in sets]),
            np.concatenate([s.trial_id for s in sets]),
        )


def target_templates(source: EpochSet, target_calib: EpochSet) -> dict:
    """Mean target calibration trial for every stimulus that occurs in ``source``."""
    if not np.array_equal(source.stim_freqs, target_calib.stim_freqs):
        raise StimulusMismatch(
            f"source {source.subject_id!r} and target {target_calib.subject_id!r} use different stimulus tables"
        )
    counts = target_calib.counts_per_stimulus()
    templates = {}
    for k in np.unique(source.labels):
        if counts[k] < 2:
            raise TargetTooFew(f"stimulus {k} has {counts[k]} target calibration trials; need >= 2")
        templates[int(k)] = target_calib.trials[target_calib.labels == k].mean(axis=0)
    return templates


def make_training_pairs(source: EpochSet, target_calib: EpochSet) -> PairSet:
    """Pair every source trial with the target template of the same stimulus.

    Pairs from all stimuli are pooled in one set; a pair never mixes stimuli.
    """
    templates = target_templates(source, target_calib)
    y = np.stack([templates[int(k)] for k in source.labels]) if source.n_trials else np.empty(
        (0,) + target_calib.trials.shape[1:]
    )
    return PairSet(
        x=source.trials,
        y=y,
        stimulus=source.labels.copy(),
        source=np.full(source.n_trials, source.subject_id, dtype=object),
        trial_id=source.trial_ids.copy(),
    )
