"""Dataset profiles for the Tsinghua benchmark and wearable SSVEP datasets.

A profile bundles the preprocessing manifest with the stimulus table, the
filter-bank size and the trial budget of each dataset. Raw files must first be
converted to EPOC (one file per subject, epochs starting at stimulus onset for
the benchmark set and 0.5 s before it for the wearable set).
"""
from dataclasses import dataclass

import numpy as np

from .data import DatasetManifest

OCCIPITAL_8 = ("PO3", "PO4", "PO5", "PO6", "POz", "O1", "O2", "Oz")

# Synamps2 64-channel montage of the benchmark recordings
BENCHMARK_64 = (
    "FP1", "FPZ", "FP2", "AF3", "AF4", "F7", "F5", "F3", "F1", "FZ", "F2", "F4", "F6", "F8",
    "FT7", "FC5", "FC3", "FC1", "FCZ", "FC2", "FC4", "FC6", "FT8", "T7", "C5", "C3", "C1", "CZ",
    "C2", "C4", "C6", "T8", "M1", "TP7", "CP5", "CP3", "CP1", "CPZ", "CP2", "CP4", "CP6", "TP8",
    "M2", "P7", "P5", "P3", "P1", "PZ", "P2", "P4", "P6", "P8", "PO7", "PO5", "PO3", "POz", "PO4",
    "PO6", "PO8", "CB1", "O1", "Oz", "O2", "CB2",
)

MIN_CALIB_TRIALS = 2


@dataclass(frozen=True)
class DatasetProfile:
    name: str
    manifest: DatasetManifest
    stim_freqs: tuple
    stim_phases: tuple
    n_bands: int
    trials_per_stimulus: int
    calib_range: tuple
    n_test: int

    @property
    def n_stimuli(self) -> int:
        return len(self.stim_freqs)


def _grid(start, step, n):
    return tuple(float(v) for v in np.round(start + step * np.arange(n), 10))


def _phases(n):
    return tuple(float(v) for v in 0.5 * np.pi * np.arange(n))


BENCHMARK = DatasetProfile(
    name="benchmark",
    manifest=DatasetManifest(
        fs_raw=1000.0,
        onset_offset_s=0.0,
        latency_s=0.14,
        window_s=1.5,
        channel_subset=OCCIPITAL_8,
        notch_hz=50.0,
        decim_factor=4,
    ),
    stim_freqs=_grid(8.0, 0.2, 40),
    stim_phases=_phases(40),
    n_bands=5,
    trials_per_stimulus=6,
    calib_range=(2, 4),
    n_test=2,
)

WEARABLE = DatasetProfile(
    name="wearable",
    manifest=DatasetManifest(
        fs_raw=1000.0,
        onset_offset_s=0.5,
        latency_s=0.14,
        window_s=1.5,
        channel_subset=OCCIPITAL_8,
        notch_hz=50.0,
        decim_factor=4,
    ),
    stim_freqs=_grid(9.25, 0.5, 12),
    stim_phases=_phases(12),
    n_bands=3,
    trials_per_stimulus=10,
    calib_range=(2, 6),
    n_test=4,
)

PROFILES = {"benchmark": BENCHMARK, "dataset1": BENCHMARK, "wearable": WEARABLE, "dataset2": WEARABLE}
