"""Raw epochs to analysis-ready epochs, driven by a dataset manifest."""
from __future__ import annotations

from .data import DatasetManifest, EpochSet, extract_window, load_epochs, select_channels
from .dsp import apply_notch, decimate


def preprocess(epochs: EpochSet, manifest: DatasetManifest) -> EpochSet:
    """Notch, decimate, select channels, cut the analysis window; in that order.

    A zero ``notch_hz`` skips the notch and an empty ``channel_subset`` keeps
    every channel.
    """
    if manifest.notch_hz > 0:
        epochs = apply_notch(epochs, manifest.notch_hz, manifest.notch_q)
    epochs = decimate(epochs, manifest.decim_factor)
    if manifest.channel_subset:
        epochs = select_channels(epochs, manifest.channel_subset)
    return extract_window(epochs, manifest.latency_s, manifest.window_s, manifest.onset_offset_s)


def load_preprocessed(manifest: DatasetManifest, subject: str, path=None) -> EpochSet:
    return preprocess(load_epochs(path, manifest, subject), manifest)
