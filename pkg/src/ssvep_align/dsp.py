"""Filtering and spectral estimation.

Band-pass and anti-alias filters are linear-phase windowed-sinc FIRs applied
with their group delay removed, so outputs stay time-aligned with inputs. The
power-line notch is a single IIR biquad run forward and backward.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal

from .data import EpochSet
from .errors import (
    EdgeAboveNyquist,
    FrequencyOutOfRange,
    InvalidBandCount,
    InvalidConfig,
    InvalidFactor,
    IoFailure,
    SampleRateMismatch,
    SegmentTooLong,
)

DEFAULT_NOTCH_Q = 35.0
DEFAULT_BASE_LOW = 8.0
DEFAULT_HIGH_EDGE = 88.0


def default_taps(fs: float) -> int:
    """Odd tap count spanning about one second: 251 at 250 Hz."""
    return 2 * int(round(fs / 2)) + 1


@dataclass(frozen=True)
class FilterSpec:
    kind: str
    f_low: float
    f_high: float = 0.0
    fs: float = 250.0
    order_or_taps: int = 251
    notch_q: float = DEFAULT_NOTCH_Q

    def __post_init__(self):
        nyq = self.fs / 2
        if self.kind not in ("notch", "lowpass", "bandpass"):
            raise InvalidConfig(f"unknown filter kind {self.kind!r}", field="kind")
        if not 0 < self.f_low < nyq:
            raise FrequencyOutOfRange(f"f_low={self.f_low} Hz outside (0, {nyq}) Hz", field="f_low")
        if self.kind == "bandpass" and not self.f_low < self.f_high < nyq:
            raise EdgeAboveNyquist(
                f"band [{self.f_low}, {self.f_high}] Hz does not fit below Nyquist {nyq} Hz", field="f_high"
            )
        if self.kind != "notch" and (self.order_or_taps < 3 or self.order_or_taps % 2 == 0):
            raise InvalidConfig("FIR tap count must be odd and >= 3", field="order_or_taps")


@functools.lru_cache(maxsize=64)
def fir_taps(spec: FilterSpec) -> np.ndarray:
    if spec.kind == "bandpass":
        edges, pass_zero = [spec.f_low, spec.f_high], False
    elif spec.kind == "lowpass":
        edges, pass_zero = spec.f_low, True
    else:
        raise InvalidConfig("notch filters are IIR", field="kind")
    taps = signal.firwin(spec.order_or_taps, edges, pass_zero=pass_zero, window="hamming", fs=spec.fs)
    taps.setflags(write=False)
    return taps


def odd_extend(x: np.ndarray, pad: int) -> np.ndarray:
    """Point-reflect ``pad`` samples about each end of the last axis.

    Unlike a mirror, this keeps the slope continuous, so sinusoids and trends
    continue without a kink and FIR edge transients stay small.
    """
    if pad < 1:
        return x
    left = 2 * x[..., :1] - x[..., pad:0:-1]
    right = 2 * x[..., -1:] - x[..., -2:-pad - 2:-1]
    return np.concatenate((left, x, right), axis=-1)


def fir_zero_phase(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Convolve along the last axis with a symmetric FIR, centred (no delay).

    The signal is padded by ``len(taps)`` samples of point reflection on both
    sides (fewer when the signal is shorter) and cropped afterwards.
    """
    pad = min(len(taps), x.shape[-1] - 1)
    xp = odd_extend(x, pad)
    kernel = taps.reshape((1,) * (x.ndim - 1) + (-1,))
    y = signal.fftconvolve(xp, kernel, mode="same", axes=-1)
    return y[..., pad:pad + x.shape[-1]]


def filter_array(x: np.ndarray, spec: FilterSpec) -> np.ndarray:
    if spec.kind == "notch":
        b, a = signal.iirnotch(spec.f_low, spec.notch_q, fs=spec.fs)
        order = len(a) - 1
        padlen = min(3 * order, x.shape[-1] - 1)
        return signal.filtfilt(b, a, x, axis=-1, padtype="odd", padlen=padlen)
    return fir_zero_phase(x, fir_taps(spec))


def apply_notch(epochs: EpochSet, f0: float = 50.0, q: float = DEFAULT_NOTCH_Q) -> EpochSet:
    if not 0 < f0 < epochs.fs / 2:
        raise FrequencyOutOfRange(f"notch at {f0} Hz is outside (0, {epochs.fs / 2}) Hz", field="notch_hz")
    spec = FilterSpec("notch", f0, fs=epochs.fs, order_or_taps=2, notch_q=q)
    return epochs.with_trials(filter_array(epochs.trials, spec))


def decimate_array(x: np.ndarray, fs: float, factor: int) -> np.ndarray:
    if factor == 1:
        return x.copy()
    cutoff = 0.8 * fs / (2 * factor)
    taps = fir_taps(FilterSpec("lowpass", cutoff, fs=fs, order_or_taps=30 * factor + 1))
    return fir_zero_phase(x, taps)[..., ::factor]


def decimate(epochs: EpochSet, factor: int) -> EpochSet:
    """Anti-alias low-pass at 80% of the new Nyquist, then keep every ``factor``-th sample."""
    if int(factor) != factor or factor < 1:
        raise InvalidFactor(f"decimation factor must be a positive integer, got {factor}", field="decim_factor")
    factor = int(factor)
    return epochs.with_trials(decimate_array(epochs.trials, epochs.fs, factor), fs=epochs.fs / factor)


def design_filterbank(
    fs: float,
    n_bands: int,
    base_low: float = DEFAULT_BASE_LOW,
    high_edge: float = DEFAULT_HIGH_EDGE,
    n_taps: int | None = None,
) -> list[FilterSpec]:
    """Sub-band ``m`` (1-based) passes ``[m * base_low, high_edge]`` Hz."""
    if n_bands < 1:
        raise InvalidBandCount(f"need at least one band, got {n_bands}", field="n_bands")
    if high_edge >= fs / 2:
        raise EdgeAboveNyquist(f"upper edge {high_edge} Hz is not below Nyquist {fs / 2} Hz", field="high_edge")
    if n_bands * base_low >= high_edge:
        raise InvalidBandCount(
            f"{n_bands} bands of {base_low} Hz steps reach the upper edge {high_edge} Hz", field="n_bands"
        )
    taps = default_taps(fs) if n_taps is None else n_taps
    return [FilterSpec("bandpass", m * base_low, high_edge, fs, taps) for m in range(1, n_bands + 1)]


def apply_bandpass(epochs: EpochSet, spec: FilterSpec) -> EpochSet:
    if spec.fs != epochs.fs:
        raise SampleRateMismatch(f"filter designed for {spec.fs} Hz, data at {epochs.fs} Hz")
    return epochs.with_trials(filter_array(epochs.trials, spec))


# ------------------------------------------------------------------ spectra


@dataclass(frozen=True)
class Spectrum:
    freqs: np.ndarray
    power: np.ndarray
    resolution: float

    def peak_frequency(self) -> float:
        return float(self.freqs[np.argmax(self.power)])

    def to_csv(self, path) -> None:
        lines = ["freq,power"] + [f"{f!r},{p!r}" for f, p in zip(self.freqs.tolist(), self.power.tolist())]
        try:
            Path(path).write_text("\n".join(lines) + "\n")
        except OSError as exc:
            raise IoFailure(f"cannot write {path}: {exc}") from exc


def psd_welch(x, fs: float, seg_len: int | None = None, overlap: float = 0.5) -> Spectrum:
    """One-sided Welch density with Hann windows; units are input units squared per Hz."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if seg_len is None:
        seg_len = min(x.size, int(round(fs)))
    if seg_len > x.size:
        raise SegmentTooLong(f"segment of {seg_len} samples exceeds signal length {x.size}")
    if not 0 <= overlap < 1:
        raise InvalidConfig("overlap must lie in [0, 1)", field="overlap")
    noverlap = min(int(round(overlap * seg_len)), seg_len - 1)
    _, power = signal.welch(
        x, fs=fs, window="hann", nperseg=seg_len, noverlap=noverlap, detrend="constant", scaling="density"
    )
    resolution = fs / seg_len
    return Spectrum(freqs=np.arange(power.size) * resolution, power=power, resolution=resolution)
