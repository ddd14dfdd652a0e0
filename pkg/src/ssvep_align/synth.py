"""Synthetic SSVEP cohorts with known cross-subject structure.

Every subject observes the same latent sinusoid basis through its own channel
mixing matrix, so the exact source-to-target channel map is known.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .data import EpochSet, sample_index
from .errors import InvalidConfig
from .profiles import BENCHMARK_64, OCCIPITAL_8

# At or above this SNR the noise would sit far below float32 resolution of the
# EPOC container; such cohorts are generated exactly noiseless.
NOISELESS_SNR_DB = 200.0
MAX_CONDITION = 20.0
AR_COEF = 0.9


@dataclass(frozen=True)
class SynthConfig:
    n_subjects: int = 5
    n_stimuli: int = 8
    freqs: tuple = ()
    phases: tuple = ()
    n_trials_per_stim: int = 6
    fs: float = 250.0
    window_s: float = 1.5
    n_channels: int = 8
    n_harmonics: int = 3
    snr_db: float = 0.0
    mixing_seed: int = 0
    noise_seed: int = 1

    def __post_init__(self):
        freqs = tuple(float(f) for f in self.freqs) or tuple(8.0 + k for k in range(self.n_stimuli))
        phases = tuple(float(p) for p in self.phases) or tuple(0.5 * np.pi * k for k in range(self.n_stimuli))
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "phases", phases)
        for name in ("n_subjects", "n_stimuli", "n_trials_per_stim", "n_channels", "n_harmonics"):
            if int(getattr(self, name)) < 1:
                raise InvalidConfig("must be >= 1", field=f"synth.{name}")
        if len(freqs) != self.n_stimuli:
            raise InvalidConfig(f"expected {self.n_stimuli} frequencies, got {len(freqs)}", field="synth.freqs")
        if len(phases) != self.n_stimuli:
            raise InvalidConfig(f"expected {self.n_stimuli} phases, got {len(phases)}", field="synth.phases")
        if min(freqs) <= 0:
            raise InvalidConfig("frequencies must be positive", field="synth.freqs")
        if not self.fs > 0:
            raise InvalidConfig("must be > 0", field="synth.fs")
        if self.n_harmonics * max(freqs) >= self.fs / 2:
            raise InvalidConfig("highest harmonic must stay below Nyquist", field="synth.n_harmonics")
        if sample_index(self.window_s, self.fs) < 1:
            raise InvalidConfig("window shorter than one sample", field="synth.window_s")

    @property
    def n_samples(self) -> int:
        return sample_index(self.window_s, self.fs)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SyntheticCohort:
    subjects: list
    mixing: list
    latents: np.ndarray = field(repr=False)

    def __iter__(self):
        # allows ``subjects, mixing = synth_generate(cfg)``
        return iter((self.subjects, self.mixing))


def channel_names_for(n_channels: int) -> tuple:
    if n_channels == len(BENCHMARK_64):
        return BENCHMARK_64
    if n_channels <= len(OCCIPITAL_8):
        return OCCIPITAL_8[:n_channels]
    return tuple(f"Ch{i + 1:02d}" for i in range(n_channels))


def latent_basis(config: SynthConfig) -> np.ndarray:
    """``(n_stimuli, 2*n_harmonics, n_samples)``: sin/cos rows of amplitude 1/h."""
    t = np.arange(config.n_samples) / config.fs
    out = np.empty((config.n_stimuli, 2 * config.n_harmonics, t.size))
    for k, (f, phi) in enumerate(zip(config.freqs, config.phases)):
        for h in range(1, config.n_harmonics + 1):
            arg = 2 * np.pi * h * f * t + h * phi
            out[k, 2 * (h - 1)] = np.sin(arg) / h
            out[k, 2 * (h - 1) + 1] = np.cos(arg) / h
    return out


def random_mixing(rng: np.random.Generator, n_channels: int, n_latent: int) -> np.ndarray:
    """Random ``n_channels x n_latent`` matrix with condition number <= 20 and Frobenius norm sqrt(n_channels)."""
    r = min(n_channels, n_latent)
    U, _ = np.linalg.qr(rng.standard_normal((n_channels, r)))
    V, _ = np.linalg.qr(rng.standard_normal((n_latent, r)))
    sv = np.sort(np.exp(rng.uniform(0.0, np.log(MAX_CONDITION), size=r)))[::-1]
    M = (U * sv) @ V.T
    return M * np.sqrt(n_channels) / np.linalg.norm(M)


def _noise(rng, shape):
    ar = kernels.ar1_filter(rng.standard_normal(shape), AR_COEF) * np.sqrt(1.0 - AR_COEF**2)
    return ar + rng.standard_normal(shape)


def synth_generate(config: SynthConfig) -> SyntheticCohort:
    """Generate one EpochSet per subject.

    Trial ``i`` of stimulus ``k`` for subject ``s`` is ``M_s @ L_k + noise``,
    with AR(1) plus white noise rescaled per trial to the requested SNR.
    Trials are ordered block by block (all stimuli once per block).
    """
    latents = latent_basis(config)
    names = channel_names_for(config.n_channels)
    labels = np.tile(np.arange(config.n_stimuli), config.n_trials_per_stim)
    subjects, mixing = [], []
    for s in range(config.n_subjects):
        M = random_mixing(
            np.random.default_rng([config.mixing_seed, s]), config.n_channels, latents.shape[1]
        )
        clean = np.einsum("cl,klt->kct", M, latents)[labels]
        if config.snr_db >= NOISELESS_SNR_DB:
            trials = clean
        else:
            noise = _noise(np.random.default_rng([config.noise_seed, s]), clean.shape)
            p_sig = np.mean(clean**2, axis=(1, 2))
            p_noise = np.mean(noise**2, axis=(1, 2))
            gain = np.sqrt(p_sig / (p_noise * 10.0 ** (config.snr_db / 10.0)))
            trials = clean + gain[:, None, None] * noise
        subjects.append(
            EpochSet(
                trials=trials,
                labels=labels,
                stim_freqs=config.freqs,
                stim_phases=config.phases,
                fs=config.fs,
                subject_id=f"S{s + 1:02d}",
                channel_names=names,
            )
        )
        mixing.append(M)
    return SyntheticCohort(subjects=subjects, mixing=mixing, latents=latents)
