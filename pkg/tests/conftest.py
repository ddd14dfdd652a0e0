import numpy as np
import pytest

from ssvep_align.data import EpochSet
from ssvep_align.synth import SynthConfig, synth_generate


def random_epochs(rng, n_trials=6, n_channels=3, n_samples=20, n_stimuli=2, fs=250.0, subject="S01"):
    # float32-representable values so EPOC round-trips are exact
    trials = rng.standard_normal((n_trials, n_channels, n_samples)).astype(np.float32).astype(np.float64)
    labels = np.arange(n_trials) % n_stimuli
    return EpochSet(
        trials=trials,
        labels=labels,
        stim_freqs=8.0 + np.arange(n_stimuli),
        stim_phases=0.5 * np.pi * np.arange(n_stimuli),
        fs=fs,
        subject_id=subject,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def cohort():
    return synth_generate(SynthConfig(n_subjects=4, snr_db=10.0, mixing_seed=3, noise_seed=4))


@pytest.fixture(scope="session")
def noiseless_cohort():
    return synth_generate(SynthConfig(n_subjects=3, snr_db=200.0, mixing_seed=5))


_CRITERIA: dict = {}


@pytest.fixture
def criterion():
    """Record one acceptance verdict, print it, and fail the test when it does not hold."""
    def record(number: int, ok: bool, detail: str) -> None:
        _CRITERIA[number] = (bool(ok), detail)
        print(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        ok, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
