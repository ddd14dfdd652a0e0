import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssvep_align.data import EpochSet, split_designated_test
from ssvep_align.decode import (
    accuracy,
    band_correlations,
    band_weights,
    leading_filter,
    trca_classify,
    trca_covariances,
    trca_fit,
    trca_predict,
)
from ssvep_align.dsp import design_filterbank, filter_array
from ssvep_align.errors import Empty, InvalidConfig, LengthMismatch, ShapeMismatch, TooFewTrials
from ssvep_align.synth import SynthConfig, synth_generate


def rayleigh(w, S, Q):
    return (w @ S @ w) / (w @ Q @ w)


def test_band_weights():
    np.testing.assert_allclose(band_weights(3), [1.25, 2**-1.25 + 0.25, 3**-1.25 + 0.25], rtol=1e-15)
    assert band_weights(2)[1] == pytest.approx(0.6705, abs=1e-4)
    assert band_weights(3)[2] == pytest.approx(0.5033, abs=1e-4)


def test_covariances_match_pair_sums(rng):
    trials = rng.standard_normal((4, 3, 20))
    S, Q = trca_covariances(trials)
    X = trials - trials.mean(axis=2, keepdims=True)
    S_ref = sum(X[i] @ X[j].T for i in range(4) for j in range(4) if i != j)
    Q_ref = sum(X[i] @ X[i].T for i in range(4))
    np.testing.assert_allclose(S, S_ref, atol=1e-12)
    np.testing.assert_allclose(Q, Q_ref, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 6), st.integers(2, 8))
def test_leading_filter_solves_eigenproblem(seed, n, c):
    trials = np.random.default_rng(seed).standard_normal((n, c, 50))
    S, Q = trca_covariances(trials)
    w, lam = leading_filter(S, Q)
    assert np.linalg.norm(w) == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.norm(S @ w - lam * Q @ w) / (np.linalg.norm(S) * np.linalg.norm(w)) < 1e-8
    lead = np.flatnonzero(np.abs(w) > 1e-12)[0]
    assert w[lead] > 0
    assert rayleigh(w, S, Q) == pytest.approx(lam, rel=1e-8)


def test_fitted_filters_are_rayleigh_optimal(cohort):
    calib = cohort.subjects[0].subset(np.arange(16))
    model = trca_fit(calib, n_bands=2)
    rng = np.random.default_rng(0)
    V = rng.standard_normal((2000, calib.n_channels))
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    for m, spec in enumerate(model.bank):
        banded = filter_array(calib.trials, spec)
        for k in range(calib.n_stimuli):
            S, Q = trca_covariances(banded[calib.labels == k])
            best = rayleigh(model.filters[m, :, k], S, Q)
            random = np.einsum("vc,cd,vd->v", V, S, V) / np.einsum("vc,cd,vd->v", V, Q, V)
            assert best >= random.max() - 1e-12


def test_identical_trials_classified_perfectly():
    cfg = SynthConfig(n_subjects=1, snr_db=200.0, n_trials_per_stim=3)
    subj = synth_generate(cfg).subjects[0]
    pool, test = split_designated_test(subj, 1)
    model = trca_fit(pool, n_bands=3)
    assert accuracy(trca_predict(test.trials, model), test.labels) == 1.0
    np.testing.assert_allclose(model.eigenvalues, 1.0, atol=1e-6)


def test_template_self_match(cohort):
    subj = cohort.subjects[1]
    model = trca_fit(subj.subset(np.arange(16)), n_bands=3)
    for k in range(subj.n_stimuli):
        template = subj.trials[:16][subj.labels[:16] == k].mean(axis=0)
        idx, scores = trca_classify(template, model)
        assert idx == k and scores[k] == scores.max()


def test_scores_scale_invariant(cohort):
    subj = cohort.subjects[2]
    model = trca_fit(subj.subset(np.arange(16)), n_bands=3)
    trial = subj.trials[20]
    r1 = band_correlations(trial, model)
    r2 = band_correlations(7.3 * trial, model)
    np.testing.assert_allclose(r1, r2, atol=1e-12)
    assert trca_classify(trial, model)[0] == trca_classify(7.3 * trial, model)[0]


def test_ties_pick_lowest_index():
    cfg = SynthConfig(n_subjects=1, n_stimuli=2, freqs=(10.0, 10.0), phases=(0.0, 0.0), snr_db=200.0)
    subj = synth_generate(cfg).subjects[0]
    model = trca_fit(subj, n_bands=1)
    idx, scores = trca_classify(subj.trials[1], model)
    assert scores[0] == scores[1] and idx == 0


def test_duplicated_trial_keeps_valid_solution(cohort):
    calib = cohort.subjects[0].subset(np.arange(16))
    bank = design_filterbank(calib.fs, 1)
    dup = calib.subset(np.concatenate([np.arange(16), [0]]))
    model = trca_fit(dup, bank=bank)
    banded = filter_array(calib.trials, bank[0])
    for k in range(calib.n_stimuli):
        S, Q = trca_covariances(banded[calib.labels == k])
        w_dup = model.filters[0, :, k]
        w_own, lam = leading_filter(S, Q)
        assert rayleigh(w_own, S, Q) >= rayleigh(w_dup, S, Q) - 1e-10


def test_noiseless_channel_rescaling_invariance():
    subj = synth_generate(SynthConfig(n_subjects=1, snr_db=200.0, n_trials_per_stim=3)).subjects[0]
    pool, test = split_designated_test(subj, 1)
    D = np.diag(np.linspace(0.5, 3.0, subj.n_channels))
    scaled_pool = pool.with_trials(np.einsum("dc,nct->ndt", D, pool.trials))
    scaled_test = np.einsum("dc,nct->ndt", D, test.trials)
    a = trca_predict(test.trials, trca_fit(pool, n_bands=2))
    b = trca_predict(scaled_test, trca_fit(scaled_pool, n_bands=2))
    np.testing.assert_array_equal(a, b)


def test_synthetic_decoding_high_snr():
    cfg = SynthConfig(n_subjects=1, snr_db=10.0, mixing_seed=11, noise_seed=12)
    subj = synth_generate(cfg).subjects[0]
    pool, test = split_designated_test(subj, 4)
    model = trca_fit(pool.subset(np.flatnonzero(np.isin(pool.trial_ids, pool.trial_ids[:16]))), n_bands=3)
    assert accuracy(trca_predict(test.trials, model), test.labels) >= 0.95


def test_fit_errors(cohort):
    subj = cohort.subjects[0]
    with pytest.raises(TooFewTrials):
        trca_fit(subj.subset(np.arange(8)), n_bands=1)
    with pytest.raises(InvalidConfig):
        trca_fit(subj, n_bands=2, bank=design_filterbank(subj.fs, 3))
    with pytest.raises(InvalidConfig):
        trca_fit(subj)
    with pytest.raises(InvalidConfig):
        trca_fit(subj, bank=design_filterbank(500.0, 2))
    model = trca_fit(subj, n_bands=1)
    with pytest.raises(ShapeMismatch):
        trca_classify(subj.trials[0][:, :100], model)
    with pytest.raises(InvalidConfig):
        trca_classify(subj.trials[0], model, bank=design_filterbank(subj.fs, 2))


def test_accuracy():
    assert accuracy([1, 2, 3], [1, 2, 3]) == 1.0
    assert accuracy([1, 2], [3, 4]) == 0.0
    assert accuracy([0, 1, 2, 3], [0, 1, 2, 0]) == 0.75
    with pytest.raises(LengthMismatch):
        accuracy([1], [1, 2])
    with pytest.raises(Empty):
        accuracy([], [])


def test_summary_lists_every_filter(cohort):
    model = trca_fit(cohort.subjects[0], n_bands=2)
    text = model.summary()
    assert text.count("eigenvalue") == 2 * 8 and "filter norm 1.000000" in text
