"""Filter-bank ensemble TRCA.

For every sub-band and stimulus a single spatial filter maximises the
covariance between calibration trials relative to their total covariance.
The filters of all stimuli form the ensemble projection of that band; a test
trial is scored against each stimulus template by the Pearson correlation of
the projected (trial, template) pair, and band scores are combined with
weights ``m**-1.25 + 0.25``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import EpochSet
from .dsp import FilterSpec, design_filterbank, filter_array
from .errors import Empty, InvalidConfig, LengthMismatch, ShapeMismatch, SingularCovariance, TooFewTrials

JITTER = 1e-10


def band_weights(n_bands: int) -> np.ndarray:
    m = np.arange(1, n_bands + 1, dtype=np.float64)
    return m**-1.25 + 0.25


def trca_covariances(trials: np.ndarray):
    """Inter-trial covariance ``S`` and total covariance ``Q`` of ``(n, C, T)`` trials.

    Each trial is centred per channel. ``S`` sums ``X_i X_j^T`` over ordered
    pairs ``i != j``; ``Q`` sums ``X_i X_i^T``.
    """
    X = trials - trials.mean(axis=2, keepdims=True)
    Q = np.einsum("nct,ndt->cd", X, X)
    U = X.sum(axis=0)
    S = U @ U.T - Q
    return 0.5 * (S + S.T), Q


def leading_filter(S: np.ndarray, Q: np.ndarray):
    """Top solution of ``S w = lambda Q w`` via symmetric whitening of ``Q``.

    ``Q`` gets a trace-scaled jitter before whitening. The filter is returned
    with unit norm and its first non-negligible entry positive.
    """
    c = Q.shape[0]
    Qj = Q + JITTER * np.trace(Q) / c * np.eye(c)
    evals, evecs = np.linalg.eigh(Qj)
    if not np.all(np.isfinite(evals)) or evals[0] <= 0:
        raise SingularCovariance("total covariance is not positive definite after jitter")
    inv_sqrt = (evecs / np.sqrt(evals)) @ evecs.T
    M = inv_sqrt @ S @ inv_sqrt
    lam, vecs = np.linalg.eigh(0.5 * (M + M.T))
    w = inv_sqrt @ vecs[:, -1]
    w = w / np.linalg.norm(w)
    if not np.all(np.isfinite(w)):
        raise SingularCovariance("spatial filter is not finite")
    lead = np.flatnonzero(np.abs(w) > 1e-12 * np.abs(w).max())[0]
    if w[lead] < 0:
        w = -w
    return w, float(lam[-1])


@dataclass(frozen=True, eq=False)
class TrcaModel:
    """Fitted ensemble.

    ``filters[m]`` is the ``(C, K)`` ensemble matrix of band ``m``;
    ``templates[m, k]`` is the band-filtered mean calibration trial of
    stimulus ``k``.
    """

    bank: tuple
    filters: np.ndarray
    templates: np.ndarray
    eigenvalues: np.ndarray
    weights: np.ndarray

    @property
    def n_bands(self) -> int:
        return len(self.bank)

    @property
    def n_stimuli(self) -> int:
        return self.templates.shape[1]

    def summary(self) -> str:
        lines = [f"TRCA ensemble: {self.n_bands} bands, {self.n_stimuli} stimuli, "
                 f"{self.filters.shape[1]} channels, {self.templates.shape[-1]} samples"]
        for m, spec in enumerate(self.bank):
            lines.append(f"band {m + 1} [{spec.f_low:g}, {spec.f_high:g}] Hz  weight {self.weights[m]:.6f}")
            for k in range(self.n_stimuli):
                norm = np.linalg.norm(self.filters[m, :, k])
                lines.append(f"  stimulus {k:3d}  eigenvalue {self.eigenvalues[m, k]:.6g}  filter norm {norm:.6f}")
        return "\n".join(lines)


def _resolve_bank(fs, n_bands, bank):
    if bank is None:
        if n_bands is None:
            raise InvalidConfig("give either n_bands or a filter bank", field="n_bands")
        bank = design_filterbank(fs, n_bands)
    bank = tuple(bank)
    if n_bands is not None and len(bank) != n_bands:
        raise InvalidConfig(f"bank has {len(bank)} filters, n_bands is {n_bands}", field="n_bands")
    for spec in bank:
        if spec.fs != fs:
            raise InvalidConfig(f"filter designed for {spec.fs} Hz, data at {fs} Hz", field="bank")
    return bank


def trca_fit(calib: EpochSet, n_bands: int | None = None, bank: list[FilterSpec] | None = None) -> TrcaModel:
    bank = _resolve_bank(calib.fs, n_bands, bank)
    counts = calib.counts_per_stimulus()
    if counts.size == 0 or counts.min() < 2:
        short = np.flatnonzero(counts < 2).tolist()
        raise TooFewTrials(f"stimuli {short} have fewer than 2 calibration trials")
    n_b, K, C = len(bank), calib.n_stimuli, calib.n_channels
    filters = np.empty((n_b, C, K))
    templates = np.empty((n_b, K, C, calib.n_samples))
    eigenvalues = np.empty((n_b, K))
    for m, spec in enumerate(bank):
        banded = filter_array(calib.trials, spec)
        for k in range(K):
            trials = banded[calib.labels == k]
            S, Q = trca_covariances(trials)
            filters[m, :, k], eigenvalues[m, k] = leading_filter(S, Q)
            templates[m, k] = trials.mean(axis=0)
    return TrcaModel(bank=bank, filters=filters, templates=templates, eigenvalues=eigenvalues,
                     weights=band_weights(n_b))


def _standardise(v: np.ndarray) -> np.ndarray:
    v = v - v.mean(axis=-1, keepdims=True)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    return np.divide(v, norm, out=np.zeros_like(v), where=norm > 0)


def band_correlations(trials: np.ndarray, model: TrcaModel) -> np.ndarray:
    """``r[n, m, k]``: correlation of trial ``n`` with template ``k`` in band ``m``."""
    trials = np.asarray(trials, dtype=np.float64)
    if trials.ndim == 2:
        trials = trials[None]
    if trials.shape[1:] != model.templates.shape[2:]:
        raise ShapeMismatch(f"trial shape {trials.shape[1:]} does not match model {model.templates.shape[2:]}")
    n = trials.shape[0]
    r = np.empty((n, model.n_bands, model.n_stimuli))
    for m, spec in enumerate(model.bank):
        W = model.filters[m]
        proj = np.matmul(W.T, filter_array(trials, spec)).reshape(n, -1)
        tmpl = np.matmul(W.T, model.templates[m]).reshape(model.n_stimuli, -1)
        r[:, m, :] = _standardise(proj) @ _standardise(tmpl).T
    return r


def trca_scores(trials: np.ndarray, model: TrcaModel) -> np.ndarray:
    return np.einsum("nmk,m->nk", band_correlations(trials, model), model.weights)


def trca_classify(trial: np.ndarray, model: TrcaModel, bank=None):
    """Return ``(stimulus index, per-stimulus scores)`` for one ``(C, T)`` trial; ties pick the lowest index."""
    if bank is not None and tuple(bank) != model.bank:
        raise InvalidConfig("filter bank differs from the one the model was fitted with", field="bank")
    scores = trca_scores(np.asarray(trial)[None], model)[0]
    return int(np.argmax(scores)), scores


def trca_predict(trials: np.ndarray, model: TrcaModel) -> np.ndarray:
    return np.argmax(trca_scores(trials, model), axis=1)


def accuracy(pred, truth) -> float:
    pred = np.asarray(pred).reshape(-1)
    truth = np.asarray(truth).reshape(-1)
    if pred.size != truth.size:
        raise LengthMismatch(f"{pred.size} predictions for {truth.size} labels")
    if pred.size == 0:
        raise Empty("accuracy of an empty label set")
    return float(np.mean(pred == truth))
