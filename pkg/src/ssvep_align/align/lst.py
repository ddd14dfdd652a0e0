"""Least-squares transformation: one affine channel map per stimulus."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..data import EpochSet
from ..errors import MissingStimulusTransform, RankDeficient, ShapeMismatch
from .pairs import target_templates

DEFAULT_RIDGE = 1e-8


@dataclass(frozen=True, eq=False)
class LstTransform:
    """``matrices[k]`` is ``(C', C + 1)``; its last column is the offset."""

    matrices: dict
    rank_deficient: tuple = ()

    @property
    def stimuli(self) -> tuple:
        return tuple(sorted(self.matrices))


def _fit_one(X: np.ndarray, Y: np.ndarray, ridge: float):
    """Solve ``min ||Y - P [X; 1]||_F`` with a trace-scaled Tikhonov term."""
    Xa = np.vstack([X, np.ones((1, X.shape[1]))])
    gram = Xa @ Xa.T
    lam = ridge * np.trace(gram) / gram.shape[0]
    P = np.linalg.solve(gram + lam * np.eye(gram.shape[0]), Xa @ Y.T).T
    deficient = np.linalg.eigvalsh(gram)[0] < lam
    return P, deficient


def lst_fit(source: EpochSet, target_calib: EpochSet, ridge: float = DEFAULT_RIDGE) -> LstTransform:
    """Fit, per stimulus, the affine map taking each source trial to the target template.

    Source trials of stimulus ``k`` are laid side by side in time and regressed
    onto the template tiled to the same length.
    """
    templates = target_templates(source, target_calib)
    matrices, deficient = {}, []
    for k, tmpl in templates.items():
        trials = source.trials[source.labels == k]
        X = np.concatenate(list(trials), axis=1)
        Y = np.tile(tmpl, (1, trials.shape[0]))
        matrices[k], bad = _fit_one(X, Y, ridge)
        if bad:
            deficient.append(k)
    if deficient:
        warnings.warn(
            f"LST normal equations are rank deficient for stimuli {deficient}; the ridge term dominates",
            RankDeficient,
            stacklevel=2,
        )
    return LstTransform(matrices=matrices, rank_deficient=tuple(deficient))


def lst_transform(t: LstTransform, source: EpochSet, target_id: str = "target") -> EpochSet:
    """Apply ``P_k [x; 1]`` to every trial of stimulus ``k``."""
    missing = sorted(set(np.unique(source.labels).tolist()) - set(t.matrices))
    if missing:
        raise MissingStimulusTransform(f"no LST matrix for stimuli {missing}")
    if source.n_trials == 0:
        return source.with_trials(source.trials.copy(), subject_id=f"{source.subject_id}→{target_id}")
    n_out = next(iter(t.matrices.values())).shape[0]
    out = np.empty((source.n_trials, n_out, source.n_samples))
    for k in np.unique(source.labels):
        P = t.matrices[int(k)]
        if P.shape[1] != source.n_channels + 1:
            raise ShapeMismatch(f"LST matrix expects {P.shape[1] - 1} channels, data has {source.n_channels}")
        sel = source.labels == k
        out[sel] = np.matmul(P[:, :-1], source.trials[sel]) + P[:, -1:]
    names = source.channel_names if n_out == source.n_channels else ()
    return source.with_trials(out, subject_id=f"{source.subject_id}→{target_id}", channel_names=names)
