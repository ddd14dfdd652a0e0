"""Mini-batch training with validation-based model selection, and the two-phase schedule.

Every random draw (initialisation, validation split, batch order) comes from a
generator seeded by ``(config.seed, phase, index)``, so a fit is reproducible
bit for bit and independent of the order in which sources are processed.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..data import EpochSet
from ..errors import EmptyTrainSet, InvalidConfig, SingleSourceFallback
from .network import DanConfig, DanModel, dan_backward, dan_forward, dan_loss, predict, update_running_stats
from .optim import AdamState, adam_step
from .pairs import PairSet, make_training_pairs

log = logging.getLogger(__name__)

STRATEGIES = ("full", "no_stim_indep", "no_pretrain", "no_finetune")

# generator stream tags
_INIT, _PRETRAIN, _FINETUNE, _SCRATCH = 1, 2, 3, 4


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float


def _round(x: float) -> int:
    return int(np.floor(x + 0.5))


def split_pairs(pairs: PairSet, split: str, val_fraction: float, rng: np.random.Generator):
    """Return ``(train_idx, val_idx)``.

    ``subject_wise`` holds out whole source subjects; ``pair_wise`` holds out
    individual pairs. A single pair is used for both training and validation.
    """
    n = len(pairs)
    if n == 0:
        raise EmptyTrainSet("no training pairs")
    if split == "subject_wise":
        subjects = np.array(sorted(set(pairs.source.tolist())), dtype=object)
        if subjects.size < 2:
            raise EmptyTrainSet("a subject-wise split needs at least two source subjects")
        order = subjects[rng.permutation(subjects.size)]
        n_val = min(max(1, _round(val_fraction * subjects.size)), subjects.size - 1)
        held = set(order[:n_val].tolist())
        mask = np.array([s in held for s in pairs.source.tolist()])
        return np.flatnonzero(~mask), np.flatnonzero(mask)
    if split == "pair_wise":
        if n == 1:
            return np.array([0]), np.array([0])
        perm = rng.permutation(n)
        n_val = min(max(1, _round(val_fraction * n)), n - 1)
        return np.sort(perm[n_val:]), np.sort(perm[:n_val])
    raise InvalidConfig(f"unknown split {split!r}", field="split")


def train_phase(
    model: DanModel,
    pairs: PairSet,
    epochs: int,
    split: str,
    config: DanConfig | None = None,
    rng: np.random.Generator | None = None,
):
    """Train with Adam and keep the snapshot with the lowest validation loss.

    Validation runs in inference mode after every epoch; epoch 0 is the model
    as given, so the result is never worse on validation than the input. Ties
    keep the earliest epoch. Returns ``(best_model, history)``.
    """
    config = model.config if config is None else config
    rng = np.random.default_rng(config.seed) if rng is None else rng
    train_idx, val_idx = split_pairs(pairs, split, config.val_fraction, rng)
    if train_idx.size == 0:
        raise EmptyTrainSet("validation split left no training pairs")
    x_val, y_val = pairs.x[val_idx], pairs.y[val_idx]

    best_loss = dan_loss(predict(model, x_val), y_val)
    best = model
    history = [EpochRecord(0, float("nan"), best_loss)]
    state = AdamState.for_model(model)
    bs = config.batch_size
    for epoch in range(1, epochs + 1):
        order = train_idx[rng.permutation(train_idx.size)]
        total = 0.0
        for start in range(0, order.size, bs):
            idx = order[start:start + bs]
            xb, yb = pairs.x[idx], pairs.y[idx]
            out, cache = dan_forward(model, xb, training=True)
            total += dan_loss(out, yb) * idx.size
            grads = dan_backward(model, xb, yb, cache, out=out)
            model, state = adam_step(model, state, grads, config.learning_rate)
            model = update_running_stats(model, cache)
        val_loss = dan_loss(predict(model, x_val), y_val)
        history.append(EpochRecord(epoch, total / order.size, val_loss))
        if val_loss < best_loss:
            best_loss, best = val_loss, model
    return best.with_arrays(mode="infer"), history


def _rng(config: DanConfig, *tags) -> np.random.Generator:
    return np.random.default_rng([config.seed, *tags])


@dataclass
class AlignmentFit:
    """Models produced for one target subject.

    ``per_source`` maps a source subject id (or ``(source id, stimulus)`` for
    the stimulus-specific variant) to the model used to transform its data.
    """

    strategy: str
    pretrained: object
    per_source: dict
    fallback: bool = False
    histories: dict = field(default_factory=dict, repr=False)

    def model_for(self, source_id: str, stimulus: int | None = None) -> DanModel:
        if self.strategy == "no_stim_indep":
            return self.per_source[(source_id, stimulus)]
        return self.per_source[source_id]

    def transform(self, source: EpochSet, target_id: str = "target") -> EpochSet:
        if self.strategy != "no_stim_indep":
            return align_transform(self.model_for(source.subject_id), source, target_id)
        out = np.empty((source.n_trials, self.config.n_out_channels, source.n_samples))
        for k in np.unique(source.labels):
            sel = source.labels == k
            out[sel] = predict(self.model_for(source.subject_id, int(k)), source.trials[sel])
        return source.with_trials(out, subject_id=f"{source.subject_id}→{target_id}")

    @property
    def config(self) -> DanConfig:
        return next(iter(self.per_source.values())).config


def pretrain_then_finetune(sources: Sequence[EpochSet], target_calib: EpochSet, config: DanConfig):
    """Pre-train on pooled source pairs, then fine-tune a copy per source.

    Returns ``(pretrained, {source_id: fine_tuned})``. With a single source
    the pre-training phase is skipped (a :class:`SingleSourceFallback` warning
    is issued) and that source's model is trained for both budgets.
    """
    fit = fit_alignment(sources, target_calib, config, strategy="full")
    return fit.pretrained, fit.per_source


def fit_alignment(
    sources: Sequence[EpochSet], target_calib: EpochSet, config: DanConfig, strategy: str = "full"
) -> AlignmentFit:
    """Fit alignment models for every source subject under a training strategy.

    ``full`` is the two-phase schedule; ``no_pretrain`` trains each source
    from scratch; ``no_finetune`` uses the pre-trained model for every source;
    ``no_stim_indep`` runs the two-phase schedule separately per stimulus.
    """
    if strategy not in STRATEGIES:
        raise InvalidConfig(f"unknown strategy {strategy!r}", field="strategy")
    if not sources:
        raise EmptyTrainSet("no source subjects")
    ids = [s.subject_id for s in sources]
    if len(set(ids)) != len(ids):
        raise InvalidConfig("source subject ids must be unique", field="sources")
    pair_sets = [make_training_pairs(s, target_calib) for s in sources]
    if strategy == "no_stim_indep":
        return _fit_per_stimulus(ids, pair_sets, config)
    if strategy == "no_pretrain" or len(sources) == 1:
        fallback = strategy != "no_pretrain"
        if fallback:
            warnings.warn(
                "only one source subject: skipping pre-training", SingleSourceFallback, stacklevel=2
            )
        per_source, histories = {}, {}
        epochs = config.pretrain_epochs + config.finetune_epochs
        for i, (sid, pairs) in enumerate(zip(ids, pair_sets)):
            init = DanModel.init(config, _rng(config, _INIT, i))
            per_source[sid], histories[sid] = train_phase(
                init, pairs, epochs, "pair_wise", config, _rng(config, _SCRATCH, i)
            )
        pretrained = per_source[ids[0]] if fallback else None
        return AlignmentFit(strategy, pretrained, per_source, fallback=fallback, histories=histories)

    pooled = PairSet.concat(pair_sets)
    init = DanModel.init(config, _rng(config, _INIT))
    g0, h0 = train_phase(init, pooled, config.pretrain_epochs, "subject_wise", config, _rng(config, _PRETRAIN))
    histories = {"pretrain": h0}
    if strategy == "no_finetune":
        return AlignmentFit(strategy, g0, {sid: g0 for sid in ids}, histories=histories)
    per_source = {}
    for i, (sid, pairs) in enumerate(zip(ids, pair_sets)):
        per_source[sid], histories[sid] = train_phase(
            g0, pairs, config.finetune_epochs, "pair_wise", config, _rng(config, _FINETUNE, i)
        )
    log.debug("fitted %d fine-tuned models", len(per_source))
    return AlignmentFit(strategy, g0, per_source, histories=histories)


def _fit_per_stimulus(ids, pair_sets, config) -> AlignmentFit:
    stimuli = sorted(set(np.concatenate([p.stimulus for p in pair_sets]).tolist()))
    pretrained, per_source, histories = {}, {}, {}
    for k in stimuli:
        subsets = [p.for_stimulus(k) for p in pair_sets]
        present = [(i, sid, sub) for i, (sid, sub) in enumerate(zip(ids, subsets)) if len(sub)]
        if len(present) >= 2:
            pooled = PairSet.concat([sub for _, _, sub in present])
            init = DanModel.init(config, _rng(config, _INIT, k))
            g0, histories[("pretrain", k)] = train_phase(
                init, pooled, config.pretrain_epochs, "subject_wise", config, _rng(config, _PRETRAIN, k)
            )
            budget = config.finetune_epochs
        else:
            g0, budget = None, config.pretrain_epochs + config.finetune_epochs
        pretrained[k] = g0
        for i, sid, sub in present:
            start = g0 if g0 is not None else DanModel.init(config, _rng(config, _INIT, k, i))
            per_source[(sid, k)], histories[(sid, k)] = train_phase(
                start, sub, budget, "pair_wise", config, _rng(config, _FINETUNE, k, i)
            )
    return AlignmentFit("no_stim_indep", pretrained, per_source, histories=histories)


def align_transform(model: DanModel, source: EpochSet, target_id: str = "target") -> EpochSet:
    """Map every source trial through the network in inference mode."""
    out = predict(model, source.trials)
    names = source.channel_names if out.shape[1] == source.n_channels else ()
    return source.with_trials(out, subject_id=f"{source.subject_id}→{target_id}", channel_names=names)
