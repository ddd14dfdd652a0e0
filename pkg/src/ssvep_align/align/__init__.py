"""Neural data alignment and the least-squares baseline."""
from .checkpoint import load_model, save_model
from .lst import LstTransform, lst_fit, lst_transform
from .network import DanConfig, DanModel, dan_backward, dan_forward, dan_loss, predict, update_running_stats
from .optim import AdamState, adam_step
from .pairs import PairSet, TrainPair, make_training_pairs
from .training import (
    STRATEGIES,
    AlignmentFit,
    EpochRecord,
    align_transform,
    fit_alignment,
    pretrain_then_finetune,
    train_phase,
)

__all__ = [
    "AdamState", "AlignmentFit", "DanConfig", "DanModel", "EpochRecord", "LstTransform", "PairSet",
    "STRATEGIES", "TrainPair", "adam_step", "align_transform", "dan_backward", "dan_forward", "dan_loss",
    "fit_alignment", "load_model", "lst_fit", "lst_transform", "make_training_pairs", "predict",
    "pretrain_then_finetune", "save_model", "train_phase", "update_running_stats",
]
