"""Neural alignment of SSVEP data across subjects, with TRCA decoding and a LOSO evaluation harness."""
from ._accel import USE_NUMBA
from .align import DanConfig, DanModel, LstTransform, fit_alignment, lst_fit, lst_transform
from .data import DatasetManifest, EpochSet, load_manifest, read_epoc, save_epochs
from .decode import TrcaModel, trca_fit, trca_predict
from .evaluation import EvaluationReport, SchemeId, TaskSpec, run_loso, sweep_calibration, sweep_sources
from .synth import SynthConfig, synth_generate

__version__ = "0.1.0"

__all__ = [
    "DanConfig", "DanModel", "DatasetManifest", "EpochSet", "EvaluationReport", "LstTransform", "SchemeId",
    "SynthConfig", "TaskSpec", "TrcaModel", "USE_NUMBA", "fit_alignment", "load_manifest", "lst_fit",
    "lst_transform", "read_epoc", "run_loso", "save_epochs", "sweep_calibration", "sweep_sources",
    "synth_generate", "trca_fit", "trca_predict",
]
