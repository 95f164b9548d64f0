"""Multi-frequency prompt tuning for localising diffusion edits.

Subpackages and modules:

* :mod:`mfpt.data` - manifests, masks, split leakage, area statistics
* :mod:`mfpt.frequency` - grayscale and ideal high-pass prompt images
* :mod:`mfpt.model` - frozen ViT + prompters, adapters and pixel decoder
* :mod:`mfpt.losses`, :mod:`mfpt.training` - Dice + BCE objective and loop
* :mod:`mfpt.metrics`, :mod:`mfpt.evaluation`, :mod:`mfpt.degrade` - scoring and robustness
* :mod:`mfpt.triage` - probability-map triage for dataset labelling
* :mod:`mfpt.synth` - procedural desk-scale dataset
"""
from .data import (
    DatasetManifest,
    ImageSample,
    area_histogram,
    check_split_leakage,
    edited_area_ratio,
    load_manifest,
    save_manifest,
)
from .losses import LossWeights, bce_loss, dice_loss, total_loss
from .metrics import ConfusionCounts, binarize, confusion, metrics
from .model import MFPT, MfptConfig, parameter_accounting
from .training import TrainConfig, select_best_checkpoint, train
from .triage import TriagePolicy, area_gate, finalize_label, run_triage, triage_decide

__version__ = "0.1.0"
