"""Calibration attack lab.

Craft perturbations that expose a classifier's underconfidence or
overconfidence, train models that resist them, and measure the damage with
signed calibration metrics. See the README for the CLI surface.
"""

from .attacks import (
    AttackConfig,
    AttackOutcome,
    attack,
    iaa_attack,
    iaa_loss,
    iaa_loss_grad_logits,
    minimizer_confidence,
    perturb,
    pgd_attack,
    uniform_noise,
)
from .calibration import (
    CalibrationReport,
    ConfidenceBin,
    PredictionRecord,
    bin_predictions,
    ece,
    evaluate,
    mcs,
)
from .checkpoint import checksum, load_checkpoint, save_checkpoint
from .data import Dataset, load_dataset, parse_dataset_spec, save_cifar_bin, split_dataset, synth_blobs
from .errors import (
    DegenerateConfigError,
    EmptyInputError,
    FormatError,
    InvalidConfigError,
    InvalidInputError,
    MiscalError,
)
from .nn import (
    Model,
    ParamGrads,
    backprop_to_input,
    backprop_to_params,
    cross_entropy,
    forward,
    init_model,
    one_hot,
    sgd_step,
    softmax,
    uniform_target,
)
from .training import TrainConfig, TrainHistory, train

__version__ = "0.1.0"
