"""Training strategies: plain, adversarial, inverse-adversarial, combined.

One loop covers all four. Augmenting strategies regenerate their perturbed
batch with the current parameters before every update, and the loss always
sees the clean ground-truth labels, never the attack's predictions:

    pt      clean inputs
    at      overconfidence-attack inputs
    iat     underconfidence-attack inputs
    at_iat  the batch twice, one copy of each kind

Each update is one plain SGD step on the mean cross entropy of the batch
that was actually fed in. Runs are fully reproducible: the shuffle and the
attack starting noise come from fixed substreams of the config seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import checkpoint
from .attacks import AttackConfig, perturb
from .data import Dataset
from .errors import EmptyInputError, InvalidConfigError, InvalidInputError
from .nn import PROB_FLOOR, Model, backprop_to_params, forward, one_hot, sgd_step
from .rand import stream

STRATEGIES = ("pt", "at", "iat", "at_iat")

# substream tags under the run seed
_SHUFFLE, _NOISE = 1, 2


@dataclass(frozen=True)
class TrainConfig:
    """Strategy, schedule, and inner attack budget for one training run.

    eta may be zero (the run then measures without updating), and
    inner_attack is ignored for plain training but mandatory, with a
    positive budget, for every augmenting strategy.
    """

    strategy: str
    eta: float
    epochs: int
    batch_size: int
    inner_attack: AttackConfig | None = None
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise InvalidConfigError(
                f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}"
            )
        if not math.isfinite(self.eta) or self.eta < 0:
            raise InvalidConfigError(f"eta must be finite and >= 0, got {self.eta}")
        if self.epochs < 1:
            raise InvalidConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise InvalidConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.strategy != "pt":
            if self.inner_attack is None or self.inner_attack.epsilon <= 0:
                raise InvalidConfigError(
                    f"strategy {self.strategy!r} needs an inner attack with epsilon > 0"
                )


@dataclass(frozen=True)
class EpochStats:
    loss: float
    accuracy: float


@dataclass(frozen=True)
class TrainHistory:
    epochs: tuple[EpochStats, ...]
    final_checksum: str


def augment_batch(model: Model, feats, labels, cfg: TrainConfig, rng):
    """Apply the strategy's augmentation; returns (inputs, clean labels)."""
    if cfg.strategy == "pt":
        return feats, labels
    if cfg.strategy == "at":
        return perturb(model, feats, labels, cfg.inner_attack, "pgd", rng=rng), labels
    if cfg.strategy == "iat":
        return perturb(model, feats, labels, cfg.inner_attack, "iaa", rng=rng), labels
    x_adv = perturb(model, feats, labels, cfg.inner_attack, "pgd", rng=rng)
    x_inv = perturb(model, feats, labels, cfg.inner_attack, "iaa", rng=rng)
    return np.concatenate([x_adv, x_inv]), np.concatenate([labels, labels])


def train(model: Model, dataset: Dataset, cfg: TrainConfig) -> tuple[Model, TrainHistory]:
    """Run the configured strategy and return the new model plus per-epoch
    mean loss and accuracy (measured on the augmented inputs at the
    pre-update parameters)."""
    if len(dataset) == 0:
        raise EmptyInputError("cannot train on an empty dataset")
    if dataset.num_classes != model.num_classes:
        raise InvalidInputError(
            f"dataset has {dataset.num_classes} classes, model has {model.num_classes}"
        )
    if dataset.dim != model.input_dim:
        raise InvalidInputError(
            f"dataset width {dataset.dim} does not match model input_dim {model.input_dim}"
        )

    shuffle_rng = stream(cfg.seed, _SHUFFLE)
    noise_rng = stream(cfg.seed, _NOISE)
    n = len(dataset)
    history = []
    for _ in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        loss_sum = 0.0
        hits = 0
        seen = 0
        for start in range(0, n, cfg.batch_size):
            take = order[start : start + cfg.batch_size]
            inputs, labels = augment_batch(
                model, dataset.features[take], dataset.labels[take], cfg, noise_rng
            )
            _, y = forward(model, inputs)
            targets = one_hot(labels, model.num_classes)
            m = inputs.shape[0]
            loss_sum += float(-np.sum(np.log(np.maximum(y[np.arange(m), labels], PROB_FLOOR))))
            hits += int(np.sum(np.argmax(y, axis=1) == labels))
            seen += m
            grads = backprop_to_params(model, inputs, (y - targets) / m)
            model = sgd_step(model, grads, cfg.eta)
        history.append(EpochStats(loss=loss_sum / seen, accuracy=hits / seen))
    return model, TrainHistory(tuple(history), checkpoint.checksum(model))
