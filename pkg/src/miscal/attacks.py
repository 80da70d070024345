"""L-infinity perturbation generators and the underconfidence objective.

Three generators share one outcome type:

* `iaa_attack` descends a composite loss (cross entropy to the true class
  plus a weighted cross entropy to the uniform distribution), producing
  inputs that stay correctly classified while the top softmax probability
  drops toward its analytic floor.
* `pgd_attack` is the classic overconfidence counterpart: signed-gradient
  ascent on plain cross entropy inside a fixed epsilon box.
* `uniform_noise` draws i.i.d. uniform perturbations as a baseline.

All three keep ||N||_inf <= epsilon and clip the composite input back into
the valid range [0, 1]. Given a config seed they are fully deterministic;
per-example noise streams derive from (seed, example index), so results do
not depend on how a dataset is chunked into batches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateConfigError,
    EmptyInputError,
    InvalidConfigError,
    InvalidInputError,
)
from .nn import Model, backprop_to_input, cross_entropy, forward, one_hot, uniform_target
from .rand import stream

METHODS = ("iaa", "pgd", "un")


@dataclass(frozen=True)
class AttackConfig:
    """Budget and schedule for one perturbation run.

    alpha defaults to epsilon / iterations, the largest step that still
    reaches the box boundary within the budget. lam weighs the pull toward
    the uniform distribution in the composite loss (only the underconfidence
    attack reads it). random_start=False zeroes the initial noise map, which
    makes single-step runs reproducible in closed form.
    """

    epsilon: float
    iterations: int = 40
    alpha: float | None = None
    lam: float = 5.0
    seed: int = 0
    random_start: bool = True

    def __post_init__(self):
        if not math.isfinite(self.epsilon) or self.epsilon < 0:
            raise InvalidConfigError(f"epsilon must be finite and >= 0, got {self.epsilon}")
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise InvalidConfigError(f"iterations must be a positive integer, got {self.iterations}")
        if not math.isfinite(self.lam) or self.lam < 0:
            raise InvalidConfigError(f"lambda weight must be finite and >= 0, got {self.lam}")
        if self.alpha is None:
            object.__setattr__(self, "alpha", self.epsilon / self.iterations)
        if not math.isfinite(self.alpha) or self.alpha < 0:
            raise InvalidConfigError(f"alpha must be finite and >= 0, got {self.alpha}")
        if self.epsilon > 0 and self.alpha <= 0:
            raise InvalidConfigError("alpha must be > 0 when epsilon > 0")
        # 1 ulp of slack so alpha = epsilon / T always counts as reachable
        if self.alpha * self.iterations < self.epsilon * (1.0 - 1e-12):
            raise InvalidConfigError(
                f"budget unreachable: alpha * iterations = {self.alpha * self.iterations} "
                f"< epsilon = {self.epsilon}"
            )

    def describe(self, method: str) -> str:
        """Stable one-line descriptor used in reports and CSV artifacts."""
        if method == "un":
            return f"un(eps={self.epsilon!r},seed={self.seed})"
        base = (
            f"{method}(eps={self.epsilon!r},iters={self.iterations},"
            f"alpha={self.alpha!r},seed={self.seed},random_start={self.random_start}"
        )
        if method == "iaa":
            return base + f",lambda={self.lam!r})"
        return base + ")"


@dataclass(frozen=True)
class AttackOutcome:
    """One perturbed example with the model's verdict on it.

    x_hat is clip(x + perturbation) into [0, 1] and the perturbation always
    satisfies ||N||_inf <= epsilon (plus float32 rounding). Ties in the
    argmax resolve to the lowest class index.
    """

    x_hat: np.ndarray
    perturbation: np.ndarray
    predicted_label: int
    max_confidence: float
    ground_truth_confidence: float
    correct: bool


def iaa_loss(y, label, lam: float):
    """Composite underconfidence objective.

    cross_entropy(y, one_hot(label)) + lam * cross_entropy(y, uniform): the
    first term keeps the prediction correct, the second drags the whole
    distribution toward uniform. Accepts a single distribution or a batch
    of rows (with one label, or one label per row).
    """
    if not math.isfinite(lam) or lam < 0:
        raise InvalidConfigError(f"lambda weight must be finite and >= 0, got {lam}")
    y64 = np.asarray(y, dtype=np.float64)
    k = y64.shape[-1]
    return cross_entropy(y64, one_hot(label, k)) + lam * cross_entropy(y64, uniform_target(k))


def iaa_loss_grad_logits(y, label, lam: float) -> np.ndarray:
    """Exact gradient of the composite loss with respect to the logits.

    Component k equals (1 + lam) * y_k - (one_hot_k + lam / K). Computing it
    analytically through the softmax avoids the probability floor entirely.
    """
    if not math.isfinite(lam) or lam < 0:
        raise InvalidConfigError(f"lambda weight must be finite and >= 0, got {lam}")
    y64 = np.asarray(y, dtype=np.float64)
    k = y64.shape[-1]
    return (1.0 + lam) * y64 - (one_hot(label, k) + lam / k)


def minimizer_confidence(lam: float, num_classes: int) -> tuple[float, float]:
    """Probabilities at the composite loss minimum over the simplex.

    The true class receives (1 + lam/K) / (1 + lam) and every other class
    (lam/K) / (1 + lam); the gap between them is exactly 1 / (1 + lam), so
    the true class always keeps the argmax. lam == 0 is rejected: its
    minimum sits at the one-hot vertex, not at an interior point.
    """
    if num_classes < 2:
        raise InvalidConfigError(f"need at least two classes, got {num_classes}")
    if not math.isfinite(lam) or lam < 0:
        raise InvalidConfigError(f"lambda weight must be finite and >= 0, got {lam}")
    if lam == 0:
        raise DegenerateConfigError("lambda = 0 has its minimum at the one-hot vertex")
    y_true = (1.0 + lam / num_classes) / (1.0 + lam)
    y_other = (lam / num_classes) / (1.0 + lam)
    return y_true, y_other


def _validate_attack_inputs(model: Model, x, labels):
    x_arr = np.asarray(x)
    single = x_arr.ndim == 1
    x2d = np.ascontiguousarray(x_arr[None, :] if single else x_arr, dtype=np.float32)
    if x2d.ndim != 2 or x2d.shape[1] != model.input_dim:
        raise InvalidInputError(
            f"input width {x_arr.shape[-1] if x_arr.ndim else 0} does not match "
            f"model input_dim {model.input_dim}"
        )
    if not np.all(np.isfinite(x2d)) or x2d.min() < 0.0 or x2d.max() > 1.0:
        raise InvalidInputError("attack inputs must lie in [0, 1]")
    lab = np.asarray(labels)
    if lab.ndim == 0:
        lab = lab[None]
    if not np.issubdtype(lab.dtype, np.integer):
        raise InvalidInputError("labels must be integers")
    if lab.shape != (x2d.shape[0],):
        raise InvalidInputError(f"expected {x2d.shape[0]} labels, got {lab.shape}")
    if x2d.shape[0] == 0:
        raise EmptyInputError("attack needs at least one example")
    if lab.min() < 0 or lab.max() >= model.num_classes:
        raise InvalidInputError(f"label out of range [0, {model.num_classes})")
    return x2d, lab.astype(np.int64), single


def _draw_uniform(shape, scale, seed: int, index_base: int, rng) -> np.ndarray:
    if scale == 0.0:
        return np.zeros(shape, dtype=np.float64)
    if rng is not None:
        return rng.uniform(-scale, scale, shape)
    rows = [stream(seed, index_base + i).uniform(-scale, scale, shape[1]) for i in range(shape[0])]
    return np.stack(rows, axis=0)


def _craft(model: Model, x2d, lab, cfg: AttackConfig, method: str,
           index_base: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Batched core; returns (x_hat, noise), both float32 2-D.

    x_hat is np.clip(x + noise, 0, 1) evaluated in float32, so recomputing
    that expression from the returned pair reproduces x_hat bit for bit.
    """
    eps = float(cfg.epsilon)
    if eps == 0.0:
        noise = np.zeros(x2d.shape, dtype=np.float64)
    elif method == "un":
        noise = _draw_uniform(x2d.shape, eps, cfg.seed, index_base, rng)
    else:
        alpha = float(cfg.alpha)
        start_scale = alpha if method == "iaa" else eps
        if cfg.random_start:
            noise = _draw_uniform(x2d.shape, start_scale, cfg.seed, index_base, rng)
        else:
            noise = np.zeros(x2d.shape, dtype=np.float64)
        x64 = x2d.astype(np.float64)
        steps = int(cfg.iterations)
        for t in range(1, steps + 1):
            _, y = forward(model, x64 + noise)
            if method == "iaa":
                g_logits = iaa_loss_grad_logits(y, lab, cfg.lam)
                direction = -1.0
                bound = eps * t / steps  # box grows linearly to eps at the last step
            else:
                g_logits = y - one_hot(lab, model.num_classes)
                direction = 1.0
                bound = eps
            g_input = backprop_to_input(model, x64 + noise, g_logits)
            noise += direction * alpha * np.sign(g_input)
            np.clip(noise, -bound, bound, out=noise)

    n32 = noise.astype(np.float32)
    x_hat = np.clip(x2d + n32, 0.0, 1.0)
    return x_hat, n32


def perturb(model: Model, x, labels, cfg: AttackConfig, method: str, *,
            index_base: int = 0, rng=None) -> np.ndarray:
    """Craft perturbed inputs for a single example or a batch.

    Returns clip(x + N, 0, 1) with the same layout as x. When `rng` is None
    each row draws its starting noise from stream(cfg.seed, index_base + row);
    passing a generator instead pulls all rows from that one stream (cheaper
    inside training loops, still deterministic).

    The underconfidence method takes signed steps against the composite-loss
    gradient under a growing box clamp, t * epsilon / iterations after step t.
    The overconfidence method takes signed steps up the plain cross-entropy
    gradient under the fixed epsilon clamp. Uniform noise draws once and
    ignores the schedule.
    """
    if method not in METHODS:
        raise InvalidConfigError(f"unknown attack method {method!r}; choose from {METHODS}")
    x2d, lab, single = _validate_attack_inputs(model, x, labels)
    x_hat, _ = _craft(model, x2d, lab, cfg, method, index_base, rng)
    return x_hat[0] if single else x_hat


def attack(model: Model, x, labels, cfg: AttackConfig, method: str, *,
           index_base: int = 0, rng=None):
    """Craft perturbations and score them; returns one AttackOutcome for a
    1-D input, a list of outcomes for a batch."""
    if method not in METHODS:
        raise InvalidConfigError(f"unknown attack method {method!r}; choose from {METHODS}")
    x2d, lab, single = _validate_attack_inputs(model, x, labels)
    x_hat, noise = _craft(model, x2d, lab, cfg, method, index_base, rng)
    _, y = forward(model, x_hat)
    preds = np.argmax(y, axis=1)
    outcomes = [
        AttackOutcome(
            x_hat=x_hat[i],
            perturbation=noise[i],
            predicted_label=int(preds[i]),
            max_confidence=float(y[i, preds[i]]),
            ground_truth_confidence=float(y[i, lab[i]]),
            correct=bool(preds[i] == lab[i]),
        )
        for i in range(x_hat.shape[0])
    ]
    return outcomes[0] if single else outcomes


def iaa_attack(model: Model, x, label, cfg: AttackConfig):
    """Underconfidence attack: keep the prediction, starve its confidence."""
    return attack(model, x, label, cfg, "iaa")


def pgd_attack(model: Model, x, label, cfg: AttackConfig):
    """Overconfidence attack: iterated signed-gradient ascent on cross entropy."""
    return attack(model, x, label, cfg, "pgd")


def uniform_noise(model: Model, x, label, cfg: AttackConfig):
    """Baseline: i.i.d. uniform(-epsilon, epsilon) noise, then clip to [0, 1].

    Only cfg.epsilon and cfg.seed are read; the schedule fields are ignored.
    """
    return attack(model, x, label, cfg, "un")
