"""Confidence binning and signed miscalibration metrics.

The signed score is the count-weighted sum over confidence bins of
(confidence - accuracy): positive means overconfident, negative means
underconfident, zero means the model's confidence matches its hit rate in
every populated bin. The absolute-gap variant (`ece`) sums |gap| instead
and therefore always bounds the signed score's magnitude.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .attacks import METHODS, AttackConfig, perturb
from .data import Dataset
from .errors import EmptyInputError, InvalidConfigError, InvalidInputError
from .nn import Model, forward

_CHUNK = 256


@dataclass(frozen=True)
class PredictionRecord:
    """One scored prediction: the top softmax probability and whether the
    predicted class was the true one."""

    max_confidence: float
    correct: bool

    def __post_init__(self):
        c = self.max_confidence
        if not (0.0 <= c <= 1.0):
            raise InvalidInputError(f"confidence must lie in [0, 1], got {c}")


@dataclass(frozen=True)
class ConfidenceBin:
    count: int
    mean_confidence: float
    accuracy: float


def bin_predictions(records, num_bins: int) -> list[ConfidenceBin]:
    """Group records into equal-width confidence bins over [0, 1].

    Bin m covers [m/M, (m+1)/M), right-open, except the last bin which is
    closed at 1.0. Empty bins are kept with count 0 so the list always has
    num_bins entries.
    """
    if num_bins < 1:
        raise InvalidConfigError(f"num_bins must be >= 1, got {num_bins}")
    records = list(records)
    if not records:
        raise EmptyInputError("no prediction records to bin")
    conf = np.array([r.max_confidence for r in records], dtype=np.float64)
    corr = np.array([r.correct for r in records], dtype=np.float64)
    # canonical accumulation order makes the float sums, and therefore the
    # whole report, exactly invariant under record permutation
    order = np.lexsort((corr, conf))
    conf, corr = conf[order], corr[order]
    idx = np.minimum((conf * num_bins).astype(np.int64), num_bins - 1)
    counts = np.bincount(idx, minlength=num_bins)
    conf_sums = np.bincount(idx, weights=conf, minlength=num_bins)
    corr_sums = np.bincount(idx, weights=corr, minlength=num_bins)
    return [
        ConfidenceBin(
            count=int(c),
            mean_confidence=float(cs / c) if c else 0.0,
            accuracy=float(as_ / c) if c else 0.0,
        )
        for c, cs, as_ in zip(counts, conf_sums, corr_sums)
    ]


def mcs(bins, total: int) -> float:
    """Count-weighted signed gap, sum(|B|/N * (conf(B) - acc(B))).

    Positive values mean overconfidence, negative underconfidence. Empty
    bins contribute nothing through their zero weight.
    """
    if total <= 0:
        raise EmptyInputError("signed score needs at least one record")
    return float(sum(b.count / total * (b.mean_confidence - b.accuracy) for b in bins))


def ece(bins, total: int) -> float:
    """Count-weighted absolute gap, sum(|B|/N * |acc(B) - conf(B)|)."""
    if total <= 0:
        raise EmptyInputError("calibration error needs at least one record")
    return float(sum(b.count / total * abs(b.accuracy - b.mean_confidence) for b in bins))


@dataclass(frozen=True)
class CalibrationReport:
    """Binned calibration summary of one evaluation pass."""

    num_bins: int
    bins: tuple[ConfidenceBin, ...]
    mcs: float
    ece: float
    overall_acc: float
    overall_conf: float
    total: int
    seed: int
    attack: str

    def __post_init__(self):
        if sum(b.count for b in self.bins) != self.total:
            raise InvalidInputError("bin counts do not sum to the record total")
        if self.ece < abs(self.mcs) - 1e-12:
            raise InvalidInputError("absolute gap sum cannot be below the signed gap")

    def to_dict(self) -> dict:
        """Plain-python payload with the stable report schema."""
        return {
            "num_bins": self.num_bins,
            "bins": [
                {"count": b.count, "conf": b.mean_confidence, "acc": b.accuracy}
                for b in self.bins
            ],
            "mcs": self.mcs,
            "ece": self.ece,
            "acc": self.overall_acc,
            "conf": self.overall_conf,
            "n": self.total,
            "seed": self.seed,
            "attack": self.attack,
        }


def report_from_records(records, num_bins: int, seed: int, attack: str) -> CalibrationReport:
    records = sorted(records, key=lambda r: (r.max_confidence, r.correct))
    bins = bin_predictions(records, num_bins)
    total = len(records)
    return CalibrationReport(
        num_bins=num_bins,
        bins=tuple(bins),
        mcs=mcs(bins, total),
        ece=ece(bins, total),
        overall_acc=float(np.mean([r.correct for r in records])),
        overall_conf=float(np.mean([r.max_confidence for r in records])),
        total=total,
        seed=seed,
        attack=attack,
    )


def _worker_count() -> int:
    raw = os.environ.get("MISCAL_THREADS")
    if raw is None:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _score_chunk(model, threat, start, feats, labels, attack_spec):
    if attack_spec is not None:
        method, cfg = attack_spec
        x_hat = perturb(threat, feats, labels, cfg, method, index_base=start)
    else:
        x_hat = feats
    _, y = forward(model, x_hat)
    preds = np.argmax(y, axis=1)
    conf = y[np.arange(y.shape[0]), preds]
    return conf, preds == labels


def evaluate(model: Model, dataset: Dataset, attack=None, num_bins: int = 10, *,
             threat_model: Model | None = None, seed: int | None = None) -> CalibrationReport:
    """Score every example, optionally after an attack, and bin the results.

    `attack` is a (method, AttackConfig) pair, or None for a clean pass.
    Perturbations are crafted on `threat_model` when given (transfer
    setting) while predictions always come from `model`. Examples run in
    dataset order with per-example noise streams, so the report is
    identical no matter how work is chunked; the MISCAL_THREADS environment
    variable caps the worker pool (default 1).
    """
    if len(dataset) == 0:
        raise EmptyInputError("cannot evaluate an empty dataset")
    if dataset.num_classes != model.num_classes:
        raise InvalidInputError(
            f"dataset has {dataset.num_classes} classes, model has {model.num_classes}"
        )
    threat = threat_model if threat_model is not None else model
    if attack is not None:
        method, cfg = attack
        if method not in METHODS:
            raise InvalidConfigError(f"unknown attack method {method!r}; choose from {METHODS}")
        if not isinstance(cfg, AttackConfig):
            raise InvalidConfigError("attack must pair a method name with an AttackConfig")
        if dataset.num_classes != threat.num_classes:
            raise InvalidInputError("threat model class count does not match the dataset")
        descriptor = cfg.describe(method)
        report_seed = cfg.seed if seed is None else seed
    else:
        descriptor = "none"
        report_seed = 0 if seed is None else seed

    chunks = [
        (start, dataset.features[start : start + _CHUNK], dataset.labels[start : start + _CHUNK])
        for start in range(0, len(dataset), _CHUNK)
    ]
    workers = min(_worker_count(), len(chunks))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(
                pool.map(lambda c: _score_chunk(model, threat, c[0], c[1], c[2], attack), chunks)
            )
    else:
        results = [_score_chunk(model, threat, s, f, l, attack) for s, f, l in chunks]

    conf = np.concatenate([r[0] for r in results])
    correct = np.concatenate([r[1] for r in results])
    records = [PredictionRecord(float(c), bool(k)) for c, k in zip(conf, correct)]
    return report_from_records(records, num_bins, report_seed, descriptor)
