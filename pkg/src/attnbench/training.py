"""Training loop (cross-entropy, SGD with momentum and weight decay, step
learning-rate schedule) and the AUC-ROC evaluation metric."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tensor as T
from .data import ImageStore, batches
from .errors import ConfigurationError, ContractError, EvaluationError, TrainingDiverged
from .resnet import ResNet18
from .tensor import Tape, Tensor


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    lr0: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 1e-4
    decay_factor: float = 0.1
    decay_points: tuple[float, ...] = (0.3, 0.6, 0.9)
    seeds: tuple[int, ...] = (0, 1, 2)
    resplit_per_run: bool = False

    def validate(self) -> None:
        for name in ("epochs", "batch_size", "decay_factor"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"train.{name} must be positive, got {getattr(self, name)}")
        # lr0 = 0 stays legal: a zero step size must leave parameters untouched
        for name in ("lr0", "momentum", "weight_decay"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"train.{name} must be >= 0, got {getattr(self, name)}")
        pts = self.decay_points
        if any(not 0.0 < p < 1.0 for p in pts) or any(b <= a for a, b in zip(pts, pts[1:])):
            raise ConfigurationError(
                f"train.decay_points must be strictly increasing in (0, 1), got {pts}")
        if not self.seeds:
            raise ConfigurationError("at least one seed is required")


def lr_at(config: TrainConfig, epoch: int) -> float:
    """Piecewise-constant schedule: lr0 scaled by decay_factor once per passed
    decay point (points land at floor(p * epochs))."""
    if not 0 <= epoch < config.epochs:
        raise ConfigurationError(f"epoch {epoch} outside [0, {config.epochs})")
    passed = sum(1 for p in config.decay_points if epoch >= int(np.floor(p * config.epochs)))
    return config.lr0 * config.decay_factor ** passed


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean over the batch of -log softmax(logits)[label]."""
    n, k = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ContractError(f"labels shape {labels.shape} does not match batch {n}")
    if labels.min() < 0 or labels.max() >= k:
        raise ContractError(f"labels must lie in [0, {k}), got range "
                            f"[{labels.min()}, {labels.max()}]")
    onehot = np.zeros((n, k))
    onehot[np.arange(n), labels] = 1.0
    picked = T.tsum(T.mul(T.log_softmax(logits, axis=1), Tensor(onehot)))
    return T.scale(picked, -1.0 / n)


class SGD:
    """SGD with momentum and decoupled-from-nothing classic weight decay:
    g' = grad + wd * param; v = momentum * v + g'; param -= lr * v."""

    def __init__(self, params: Sequence[Tensor], momentum: float = 0.9,
                 weight_decay: float = 1e-4):
        self.params = list(params)
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr: float) -> None:
        for p, v in zip(self.params, self.velocity):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            g = g + self.weight_decay * p.data
            v *= self.momentum
            v += g
            p.data = p.data - lr * v

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def positive_scores(model: ResNet18, store: ImageStore, split: str,
                    batch_size: int) -> tuple[np.ndarray, np.ndarray]:
    """Eval-mode softmax probability of the positive class for every sample."""
    scores, labels = [], []
    for batch in batches(store, split, batch_size):
        logits = model.forward(batch.images, training=False)
        p = T.softmax(logits, axis=1).data[:, 1]
        scores.append(p)
        labels.append(batch.labels)
    return np.concatenate(scores), np.concatenate(labels)


def auc_roc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Area under the ROC curve via the rank statistic: the probability that
    a random positive outscores a random negative, ties at half credit."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError(
            f"AUC undefined: need both classes, got {n_pos} positive / {n_neg} negative")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    rank = 1.0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = (rank + (rank + (j - i))) / 2.0  # average rank of the tie group
        rank += j - i + 1
        i = j + 1
    pos_rank_sum = ranks[labels == 1].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass
class EpochLog:
    epoch: int
    lr: float
    train_loss: float
    val_auc: float


@dataclass
class FitResult:
    model: ResNet18
    log: list[EpochLog] = field(default_factory=list)

    def final_auc(self) -> float:
        return self.log[-1].val_auc

    def log_csv(self) -> str:
        lines = ["epoch,lr,train_loss,val_auc"]
        lines += [f"{r.epoch},{r.lr:.10g},{r.train_loss:.10g},{r.val_auc:.10g}"
                  for r in self.log]
        return "\n".join(lines) + "\n"


def fit(model: ResNet18, store: ImageStore, config: TrainConfig, seed: int) -> FitResult:
    """Run the full training loop; deterministic for a given (seed, config,
    store).  Epoch shuffles derive from (seed, epoch), so the data order does
    not depend on how the model was initialized."""
    config.validate()
    opt = SGD(model.parameters(), momentum=config.momentum,
              weight_decay=config.weight_decay)
    result = FitResult(model=model)
    for epoch in range(config.epochs):
        lr = lr_at(config, epoch)
        epoch_seed = int(np.random.SeedSequence([int(seed), epoch]).generate_state(1)[0])
        losses = []
        for batch in batches(store, "train", config.batch_size, epoch_seed=epoch_seed):
            with Tape() as tape:
                logits = model.forward(batch.images, training=True)
                loss = cross_entropy(logits, batch.labels)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingDiverged(
                    f"non-finite loss {value} at epoch {epoch}, lr {lr}; "
                    f"batch ids {batch.ids[:4]}...")
            opt.zero_grad()
            tape.backward(loss)
            opt.step(lr)
            losses.append(value)
        scores, labels = positive_scores(model, store, "val", config.batch_size)
        result.log.append(EpochLog(epoch=epoch, lr=lr,
                                   train_loss=float(np.mean(losses)),
                                   val_auc=auc_roc(scores, labels)))
    return result
