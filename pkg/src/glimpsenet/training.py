"""Mini-batch SGD training with per-epoch negative resampling.

Labeled glimpse sequences are heavily imbalanced (few humans, many
distractors), so each epoch keeps every positive and redraws a capped
number of negatives without replacement before shuffling. The optimizer is
plain SGD over batch-averaged exact gradients with a per-epoch decayed
learning rate; no momentum.

Training is logically single-threaded and fully deterministic: one
SplitMix64 stream seeded from the config drives initialization first, then
each epoch's resampling, so (seed, dataset, config) fixes every artifact
bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, TrainingDivergedError
from .features import FeatureSequence
from .nnet import (ConcatModelParams, FusionModelParams, ModelParams,
                   backward_concat_batch, backward_fusion_batch,
                   forward_concat_batch, forward_fusion_batch, init_concat,
                   init_fusion, loss_nll)
from .rng import SplitMix64


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 0.0004
    decay: float = 0.97
    epochs: int = 100
    batch_size: int = 32
    neg_ratio: float = 3.0
    seed: int = 0
    variant: str = "fusion"
    hidden: int = 256

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ConfigError("lr0 must be positive")
        if not (0 < self.decay <= 1):
            raise ConfigError("decay must lie in (0, 1]")
        if self.neg_ratio <= 0:
            raise ConfigError("neg_ratio must be positive")
        if self.variant not in ("concat", "fusion"):
            raise ConfigError("variant must be 'concat' or 'fusion'")
        if self.epochs < 0 or self.batch_size < 1 or self.hidden < 1:
            raise ConfigError("epochs >= 0, batch_size >= 1, hidden >= 1")


@dataclass
class Dataset:
    positives: list[FeatureSequence]
    negatives: list[FeatureSequence]

    def __post_init__(self):
        shapes = {(s.steps, s.dim)
                  for s in list(self.positives) + list(self.negatives)}
        if len(shapes) > 1:
            raise ValueError(f"sequences disagree on (T, D): {sorted(shapes)}")

    @property
    def steps(self) -> int:
        return (self.positives or self.negatives)[0].steps

    @property
    def dim(self) -> int:
        return (self.positives or self.negatives)[0].dim


@dataclass
class EpochStats:
    epoch: int
    lr: float
    mean_loss: float
    train_accuracy: float


@dataclass
class TrainResult:
    best: ModelParams        # parameters at the lowest mean-loss epoch
    final: ModelParams
    log: list[EpochStats] = field(default_factory=list)
    best_epoch: int = -1


def learning_rate(lr0: float, decay: float, epoch: int) -> float:
    """Per-epoch exponential decay: lr0 * decay ** epoch."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return lr0 * decay ** epoch


def resample_epoch(dataset: Dataset, neg_ratio: float,
                   rng: SplitMix64) -> list[FeatureSequence]:
    """All positives plus floor(neg_ratio * n_pos) negatives drawn uniformly
    without replacement (capped at the available negatives), shuffled."""
    if not dataset.positives:
        raise ConfigError("training requires at least one positive sample")
    want = min(int(math.floor(neg_ratio * len(dataset.positives))),
               len(dataset.negatives))
    idx = rng.sample_indices(len(dataset.negatives), want)
    epoch = list(dataset.positives) + [dataset.negatives[i] for i in idx]
    rng.shuffle(epoch)
    return epoch


def _clone(params: ModelParams) -> ModelParams:
    if isinstance(params, ConcatModelParams):
        chain = params.chain
        return ConcatModelParams(
            chain=type(chain)(W=chain.W.copy(), b=chain.b.copy(),
                              hidden_size=chain.hidden_size),
            head_w=params.head_w.copy(), head_b=params.head_b.copy())
    def cp(ch):
        return type(ch)(W=ch.W.copy(), b=ch.b.copy(),
                        hidden_size=ch.hidden_size)
    return FusionModelParams(color_chain=cp(params.color_chain),
                             depth_chain=cp(params.depth_chain),
                             fusion_chain=cp(params.fusion_chain),
                             head_w=params.head_w.copy(),
                             head_b=params.head_b.copy())


def _stack_batch(samples: list[FeatureSequence]):
    color = np.stack([s.color for s in samples])
    depth = np.stack([s.depth for s in samples])
    y = np.array([float(s.label) for s in samples])
    return color, depth, y


def train(dataset: Dataset, config: TrainConfig) -> TrainResult:
    """Full training loop; see the module docstring for the schedule.

    Every positive must carry label 1 and every negative label 0; a
    non-finite loss aborts with the offending epoch and batch named.
    """
    if not dataset.positives:
        raise ConfigError("training requires at least one positive sample")
    for s in dataset.positives:
        if s.label != 1:
            raise ValueError("positives must carry label 1")
    for s in dataset.negatives:
        if s.label != 0:
            raise ValueError("negatives must carry label 0")

    rng = SplitMix64(config.seed)
    if config.variant == "concat":
        params: ModelParams = init_concat(dataset.dim, config.hidden, rng)
        fwd, bwd = forward_concat_batch, backward_concat_batch
    else:
        params = init_fusion(dataset.dim, config.hidden, rng)
        fwd, bwd = forward_fusion_batch, backward_fusion_batch

    result = TrainResult(best=_clone(params), final=params, log=[])
    best_loss = math.inf
    for epoch in range(config.epochs):
        lr = learning_rate(config.lr0, config.decay, epoch)
        samples = resample_epoch(dataset, config.neg_ratio, rng)
        loss_sum = 0.0
        correct = 0
        for start in range(0, len(samples), config.batch_size):
            batch = samples[start:start + config.batch_size]
            color, depth, y = _stack_batch(batch)
            p, _, caches = fwd(params, color, depth)
            losses = loss_nll(p, y)
            if not np.all(np.isfinite(losses)):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, "
                    f"batch {start // config.batch_size}")
            loss_sum += float(losses.sum())
            correct += int(np.sum((p > 0.5) == (y == 1.0)))
            grads = bwd(params, caches, p, y)
            scale = lr / len(batch)  # batch-averaged gradients
            for name, tensor in params.tensors().items():
                tensor -= scale * grads[name]
        mean_loss = loss_sum / len(samples)
        result.log.append(EpochStats(epoch=epoch, lr=lr, mean_loss=mean_loss,
                                     train_accuracy=correct / len(samples)))
        if mean_loss < best_loss:
            best_loss = mean_loss
            result.best = _clone(params)
            result.best_epoch = epoch
    result.final = params
    return result


def write_train_log(path, log: list[EpochStats]) -> None:
    lines = ["epoch,lr,mean_loss,train_accuracy"]
    for row in log:
        lines.append(f"{row.epoch},{row.lr!r},{row.mean_loss!r},"
                     f"{row.train_accuracy!r}")
    from .imaging import _atomic_write
    _atomic_write(path, ("\n".join(lines) + "\n").encode())
