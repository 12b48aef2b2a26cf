"""Mini-batch training with adaptive moment estimation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import GraphTensors, backward, cross_entropy, forward, loss_grad_logits, softmax
from .params import ModelParams, zeros_like_params


class EmptyDataset(ValueError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 15
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class TrainLogEntry:
    epoch: int
    train_loss: float
    val_acc: float


Sample = tuple[GraphTensors, int]  # graph tensors, class index (0 benign, 1 vulnerable)


def batch_gradients(batch: list[Sample], params: ModelParams) -> tuple[float, dict[str, np.ndarray]]:
    """Mean loss over the batch and the gradient of that mean."""
    if not batch:
        raise EmptyDataset("gradient of an empty batch")
    total = zeros_like_params(params)
    loss = 0.0
    for gt, label in batch:
        cache = forward(gt, params)
        loss += cross_entropy(cache.logits, label)
        grads, _, _ = backward(cache, params, loss_grad_logits(cache.logits, label))
        for k, v in grads.items():
            total[k] += v
    scale = 1.0 / len(batch)
    return loss * scale, {k: v * scale for k, v in total.items()}


def predict_index(gt: GraphTensors, params: ModelParams) -> tuple[int, float]:
    """Argmax class and softmax confidence; logit ties resolve to class 0."""
    probs = softmax(forward(gt, params).logits)
    idx = int(np.argmax(probs))
    return idx, float(probs[idx])


def accuracy(samples: list[Sample], params: ModelParams) -> float:
    if not samples:
        return 0.0
    hits = sum(1 for gt, label in samples if predict_index(gt, params)[0] == label)
    return hits / len(samples)


def train(
    train_set: list[Sample],
    val_set: list[Sample],
    params: ModelParams,
    cfg: TrainConfig | None = None,
) -> tuple[ModelParams, list[TrainLogEntry]]:
    """Adam over shuffled mini-batches; returns best-validation-accuracy params.

    Deterministic under cfg.seed: batch order is drawn from a dedicated
    generator and gradients are reduced in fixed sample order.
    """
    cfg = cfg or TrainConfig()
    if not train_set:
        raise EmptyDataset("training set is empty")
    params = params.copy()
    if cfg.epochs == 0:
        return params, []

    rng = np.random.default_rng(cfg.seed)
    m = zeros_like_params(params)
    v = zeros_like_params(params)
    t = 0
    log: list[TrainLogEntry] = []
    best_params = params.copy()
    best_acc = -1.0

    tensors = params.tensors()
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train_set))
        losses = []
        for off in range(0, len(order), cfg.batch_size):
            batch = [train_set[i] for i in order[off : off + cfg.batch_size]]
            loss, grads = batch_gradients(batch, params)
            losses.append(loss)
            t += 1
            corr1 = 1.0 - cfg.beta1**t
            corr2 = 1.0 - cfg.beta2**t
            for k, g in grads.items():
                m[k] = cfg.beta1 * m[k] + (1 - cfg.beta1) * g
                v[k] = cfg.beta2 * v[k] + (1 - cfg.beta2) * g * g
                tensors[k] -= cfg.lr * (m[k] / corr1) / (np.sqrt(v[k] / corr2) + cfg.eps)
        val_acc = accuracy(val_set, params)
        log.append(TrainLogEntry(epoch=epoch, train_loss=float(np.mean(losses)), val_acc=val_acc))
        if val_acc > best_acc:
            best_acc = val_acc
            best_params = params.copy()
    return best_params, log
