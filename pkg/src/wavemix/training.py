"""Optimization: Adam with decoupled weight decay, warmup + cosine
learning-rate schedule, global-norm gradient clipping, and a training
loop with deterministic shuffling and best-accuracy checkpointing.

Determinism contract: with a fixed config and seed, parameter
initialization, batch order, and every update are identical across
runs, so losses and metrics reproduce bit for bit on the same machine.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import data as data_mod
from . import model as model_mod
from . import ops
from .errors import ConfigError, NumericalError
from .tensor import Tensor, no_grad

METRICS_HEADER = "epoch\tlr\ttrain_loss\ttest_top1\ttest_top5"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    warmup_epochs: int = 5
    base_lr: float = 5e-4
    min_lr: float = 1e-5
    weight_decay: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 1.0
    batch_size: int = 128
    augment: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not 0 <= self.warmup_epochs < self.epochs:
            raise ConfigError(
                f"warmup_epochs must be in [0, epochs), got {self.warmup_epochs}"
            )
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.base_lr < 0 or self.min_lr < 0:
            raise ConfigError("learning rates must be nonnegative")


def lr_at(cfg: TrainConfig, epoch: int) -> float:
    """Linear warmup to ``base_lr`` then cosine decay toward ``min_lr``."""
    if epoch < cfg.warmup_epochs:
        return cfg.base_lr * (epoch + 1) / cfg.warmup_epochs
    span = cfg.epochs - cfg.warmup_epochs
    t = (epoch - cfg.warmup_epochs) / span
    return cfg.min_lr + 0.5 * (cfg.base_lr - cfg.min_lr) * (1.0 + np.cos(np.pi * t))


def clip_global_norm(params, max_norm: float = 1.0) -> float:
    """Scale all gradients so their joint L2 norm is at most ``max_norm``.

    Returns the scale that was applied (1.0 when no clipping happened,
    including for all-zero gradients).
    """
    total = 0.0
    for p in params:
        g = p.grad
        total += float(np.dot(g.ravel(), g.ravel()))
    norm = float(np.sqrt(total))
    scale = 1.0
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for p in params:
            p.grad *= scale
    return scale


@dataclass
class OptimizerState:
    """First/second moment buffers keyed by parameter name plus step count."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params, state: OptimizerState, lr: float, cfg: TrainConfig):
    """One decoupled-weight-decay Adam update over ``params``.

    Decay is applied directly to the parameter (skipped when
    ``p.decay`` is False) before the moment update; non-finite
    gradients abort with the offending parameter named.
    """
    state.t += 1
    t = state.t
    b1, b2 = cfg.beta1, cfg.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for p in params:
        g = p.grad
        if not np.isfinite(g).all():
            raise NumericalError(f"non-finite gradient for parameter {p.name!r} at step {t}")
        if p.name not in state.m:
            state.m[p.name] = np.zeros_like(p.data)
            state.v[p.name] = np.zeros_like(p.data)
        if cfg.weight_decay > 0 and p.decay:
            p.data -= lr * cfg.weight_decay * p.data
        m = state.m[p.name]
        v = state.v[p.name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        mhat = m / bc1
        vhat = v / bc2
        p.data -= lr * mhat / (np.sqrt(vhat) + cfg.eps)


def evaluate(m: model_mod.VitModel, x: np.ndarray, y: np.ndarray,
             batch_size: int = 256) -> tuple:
    """Top-1 and top-5 accuracy in percent plus mean loss, without grads."""
    n = x.shape[0]
    k = min(5, m.cfg.classes)
    hits1 = hits5 = 0
    loss_sum = 0.0
    with no_grad():
        for start in range(0, n, batch_size):
            xb = x[start:start + batch_size]
            yb = y[start:start + batch_size]
            logits = m.forward(xb).data
            loss_sum += float(ops.cross_entropy(Tensor(logits), yb).item()) * xb.shape[0]
            pred = np.argmax(logits, axis=1)
            hits1 += int((pred == yb).sum())
            topk = np.argpartition(-logits, k - 1, axis=1)[:, :k]
            hits5 += int((topk == yb[:, None]).any(axis=1).sum())
    return 100.0 * hits1 / n, 100.0 * hits5 / n, loss_sum / n


def fit(m: model_mod.VitModel, ds: data_mod.Dataset, cfg: TrainConfig,
        checkpoint_path=None, log_path=None, log_fn=None,
        stop_top1=None, max_epochs=None) -> list:
    """Train ``m`` on ``ds``; returns one metrics dict per epoch.

    The best test-top-1 parameters are written to ``checkpoint_path``
    whenever they improve. A non-finite training loss aborts with
    ``NumericalError`` (partial history attached as ``.history``),
    leaving the last good checkpoint in place. ``stop_top1`` stops early
    once test accuracy reaches the threshold; ``max_epochs`` caps the
    epochs actually run without changing the decay schedule.
    """
    params = m.parameters()
    state = OptimizerState()
    history = []
    best_top1 = -1.0
    n = ds.train_x.shape[0]
    limit = cfg.epochs if max_epochs is None else min(cfg.epochs, max_epochs)
    log_file = open(log_path, "w") if log_path else None
    try:
        if log_file:
            log_file.write(METRICS_HEADER + "\n")
        for epoch in range(limit):
            lr = lr_at(cfg, epoch)
            order = data_mod.epoch_order(n, cfg.seed, epoch)
            t0 = time.perf_counter()
            loss_sum = 0.0
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                xb = ds.train_x[idx]
                yb = ds.train_y[idx]
                if cfg.augment:
                    aug_rng = np.random.default_rng([cfg.seed, 7, epoch, start])
                    xb = data_mod.augment_batch(xb, aug_rng)
                for p in params:
                    p.zero_grad()
                logits = m.forward(xb)
                loss = ops.cross_entropy(logits, yb)
                lval = float(loss.item())
                if not np.isfinite(lval):
                    err = NumericalError(
                        f"non-finite training loss {lval} in epoch {epoch}"
                    )
                    err.history = history
                    raise err
                loss.backward()
                clip_global_norm(params, cfg.clip_norm)
                adam_step(params, state, lr, cfg)
                loss_sum += lval * xb.shape[0]
            train_loss = loss_sum / n
            top1, top5, _ = evaluate(m, ds.test_x, ds.test_y,
                                     batch_size=max(cfg.batch_size, 64))
            row = {
                "epoch": epoch,
                "lr": lr,
                "train_loss": train_loss,
                "test_top1": top1,
                "test_top5": top5,
                "seconds": time.perf_counter() - t0,
            }
            history.append(row)
            line = f"{epoch}\t{lr:.8g}\t{train_loss:.6f}\t{top1:.4f}\t{top5:.4f}"
            if log_file:
                log_file.write(line + "\n")
                log_file.flush()
            if log_fn:
                log_fn(line)
            if top1 > best_top1:
                best_top1 = top1
                if checkpoint_path:
                    arrays = m.state_dict()
                    arrays["meta.best_epoch"] = np.asarray([epoch], dtype=np.int64)
                    arrays["meta.best_top1"] = np.asarray([top1], dtype=np.float64)
                    model_mod.save_checkpoint(checkpoint_path, arrays)
            if stop_top1 is not None and top1 >= stop_top1:
                break
    finally:
        if log_file:
            log_file.close()
    return history


def load_best(m: model_mod.VitModel, checkpoint_path) -> dict:
    """Restore the best checkpoint into ``m``; returns the meta entries."""
    arrays = model_mod.load_checkpoint(checkpoint_path)
    meta = {k: arrays.pop(k) for k in list(arrays) if k.startswith("meta.")}
    m.load_state(arrays)
    return meta
