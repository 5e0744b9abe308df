"""Masked, class-weighted BCE loss and the mini-batch training loop."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .dataset import Sample, WindowConfig, compute_pos_weight, make_windows
from .model import EncoderModel, encoder_backward, encoder_forward
from .sim import PlatoonRun


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    learning_rate: float = 5e-5
    max_epochs: int = 150
    alpha: float = 3.3
    patience: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)

    def save_csv(self, path: str) -> None:
        tmp = path + ".tmp"
        with open(tmp, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])
            for i in range(len(self.train_loss)):
                w.writerow([i, f"{self.train_loss[i]:.9g}", f"{self.train_acc[i]:.9g}",
                            f"{self.val_loss[i]:.9g}", f"{self.val_acc[i]:.9g}"])
        os.replace(tmp, path)


def masked_bce(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray,
               alpha: float) -> tuple[float, np.ndarray]:
    """Weighted binary cross-entropy over valid steps.

    loss = -(1/sum m) * sum m * [ (1-y) log(1 - sigma(z)) + alpha y log sigma(z) ]
    computed from logits directly (softplus form) so |z| in the hundreds
    stays finite.  Returns the scalar loss and d loss / d logits; the
    gradient is exactly zero at masked steps.
    """
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    m = np.asarray(mask, dtype=np.float64)
    if not (z.shape == y.shape == m.shape):
        raise nn.ShapeError("masked_bce", z.shape, y.shape, m.shape)
    n_valid = m.sum()
    if n_valid == 0:
        raise ValueError("masked_bce: batch has no valid steps")
    softplus = np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))
    # -log(1 - sigma(z)) = softplus(z); -log sigma(z) = softplus(z) - z
    per_step = (1.0 - y) * softplus + alpha * y * (softplus - z)
    loss = float((m * per_step).sum() / n_valid)
    s = nn.sigmoid(z)
    dlogits = m * ((1.0 - y) * s + alpha * y * (s - 1.0)) / n_valid
    return loss, dlogits


def _stack(samples: list[Sample]):
    x = np.stack([s.x for s in samples])
    y = np.stack([s.y for s in samples]).astype(np.float64)
    m = np.stack([s.m for s in samples]).astype(np.float64)
    return x, y, m


def _eval_epoch(model: EncoderModel, x, y, m, alpha: float,
                batch_size: int) -> tuple[float, float]:
    loss_sum = 0.0
    correct = 0.0
    total = 0.0
    for lo in range(0, len(x), batch_size):
        xb, yb, mb = x[lo:lo + batch_size], y[lo:lo + batch_size], m[lo:lo + batch_size]
        logits, _ = encoder_forward(model, xb, mb, train=False)
        loss, _ = masked_bce(logits, yb, mb, alpha)
        nb = mb.sum()
        loss_sum += loss * nb
        decisions = (nn.sigmoid(logits) >= 0.5).astype(np.float64)
        correct += ((decisions == yb) * mb).sum()
        total += nb
    return loss_sum / total, correct / total


def train(model: EncoderModel, train_samples: list[Sample],
          val_samples: list[Sample], tc: TrainConfig) -> tuple[EncoderModel, TrainHistory]:
    """Seeded mini-batch training with best-on-validation checkpointing.

    Stops early after tc.patience epochs without a validation-loss
    improvement; the returned model carries the best parameters.
    """
    if not train_samples or not val_samples:
        raise ValueError("train and validation sets must be non-empty")
    x, y, m = _stack(train_samples)
    xv, yv, mv = _stack(val_samples)
    history = TrainHistory()
    state = nn.AdamState(lr=tc.learning_rate)
    rng = np.random.default_rng(tc.seed)
    best_loss = math.inf
    best_params = {k: v.copy() for k, v in model.params.items()}
    stale = 0
    step = 0
    for epoch in range(tc.max_epochs):
        order = rng.permutation(len(x))
        loss_sum = 0.0
        correct = 0.0
        total = 0.0
        for lo in range(0, len(order), tc.batch_size):
            idx = order[lo:lo + tc.batch_size]
            xb, yb, mb = x[idx], y[idx], m[idx]
            logits, cache = encoder_forward(model, xb, mb, train=True,
                                            dropout_seed=tc.seed, step=step)
            loss, dlogits = masked_bce(logits, yb, mb, tc.alpha)
            if not math.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite training loss at epoch {epoch}, batch {lo // tc.batch_size}")
            grads = encoder_backward(model, cache, dlogits)
            nn.adam_step(model.params, grads, state)
            nb = mb.sum()
            loss_sum += loss * nb
            decisions = (nn.sigmoid(logits) >= 0.5).astype(np.float64)
            correct += ((decisions == yb) * mb).sum()
            total += nb
            step += 1
        val_loss, val_acc = _eval_epoch(model, xv, yv, mv, tc.alpha, tc.batch_size)
        history.train_loss.append(loss_sum / total)
        history.train_acc.append(correct / total)
        history.val_loss.append(val_loss)
        history.val_acc.append(val_acc)
        if val_loss < best_loss:
            best_loss = val_loss
            best_params = {k: v.copy() for k, v in model.params.items()}
            stale = 0
        else:
            stale += 1
            if stale >= tc.patience:
                break
    model.params = best_params
    return model, history


def assemble_regime(runs: list[PlatoonRun], regime: str, wc: WindowConfig,
                    vehicle_id: int | None = None) -> tuple[list[Sample], float]:
    """Windowed sample set for a training regime plus its class weight.

    regime 'general' pools every vehicle's windows; 'vehicle' keeps only
    vehicle_id's.  Windows whose every step is invalid (pre-insertion
    joiner) are dropped.
    """
    if regime not in ("general", "vehicle"):
        raise ValueError(f"unknown regime {regime!r}")
    if regime == "vehicle":
        if vehicle_id is None:
            raise ValueError("vehicle regime needs a vehicle_id")
        if any(not 0 <= vehicle_id < r.config.n_vehicles for r in runs):
            raise ValueError(f"vehicle_id {vehicle_id} out of range for this suite")
    samples: list[Sample] = []
    for run in runs:
        for s in make_windows(run, wc):
            if regime == "vehicle" and s.vehicle_id != vehicle_id:
                continue
            if s.m.sum() == 0:
                continue
            samples.append(s)
    alpha = compute_pos_weight(samples)
    return samples, alpha
