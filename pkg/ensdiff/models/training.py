"""
Training loops for the residual networks.

The denoiser learns to recover the injected noise from
x_t = sr[t] * (x / lambda) + nr[t] * eps with t uniform in {0..T}; the loss is
the mean absolute error between predicted and injected noise, each sample
weighted by 1 / sr[t]. With the skip connection of ``ToyDenoiser`` this equals
the MAE of the head against v = sr[t]*eps - nr[t]*x, so noise-dominated steps
are fitted as tightly as signal-dominated ones. All sampling is drawn from a
numpy Generator seeded by the config, so a fixed seed gives a bit-identical
loss curve.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
import pandas as pd
import structlog
import tensorflow as tf

from ..core.config import TrainConfig
from ..core.exceptions import ParameterError, TrainingError
from .network import ToyDenoiser, ToyRegressor

logger = structlog.get_logger(__name__)

_TRAIN_STREAM = 0x7A1
_VALIDATION_STREAM = 0x7A2


@dataclass
class TrainingResult:
    """Per-epoch loss curve and its exponentially smoothed version."""
    loss_curve: List[float] = field(default_factory=list)
    smoothed_loss: List[float] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.loss_curve[-1] if self.loss_curve else math.nan

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "epoch": np.arange(1, len(self.loss_curve) + 1),
            "loss": self.loss_curve,
            "smoothed_loss": self.smoothed_loss,
        })


def _make_optimizer(cfg: TrainConfig, variables) -> tf.keras.optimizers.Optimizer:
    optimizer = tf.keras.optimizers.AdamW(learning_rate=cfg.learning_rate, weight_decay=cfg.weight_decay)
    optimizer.build(variables)
    return optimizer


def _denoiser_step(net: ToyDenoiser, optimizer) -> Callable:
    @tf.function(reduce_retracing=True)
    def step(noisy, cond, t_frac, eps, sr, nr):
        with tf.GradientTape() as tape:
            velocity = net.net([tf.concat([noisy, cond], axis=-1), t_frac], training=True)
            error = tf.abs(nr * noisy + sr * velocity - eps)
            loss = tf.reduce_mean(error / sr)
        gradients = tape.gradient(loss, net.trainable_variables)
        optimizer.apply_gradients(zip(gradients, net.trainable_variables))
        return loss, tf.reduce_mean(error)

    return step


def _regressor_step(net: ToyRegressor, optimizer) -> Callable:
    @tf.function(reduce_retracing=True)
    def step(cond, target):
        with tf.GradientTape() as tape:
            predicted = net.net(cond, training=True)
            loss = tf.reduce_mean(tf.abs(predicted - target))
        gradients = tape.gradient(loss, net.trainable_variables)
        optimizer.apply_gradients(zip(gradients, net.trainable_variables))
        return loss

    return step


def _noisify(net: ToyDenoiser, targets: np.ndarray, t: np.ndarray, eps: np.ndarray) -> np.ndarray:
    sr = net.schedule.sr[t][:, None, None]
    nr = net.schedule.nr[t][:, None, None]
    return sr * targets + nr * eps


def _rates(net: ToyDenoiser, t: np.ndarray) -> Tuple[tf.Tensor, tf.Tensor]:
    """(sr[t], nr[t]) shaped (B, 1, 1, 1) for the skip connection."""
    shape = (-1, 1, 1, 1)
    return (
        tf.constant(net.schedule.sr[t].reshape(shape), dtype=tf.float32),
        tf.constant(net.schedule.nr[t].reshape(shape), dtype=tf.float32),
    )


def _check_loss(loss: float, epoch: int, step: int, cfg: TrainConfig) -> None:
    if not math.isfinite(loss):
        raise TrainingError(
            f"training loss became non-finite at epoch {epoch}, step {step}; "
            f"lower the learning rate (currently {cfg.learning_rate:g}, try {cfg.learning_rate / 10:g})",
            details={"epoch": epoch, "step": step, "learning_rate": cfg.learning_rate},
        )


def _smooth(curve: List[float]) -> List[float]:
    return pd.Series(curve, dtype=np.float64).ewm(alpha=0.1).mean().tolist()


def _to_tensor(values: np.ndarray) -> tf.Tensor:
    return tf.constant(np.asarray(values, dtype=np.float32)[..., None])


def train(net: ToyDenoiser, hi: np.ndarray, lo: np.ndarray, cfg: TrainConfig) -> TrainingResult:
    """Train the denoiser in place on paired (hi, lo) data-scale fields."""
    hi = np.asarray(hi, dtype=np.float64)
    if hi.ndim != 3 or hi.shape[0] == 0:
        raise ParameterError(f"training needs a non-empty (S, h, w) stack, got shape {hi.shape}")

    targets = net.prepare_target(hi)
    conds = net.prepare_conditioning(lo)
    samples = targets.shape[0]
    T = net.schedule.T
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _TRAIN_STREAM]))
    optimizer = _make_optimizer(cfg, net.trainable_variables)
    step = _denoiser_step(net, optimizer)

    result = TrainingResult()
    logger.info("training_started", samples=samples, epochs=cfg.epochs, parameters=net.count_params())
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(samples)
        losses = []
        for start in range(0, samples, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            t = rng.integers(0, T + 1, size=idx.size)
            eps = rng.standard_normal((idx.size,) + net.grid_shape)
            noisy = _noisify(net, targets[idx], t, eps)
            loss, _ = step(
                _to_tensor(noisy), _to_tensor(conds[idx]),
                tf.constant((t / T)[:, None], dtype=tf.float32), _to_tensor(eps), *_rates(net, t),
            )
            loss = float(loss)
            _check_loss(loss, epoch, len(losses), cfg)
            losses.append(loss)
        result.loss_curve.append(float(np.mean(losses)))
        if epoch == 1 or epoch % 25 == 0 or epoch == cfg.epochs:
            logger.info("training_epoch", epoch=epoch, loss=result.loss_curve[-1])

    result.smoothed_loss = _smooth(result.loss_curve)
    return result


def overfit_single_batch(
    net: ToyDenoiser, hi: np.ndarray, lo: np.ndarray, cfg: TrainConfig, steps: int, t: int = 0,
) -> float:
    """Repeatedly fit one fixed (x_t, eps) batch; returns the final noise MAE."""
    targets = net.prepare_target(np.asarray(hi, dtype=np.float64))
    conds = net.prepare_conditioning(lo)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _TRAIN_STREAM]))
    ts = np.full(targets.shape[0], t)
    eps = rng.standard_normal(targets.shape)
    inputs = (
        _to_tensor(_noisify(net, targets, ts, eps)), _to_tensor(conds),
        tf.constant((ts / net.schedule.T)[:, None], dtype=tf.float32), _to_tensor(eps), *_rates(net, ts),
    )
    step = _denoiser_step(net, _make_optimizer(cfg, net.trainable_variables))
    mae = math.nan
    for k in range(steps):
        loss, noise_mae = step(*inputs)
        _check_loss(float(loss), 1, k, cfg)
        mae = float(noise_mae)
    return mae


def validation_mae(net: ToyDenoiser, hi: np.ndarray, lo: np.ndarray, seed: int = 0, t: Optional[int] = None) -> float:
    """Noise-prediction MAE on held-out fields with seeded (t, eps) draws."""
    targets = net.prepare_target(np.asarray(hi, dtype=np.float64))
    conds = net.prepare_conditioning(lo)
    rng = np.random.default_rng(np.random.SeedSequence([seed, _VALIDATION_STREAM]))
    errors = []
    for i in range(targets.shape[0]):
        step_t = int(rng.integers(0, net.schedule.T + 1)) if t is None else t
        eps = rng.standard_normal(net.grid_shape)
        noisy = net.schedule.sr[step_t] * targets[i] + net.schedule.nr[step_t] * eps
        errors.append(np.mean(np.abs(net.predict(noisy[None], step_t, conds[i])[0] - eps)))
    return float(np.mean(errors))


def noise_cosine_similarity(net: ToyDenoiser, hi: np.ndarray, lo: np.ndarray, t: int, seed: int = 0) -> float:
    """Mean cosine similarity between predicted and injected noise at a fixed t."""
    targets = net.prepare_target(np.asarray(hi, dtype=np.float64))
    conds = net.prepare_conditioning(lo)
    rng = np.random.default_rng(np.random.SeedSequence([seed, _VALIDATION_STREAM]))
    similarities = []
    for i in range(targets.shape[0]):
        eps = rng.standard_normal(net.grid_shape)
        noisy = net.schedule.sr[t] * targets[i] + net.schedule.nr[t] * eps
        predicted = net.predict(noisy[None], t, conds[i])[0]
        similarities.append(np.sum(predicted * eps) / (np.linalg.norm(predicted) * np.linalg.norm(eps) + 1e-12))
    return float(np.mean(similarities))


def train_regressor(net: ToyRegressor, hi: np.ndarray, lo: np.ndarray, cfg: TrainConfig) -> TrainingResult:
    """Train the deterministic baseline with MAE on standardized targets."""
    targets = net.prepare_target(np.asarray(hi, dtype=np.float64))
    conds = net.prepare_conditioning(lo)
    samples = targets.shape[0]
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _TRAIN_STREAM]))
    step = _regressor_step(net, _make_optimizer(cfg, net.trainable_variables))

    result = TrainingResult()
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(samples)
        losses = []
        for start in range(0, samples, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss = float(step(_to_tensor(conds[idx]), _to_tensor(targets[idx])))
            _check_loss(loss, epoch, len(losses), cfg)
            losses.append(loss)
        result.loss_curve.append(float(np.mean(losses)))
    logger.info("regressor_trained", epochs=cfg.epochs, loss=result.final_loss)
    result.smoothed_loss = _smooth(result.loss_curve)
    return result
