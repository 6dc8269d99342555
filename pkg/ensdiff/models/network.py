"""
Small residual convolutional networks for downscaling.

``ToyDenoiser`` predicts the noise of a noisy high-resolution field given the
upsampled coarse field (concatenated on the input channel axis) and a
sinusoidal embedding of t/T. Its head estimates v = sr[t]*eps - nr[t]*x and the
noise is recovered with a fixed skip connection,

    eps_hat = nr[t] * x_t + sr[t] * v_hat,

so an error in v_hat reaches the denoised field with weight nr[t] instead of
nr[t] / sr[t]. ``ToyRegressor`` is the same body without a time input, mapping
the coarse field directly to the target (deterministic baseline).
"""

import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import structlog
import tensorflow as tf
from tensorflow.keras import layers

from ..core.config import TrainConfig
from ..core.enums import DenoiserKind
from ..core.exceptions import ShapeError
from ..core.fields import Standardizer, bilinear_resize, crop, fit_standardizer, mirror_pad, padded_shape
from ..core.interfaces import Denoiser
from ..core.schedule import Schedule

logger = structlog.get_logger(__name__)


@dataclass(frozen=True)
class NetworkArchitecture:
    """Dimensions needed to rebuild a network from a checkpoint."""
    field_shape: Tuple[int, int]
    grid_shape: Tuple[int, int]
    width: int = 32
    blocks: int = 3
    embedding_dims: int = 16


def sinusoidal_embedding(t_frac: tf.Tensor, dims: int) -> tf.Tensor:
    """Sin/cos features of t/T at log-spaced frequencies, shape (B, dims)."""
    half = dims // 2
    frequencies = tf.exp(tf.linspace(0.0, math.log(1000.0), half))
    angles = 2.0 * math.pi * t_frac * frequencies[None, :]
    return tf.concat([tf.sin(angles), tf.cos(angles)], axis=-1)


class ResidualNet(tf.keras.Model):
    """Conv stem, residual blocks with an additive time embedding, 1x1 head."""

    def __init__(self, width: int, blocks: int, embedding_dims: int, with_time: bool = True, **kwargs):
        super().__init__(**kwargs)
        self.with_time = with_time
        self.embedding_dims = embedding_dims
        self.stem = layers.Conv2D(width, 3, padding="same", name="stem")
        self.time_projection = layers.Dense(width, activation="swish", name="time_projection") if with_time else None
        self.block_in = [layers.Conv2D(width, 3, padding="same", name=f"block{i}_in") for i in range(blocks)]
        self.block_out = [layers.Conv2D(width, 3, padding="same", name=f"block{i}_out") for i in range(blocks)]
        self.head = layers.Conv2D(1, 1, name="head")

    def call(self, inputs, training=False):
        if self.with_time:
            fields, t_frac = inputs
            embedding = self.time_projection(sinusoidal_embedding(t_frac, self.embedding_dims))
            embedding = embedding[:, None, None, :]
        else:
            fields = inputs
            embedding = 0.0

        h = self.stem(fields)
        for conv_a, conv_b in zip(self.block_in, self.block_out):
            r = conv_a(tf.nn.swish(h)) + embedding
            h = h + conv_b(tf.nn.swish(r))
        return self.head(tf.nn.swish(h))


class _ResidualModelBase:
    """Shared plumbing: data-scale conversion, conditioning and weight access."""

    kind: DenoiserKind
    with_time: bool

    def __init__(
        self,
        schedule: Schedule,
        architecture: NetworkArchitecture,
        target_standardizer: Standardizer,
        cond_standardizer: Standardizer,
        seed: int = 0,
    ):
        self.schedule = schedule
        self.architecture = architecture
        self.target_standardizer = target_standardizer
        self.cond_standardizer = cond_standardizer

        tf.keras.utils.set_random_seed(seed)
        tf.config.experimental.enable_op_determinism()
        self.net = ResidualNet(
            architecture.width, architecture.blocks, architecture.embedding_dims, with_time=self.with_time
        )
        self._build()

    @classmethod
    def create(cls, hi: np.ndarray, lo: np.ndarray, schedule: Schedule, cfg: TrainConfig):
        """Fresh network with standardizers fitted on a training set."""
        hi = np.asarray(hi, dtype=np.float64)
        field_shape = tuple(hi.shape[-2:])
        architecture = NetworkArchitecture(
            field_shape=field_shape,
            grid_shape=padded_shape(field_shape, cfg.pad_multiple),
            width=cfg.width,
            blocks=cfg.blocks,
            embedding_dims=cfg.embedding_dims,
        )
        target_standardizer = fit_standardizer(list(hi))
        if cfg.shared_standardizer:
            cond_standardizer = target_standardizer
        else:
            upsampled = bilinear_resize(np.asarray(lo, dtype=np.float64), *field_shape)
            cond_standardizer = fit_standardizer(list(upsampled))
        return cls(schedule, architecture, target_standardizer, cond_standardizer, seed=cfg.seed)

    @property
    def field_shape(self) -> Tuple[int, int]:
        return self.architecture.field_shape

    @property
    def grid_shape(self) -> Tuple[int, int]:
        return self.architecture.grid_shape

    def _build(self) -> None:
        gh, gw = self.grid_shape
        channels = 2 if self.with_time else 1
        fields = tf.zeros((1, gh, gw, channels))
        self.net([fields, tf.zeros((1, 1))] if self.with_time else fields)

    def _input_scale(self) -> float:
        return self.schedule.lambda_

    def prepare_conditioning(self, lo: Optional[np.ndarray]) -> Optional[np.ndarray]:
        """Upsample, standardize, scale and pad coarse fields (single or batched)."""
        if lo is None:
            return None
        upsampled = bilinear_resize(np.asarray(lo, dtype=np.float64), *self.field_shape)
        scaled = self.cond_standardizer.apply(upsampled) / self._input_scale()
        return mirror_pad(scaled, *self.grid_shape)

    def prepare_target(self, hi: np.ndarray) -> np.ndarray:
        scaled = self.target_standardizer.apply(hi) / self._input_scale()
        return mirror_pad(scaled, *self.grid_shape)

    def to_data_scale(self, x: np.ndarray) -> np.ndarray:
        """Crop padding, undo the input scaling and invert the standardizer."""
        cropped = crop(np.asarray(x, dtype=np.float64), *self.field_shape)
        return self.target_standardizer.invert(cropped * self._input_scale())

    @property
    def trainable_variables(self) -> List[tf.Variable]:
        return self.net.trainable_variables

    def get_weights(self) -> List[np.ndarray]:
        return [w.numpy() for w in self.net.weights]

    def set_weights(self, weights: List[np.ndarray]) -> None:
        current = self.net.weights
        if len(weights) != len(current):
            raise ShapeError(f"expected {len(current)} weight tensors, got {len(weights)}")
        for variable, value in zip(current, weights):
            if tuple(variable.shape) != tuple(np.shape(value)):
                raise ShapeError(
                    f"weight {variable.name} has shape {tuple(variable.shape)}, checkpoint has {np.shape(value)}"
                )
            variable.assign(np.asarray(value, dtype=np.float32))

    def count_params(self) -> int:
        return int(self.net.count_params())

    def get_model_info(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.name.lower(),
            "parameters": self.count_params(),
            "field_shape": list(self.field_shape),
            "grid_shape": list(self.grid_shape),
            "T": self.schedule.T,
            "lambda": self.schedule.lambda_,
        }


class ToyDenoiser(_ResidualModelBase, Denoiser):
    """Noise predictor eps_theta(x_t, t, cond) on the padded model grid."""

    kind = DenoiserKind.DENOISER
    with_time = True

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        gh, gw = self.grid_shape
        self._forward = tf.function(
            lambda noisy, cond, t_frac: self.net([tf.concat([noisy, cond], axis=-1), t_frac], training=False),
            input_signature=[
                tf.TensorSpec([None, gh, gw, 1], tf.float32),
                tf.TensorSpec([None, gh, gw, 1], tf.float32),
                tf.TensorSpec([None, 1], tf.float32),
            ],
        )

    @property
    def identifier(self) -> str:
        return f"ToyDenoiser(width={self.architecture.width},blocks={self.architecture.blocks})"

    def _batch(self, x_t: np.ndarray, t: int) -> Tuple[np.ndarray, bool]:
        x_t = np.asarray(x_t, dtype=np.float64)
        single = x_t.ndim == 2
        batch = x_t[None] if single else x_t
        if batch.shape[-2:] != self.grid_shape:
            raise ShapeError(f"input grid {batch.shape[-2:]} does not match model grid {self.grid_shape}")
        self.schedule._check_index(t)
        return batch, single

    def _velocity(self, batch: np.ndarray, t: int, cond: Optional[np.ndarray]) -> np.ndarray:
        if cond is None:
            cond_batch = np.zeros_like(batch)
        else:
            cond_batch = np.broadcast_to(np.asarray(cond, dtype=np.float64), batch.shape)
        t_frac = np.full((batch.shape[0], 1), t / self.schedule.T, dtype=np.float32)
        out = self._forward(
            tf.constant(batch[..., None], dtype=tf.float32),
            tf.constant(cond_batch[..., None], dtype=tf.float32),
            tf.constant(t_frac),
        )
        return out.numpy()[..., 0].astype(np.float64)

    def velocity(self, x_t: np.ndarray, t: int, cond: Optional[np.ndarray] = None) -> np.ndarray:
        """Raw head output v_hat(x_t, t, cond)."""
        batch, single = self._batch(x_t, t)
        result = self._velocity(batch, t, cond)
        return result[0] if single else result

    def predict(self, x_t: np.ndarray, t: int, cond: Optional[np.ndarray] = None) -> np.ndarray:
        batch, single = self._batch(x_t, t)
        result = self.schedule.nr[t] * batch + self.schedule.sr[t] * self._velocity(batch, t, cond)
        return result[0] if single else result


class ToyRegressor(_ResidualModelBase):
    """Deterministic conditioning -> target baseline on standardized values."""

    kind = DenoiserKind.REGRESSOR
    with_time = False

    def _input_scale(self) -> float:
        return 1.0

    def predict_fields(self, lo: np.ndarray) -> np.ndarray:
        """Data-scale high-resolution fields for a batch of coarse fields."""
        cond = self.prepare_conditioning(np.asarray(lo, dtype=np.float64))
        single = cond.ndim == 2
        batch = cond[None] if single else cond
        out = self.net(tf.constant(batch[..., None], dtype=tf.float32), training=False).numpy()[..., 0]
        fields = self.to_data_scale(out.astype(np.float64))
        return fields[0] if single else fields
