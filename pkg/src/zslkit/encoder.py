"""Mapping networks from feature/attribute space to Gaussian latent embeddings.

Each encoder is a one-hidden-layer MLP (linear -> batch-norm -> ReLU ->
dropout) with two linear output heads: one for the latent mean, one for the
log-variance. The log-variance head is clamped to [-10, 10]; the clamp has
zero gradient outside the interval.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateBatchError, ShapeError, StateError
from .gaussian import LOG_VAR_MAX, LOG_VAR_MIN, GaussianBatch
from .layers import BatchNormLayer, DropoutLayer, LinearLayer, ReluLayer


@dataclass
class EncoderConfig:
    input_dim: int
    hidden_dim: int
    latent_dim: int
    dropout_rate: float = 0.0
    use_batchnorm: bool = True

    def __post_init__(self):
        for name in ("input_dim", "hidden_dim", "latent_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")


class Encoder:
    """Maps a (batch, input_dim) matrix to a batch of diagonal Gaussians."""

    def __init__(self, config, rng):
        self.config = config
        self.fc = LinearLayer(config.input_dim, config.hidden_dim, rng)
        self.bn = BatchNormLayer(config.hidden_dim) if config.use_batchnorm else None
        self.relu = ReluLayer()
        self.dropout = DropoutLayer(config.dropout_rate)
        self.head_mean = LinearLayer(config.hidden_dim, config.latent_dim, rng)
        self.head_log_var = LinearLayer(config.hidden_dim, config.latent_dim, rng)
        self.training = True
        self._clamp_mask = None

    def train(self):
        self.training = True
        return self

    def eval(self):
        self.training = False
        return self

    def encode(self, batch, rng=None, allow_small_batch=False):
        """Forward pass; caches activations for encode_backward.

        In training mode with batch-norm enabled a batch of 1 row is rejected
        unless ``allow_small_batch`` is set, in which case normalization falls
        back to the running statistics for this call.
        """
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != 2 or batch.shape[1] != self.config.input_dim:
            raise ShapeError(
                f"encoder expects shape (batch, {self.config.input_dim}), "
                f"got {batch.shape}"
            )
        h = self.fc.forward(batch)
        if self.bn is not None:
            use_batch_stats = self.training
            if self.training and batch.shape[0] < 2:
                if not allow_small_batch:
                    raise DegenerateBatchError(
                        "training-mode encoder with batch-norm needs a batch "
                        f"of at least 2, got {batch.shape[0]}"
                    )
                use_batch_stats = False
            h = self.bn.forward(h, use_batch_stats=use_batch_stats)
        h = self.relu.forward(h)
        h = self.dropout.forward(h, rng=rng, training=self.training)
        mean = self.head_mean.forward(h)
        raw_log_var = self.head_log_var.forward(h)
        self._clamp_mask = (raw_log_var > LOG_VAR_MIN) & (raw_log_var < LOG_VAR_MAX)
        log_var = np.clip(raw_log_var, LOG_VAR_MIN, LOG_VAR_MAX)
        return GaussianBatch(mean, log_var)

    def encode_backward(self, grad_mean, grad_log_var):
        """Backpropagate mean/log-variance cotangents; returns grad w.r.t. the
        input batch and accumulates parameter gradients."""
        if self._clamp_mask is None:
            raise StateError("encode_backward called without a cached encode")
        grad_mean = np.asarray(grad_mean, dtype=np.float64)
        grad_log_var = np.asarray(grad_log_var, dtype=np.float64) * self._clamp_mask
        self._clamp_mask = None
        grad_h = self.head_mean.backward(grad_mean)
        grad_h = grad_h + self.head_log_var.backward(grad_log_var)
        grad_h = self.dropout.backward(grad_h)
        grad_h = self.relu.backward(grad_h)
        if self.bn is not None:
            grad_h = self.bn.backward(grad_h)
        return self.fc.backward(grad_h)

    def _sublayers(self):
        layers = [("fc", self.fc)]
        if self.bn is not None:
            layers.append(("bn", self.bn))
        layers.extend([("head_mean", self.head_mean), ("head_log_var", self.head_log_var)])
        return layers

    def parameters(self):
        """Trainable parameters as (name, array, grad) triples."""
        out = []
        for prefix, layer in self._sublayers():
            for name, param, grad in layer.parameters():
                out.append((f"{prefix}.{name}", param, grad))
        return out

    def state_arrays(self):
        """All arrays needed to reproduce inference, in a fixed order."""
        out = [(name, param) for name, param, _ in self.parameters()]
        if self.bn is not None:
            out.extend((f"bn.{n}", a) for n, a in self.bn.state_buffers())
        return out

    def load_state_arrays(self, arrays):
        own = self.state_arrays()
        if len(arrays) != len(own):
            raise ShapeError(f"expected {len(own)} arrays, got {len(arrays)}")
        for (name, target), value in zip(own, arrays):
            value = np.asarray(value, dtype=np.float64)
            if value.shape != target.shape:
                raise ShapeError(
                    f"array '{name}' has shape {value.shape}, expected {target.shape}"
                )
            target[...] = value

    def zero_grad(self):
        for _, layer in self._sublayers():
            layer.zero_grad()
