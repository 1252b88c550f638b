"""Minimal differentiable building blocks with explicit forward/backward passes.

All layers operate on float64 numpy arrays of shape (batch, width), cache
whatever the backward pass needs, and accumulate parameter gradients into
``grad_*`` buffers that the caller zeroes between optimizer steps.
"""

import numpy as np

from .errors import DegenerateBatchError, ShapeError, StateError

LOG_VAR_CLAMP = 10.0


def _as_batch(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"expected a 2-D (batch, width) array, got shape {x.shape}")
    return x


def glorot_uniform(fan_out, fan_in, rng):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


class LinearLayer:
    """Affine map y = x W^T + b with weight of shape (out, in)."""

    def __init__(self, in_dim, out_dim, rng):
        self.weight = glorot_uniform(out_dim, in_dim, rng)
        self.bias = np.zeros(out_dim)
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)
        self._cache = None

    @property
    def in_dim(self):
        return self.weight.shape[1]

    @property
    def out_dim(self):
        return self.weight.shape[0]

    def forward(self, x):
        x = _as_batch(x)
        if x.shape[1] != self.in_dim:
            raise ShapeError(
                f"linear layer expects width {self.in_dim}, got {x.shape[1]}"
            )
        self._cache = x
        return x @ self.weight.T + self.bias

    def backward(self, grad_out):
        if self._cache is None:
            raise StateError("linear backward called without a cached forward")
        x = self._cache
        grad_out = _as_batch(grad_out)
        if grad_out.shape != (x.shape[0], self.out_dim):
            raise ShapeError(
                f"grad_out shape {grad_out.shape} does not match output "
                f"({x.shape[0]}, {self.out_dim})"
            )
        self.grad_weight += grad_out.T @ x
        self.grad_bias += grad_out.sum(axis=0)
        self._cache = None
        return grad_out @ self.weight

    def parameters(self):
        return [("weight", self.weight, self.grad_weight), ("bias", self.bias, self.grad_bias)]

    def zero_grad(self):
        self.grad_weight[...] = 0.0
        self.grad_bias[...] = 0.0


class ReluLayer:
    def __init__(self):
        self._mask = None

    def forward(self, x):
        x = _as_batch(x)
        self._mask = x > 0.0
        return x * self._mask

    def backward(self, grad_out):
        if self._mask is None:
            raise StateError("relu backward called without a cached forward")
        grad = grad_out * self._mask
        self._mask = None
        return grad

    def parameters(self):
        return []

    def zero_grad(self):
        pass


class BatchNormLayer:
    """Per-feature normalization with learned scale/shift and running stats.

    Training mode normalizes by batch statistics and updates the running
    mean/variance with the usual exponential momentum; inference mode (or a
    forward with ``use_batch_stats=False``) normalizes by the running stats.
    """

    def __init__(self, width, momentum=0.1, eps=1e-5):
        if not 0.0 < momentum < 1.0:
            raise ShapeError(f"momentum must lie in (0, 1), got {momentum}")
        if eps <= 0.0:
            raise ShapeError(f"eps must be positive, got {eps}")
        self.gamma = np.ones(width)
        self.beta = np.zeros(width)
        self.running_mean = np.zeros(width)
        self.running_var = np.ones(width)
        self.momentum = momentum
        self.eps = eps
        self.grad_gamma = np.zeros_like(self.gamma)
        self.grad_beta = np.zeros_like(self.beta)
        self._cache = None

    @property
    def width(self):
        return self.gamma.shape[0]

    def forward(self, x, use_batch_stats):
        x = _as_batch(x)
        if x.shape[1] != self.width:
            raise ShapeError(f"batch-norm expects width {self.width}, got {x.shape[1]}")
        if use_batch_stats:
            if x.shape[0] < 2:
                raise DegenerateBatchError(
                    "batch-norm needs a batch of at least 2 rows to estimate "
                    f"statistics, got {x.shape[0]}"
                )
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            inv_std = 1.0 / np.sqrt(var + self.eps)
            self.running_mean = (1.0 - self.momentum) * self.running_mean + self.momentum * mean
            self.running_var = (1.0 - self.momentum) * self.running_var + self.momentum * var
        else:
            mean = self.running_mean
            inv_std = 1.0 / np.sqrt(self.running_var + self.eps)
        x_hat = (x - mean) * inv_std
        self._cache = (x_hat, inv_std, use_batch_stats)
        return self.gamma * x_hat + self.beta

    def backward(self, grad_out):
        if self._cache is None:
            raise StateError("batch-norm backward called without a cached forward")
        x_hat, inv_std, used_batch_stats = self._cache
        self._cache = None
        self.grad_gamma += (grad_out * x_hat).sum(axis=0)
        self.grad_beta += grad_out.sum(axis=0)
        if not used_batch_stats:
            return grad_out * self.gamma * inv_std
        b = x_hat.shape[0]
        g = grad_out * self.gamma
        return inv_std / b * (
            b * g - g.sum(axis=0) - x_hat * (g * x_hat).sum(axis=0)
        )

    def parameters(self):
        return [("gamma", self.gamma, self.grad_gamma), ("beta", self.beta, self.grad_beta)]

    def state_buffers(self):
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]

    def zero_grad(self):
        self.grad_gamma[...] = 0.0
        self.grad_beta[...] = 0.0


class DropoutLayer:
    """Inverted dropout: survivors are rescaled by 1/(1-rate) so the expected
    output equals the input; inference mode is exactly the identity."""

    def __init__(self, rate):
        if not 0.0 <= rate < 1.0:
            raise ShapeError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self.mask = None
        self._scaled_mask = None

    def forward(self, x, rng=None, training=False):
        x = _as_batch(x)
        if not training or self.rate == 0.0:
            self._scaled_mask = None
            return x
        if rng is None:
            raise StateError("training-mode dropout needs a random generator")
        self.mask = rng.random(x.shape) >= self.rate
        self._scaled_mask = self.mask / (1.0 - self.rate)
        return x * self._scaled_mask

    def backward(self, grad_out):
        if self._scaled_mask is None:
            return grad_out
        return grad_out * self._scaled_mask

    def parameters(self):
        return []

    def zero_grad(self):
        pass
