"""Adam optimizer over a flat list of named parameter arrays."""

import numpy as np

from .errors import NumericalError, ShapeError


class Adam:
    """Standard Adam with bias correction, updating parameters in place.

    ``params`` is a list of ``(name, array, grad_array)`` triples; ``step()``
    reads the gradient buffers and leaves them untouched (the caller zeroes
    them between steps).
    """

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr <= 0.0:
            raise ShapeError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.first_moment = [np.zeros_like(p) for _, p, _ in self.params]
        self.second_moment = [np.zeros_like(p) for _, p, _ in self.params]

    def step(self):
        for (name, param, grad) in self.params:
            if grad.shape != param.shape:
                raise ShapeError(
                    f"gradient for '{name}' has shape {grad.shape}, "
                    f"expected {param.shape}"
                )
            if not np.all(np.isfinite(grad)):
                raise NumericalError(f"non-finite gradient entry in parameter '{name}'")
        self.step_count += 1
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        for i, (name, param, grad) in enumerate(self.params):
            m = self.first_moment[i]
            v = self.second_moment[i]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            param -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
