"""Small dense networks with hand-written backprop, Adam and a running normalizer."""

from __future__ import annotations

import numpy as np


class DenseNet:
    """ReLU multilayer perceptron.

    ``output`` is ``"linear"`` or ``"tanh"``. Parameters live in ``self.params``
    as ``[W0, b0, W1, b1, ...]`` with ``W`` shaped ``(fan_in, fan_out)``.
    """

    def __init__(self, sizes, output="linear", rng=None, dtype=np.float64):
        if output not in ("linear", "tanh"):
            raise ValueError("output must be 'linear' or 'tanh'")
        rng = np.random.default_rng() if rng is None else rng
        self.sizes = tuple(int(s) for s in sizes)
        self.output = output
        shapes = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            shapes += [(fan_in, fan_out), (fan_out,)]
        self.shapes = shapes
        self._sizes = [int(np.prod(s)) for s in shapes]
        self.flat = np.empty(sum(int(np.prod(s)) for s in shapes), dtype=dtype)
        self.params = self._views(self.flat)
        for k, p in enumerate(self.params):
            bound = 1.0 / np.sqrt(self.sizes[k // 2])
            p[...] = rng.uniform(-bound, bound, size=p.shape)

    def _views(self, flat):
        """Split a flat parameter-sized vector into per-tensor views."""
        views, offset = [], 0
        for shape, n in zip(self.shapes, self._sizes):
            views.append(flat[offset : offset + n].reshape(shape))
            offset += n
        return views

    @property
    def dtype(self):
        return self.params[0].dtype

    @property
    def n_layers(self):
        return len(self.params) // 2

    def forward(self, x, cache=False):
        h = np.asarray(x, dtype=self.dtype)
        pre_acts = []
        inputs = []
        last = self.n_layers - 1
        for k in range(self.n_layers):
            W, b = self.params[2 * k], self.params[2 * k + 1]
            inputs.append(h)
            z = h @ W + b
            pre_acts.append(z)
            if k < last:
                h = np.maximum(z, 0.0)
            elif self.output == "tanh":
                h = np.tanh(z)
            else:
                h = z
        if cache:
            return h, (inputs, pre_acts, h)
        return h

    def backward(self, cache, grad_out):
        """Return ``(param_grads, grad_input)`` for upstream gradient ``grad_out``."""
        inputs, pre_acts, out = cache
        flat_grad = np.empty_like(self.flat)
        grads = self._views(flat_grad)
        g = grad_out
        if self.output == "tanh":
            g = g * (1.0 - out * out)
        for k in range(self.n_layers - 1, -1, -1):
            W = self.params[2 * k]
            np.matmul(inputs[k].T, g, out=grads[2 * k])
            np.sum(g, axis=0, out=grads[2 * k + 1])
            g = g @ W.T
            if k > 0:
                g = g * (pre_acts[k - 1] > 0)
        return grads, g

    @staticmethod
    def flatten(grads):
        """The flat vector behind a gradient list returned by ``backward``."""
        return grads[0].base if grads[0].base is not None else np.concatenate([g.ravel() for g in grads])

    def copy(self):
        clone = object.__new__(DenseNet)
        clone.sizes = self.sizes
        clone.output = self.output
        clone.shapes = self.shapes
        clone._sizes = self._sizes
        clone.flat = self.flat.copy()
        clone.params = clone._views(clone.flat)
        return clone

    def n_parameters(self):
        return int(self.flat.size)


class Adam:
    """Adam on a single flat parameter vector."""

    def __init__(self, size, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, dtype=np.float64):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(size, dtype=dtype)
        self.v = np.zeros(size, dtype=dtype)
        self.t = 0

    def step(self, params, grad):
        """Update the flat vector ``params`` in place from the flat ``grad``."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        lr_t = float(self.lr * np.sqrt(1 - b2**self.t) / (1 - b1**self.t))
        self.m *= b1
        self.m += (1 - b1) * grad
        self.v *= b2
        self.v += (1 - b2) * grad * grad
        params -= lr_t * self.m / (np.sqrt(self.v) + self.eps)


class Normalizer:
    """Running mean/std with clipping of the normalized output."""

    def __init__(self, size, eps=1e-2, clip=5.0):
        self.size = size
        self.eps = eps
        self.clip = clip
        self.sum = np.zeros(size)
        self.sumsq = np.zeros(size)
        self.count = 0
        self.mean = np.zeros(size)
        self.std = np.ones(size)

    def update(self, x):
        x = np.asarray(x, float).reshape(-1, self.size)
        self.sum += x.sum(axis=0)
        self.sumsq += (x * x).sum(axis=0)
        self.count += len(x)
        self.mean = self.sum / self.count
        var = np.maximum(self.eps**2, self.sumsq / self.count - self.mean**2)
        self.std = np.sqrt(var)

    def __call__(self, x):
        return np.clip((x - self.mean) / self.std, -self.clip, self.clip)
