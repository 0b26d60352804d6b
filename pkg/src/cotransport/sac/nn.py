"""Dense networks with hand-written reverse-mode gradients, plus Adam."""
from __future__ import annotations

import numpy as np


def _relu(z):
    return np.maximum(z, 0.0)


def _relu_grad(z, a):
    return (z > 0.0).astype(z.dtype)


def _tanh(z):
    return np.tanh(z)


def _tanh_grad(z, a):
    return 1.0 - a * a


ACTIVATIONS = {
    "relu": (_relu, _relu_grad),
    "tanh": (_tanh, _tanh_grad),
}


class Mlp:
    """Fully connected net ``in -> hidden... -> out`` with a linear output layer.

    Weights are stored as ``(fan_in, fan_out)`` so a batch ``x`` of shape
    ``(B, in)`` maps to ``x @ W + b``.
    """

    def __init__(self, sizes, activation="relu", rng=None, dtype=np.float64):
        if len(sizes) < 2:
            raise ValueError("an MLP needs at least input and output sizes")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.sizes = [int(s) for s in sizes]
        self.activation = activation
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng() if rng is None else rng
        self.params = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(self.dtype))
            self.params.append(rng.uniform(-bound, bound, size=fan_out).astype(self.dtype))

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    @property
    def n_layers(self) -> int:
        return len(self.params) // 2

    def forward(self, x):
        """Return ``(y, cache)``; ``cache`` feeds :meth:`backward`."""
        x = np.asarray(x, dtype=self.dtype)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"expected input dimension {self.in_dim}, got {x.shape[-1]}")
        act, _ = ACTIVATIONS[self.activation]
        inputs, pre, post = [], [], []
        h = x
        for i in range(self.n_layers):
            W, b = self.params[2 * i], self.params[2 * i + 1]
            inputs.append(h)
            z = h @ W + b
            if i < self.n_layers - 1:
                a = act(z)
                pre.append(z)
                post.append(a)
                h = a
            else:
                h = z
        y = h[0] if squeeze else h
        return y, (inputs, pre, post, squeeze)

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, grad_out, param_grads=True, input_grad=False):
        """Reverse pass for the scalar ``sum(grad_out * y)``.

        Returns ``(grads, dx)`` where ``grads`` matches ``self.params`` (or is
        ``None``) and ``dx`` is the gradient w.r.t. the input (or ``None``).
        """
        inputs, pre, post, squeeze = cache
        _, dact = ACTIVATIONS[self.activation]
        g = np.asarray(grad_out, dtype=self.dtype)
        if squeeze:
            g = g[None, :]
        grads = [None] * len(self.params) if param_grads else None
        for i in reversed(range(self.n_layers)):
            W = self.params[2 * i]
            if i < self.n_layers - 1:
                g = g * dact(pre[i], post[i])
            if param_grads:
                grads[2 * i] = inputs[i].T @ g
                grads[2 * i + 1] = g.sum(axis=0)
            if i > 0 or input_grad:
                g = g @ W.T
        dx = None
        if input_grad:
            dx = g[0] if squeeze else g
        return grads, dx

    def copy(self) -> "Mlp":
        clone = Mlp.__new__(Mlp)
        clone.sizes = list(self.sizes)
        clone.activation = self.activation
        clone.dtype = self.dtype
        clone.params = [p.copy() for p in self.params]
        return clone

    def polyak_from(self, source: "Mlp", tau: float):
        """In place: ``self <- (1 - tau) self + tau source``."""
        for mine, theirs in zip(self.params, source.params):
            mine *= 1.0 - tau
            mine += tau * theirs

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])


def mlp_eval_grad(net: Mlp, x):
    """Evaluate ``net`` at ``x`` and return a gradient accessor.

    ``accessor(grad_out)`` gives ``(param_grads, input_grad)`` for the scalar
    ``sum(grad_out * output)``.
    """
    y, cache = net.forward(x)

    def accessor(grad_out):
        return net.backward(cache, grad_out, param_grads=True, input_grad=True)

    return y, accessor


class Adam:
    def __init__(self, params, lr=3e-4, betas=(0.9, 0.999), eps=1e-8):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1**self.t
        corr2 = 1.0 - b2**self.t
        step_size = self.lr / corr1
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p -= (step_size * m / (np.sqrt(v / corr2) + self.eps)).astype(p.dtype, copy=False)

    def state_arrays(self) -> list:
        return self.m + self.v

    def load_arrays(self, arrays, t: int):
        n = len(self.m)
        self.m = [np.array(a) for a in arrays[:n]]
        self.v = [np.array(a) for a in arrays[n:]]
        self.t = int(t)
