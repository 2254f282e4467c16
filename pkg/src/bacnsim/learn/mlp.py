"""Small tanh multilayer perceptron with hand-written backprop, plus optimizers."""
from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch


class Mlp:
    """Fully connected net: tanh on hidden layers, linear output.

    ``weights[i]`` has shape (in, out) so a batch ``x`` of shape (B, in)
    maps to ``x @ W + b``.
    """

    def __init__(self, sizes, rng=None, out_scale=1.0):
        if len(sizes) < 2:
            raise ShapeMismatch("an Mlp needs at least input and output sizes")
        self.sizes = tuple(int(s) for s in sizes)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights, self.biases = [], []
        for i, (n_in, n_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            scale = 1.0 / np.sqrt(n_in)
            if i == len(self.sizes) - 2:
                scale *= out_scale
            self.weights.append(rng.normal(0.0, scale, size=(n_in, n_out)))
            self.biases.append(np.zeros(n_out))

    @property
    def params(self):
        """Parameter arrays interleaved as [W0, b0, W1, b1, ...]."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def flat(self):
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, vec):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != self.n_params:
            raise ShapeMismatch(f"expected {self.n_params} parameters, got {vec.size}")
        i = 0
        for p in self.params:
            p[...] = vec[i:i + p.size].reshape(p.shape)
            i += p.size

    @property
    def n_params(self):
        return sum(p.size for p in self.params)

    def copy(self):
        net = Mlp.__new__(Mlp)
        net.sizes = self.sizes
        net.weights = [w.copy() for w in self.weights]
        net.biases = [b.copy() for b in self.biases]
        return net

    def _check(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.sizes[0]:
            raise ShapeMismatch(f"input length {x.shape[-1]} != {self.sizes[0]}")
        return x

    def forward(self, x):
        x = self._check(x)
        h = x
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if i < last:
                h = np.tanh(h)
        return h

    def forward_cached(self, x):
        x = self._check(x)
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if i < last:
                h = np.tanh(h)
            acts.append(h)
        return h, acts

    def backward(self, acts, grad_out):
        """Parameter gradients of ``sum(grad_out * output)``, same order as ``params``."""
        g = np.asarray(grad_out, dtype=np.float64)
        if g.shape != acts[-1].shape:
            raise ShapeMismatch(f"output gradient shape {g.shape} != {acts[-1].shape}")
        grads = [None] * (2 * len(self.weights))
        for i in reversed(range(len(self.weights))):
            a_in = acts[i]
            if a_in.ndim == 1:
                grads[2 * i] = np.outer(a_in, g)
                grads[2 * i + 1] = g.copy()
            else:
                grads[2 * i] = a_in.T @ g
                grads[2 * i + 1] = g.sum(axis=0)
            if i > 0:
                g = (g @ self.weights[i].T) * (1.0 - acts[i] ** 2)
        return grads

    def input_gradient(self, acts, grad_out):
        g = np.asarray(grad_out, dtype=np.float64)
        for i in reversed(range(len(self.weights))):
            g = g @ self.weights[i].T
            if i > 0:
                g = g * (1.0 - acts[i] ** 2)
        return g


def mlp_forward(net, x):
    return net.forward(x)


def mlp_backward(net, x, grad_out):
    _, acts = net.forward_cached(x)
    return net.backward(acts, grad_out)


def finite_difference_gradients(net, x, grad_out, eps=1e-6):
    """Central-difference gradients of ``sum(grad_out * net(x))`` w.r.t. every parameter."""
    grad_out = np.asarray(grad_out, dtype=np.float64)
    out = []
    for p in net.params:
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + eps
            up = np.sum(grad_out * net.forward(x))
            p[idx] = orig - eps
            down = np.sum(grad_out * net.forward(x))
            p[idx] = orig
            g[idx] = (up - down) / (2 * eps)
        out.append(g)
    return out


def max_relative_error(analytic, numeric, floor=1e-6):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        err = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(err.max()))
    return worst


def clip_by_global_norm(grads, max_norm):
    if not max_norm:
        return grads
    norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if norm > max_norm:
        grads = [g * (max_norm / norm) for g in grads]
    return grads


class Sgd:
    """Gradient descent with heavy-ball momentum."""

    def __init__(self, params, lr=3e-4, momentum=0.9):
        self.lr, self.momentum = lr, momentum
        self.velocity = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        for p, g, v in zip(params, grads, self.velocity):
            v *= self.momentum
            v -= self.lr * g
            p += v


class Adam:
    def __init__(self, params, lr=3e-4, betas=(0.9, 0.999), eps=1e-8):
        self.lr, self.betas, self.eps = lr, betas, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(name, params, lr, momentum=0.9):
    if name == "sgd":
        return Sgd(params, lr, momentum)
    if name == "adam":
        return Adam(params, lr)
    raise ValueError(f"unknown optimizer {name!r}")
