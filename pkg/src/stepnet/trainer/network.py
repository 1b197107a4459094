"""Dense value network (float64) with hand-rolled backprop and momentum SGD.

Small enough that numpy beats any framework at this scale, and keeping the
arithmetic in plain view lets tests check gradients against finite
differences.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np


class Mlp:
    """Fully connected network: rectified hidden layers, linear output.

    Parameters are kept as an interleaved list [W0, b0, W1, b1, ...] so a
    single flat ordering serves the optimiser, checkpoints and broadcasts.
    """

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        hidden: Sequence[int] = (64, 64),
        rng: Optional[np.random.Generator] = None,
    ):
        if in_dim < 1 or out_dim < 1:
            raise ValueError("network needs at least one input and one output")
        if any(h < 1 for h in hidden):
            raise ValueError(f"hidden sizes must be positive, got {tuple(hidden)}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.hidden = tuple(int(h) for h in hidden)
        sizes = (in_dim, *self.hidden, out_dim)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(sizes, sizes[1:]):
            scale = math.sqrt(2.0 / fan_in)  # He init suits rectifiers
            self.weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out, dtype=np.float64))

    def forward(self, x) -> np.ndarray:
        """Q values, one row per observation."""
        h = np.atleast_2d(np.asarray(x, dtype=np.float64))
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.maximum(h @ w + b, 0.0)
        return h @ self.weights[-1] + self.biases[-1]

    def q_values(self, observation) -> np.ndarray:
        return self.forward(observation)[0]

    def parameters(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def set_parameters(self, params: Sequence[np.ndarray]) -> None:
        own = self.parameters()
        if len(params) != len(own):
            raise ValueError(f"expected {len(own)} arrays, got {len(params)}")
        for dst, src in zip(own, params):
            src = np.asarray(src, dtype=np.float64)
            if dst.shape != src.shape:
                raise ValueError(f"shape mismatch: {dst.shape} vs {src.shape}")
            dst[...] = src

    def copy_parameters(self) -> list[np.ndarray]:
        return [p.copy() for p in self.parameters()]

    def clone(self) -> "Mlp":
        twin = Mlp(self.in_dim, self.out_dim, self.hidden, np.random.default_rng(0))
        twin.set_parameters(self.parameters())
        return twin


def td_loss_and_grads(net: Mlp, observations, actions, targets):
    """Mean squared error on the chosen-action values, plus its gradient.

    Returns (loss, grads) with grads ordered like net.parameters().
    """
    obs = np.atleast_2d(np.asarray(observations, dtype=np.float64))
    actions = np.asarray(actions, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.float64)
    batch = obs.shape[0]

    pre: list[np.ndarray] = []  # pre-activation per hidden layer
    acts: list[np.ndarray] = [obs]  # layer inputs, starting at the batch itself
    h = obs
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        z = h @ w + b
        pre.append(z)
        h = np.maximum(z, 0.0)
        acts.append(h)
    q = h @ net.weights[-1] + net.biases[-1]

    rows = np.arange(batch)
    err = q[rows, actions] - targets
    loss = float(np.mean(err**2))

    dq = np.zeros_like(q)
    dq[rows, actions] = 2.0 * err / batch

    grads_w: list[np.ndarray] = [None] * len(net.weights)
    grads_b: list[np.ndarray] = [None] * len(net.biases)
    delta = dq
    for layer in range(len(net.weights) - 1, -1, -1):
        grads_w[layer] = acts[layer].T @ delta
        grads_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ net.weights[layer].T) * (pre[layer - 1] > 0.0)

    grads: list[np.ndarray] = []
    for gw, gb in zip(grads_w, grads_b):
        grads.append(gw)
        grads.append(gb)
    return loss, grads


class MomentumSgd:
    """Classic momentum: v <- m*v - lr*g; p <- p + v."""

    def __init__(self, learning_rate: float = 1e-3, momentum: float = 0.9):
        if learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {learning_rate}")
        if not 0.0 <= momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {momentum}")
        self.learning_rate = learning_rate
        self.momentum = momentum
        self._velocity: Optional[list[np.ndarray]] = None

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        if len(params) != len(grads):
            raise ValueError("params and grads differ in length")
        if self._velocity is None:
            self._velocity = [np.zeros_like(p) for p in params]
        for p, g, v in zip(params, grads, self._velocity):
            v *= self.momentum
            v -= self.learning_rate * g
            p += v
