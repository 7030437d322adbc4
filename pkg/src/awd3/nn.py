"""Small fully-connected networks with hand-written backprop and Adam.

All parameters of a network live in one flat float64 vector; weight and
bias arrays are views into it.  Adam and Polyak averaging then act on the
whole vector at once, and the flat gradient returned by ``backward`` lines
up with ``Mlp.params`` element for element.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

OUTPUT_ACTIVATIONS = ("identity", "tanh")


class ShapeError(ValueError):
    pass


class Mlp:
    """ReLU network ``sizes[0] -> ... -> sizes[-1]``.

    ``output_activation`` is ``"identity"`` (critics) or ``"tanh"``, in which
    case outputs are ``action_bound * tanh(z)`` (actors).  Weights are stored
    ``(out, in)``.
    """

    def __init__(self, sizes: Sequence[int], output_activation: str = "identity",
                 action_bound: float = 1.0, params: np.ndarray | None = None):
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ShapeError(f"invalid layer sizes {sizes}")
        if output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {output_activation!r}")
        if action_bound <= 0:
            raise ValueError("action_bound must be positive")
        self.sizes = sizes
        self.output_activation = output_activation
        self.action_bound = float(action_bound)
        n = sum(o * i + o for i, o in zip(sizes[:-1], sizes[1:]))
        if params is None:
            params = np.zeros(n)
        else:
            params = np.array(params, dtype=np.float64)
            if params.shape != (n,):
                raise ShapeError(f"expected {n} parameters, got shape {params.shape}")
        self.params = params
        self.layers = self._views(params)

    def _views(self, flat):
        layers = []
        pos = 0
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            w = flat[pos:pos + fan_out * fan_in].reshape(fan_out, fan_in)
            pos += fan_out * fan_in
            b = flat[pos:pos + fan_out]
            pos += fan_out
            layers.append((w, b))
        return layers

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    @property
    def n_params(self) -> int:
        return self.params.size

    def unflatten(self, flat: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        """Split a flat vector shaped like ``params`` into per-layer views."""
        return self._views(flat)

    def same_architecture(self, other: "Mlp") -> bool:
        return (self.sizes == other.sizes
                and self.output_activation == other.output_activation
                and self.action_bound == other.action_bound)

    def copy(self) -> "Mlp":
        return Mlp(self.sizes, self.output_activation, self.action_bound, self.params.copy())

    def load_params(self, flat: np.ndarray) -> None:
        if flat.shape != self.params.shape:
            raise ShapeError(f"expected shape {self.params.shape}, got {flat.shape}")
        self.params[...] = flat

    def forward_cached(self, x: np.ndarray):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.ndim != 2 or h.shape[1] != self.in_dim:
            raise ShapeError(f"input of shape {x.shape} does not fit in_dim={self.in_dim}")
        acts = [h]
        last = len(self.layers) - 1
        for k, (w, b) in enumerate(self.layers):
            z = h @ w.T
            z += b
            if k < last:
                h = np.maximum(z, 0.0, out=z)
            elif self.output_activation == "tanh":
                h = np.tanh(z, out=z)
            else:
                h = z
            acts.append(h)
        y = acts[-1] * self.action_bound if self.output_activation == "tanh" else acts[-1]
        return (y[0] if single else y), (single, acts)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward_cached(x)[0]

    def backward_cached(self, cache, output_gradient: np.ndarray, param_grads: bool = True):
        """Reverse pass from a ``forward_cached`` cache.

        Parameter gradients are summed over batch rows; scale
        ``output_gradient`` by ``1/N`` for a batch mean.
        """
        single, acts = cache
        g = np.asarray(output_gradient, dtype=np.float64)
        if single:
            g = g[None, :]
        if g.shape != acts[-1].shape:
            raise ShapeError(f"output gradient shape {np.shape(output_gradient)} "
                             f"does not match output {acts[-1].shape}")
        grad = np.zeros_like(self.params) if param_grads else None
        grad_layers = self._views(grad) if param_grads else None
        last = len(self.layers) - 1
        if self.output_activation == "tanh":
            t = acts[-1]
            delta = g * (self.action_bound * (1.0 - t * t))
        else:
            delta = g
        for k in range(last, -1, -1):
            w, _ = self.layers[k]
            h_in = acts[k]
            if param_grads:
                gw, gb = grad_layers[k]
                gw[...] = delta.T @ h_in
                gb[...] = delta.sum(axis=0)
            g_in = delta @ w
            if k > 0:
                delta = np.multiply(g_in, acts[k] > 0.0, out=g_in)
        return grad, (g_in[0] if single else g_in)


def forward(net: Mlp, x: np.ndarray) -> np.ndarray:
    return net(x)


def backward(net: Mlp, x: np.ndarray, output_gradient: np.ndarray):
    """Return ``(flat parameter gradient, input gradient)`` of ``<output_gradient, net(x)>``."""
    _, cache = net.forward_cached(x)
    return net.backward_cached(cache, output_gradient)


def init_xavier(sizes: Sequence[int], seed, output_activation: str = "identity",
                action_bound: float = 1.0) -> Mlp:
    """Glorot-uniform weights, zero biases.

    ``seed`` may be an int or a ``numpy.random.Generator`` (consumed in place).
    """
    rng = np.random.default_rng(seed)
    net = Mlp(sizes, output_activation, action_bound)
    for w, _ in net.layers:
        fan_out, fan_in = w.shape
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        w[...] = rng.uniform(-limit, limit, size=w.shape)
    return net


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: np.ndarray, **kwargs) -> "AdamState":
        return cls(np.zeros_like(params), np.zeros_like(params), **kwargs)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState):
    """One bias-corrected Adam descent step, applied to ``params`` in place."""
    if grads.shape != params.shape or state.m.shape != params.shape:
        raise ShapeError(f"shape mismatch: params {params.shape}, grads {grads.shape}, "
                         f"moments {state.m.shape}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    m, v = state.m, state.v
    m *= b1
    m += (1.0 - b1) * grads
    v *= b2
    v += (1.0 - b2) * (grads * grads)
    # m_hat / (sqrt(v_hat) + eps) without materialising m_hat and v_hat
    c1 = 1.0 - b1 ** state.step
    c2 = math.sqrt(1.0 - b2 ** state.step)
    denom = np.sqrt(v)
    denom /= c2
    denom += state.eps
    params -= (state.lr / c1) * m / denom
    return params, state


def soft_update(target: Mlp, online: Mlp, tau: float) -> Mlp:
    """Polyak averaging ``target <- tau * online + (1 - tau) * target`` in place."""
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    if not target.same_architecture(online):
        raise ShapeError("soft_update between different architectures")
    target.params *= 1.0 - tau
    target.params += tau * online.params
    return target


@dataclass
class GradCheckReport:
    max_rel_error: float
    n_probes: int
    worst_index: int
    rel_errors: np.ndarray = field(repr=False)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """``|a - n| / max(|a|, |n|, floor)``; the floor keeps near-zero entries from dominating."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def gradient_check(net: Mlp, x: np.ndarray, output_gradient: np.ndarray, n_probes: int,
                   rng, h: float = 1e-5, analytic: np.ndarray | None = None) -> GradCheckReport:
    """Central finite differences of ``<output_gradient, net(x)>`` on random parameters."""
    rng = np.random.default_rng(rng)
    if analytic is None:
        analytic, _ = backward(net, x, output_gradient)
    idx = rng.choice(net.n_params, size=min(n_probes, net.n_params), replace=False)
    numeric = np.empty(idx.size)
    for j, i in enumerate(idx):
        old = net.params[i]
        net.params[i] = old + h
        f_plus = float(np.sum(output_gradient * net(x)))
        net.params[i] = old - h
        f_minus = float(np.sum(output_gradient * net(x)))
        net.params[i] = old
        numeric[j] = (f_plus - f_minus) / (2.0 * h)
    rel = relative_error(analytic[idx], numeric)
    worst = int(np.argmax(rel))
    return GradCheckReport(float(rel[worst]), int(idx.size), int(idx[worst]), rel)
