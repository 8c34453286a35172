"""Minimal feed-forward network with backpropagation and Adam.

Just enough machinery for the Q-network: dense layers, rectified-linear
hidden activations, a linear output head, squared or Huber loss on the
taken action, and an adaptive-moment optimizer. Everything is plain
numpy; training mutates the network in place (one trainer at a time),
inference copies may be shared read-only.

Parameters live in one flat vector; per-layer weights and biases are
reshaped views into it. That keeps the optimizer to a few whole-vector
operations per step and makes finite-difference checks trivial.
"""

from __future__ import annotations

import numpy as np

CHECKPOINT_VERSION = 1


class Mlp:
    """Dense ReLU network with a linear output layer."""

    def __init__(self, layer_sizes: list[int], seed: int = 0, dtype=np.float64):
        if len(layer_sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.layer_sizes = list(int(s) for s in layer_sizes)
        self.dtype = np.dtype(dtype)
        self._spans: list[tuple[int, int, tuple[int, ...]]] = []
        offset = 0
        for fan_in, fan_out in zip(self.layer_sizes, self.layer_sizes[1:]):
            self._spans.append((offset, offset + fan_in * fan_out, (fan_in, fan_out)))
            offset += fan_in * fan_out
            self._spans.append((offset, offset + fan_out, (fan_out,)))
            offset += fan_out
        self.n_params = offset
        self.flat = np.zeros(offset, dtype=self.dtype)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for i in range(0, len(self._spans), 2):
            ws, we, wshape = self._spans[i]
            bs, be, bshape = self._spans[i + 1]
            self.weights.append(self.flat[ws:we].reshape(wshape))
            self.biases.append(self.flat[bs:be].reshape(bshape))
        rng = np.random.default_rng(seed)
        for w in self.weights:
            bound = 1.0 / np.sqrt(w.shape[0])
            w[...] = rng.uniform(-bound, bound, size=w.shape)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Q-values for a single input vector or a batch."""
        single = x.ndim == 1
        h = np.atleast_2d(np.asarray(x, dtype=self.dtype))
        if h.shape[1] != self.layer_sizes[0]:
            raise ValueError(
                f"input dim {h.shape[1]} != expected {self.layer_sizes[0]}"
            )
        for i in range(self.n_layers - 1):
            h = np.maximum(h @ self.weights[i] + self.biases[i], 0.0)
        out = h @ self.weights[-1] + self.biases[-1]
        return out[0] if single else out

    def _forward_cached(self, x: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        activations = [np.asarray(x, dtype=self.dtype)]
        h = activations[0]
        for i in range(self.n_layers - 1):
            h = np.maximum(h @ self.weights[i] + self.biases[i], 0.0)
            activations.append(h)
        out = h @ self.weights[-1] + self.biases[-1]
        return activations, out

    def gradients(
        self,
        inputs: np.ndarray,
        targets: np.ndarray,
        action_mask: np.ndarray,
        loss_kind: str = "mse",
        huber_delta: float = 1.0,
    ) -> tuple[np.ndarray, float]:
        """Backpropagate the masked TD loss; returns (flat gradient, loss).

        The loss is averaged over the batch and taken only on the masked
        (selected) action of each sample; exactly one mask entry per row.
        """
        x = np.atleast_2d(np.asarray(inputs, dtype=self.dtype))
        t = np.atleast_2d(np.asarray(targets, dtype=self.dtype))
        mask = np.atleast_2d(np.asarray(action_mask, dtype=self.dtype))
        if x.shape[0] == 0:
            raise ValueError("empty batch")
        if not np.allclose(mask.sum(axis=1), 1.0):
            raise ValueError("mask must select exactly one action per sample")
        n = x.shape[0]
        activations, out = self._forward_cached(x)

        diff = (out - t) * mask
        if loss_kind == "mse":
            loss = float(np.sum(diff**2) / n)
            dout = 2.0 * diff / n
        elif loss_kind == "huber":
            a = np.abs(diff)
            quad = np.minimum(a, huber_delta)
            loss = float(np.sum(0.5 * quad**2 + huber_delta * (a - quad)) / n)
            dout = np.clip(diff, -huber_delta, huber_delta) / n
        else:
            raise ValueError(f"unknown loss {loss_kind!r}")
        if not np.isfinite(loss):
            raise FloatingPointError("non-finite loss (training diverged)")

        grad = np.empty_like(self.flat)
        delta = dout
        for i in range(self.n_layers - 1, -1, -1):
            ws, we, wshape = self._spans[2 * i]
            bs, be, _ = self._spans[2 * i + 1]
            np.matmul(activations[i].T, delta, out=grad[ws:we].reshape(wshape))
            np.sum(delta, axis=0, out=grad[bs:be])
            if i > 0:
                delta = (delta @ self.weights[i].T) * (activations[i] > 0)
        return grad, loss

    def grad_views(self, flat_grad: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Per-layer (dW, db) views into a flat gradient vector."""
        gw, gb = [], []
        for i in range(self.n_layers):
            ws, we, wshape = self._spans[2 * i]
            bs, be, _ = self._spans[2 * i + 1]
            gw.append(flat_grad[ws:we].reshape(wshape))
            gb.append(flat_grad[bs:be])
        return gw, gb

    def softmax_preferences(self, x: np.ndarray) -> np.ndarray:
        """Diagnostic action-preference view of the Q-values."""
        q = self.forward(x)
        z = q - np.max(q, axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)

    def copy(self) -> "Mlp":
        other = Mlp(self.layer_sizes, seed=0, dtype=self.dtype)
        other.flat[...] = self.flat
        return other

    def load_from(self, other: "Mlp") -> None:
        self.flat[...] = other.flat

    def all_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.flat)))


class Adam:
    """Adaptive-moment estimation over an Mlp's flat parameter vector."""

    def __init__(self, net: Mlp, lr: float = 5e-5, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = np.zeros_like(net.flat)
        self.v = np.zeros_like(net.flat)
        self._s1 = np.empty_like(net.flat)
        self._s2 = np.empty_like(net.flat)

    def step(self, net: Mlp, flat_grad: np.ndarray) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        m, v, s1, s2 = self.m, self.v, self._s1, self._s2
        m *= self.beta1
        np.multiply(flat_grad, 1.0 - self.beta1, out=s1)
        m += s1
        v *= self.beta2
        np.square(flat_grad, out=s1)
        s1 *= 1.0 - self.beta2
        v += s1
        np.divide(v, b2c, out=s1)
        np.sqrt(s1, out=s1)
        s1 += self.eps
        np.divide(m, s1, out=s2)
        s2 *= self.lr / b1c
        net.flat -= s2


def backward_and_step(
    net: Mlp,
    opt: Adam,
    inputs: np.ndarray,
    targets: np.ndarray,
    action_mask: np.ndarray,
    loss_kind: str = "mse",
) -> float:
    """One gradient step on a batch; returns the (non-negative) loss."""
    grad, loss = net.gradients(inputs, targets, action_mask, loss_kind)
    opt.step(net, grad)
    return loss


def save_checkpoint(path, net: Mlp, opt: Adam | None = None, meta: dict | None = None) -> None:
    """Versioned npz snapshot of parameters and optimizer state."""
    data: dict[str, np.ndarray] = {
        "version": np.array(CHECKPOINT_VERSION),
        "layer_sizes": np.array(net.layer_sizes),
        "dtype": np.array(str(net.dtype)),
    }
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        data[f"w{i}"] = w
        data[f"b{i}"] = b
    if opt is not None:
        data["adam_t"] = np.array(opt.t)
        data["adam_hp"] = np.array([opt.lr, opt.beta1, opt.beta2, opt.eps])
        data["adam_m"] = opt.m
        data["adam_v"] = opt.v
    if meta:
        for key, value in meta.items():
            data[f"meta_{key}"] = np.array(value)
    np.savez(path, **data)


def load_checkpoint(path) -> tuple[Mlp, Adam | None, dict]:
    with np.load(path, allow_pickle=False) as data:
        if int(data["version"]) != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {int(data['version'])}")
        sizes = [int(s) for s in data["layer_sizes"]]
        net = Mlp(sizes, dtype=np.dtype(str(data["dtype"])))
        for i in range(net.n_layers):
            net.weights[i][...] = data[f"w{i}"]
            net.biases[i][...] = data[f"b{i}"]
        opt = None
        if "adam_t" in data:
            lr, b1, b2, eps = (float(v) for v in data["adam_hp"])
            opt = Adam(net, lr=lr, beta1=b1, beta2=b2, eps=eps)
            opt.t = int(data["adam_t"])
            opt.m[...] = data["adam_m"]
            opt.v[...] = data["adam_v"]
        meta = {
            key[5:]: data[key].item() if data[key].ndim == 0 else data[key]
            for key in data.files
            if key.startswith("meta_")
        }
    return net, opt, meta
