"""A small float64 multilayer perceptron with hand-written backprop.

Hidden layers use ReLU, the output layer is affine. Losses (softmax
cross-entropy, mean squared error) are batch means. ``Adam`` updates parameter
arrays in place.

Checkpoint format (little-endian)::

    b"MLP1\\n"
    <one line of JSON: {"layer_sizes": [...], "activation": "relu", ...}>\\n
    <float64 blob: W0 (row-major, in x out), b0, W1, b1, ...>
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .core import DimensionError, NumericError, as_generator

MAGIC = b"MLP1\n"


class LabelError(ValueError):
    pass


class Mlp:
    def __init__(self, layer_sizes: Sequence[int], rng=None, zero: bool = False):
        sizes = [int(s) for s in layer_sizes]
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ValueError(f"need at least two positive layer sizes, got {layer_sizes!r}")
        self.layer_sizes = sizes
        shapes = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            shapes.extend(((fan_in, fan_out), (fan_out,)))
        # one contiguous vector; weights and biases are views into it
        self.theta = np.zeros(sum(int(np.prod(s)) for s in shapes))
        self._bind(shapes)
        if not zero:
            gen = as_generator(rng if rng is not None else np.random.default_rng(0))
            for w in self.weights:
                limit = np.sqrt(6.0 / w.shape[0])
                w[...] = gen.uniform(-limit, limit, size=w.shape)

    def _bind(self, shapes):
        self.weights: List[np.ndarray] = []
        self.biases: List[np.ndarray] = []
        pos = 0
        for i, shape in enumerate(shapes):
            size = int(np.prod(shape))
            view = self.theta[pos:pos + size].reshape(shape)
            (self.weights if i % 2 == 0 else self.biases).append(view)
            pos += size

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def params(self) -> List[np.ndarray]:
        """Parameter arrays in ``W0, b0, W1, b1, ...`` order (live references)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def num_params(self) -> int:
        return self.theta.size

    def _check_input(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim not in (1, 2) or x.shape[-1] != self.in_dim:
            raise DimensionError(f"expected input width {self.in_dim}, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise NumericError("network input contains non-finite values")
        return x

    def forward(self, x) -> np.ndarray:
        """Output for a single input vector or a ``(batch, in_dim)`` array."""
        h = self._check_input(x)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
        return h

    __call__ = forward

    def forward_cache(self, x) -> Tuple[np.ndarray, List[np.ndarray]]:
        """Forward pass on a batch keeping the per-layer inputs for ``backward``."""
        h = self._check_input(x)
        if h.ndim == 1:
            h = h[None, :]
        acts = [h]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
                acts.append(h)
        return h, acts

    def backward(self, acts: List[np.ndarray], grad_out: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
        """Backpropagate ``dL/d(output)``; returns parameter grads and ``dL/d(input)``."""
        grads: List[np.ndarray] = [None] * (2 * len(self.weights))
        g = grad_out
        for i in range(len(self.weights) - 1, -1, -1):
            a = acts[i]
            grads[2 * i] = a.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.weights[i].T
            if i > 0:
                g = g * (a > 0)
        return grads, g

    def flatten_grads(self, grads: Sequence[np.ndarray]) -> np.ndarray:
        """Concatenate per-array gradients in the layout of ``theta``."""
        return np.concatenate([g.ravel() for g in grads])

    def copy(self) -> "Mlp":
        net = Mlp.__new__(Mlp)
        net.layer_sizes = list(self.layer_sizes)
        net.theta = self.theta.copy()
        net._bind([p.shape for p in self.params])
        return net

    def load_params_from(self, other: "Mlp") -> None:
        if other.layer_sizes != self.layer_sizes:
            raise DimensionError("layer sizes differ")
        self.theta[...] = other.theta

    def soft_update(self, source: "Mlp", tau: float) -> None:
        """``self <- tau * source + (1 - tau) * self``."""
        if tau == 1.0:
            self.theta[...] = source.theta
        else:
            self.theta *= 1.0 - tau
            self.theta += tau * source.theta

    def flat(self) -> np.ndarray:
        return self.theta.copy()

    # serialization

    def header(self) -> dict:
        return {"layer_sizes": self.layer_sizes, "activation": "relu"}

    def write(self, fh: BinaryIO, extra: Optional[dict] = None) -> None:
        head = self.header()
        if extra:
            head.update(extra)
        fh.write(MAGIC)
        fh.write(json.dumps(head, sort_keys=True).encode() + b"\n")
        fh.write(self.flat().astype("<f8").tobytes())

    def to_bytes(self, extra: Optional[dict] = None) -> bytes:
        buf = io.BytesIO()
        self.write(buf, extra)
        return buf.getvalue()

    def save(self, path: Union[str, Path], extra: Optional[dict] = None) -> None:
        Path(path).write_bytes(self.to_bytes(extra))

    @classmethod
    def from_bytes(cls, data: bytes) -> Tuple["Mlp", dict]:
        if not data.startswith(MAGIC):
            raise ValueError("not an MLP checkpoint")
        end = data.index(b"\n", len(MAGIC))
        head = json.loads(data[len(MAGIC):end])
        if head.get("activation") != "relu":
            raise ValueError(f"unsupported activation {head.get('activation')!r}")
        net = cls(head["layer_sizes"], zero=True)
        blob = np.frombuffer(data[end + 1:], dtype="<f8")
        if blob.size != net.num_params():
            raise ValueError(f"checkpoint holds {blob.size} values, expected {net.num_params()}")
        net.theta[...] = blob
        return net, head

    @classmethod
    def load(cls, path: Union[str, Path]) -> Tuple["Mlp", dict]:
        return cls.from_bytes(Path(path).read_bytes())


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def backward_cross_entropy(net: Mlp, inputs, labels) -> Tuple[float, List[np.ndarray]]:
    """Mean softmax cross-entropy over the batch and its parameter gradients.

    ``labels`` are 0-based class indices.
    """
    labels = np.asarray(labels)
    n = len(labels)
    if n == 0:
        raise ValueError("empty batch")
    if labels.ndim != 1 or not np.issubdtype(labels.dtype, np.integer):
        raise LabelError("labels must be a 1-d integer array")
    if labels.min() < 0 or labels.max() >= net.out_dim:
        raise LabelError(f"labels must lie in [0, {net.out_dim})")
    logits, acts = net.forward_cache(inputs)
    if len(logits) != n:
        raise DimensionError("inputs and labels differ in batch size")
    logp = log_softmax(logits)
    rows = np.arange(n)
    loss = -float(logp[rows, labels].mean())
    g = np.exp(logp)
    g[rows, labels] -= 1.0
    grads, _ = net.backward(acts, g / n)
    return loss, grads


def backward_mse(net: Mlp, inputs, targets) -> Tuple[float, List[np.ndarray]]:
    """Mean squared error over batch and output dims, with parameter gradients."""
    targets = np.asarray(targets, dtype=np.float64)
    out, acts = net.forward_cache(inputs)
    if targets.ndim == 1:
        targets = targets[None, :] if len(out) == 1 and targets.shape[0] == net.out_dim else targets[:, None]
    if targets.shape != out.shape:
        raise DimensionError(f"targets have shape {targets.shape}, outputs {out.shape}")
    diff = out - targets
    loss = float(np.mean(diff ** 2))
    grads, _ = net.backward(acts, 2.0 * diff / diff.size)
    return loss, grads


@dataclass
class AdamState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray], **kw) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **kw)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState):
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise DimensionError("params, grads and optimizer state must have equal length")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != np.shape(g) or p.shape != m.shape:
            raise DimensionError(f"shape mismatch: param {p.shape}, grad {np.shape(g)}, moment {m.shape}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    step = state.lr * np.sqrt(c2) / c1
    eps_hat = state.eps * np.sqrt(c2)
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= step * m / (np.sqrt(v) + eps_hat)
    return params, state


class Adam:
    """Adam bound to a fixed parameter list."""

    def __init__(self, params: Sequence[np.ndarray], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.state = AdamState.zeros_like(self.params, lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def step(self, grads: Sequence[np.ndarray]) -> None:
        adam_step(self.params, grads, self.state)


def numerical_gradients(loss_fn: Callable[[], float], params: Sequence[np.ndarray],
                        h: float = 1e-5) -> List[np.ndarray]:
    """Central finite differences of ``loss_fn()`` with respect to every parameter entry."""
    out = []
    for p in params:
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn()
            flat[i] = orig - h
            down = loss_fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
        out.append(g)
    return out


def max_relative_error(analytic: Sequence[np.ndarray], numeric: Sequence[np.ndarray],
                       floor: float = 1e-8) -> float:
    """Largest ``|a - n| / max(|a|, |n|, floor)`` over all components."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst
