"""Minimal fully connected networks with hand-written backprop.

Everything here is plain numpy. Networks are small (two hidden layers of
a few dozen units), so clarity wins over speed tricks. The backward pass
returns the gradient with respect to the input as well, which lets a
caller chain networks together (an actor feeding a critic, or a shared
trunk feeding two heads) without any framework machinery.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from hybridmec.errors import ShapeError

MAGIC = b"MLPv1\n"

_ACTIVATIONS = ("relu", "tanh")


def he_init(fan_in: int, fan_out: int, rng) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))


def xavier_init(fan_in: int, fan_out: int, rng) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class MLP:
    """Stack of affine layers with a nonlinearity between them.

    The output layer is always linear; squashing (if any) is the
    caller's business. Weights W[i] have shape (n_in, n_out) so the
    forward pass is x @ W + b throughout.
    """

    def __init__(self, layer_sizes, activation: str = "relu",
                 init: str = "he", rng=None):
        if len(layer_sizes) < 2:
            raise ShapeError("need at least an input and an output size")
        if activation not in _ACTIVATIONS:
            raise ShapeError(f"unknown activation {activation!r}")
        if rng is None:
            rng = np.random.default_rng()
        self.layer_sizes = [int(n) for n in layer_sizes]
        self.activation = activation
        self.weights = []
        self.biases = []
        init_fn = he_init if init == "he" else xavier_init
        for n_in, n_out in zip(self.layer_sizes, self.layer_sizes[1:]):
            self.weights.append(init_fn(n_in, n_out, rng))
            self.biases.append(np.zeros(n_out))

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    def parameters(self):
        """Flat list of parameter arrays, weights and biases interleaved."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out.append(W)
            out.append(b)
        return out

    def _act(self, z):
        if self.activation == "relu":
            return np.maximum(z, 0.0)
        return np.tanh(z)

    def _act_grad(self, z, a):
        if self.activation == "relu":
            return (z > 0.0).astype(z.dtype)
        return 1.0 - a * a

    def forward(self, x: np.ndarray) -> np.ndarray:
        y, _ = self.forward_cached(x)
        return y

    def forward_cached(self, x: np.ndarray):
        """Forward pass keeping what backward() needs.

        Accepts a single sample (1-D) or a batch (2-D); the output
        mirrors the input's rank.
        """
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ShapeError(
                f"expected input of width {self.input_dim}, got {x.shape}")
        acts = [x]
        pre = []
        h = x
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + b
            pre.append(z)
            h = z if i == last else self._act(z)
            acts.append(h)
        cache = (acts, pre, squeeze)
        return (acts[-1][0] if squeeze else acts[-1]), cache

    def backward(self, cache, grad_out: np.ndarray):
        """Backprop a gradient wrt the output down to parameters and input.

        Returns (grads, grad_input) where grads is a list matching
        parameters() and grad_input has the same shape as the original
        input. Gradients are summed over the batch, as for a loss that
        is a sum of per-sample terms; divide by the batch size first if
        the loss is a mean.
        """
        acts, pre, squeeze = cache
        delta = np.asarray(grad_out, dtype=float)
        if squeeze:
            delta = delta[None, :]
        if delta.shape != acts[-1].shape:
            raise ShapeError(
                f"grad shape {delta.shape} does not match output {acts[-1].shape}")
        grads = [None] * (2 * len(self.weights))
        for i in range(len(self.weights) - 1, -1, -1):
            grads[2 * i] = acts[i].T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            delta = delta @ self.weights[i].T
            if i > 0:
                delta = delta * self._act_grad(pre[i - 1], acts[i])
        grad_input = delta[0] if squeeze else delta
        return grads, grad_input

    def copy(self) -> "MLP":
        dup = MLP.__new__(MLP)
        dup.layer_sizes = list(self.layer_sizes)
        dup.activation = self.activation
        dup.weights = [W.copy() for W in self.weights]
        dup.biases = [b.copy() for b in self.biases]
        return dup

    def set_from(self, other: "MLP") -> None:
        for mine, theirs in zip(self.parameters(), other.parameters()):
            mine[...] = theirs


def soft_update(target: MLP, online: MLP, tau: float) -> None:
    """Move target parameters a fraction tau of the way toward online."""
    for t, o in zip(target.parameters(), online.parameters()):
        t *= 1.0 - tau
        t += tau * o


class Adam:
    """Adam optimizer bound to one network's parameter list."""

    def __init__(self, net: MLP, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.net = net
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in net.parameters()]
        self.v = [np.zeros_like(p) for p in net.parameters()]

    def step(self, grads) -> None:
        params = self.net.parameters()
        if len(grads) != len(params):
            raise ShapeError("gradient list does not match parameter list")
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def save_mlp(net: MLP, path) -> None:
    """Write a network to disk: magic, JSON header, float64 LE payload."""
    header = json.dumps({
        "layer_sizes": net.layer_sizes,
        "activation": net.activation,
    }).encode("utf-8")
    flat = np.concatenate([p.ravel() for p in net.parameters()])
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(flat.astype("<f8").tobytes())


def load_mlp(path) -> MLP:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ShapeError(f"not a saved network: bad magic {magic!r}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        payload = fh.read()
    net = MLP(header["layer_sizes"], activation=header["activation"],
              rng=np.random.default_rng(0))
    flat = np.frombuffer(payload, dtype="<f8")
    expected = sum(p.size for p in net.parameters())
    if flat.size != expected:
        raise ShapeError(
            f"payload has {flat.size} values, network needs {expected}")
    offset = 0
    for p in net.parameters():
        p[...] = flat[offset:offset + p.size].reshape(p.shape)
        offset += p.size
    return net
