"""A small numpy multilayer perceptron with dropout, Adam and checkpoint I/O.

Inputs are mapped to [-1, 1] by per-input bounds before the first layer.
Two output heads exist: ``regression`` (outputs mapped back from [-1, 1] to
per-output bounds, optionally with the leading inputs added as a skip
connection) and ``logit`` (a single raw score).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CHECKPOINT_MAGIC = b"PPCNET-MLP"
CHECKPOINT_VERSION = 1

TRAIN = "train"
INFER = "infer"
STOCHASTIC = "stochastic"


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


@dataclass
class MLP:
    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    dropout: float
    input_bounds: np.ndarray
    head: str = "regression"
    output_bounds: np.ndarray | None = None
    skip: bool = False

    def __post_init__(self):
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.head not in ("regression", "logit"):
            raise ValueError(f"unknown head {self.head!r}")
        sizes = self.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ValueError("one weight matrix and bias per layer is required")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (sizes[i], sizes[i + 1]) or b.shape != (sizes[i + 1],):
                raise ValueError(f"layer {i} parameters do not match layer_sizes")
        self.input_bounds = np.asarray(self.input_bounds, dtype=float)
        if self.input_bounds.shape != (sizes[0], 2):
            raise ValueError("input_bounds must have one [lo, hi] per input")
        if self.head == "regression":
            if self.output_bounds is None:
                raise ValueError("regression head needs output_bounds")
            self.output_bounds = np.asarray(self.output_bounds, dtype=float)
            if self.output_bounds.shape != (sizes[-1], 2):
                raise ValueError("output_bounds must have one [lo, hi] per output")
        elif sizes[-1] != 1:
            raise ValueError("logit head has a single output")
        if self.skip and (self.head != "regression" or sizes[-1] > sizes[0]):
            raise ValueError("skip connection needs a regression head no wider than the input")

    @property
    def n_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]

    def params(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def flat_params(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()])

    def set_flat_params(self, flat: np.ndarray) -> None:
        offset = 0
        for p in self.params():
            p[...] = flat[offset : offset + p.size].reshape(p.shape)
            offset += p.size

    def copy(self) -> "MLP":
        return MLP(
            list(self.layer_sizes),
            [W.copy() for W in self.weights],
            [b.copy() for b in self.biases],
            self.dropout,
            self.input_bounds.copy(),
            self.head,
            None if self.output_bounds is None else self.output_bounds.copy(),
            self.skip,
        )


def init_mlp(layer_sizes, rng: np.random.Generator, *, input_bounds, dropout: float = 0.0,
             head: str = "regression", output_bounds=None, skip: bool = False) -> MLP:
    """He-initialized network."""
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    if skip:
        # start close to the identity map
        weights[-1] *= 0.1
    return MLP(list(layer_sizes), weights, biases, dropout, np.asarray(input_bounds, dtype=float),
               head, output_bounds, skip)


def _normalize(x, bounds):
    lo, hi = bounds[:, 0], bounds[:, 1]
    return 2.0 * (x - lo) / (hi - lo) - 1.0


def _output_scale(net: MLP) -> np.ndarray | None:
    if net.head != "regression":
        return None
    return 0.5 * (net.output_bounds[:, 1] - net.output_bounds[:, 0])


def forward(net: MLP, X, mode: str = INFER, rng: np.random.Generator | None = None,
            return_cache: bool = False):
    """Forward pass.

    ``train`` and ``stochastic`` apply inverted dropout to every hidden layer
    and need ``rng``; ``infer`` applies neither mask nor scaling.
    """
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != net.n_in:
        raise ValueError(f"expected {net.n_in} inputs, got {X.shape[1]}")
    if mode not in (TRAIN, INFER, STOCHASTIC):
        raise ValueError(f"unknown mode {mode!r}")
    drop = net.dropout if mode != INFER else 0.0
    if drop > 0 and rng is None:
        raise ValueError(f"mode {mode!r} needs an rng")

    h = _normalize(X, net.input_bounds)
    x_norm = h
    acts, masks = [h], []
    last = len(net.weights) - 1
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ W + b
        if i == last:
            h = z
            break
        h = np.maximum(z, 0.0)
        if drop > 0:
            mask = (rng.random(h.shape) >= drop) / (1.0 - drop)
            h = h * mask
        else:
            mask = None
        masks.append(mask)
        acts.append(h)
    out = h
    if net.head == "regression":
        if net.skip:
            out = out + x_norm[:, : net.n_out]
        lo, hi = net.output_bounds[:, 0], net.output_bounds[:, 1]
        out = lo + (out + 1.0) * 0.5 * (hi - lo)
    else:
        out = out[:, 0]
    if single:
        out = out[0]
    if return_cache:
        return out, (acts, masks)
    return out


def backward(net: MLP, cache, d_out: np.ndarray) -> list[np.ndarray]:
    """Gradients of a loss w.r.t. all parameters, ordered like ``net.params()``."""
    acts, masks = cache
    d = np.asarray(d_out, dtype=float)
    if net.head == "regression":
        d = d * _output_scale(net)
    else:
        d = d.reshape(-1, 1)
    grads = []
    for i in range(len(net.weights) - 1, -1, -1):
        h_in = acts[i]
        grads.append(d.sum(axis=0))
        grads.append(h_in.T @ d)
        if i == 0:
            break
        d = d @ net.weights[i].T
        if masks[i - 1] is not None:
            d = d * masks[i - 1]
        d = d * (acts[i] > 0)
    grads.reverse()
    return grads


# -- losses ---------------------------------------------------------------


def planner_loss(pred, target, grad: bool = False):
    """Mean over waypoints of the squared Euclidean prediction error."""
    pred = np.atleast_2d(np.asarray(pred, dtype=float))
    target = np.atleast_2d(np.asarray(target, dtype=float))
    if pred.shape != target.shape:
        raise ValueError("prediction and target shapes differ")
    n = pred.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    diff = pred - target
    loss = float(np.sum(diff * diff) / n)
    if grad:
        return loss, 2.0 * diff / n
    return loss


def collision_loss(logits, labels, grad: bool = False):
    """Binary cross-entropy between sigmoid(logits) and (soft) labels.

    Uses softplus(z) - y*z, which never takes the log of zero.
    """
    z = np.asarray(logits, dtype=float).ravel()
    y = np.asarray(labels, dtype=float).ravel()
    if z.shape != y.shape:
        raise ValueError("logits and labels shapes differ")
    if len(z) == 0:
        raise ValueError("empty batch")
    if np.any((y < 0) | (y > 1)):
        raise ValueError("labels must lie in [0, 1]")
    loss = float(np.mean(np.maximum(z, 0.0) - y * z + np.log1p(np.exp(-np.abs(z)))))
    if grad:
        return loss, (sigmoid(z) - y) / len(z)
    return loss


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


LOSSES = {"planner": planner_loss, "collision": collision_loss}


def loss_and_grads(net: MLP, X, Y, loss: str, mode: str = TRAIN, rng=None):
    out, cache = forward(net, X, mode, rng, return_cache=True)
    value, d_out = LOSSES[loss](out, Y, grad=True)
    return value, backward(net, cache, d_out)


# -- optimizer ------------------------------------------------------------


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0

    @classmethod
    def for_net(cls, net: MLP, **kw) -> "AdamState":
        ps = net.params()
        return cls([np.zeros_like(p) for p in ps], [np.zeros_like(p) for p in ps], **kw)


def adam_step(net: MLP, state: AdamState, grads: list[np.ndarray]) -> None:
    params = net.params()
    if len(grads) != len(params) or any(g.shape != p.shape for g, p in zip(grads, params)):
        raise ValueError("gradient shapes do not match the network")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


@dataclass
class FitConfig:
    epochs: int = 100
    batch_size: int = 256
    lr: float = 1e-4
    max_steps: int | None = None  # caps optimizer steps per fit call


def fit(net: MLP, X, Y, loss: str, cfg: FitConfig, rng: np.random.Generator,
        state: AdamState | None = None) -> list[float]:
    """Minibatch Adam training; returns the mean loss of every epoch."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    n = len(X)
    if n == 0:
        return []
    state = state or AdamState.for_net(net, lr=cfg.lr)
    history = []
    steps = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            value, grads = loss_and_grads(net, X[idx], Y[idx], loss, TRAIN, rng)
            adam_step(net, state, grads)
            total += value * len(idx)
            steps += 1
            if cfg.max_steps is not None and steps >= cfg.max_steps:
                history.append(total / min(n, lo + len(idx)))
                return history
        history.append(total / n)
    return history


# -- checkpoints ----------------------------------------------------------


def save_checkpoint(net: MLP, path: str | Path) -> None:
    header = {
        "version": CHECKPOINT_VERSION,
        "layer_sizes": list(net.layer_sizes),
        "dropout": net.dropout,
        "head": net.head,
        "skip": net.skip,
        "input_bounds": net.input_bounds.tolist(),
        "output_bounds": None if net.output_bounds is None else net.output_bounds.tolist(),
        "n_params": int(sum(p.size for p in net.params())),
    }
    blob = net.flat_params().astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC + b" " + str(CHECKPOINT_VERSION).encode() + b"\n")
        fh.write(json.dumps(header).encode() + b"\n")
        fh.write(blob)


def load_checkpoint(path: str | Path) -> MLP:
    data = Path(path).read_bytes()
    try:
        first, rest = data.split(b"\n", 1)
        magic, version = first.split(b" ")
        header_line, blob = rest.split(b"\n", 1)
    except ValueError as exc:
        raise CorruptCheckpointError(f"{path}: truncated or malformed header") from exc
    if magic != CHECKPOINT_MAGIC:
        raise CorruptCheckpointError(f"{path}: not a network checkpoint")
    if int(version) != CHECKPOINT_VERSION:
        raise CheckpointVersionError(f"{path}: checkpoint version {int(version)}, expected {CHECKPOINT_VERSION}")
    try:
        header = json.loads(header_line)
    except json.JSONDecodeError as exc:
        raise CorruptCheckpointError(f"{path}: unreadable header") from exc
    n = header["n_params"]
    if len(blob) != 8 * n:
        raise CorruptCheckpointError(f"{path}: expected {8 * n} parameter bytes, found {len(blob)}")
    flat = np.frombuffer(blob, dtype="<f8").astype(float)
    sizes = header["layer_sizes"]
    weights = [np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
    biases = [np.zeros(b) for b in sizes[1:]]
    ob = header["output_bounds"]
    net = MLP(sizes, weights, biases, header["dropout"], np.asarray(header["input_bounds"]),
              header["head"], None if ob is None else np.asarray(ob), header["skip"])
    net.set_flat_params(flat)
    return net
