"""Minimal feed-forward network engine in numpy.

Networks are stacks of affine layers with ReLU on every hidden layer and a
linear output layer.  Weights are stored as ``(fan_in, fan_out)`` matrices
and inputs are rows, so a batch ``X`` of shape ``(K, n_in)`` maps to
``X @ W + b``.  All arithmetic is float64.

Parameter updates never modify arrays in place: :func:`adam_step` returns
fresh :class:`MlpParams`, so a forward cache computed with an older
parameter set is detected as stale by :func:`backward`.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "MlpParams",
    "ForwardCache",
    "AdamState",
    "ModelFileError",
    "MalformedModelError",
    "ModelVersionError",
    "ModelShapeError",
    "StaleCacheError",
    "init_params",
    "forward",
    "predict",
    "softmax",
    "softmax_cross_entropy",
    "backward",
    "init_adam",
    "adam_step",
    "gradient_check",
    "save_params",
    "load_params",
]

FILE_TAG = "FSOMLP"
FILE_VERSION = 1


class StaleCacheError(ValueError):
    """A forward cache does not belong to the parameters passed to backward."""


class ModelFileError(ValueError):
    """Base class for parameter-file problems."""


class MalformedModelError(ModelFileError):
    pass


class ModelVersionError(ModelFileError):
    pass


class ModelShapeError(ModelFileError):
    pass


@dataclass
class MlpParams:
    """Weights and biases of one multilayer perceptron.

    Also used to hold gradients and Adam moments, which share the layout.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.biases):
            raise ValueError("weights and biases must have the same number of layers")
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {k}: weight {w.shape} and bias {b.shape} disagree")
            if k and self.weights[k - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {k}: input width {w.shape[0]} != previous output width")

    @property
    def layer_dims(self) -> list[int]:
        if not self.weights:
            return []
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def map(self, fn, *others: "MlpParams") -> "MlpParams":
        """Apply ``fn`` array-wise across this and ``others``."""
        ws = [fn(w, *(o.weights[k] for o in others)) for k, w in enumerate(self.weights)]
        bs = [fn(b, *(o.biases[k] for o in others)) for k, b in enumerate(self.biases)]
        return MlpParams(ws, bs)

    def zeros_like(self) -> "MlpParams":
        return self.map(np.zeros_like)

    def copy(self) -> "MlpParams":
        return self.map(np.array)


@dataclass
class ForwardCache:
    params: MlpParams
    inputs: list[np.ndarray] = field(default_factory=list)  # input to each layer
    preacts: list[np.ndarray] = field(default_factory=list)  # pre-activation of each layer


@dataclass
class AdamState:
    m: MlpParams
    v: MlpParams
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_params(layer_dims: Sequence[int], rng: np.random.Generator) -> MlpParams:
    """He-style uniform initialization ``U(-sqrt(6/fan_in), sqrt(6/fan_in))``, zero biases."""
    dims = [int(d) for d in layer_dims]
    if any(d < 1 for d in dims):
        raise ValueError("layer widths must be >= 1")
    ws, bs = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        lim = np.sqrt(6.0 / fan_in)
        ws.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
        bs.append(np.zeros(fan_out))
    return MlpParams(ws, bs)


def forward(params: MlpParams, x) -> tuple[np.ndarray, ForwardCache]:
    """Logits for input ``x`` (a vector or a batch of rows) plus the backward cache."""
    a = np.asarray(x, dtype=float)
    if params.weights and a.shape[-1] != params.weights[0].shape[0]:
        raise ValueError(f"input width {a.shape[-1]} != network input width {params.weights[0].shape[0]}")
    cache = ForwardCache(params)
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        cache.inputs.append(a)
        z = a @ w + b
        cache.preacts.append(z)
        a = z if k == last else np.maximum(z, 0.0)
    return a, cache


def predict(params: MlpParams, x) -> np.ndarray:
    """Arg-max class of each input row."""
    logits, _ = forward(params, x)
    return np.argmax(logits, axis=-1)


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, target) -> tuple[float, np.ndarray]:
    """Mean cross-entropy of ``softmax(logits)`` against ``target``.

    Parameters
    ----------
    logits : array_like, shape (M,) or (K, M)
    target : array_like
        One-hot rows matching ``logits`` or integer class indices.

    Returns
    -------
    loss : float
        ``-log softmax(logits)[hot]`` averaged over the batch.
    grad : ndarray
        Gradient of the mean loss with respect to ``logits``
        (``(softmax - target) / K``).
    """
    z = np.asarray(logits, dtype=float)
    t = np.asarray(target)
    if t.shape != z.shape:
        if t.shape == z.shape[:-1] and np.issubdtype(t.dtype, np.integer):
            t = np.eye(z.shape[-1])[t]
        else:
            raise ValueError(f"target shape {t.shape} does not match logits {z.shape}")
    t = t.astype(float)
    shifted = z - z.max(axis=-1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    log_p = shifted - log_norm
    k = 1 if z.ndim == 1 else z.shape[0]
    loss = float(-(t * log_p).sum() / k)
    grad = (np.exp(log_p) - t) / k
    return max(loss, 0.0), grad


def backward(params: MlpParams, cache: ForwardCache, grad_out) -> tuple[MlpParams, np.ndarray]:
    """Exact gradients of a scalar loss given ``dL/dlogits``.

    Returns
    -------
    grads : MlpParams
        Same layout as ``params``.
    grad_input : ndarray
        ``dL/dx`` for the network input, used to chain into upstream
        networks.

    Raises
    ------
    StaleCacheError
        If ``cache`` was produced by a different parameter set or its
        shapes do not match ``grad_out``.
    """
    if cache.params is not params or len(cache.inputs) != len(params.weights):
        raise StaleCacheError("forward cache was not produced with these parameters")
    delta = np.asarray(grad_out, dtype=float)
    if cache.preacts and delta.shape != cache.preacts[-1].shape:
        raise StaleCacheError(f"output gradient shape {delta.shape} != logits shape {cache.preacts[-1].shape}")
    n = len(params.weights)
    dws: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    dbs: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    for k in range(n - 1, -1, -1):
        if k != n - 1:
            delta = delta * (cache.preacts[k] > 0)
        a = cache.inputs[k]
        if delta.ndim == 1:
            dws[k] = np.outer(a, delta)
            dbs[k] = delta.copy()
        else:
            dws[k] = a.T @ delta
            dbs[k] = delta.sum(axis=0)
        delta = delta @ params.weights[k].T
    return MlpParams(dws, dbs), delta


def init_adam(params: MlpParams) -> AdamState:
    return AdamState(params.zeros_like(), params.zeros_like(), 0)


def adam_step(
    params: MlpParams, grads: MlpParams, state: AdamState, learning_rate: float
) -> tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update; returns new params and state."""
    if [w.shape for w in grads.arrays()] != [w.shape for w in params.arrays()]:
        raise ValueError("gradient shapes do not match parameters")
    if [w.shape for w in state.m.arrays()] != [w.shape for w in params.arrays()]:
        raise ValueError("optimizer state shapes do not match parameters")
    b1, b2, eps = state.beta1, state.beta2, state.eps
    t = state.t + 1
    m = state.m.map(lambda m_, g: b1 * m_ + (1.0 - b1) * g, grads)
    v = state.v.map(lambda v_, g: b2 * v_ + (1.0 - b2) * g * g, grads)
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new = params.map(lambda p, m_, v_: p - learning_rate * (m_ / c1) / (np.sqrt(v_ / c2) + eps), m, v)
    return new, AdamState(m, v, t, b1, b2, eps)


def _loss(params: MlpParams, x, target) -> float:
    logits, _ = forward(params, x)
    return softmax_cross_entropy(logits, target)[0]


def gradient_check(
    params: MlpParams,
    x,
    target,
    step: float = 1e-5,
    grads: MlpParams | None = None,
    floor: float = 1e-6,
) -> float:
    """Worst relative discrepancy between backprop and central differences.

    The relative error of one parameter is ``|a - n| / max(|a| + |n|, floor)``
    where ``a`` is the analytic and ``n`` the numerical derivative; the
    floor keeps round-off on near-zero derivatives from dominating.

    Parameters
    ----------
    grads : MlpParams, optional
        Analytic gradients to check.  Computed by :func:`backward` when
        omitted; passing them allows testing a deliberately corrupted set.
    """
    if params.n_params == 0:
        return 0.0
    if grads is None:
        logits, cache = forward(params, x)
        _, g_out = softmax_cross_entropy(logits, target)
        grads, _ = backward(params, cache, g_out)
    worst = 0.0
    probe = params.copy()
    for arr, g_arr in zip(probe.arrays(), grads.arrays()):
        flat = arr.reshape(-1)
        g_flat = g_arr.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = _loss(probe, x, target)
            flat[i] = orig - step
            down = _loss(probe, x, target)
            flat[i] = orig
            num = (up - down) / (2.0 * step)
            err = abs(g_flat[i] - num) / max(abs(g_flat[i]) + abs(num), floor)
            worst = max(worst, err)
    return worst


def save_params(params: MlpParams, destination: str | os.PathLike) -> None:
    """Write ``params`` in the line-oriented ``FSOMLP 1`` text format.

    Layout: the tag line, a line of layer widths, then for each layer one
    line per weight row (``fan_out`` values) followed by the bias line.
    Values use 17 significant digits, which round-trips float64 exactly.
    The file is written to a temporary name and renamed into place.
    """
    path = Path(destination)
    lines = [f"{FILE_TAG} {FILE_VERSION}", " ".join(str(d) for d in params.layer_dims)]
    for w, b in zip(params.weights, params.biases):
        lines.extend(" ".join(f"{v:.17g}" for v in row) for row in w)
        lines.append(" ".join(f"{v:.17g}" for v in b))
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    os.replace(tmp, path)


def load_params(source: str | os.PathLike) -> MlpParams:
    """Read a parameter file written by :func:`save_params`.

    Raises
    ------
    MalformedModelError
        Missing tag, truncated content or non-numeric values.
    ModelVersionError
        Tag present but with an unsupported version.
    ModelShapeError
        Row lengths inconsistent with the declared layer widths.
    """
    lines = Path(source).read_text().splitlines()
    if not lines:
        raise MalformedModelError("empty parameter file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != FILE_TAG:
        raise MalformedModelError(f"missing {FILE_TAG} header")
    if head[1] != str(FILE_VERSION):
        raise ModelVersionError(f"unsupported parameter file version {head[1]!r}")
    if len(lines) < 2:
        raise MalformedModelError("missing layer widths line")
    try:
        dims = [int(t) for t in lines[1].split()]
    except ValueError as exc:
        raise MalformedModelError(f"bad layer widths line: {lines[1]!r}") from exc
    if any(d < 1 for d in dims):
        raise ModelShapeError("layer widths must be >= 1")
    expected = sum(d_in + 1 for d_in in dims[:-1])
    body = lines[2:]
    if len(body) < expected:
        raise MalformedModelError(f"truncated file: expected {expected} data lines, found {len(body)}")
    if any(s.strip() for s in body[expected:]):
        raise MalformedModelError("trailing data after last layer")
    ws, bs = [], []
    pos = 0
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        rows = []
        for r, line in enumerate(body[pos : pos + d_in + 1]):
            lineno = pos + r + 3
            try:
                vals = [float(t) for t in line.split()]
            except ValueError as exc:
                raise MalformedModelError(f"non-numeric value on line {lineno}") from exc
            if len(vals) != d_out:
                raise ModelShapeError(f"line {lineno}: expected {d_out} values, found {len(vals)}")
            rows.append(vals)
        pos += d_in + 1
        ws.append(np.array(rows[:-1]))
        bs.append(np.array(rows[-1]))
    params = MlpParams(ws, bs)
    if not all(np.all(np.isfinite(a)) for a in params.arrays()):
        raise MalformedModelError("non-finite parameter values")
    return params
