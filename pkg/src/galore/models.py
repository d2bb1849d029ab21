"""Chained-linear toy networks with reversible activations.

A net is a stack of bias-free weight matrices with an optional leaky-ReLU
between layers (never after the last one) and either a squared-error or a
K-way log-softmax head. Gradients follow the package-wide convention of
returning NEGATIVE loss gradients, batch-averaged.

Besides exact reverse-mode backprop there are two independent oracles: a
closed-form expression for the per-layer gradient of identity-activation
nets under squared error, and central finite differences over every weight
entry.
"""

from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import InvalidInputError, UnsupportedConfigurationError

IDENTITY = "identity"
LEAKY_RELU = "leaky-relu"
L2 = "l2"
LOGSOFTMAX = "logsoftmax"

DEFAULT_LEAK = 0.01
DEFAULT_FD_STEP = 1e-5


@dataclass
class ReversibleNet:
    """Weights ``layers[l]`` of shape (d_l, d_{l-1}), applied left to right."""

    layers: list
    activation: str = IDENTITY
    leak: float = DEFAULT_LEAK
    loss: str = L2

    def __post_init__(self):
        if self.activation not in (IDENTITY, LEAKY_RELU):
            raise InvalidInputError(f"unknown activation {self.activation!r}")
        if self.loss not in (L2, LOGSOFTMAX):
            raise InvalidInputError(f"unknown loss {self.loss!r}")
        if not self.layers:
            raise InvalidInputError("net needs at least one layer")
        self.layers = [linalg.as_matrix(W, f"layers[{i}]")
                       for i, W in enumerate(self.layers)]
        for l in range(1, len(self.layers)):
            if self.layers[l].shape[1] != self.layers[l - 1].shape[0]:
                raise InvalidInputError(
                    f"layer {l} input dim {self.layers[l].shape[1]} != "
                    f"layer {l - 1} output dim {self.layers[l - 1].shape[0]}"
                )

    @property
    def depth(self):
        return len(self.layers)

    @property
    def in_dim(self):
        return self.layers[0].shape[1]

    @property
    def out_dim(self):
        return self.layers[-1].shape[0]

    def end_to_end_matrix(self):
        """Product of the layer maps; equals the network map for identity
        activation."""
        if self.activation != IDENTITY:
            raise UnsupportedConfigurationError(
                "end-to-end matrix only exists for identity activation"
            )
        M = self.layers[0]
        for W in self.layers[1:]:
            M = W @ M
        return M


@dataclass
class GradReport:
    """Per-layer negative gradients plus the batch-mean loss."""

    grads: list
    loss: float


def _act(net, U):
    if net.activation == IDENTITY:
        return U
    return np.where(U >= 0.0, U, net.leak * U)


def _act_deriv(net, U):
    if net.activation == IDENTITY:
        return np.ones_like(U)
    return np.where(U >= 0.0, 1.0, net.leak)


def _as_batch(x, dim, name):
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != dim:
        raise InvalidInputError(f"{name} must have {dim} columns, got {a.shape}")
    if not np.isfinite(a).all():
        raise InvalidInputError(f"{name} contains non-finite entries")
    return a


def _forward_columns(net, X_cols):
    """Forward a (d_in x N) column batch; returns (features, preacts)."""
    fs = [X_cols]
    us = []
    for l, W in enumerate(net.layers):
        U = W @ fs[-1]
        us.append(U)
        fs.append(U if l == net.depth - 1 else _act(net, U))
    return fs, us


def forward(net, x):
    """Single-sample forward pass; returns (output, [f_0 .. f_L])."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != net.in_dim:
        raise InvalidInputError(f"input length {x.size} != in_dim {net.in_dim}")
    fs, _ = _forward_columns(net, x[:, None])
    feats = [f[:, 0].copy() for f in fs]
    return feats[-1], feats


def _softmax(F):
    Z = F - F.max(axis=0, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=0, keepdims=True)


def _loss_and_output_grad(net, F_L, Y_cols):
    """Batch-mean loss and per-sample negative output gradient columns.

    Overflow to inf is allowed through silently; divergence detection is the
    caller's job.
    """
    if net.loss == L2:
        E = Y_cols - F_L
        with np.errstate(over="ignore", invalid="ignore"):
            loss = 0.5 * float(np.sum(E * E)) / F_L.shape[1]
        return loss, E
    sm = _softmax(F_L)
    shifted = F_L - F_L.max(axis=0, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=0)) + F_L.max(axis=0)
    loss = float(np.mean(logsumexp - np.sum(Y_cols * F_L, axis=0)))
    return loss, Y_cols - sm


def loss_value(net, xs, ys):
    """Batch-mean loss at the current weights."""
    X = _as_batch(xs, net.in_dim, "xs")
    Y = _as_batch(ys, net.out_dim, "ys")
    if X.shape[0] != Y.shape[0]:
        raise InvalidInputError("xs and ys disagree on batch size")
    fs, _ = _forward_columns(net, X.T)
    loss, _ = _loss_and_output_grad(net, fs[-1], Y.T)
    return loss


class BackwardSweep:
    """Reverse-mode sweep that hands out one layer's negative gradient at a
    time, from the last layer down.

    Propagation into layer l-1 always uses layer l's forward-time weights,
    captured before (l, G_l) is yielded, so a caller may overwrite layer
    l's weights immediately after receiving its gradient (per-layer updates
    during backprop) without perturbing the rest of the sweep.
    """

    def __init__(self, net, xs, ys):
        X = _as_batch(xs, net.in_dim, "xs")
        Y = _as_batch(ys, net.out_dim, "ys")
        if X.shape[0] != Y.shape[0]:
            raise InvalidInputError("xs and ys disagree on batch size")
        if net.loss == LOGSOFTMAX and np.abs(Y.sum(axis=1) - 1.0).max() > 1e-9:
            raise InvalidInputError("log-softmax labels must sum to 1 per sample")
        self.net = net
        self.batch_size = X.shape[0]
        self._fs, self._us = _forward_columns(net, X.T)
        self.loss, self._g = _loss_and_output_grad(net, self._fs[-1], Y.T)

    def __iter__(self):
        net = self.net
        g = self._g
        for l in range(net.depth - 1, -1, -1):
            W_l = net.layers[l]
            delta = g if l == net.depth - 1 else g * _act_deriv(net, self._us[l])
            G_l = (delta @ self._fs[l].T) / self.batch_size
            if l > 0:
                g = W_l.T @ delta
            yield l, G_l


def backward(net, xs, ys):
    """Exact reverse-mode negative gradients, averaged over the batch."""
    sweep = BackwardSweep(net, xs, ys)
    grads = [None] * net.depth
    for l, G_l in sweep:
        grads[l] = G_l
    return GradReport(grads=grads, loss=sweep.loss)


def closed_form_grad_l2(net, x, y, layer):
    """Closed-form negative gradient of one layer for the chained-linear,
    squared-error, batch-size-1 setting.

    Builds the downstream product J and evaluates
    (J.T y - J.T J W f) f.T directly.
    """
    if net.activation != IDENTITY:
        raise UnsupportedConfigurationError(
            "closed form requires the identity activation"
        )
    if net.loss != L2:
        raise UnsupportedConfigurationError("closed form requires the l2 loss")
    if not 0 <= layer < net.depth:
        raise InvalidInputError(f"layer {layer} out of range")
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    _, feats = forward(net, x)
    f_prev = feats[layer]
    J = np.eye(net.out_dim)
    for W in net.layers[:layer:-1]:
        J = J @ W
    W_l = net.layers[layer]
    core = J.T @ y - J.T @ J @ (W_l @ f_prev)
    return np.outer(core, f_prev)


def softmax_grad_approx(f, y):
    """Exact negative log-softmax gradient and its small-logit approximation.

    The approximation replaces y - softmax(f) by
    Pperp y - gamma * fhat / K, where fhat is the zero-mean part of f and
    gamma = 1 / (1 + fhat.fhat / 2K). Returns (exact, approx, max_abs_diff).
    """
    f = np.asarray(f, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if f.size != y.size:
        raise InvalidInputError("f and y must have the same length")
    K = f.size
    fhat = f - f.mean()
    exact = y - _softmax(f[:, None])[:, 0]
    gamma = 1.0 / (1.0 + float(fhat @ fhat) / (2.0 * K))
    approx = (y - y.sum() / K) - gamma * fhat / K
    return exact, approx, float(np.abs(exact - approx).max())


def finite_diff_grad(net, xs, ys, h=DEFAULT_FD_STEP):
    """Central-difference negative gradients over every weight entry."""
    if h <= 0:
        raise InvalidInputError("h must be positive")
    grads = []
    for l, W in enumerate(net.layers):
        G = np.zeros_like(W)
        for i in range(W.shape[0]):
            for j in range(W.shape[1]):
                orig = W[i, j]
                W[i, j] = orig + h
                up = loss_value(net, xs, ys)
                W[i, j] = orig - h
                down = loss_value(net, xs, ys)
                W[i, j] = orig
                G[i, j] = -(up - down) / (2.0 * h)
        grads.append(G)
    return GradReport(grads=grads, loss=loss_value(net, xs, ys))
