"""Finite-width MLP discriminators under NTK parameterization.

Manual forward/backward passes (no autodiff dependency), antisymmetric
initialization making the initial function exactly zero, full-batch gradient
ascent on the discriminator loss, input gradients for particle flows, and the
empirical NTK as an oracle for the analytic kernels.

Forward pass: the input layer is unnormalized, z = sqrt(weight_variance) W x
+ bias_std b, so its covariance is weight_variance * x^T y + bias_variance
independently of the input dimension; deeper layers use the width-normalized
form z = sqrt(weight_variance / fan_in) W a + bias_std b.  W, b entries are
i.i.d. standard normal, hidden layers are followed by the activation, and the
final layer is linear."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .dynamics import LossSpec
from .kernels import NetworkConfig
from .measures import PairedData

__all__ = [
    "MLPParams",
    "AntisymmetricPair",
    "init_mlp",
    "forward",
    "input_gradient",
    "param_gradient",
    "train_discriminator",
    "empirical_ntk",
    "empirical_ntk_gram",
]


def _act(config: NetworkConfig, z):
    v = config.activation.variant
    if v == "relu":
        return np.maximum(z, 0.0)
    if v == "erf":
        return erf(z)
    if v == "sigmoid_quadrature":
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    return z


def _act_deriv(config: NetworkConfig, z):
    v = config.activation.variant
    if v == "relu":
        # relu'(0) taken as 0 by convention.
        return (z > 0.0).astype(z.dtype)
    if v == "erf":
        return (2.0 / np.sqrt(np.pi)) * np.exp(-z * z)
    if v == "sigmoid_quadrature":
        s = 0.5 * (1.0 + np.tanh(0.5 * z))
        return s * (1.0 - s)
    return np.ones_like(z)


@dataclass
class MLPParams:
    """Explicit parameters of a scalar-output MLP."""

    config: NetworkConfig
    width: int
    weights: list  # per layer, shape (fan_out, fan_in)
    biases: list  # per layer, shape (fan_out,)

    def copy(self) -> "MLPParams":
        return MLPParams(
            self.config,
            self.width,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )


@dataclass
class AntisymmetricPair:
    """Two networks combined as (f_plus - f_minus)/sqrt(2); the minus half
    starts as an exact copy so the initial function is identically zero."""

    plus: MLPParams
    minus: MLPParams

    @property
    def config(self) -> NetworkConfig:
        return self.plus.config

    def copy(self) -> "AntisymmetricPair":
        return AntisymmetricPair(self.plus.copy(), self.minus.copy())


def init_mlp(
    config: NetworkConfig,
    width: int,
    seed: int,
    antisymmetric: bool = False,
    input_dim: int | None = None,
    dtype=np.float64,
):
    """Draw i.i.d. standard-normal parameters; deterministic per seed.

    input_dim fixes the first layer's fan-in (needed before seeing data)."""
    if width < 1:
        raise ValueError("width must be >= 1")
    if input_dim is None:
        raise ValueError("input_dim is required")
    rng = np.random.Generator(np.random.PCG64(seed))
    dims = [input_dim] + [width] * config.hidden_layers + [1]
    weights = []
    biases = []
    dtype = np.dtype(dtype)
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        # float32 draws use the typed generator path (halves init cost at
        # large widths and stays deterministic per seed for a fixed dtype)
        weights.append(rng.standard_normal((fan_out, fan_in), dtype=dtype))
        biases.append(rng.standard_normal(fan_out, dtype=dtype))
    params = MLPParams(config, width, weights, biases)
    if antisymmetric:
        return AntisymmetricPair(params, params.copy())
    return params


def _weight_scale(cfg: NetworkConfig, layer: int, fan_in: int) -> float:
    """Multiplier on W for the given layer: the input layer carries no
    fan-in normalization (its covariance must not depend on the data
    dimension); deeper layers are width-normalized."""
    sw = np.sqrt(cfg.weight_variance)
    return sw if layer == 0 else sw / np.sqrt(fan_in)


def _forward_pass(params: MLPParams, X):
    """Returns (output, post-activations per layer, pre-activation derivative
    masks per hidden layer); X is (N, n)."""
    cfg = params.config
    bias_std = np.sqrt(cfg.bias_variance)
    a = X
    acts = [a]
    derivs = []
    n_layers = len(params.weights)
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        scale = _weight_scale(cfg, l, w.shape[1])
        z = scale * (a @ w.T) + bias_std * b[None, :]
        if l < n_layers - 1:
            derivs.append(_act_deriv(cfg, z))
            a = _act(cfg, z)
            acts.append(a)
        else:
            a = z
    return a[:, 0], acts, derivs


def _forward_any(params, X):
    if isinstance(params, AntisymmetricPair):
        fp, _, _ = _forward_pass(params.plus, X)
        fm, _, _ = _forward_pass(params.minus, X)
        return (fp - fm) / np.sqrt(2.0)
    f, _, _ = _forward_pass(params, X)
    return f


def forward(params, x):
    """Network output; accepts a single point (returns a float) or a batch."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return float(_forward_any(params, x[None, :])[0])
    return _forward_any(params, x)


def _backward_deltas(params: MLPParams, acts, derivs):
    """Pre-activation sensitivities d f / d z_l for every layer, batched."""
    cfg = params.config
    sw = np.sqrt(cfg.weight_variance)
    n = acts[0].shape[0]
    n_layers = len(params.weights)
    deltas = [None] * n_layers
    deltas[-1] = np.ones((n, 1), dtype=acts[0].dtype)
    for l in range(n_layers - 2, -1, -1):
        w_next = params.weights[l + 1]
        scale = sw / np.sqrt(w_next.shape[1])
        deltas[l] = (deltas[l + 1] @ (scale * w_next)) * derivs[l]
    return deltas


def _input_gradient_single(params: MLPParams, X):
    cfg = params.config
    _, acts, derivs = _forward_pass(params, X)
    deltas = _backward_deltas(params, acts, derivs)
    w0 = params.weights[0]
    scale = _weight_scale(cfg, 0, w0.shape[1])
    return deltas[0] @ (scale * w0)


def input_gradient(params, x):
    """Gradient of the network output with respect to its input."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if isinstance(params, AntisymmetricPair):
        g = (
            _input_gradient_single(params.plus, X)
            - _input_gradient_single(params.minus, X)
        ) / np.sqrt(2.0)
    else:
        g = _input_gradient_single(params, X)
    return g[0] if single else g


def _param_gradient_single(params: MLPParams, X, density):
    """Gradient of sum_i density_i f(X_i) with respect to the parameters."""
    cfg = params.config
    bias_std = np.sqrt(cfg.bias_variance)
    _, acts, derivs = _forward_pass(params, X)
    deltas = _backward_deltas(params, acts, derivs)
    gw = []
    gb = []
    for l, w in enumerate(params.weights):
        scale = _weight_scale(cfg, l, w.shape[1])
        d = deltas[l] * density[:, None]
        gw.append(scale * (d.T @ acts[l]))
        gb.append(bias_std * d.sum(axis=0))
    return gw, gb


def param_gradient(params, loss: LossSpec, data: PairedData):
    """Full-batch gradient of the discriminator loss with respect to the
    parameters; mirrors the structure of `params`."""
    X = data.mixture.points
    f = _forward_any(params, X)
    density = data.mixture.weights * loss.gradient_density(f, data.rho1, data.rho2)
    if isinstance(params, AntisymmetricPair):
        gwp, gbp = _param_gradient_single(params.plus, X, density / np.sqrt(2.0))
        gwm, gbm = _param_gradient_single(params.minus, X, -density / np.sqrt(2.0))
        return (gwp, gbp), (gwm, gbm)
    return _param_gradient_single(params, X, density)


def train_discriminator(params, data: PairedData, loss: LossSpec, lr: float, steps: int):
    """Full-batch gradient ascent; returns updated parameters (input copied)."""
    if steps < 0:
        raise ValueError("steps must be >= 0")
    params = params.copy()
    for step in range(steps):
        g = param_gradient(params, loss, data)
        if isinstance(params, AntisymmetricPair):
            (gwp, gbp), (gwm, gbm) = g
            for w, gw in zip(params.plus.weights, gwp):
                w += lr * gw
            for b, gb in zip(params.plus.biases, gbp):
                b += lr * gb
            for w, gw in zip(params.minus.weights, gwm):
                w += lr * gw
            for b, gb in zip(params.minus.biases, gbm):
                b += lr * gb
            probe = _forward_any(params, data.mixture.points[:1])
        else:
            gw, gb = g
            for w, gwl in zip(params.weights, gw):
                w += lr * gwl
            for b, gbl in zip(params.biases, gb):
                b += lr * gbl
            probe = _forward_any(params, data.mixture.points[:1])
        if not np.isfinite(probe).all():
            raise ArithmeticError(f"discriminator training diverged at step {step + 1}")
    return params


def _ntk_gram_single(params: MLPParams, X, Y):
    cfg = params.config
    _, acts_x, derivs_x = _forward_pass(params, X)
    _, acts_y, derivs_y = _forward_pass(params, Y)
    deltas_x = _backward_deltas(params, acts_x, derivs_x)
    deltas_y = _backward_deltas(params, acts_y, derivs_y)
    out = np.zeros((X.shape[0], Y.shape[0]))
    for l, w in enumerate(params.weights):
        dd = deltas_x[l] @ deltas_y[l].T
        aa = acts_x[l] @ acts_y[l].T
        out += dd * (_weight_scale(cfg, l, w.shape[1]) ** 2 * aa + cfg.bias_variance)
    return out


def empirical_ntk_gram(params, X, Y) -> np.ndarray:
    """Empirical NTK Gram matrix: Jacobian inner products over all parameters,
    assembled layer by layer from activations and sensitivities."""
    X = np.atleast_2d(np.asarray(X))
    Y = np.atleast_2d(np.asarray(Y))
    if isinstance(params, AntisymmetricPair):
        return 0.5 * (
            _ntk_gram_single(params.plus, X, Y)
            + _ntk_gram_single(params.minus, X, Y)
        )
    return _ntk_gram_single(params, X, Y)


def empirical_ntk(params, x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(empirical_ntk_gram(params, x[None, :], y[None, :])[0, 0])
