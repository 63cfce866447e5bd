"""Analytic NTK and NNGP kernels of fully-connected networks, plus an RBF baseline.

Kernels are evaluated through the standard layer recursion driven by dual
activations (bivariate Gaussian expectations of the activation and its
derivative).  Spatial gradients with respect to the second argument are
propagated analytically through the recursion, which keeps them exactly inside
span{x, y} -- a property the particle-flow experiments rely on.

Conventions: for a network with ``hidden_layers = L``, weight variance ``sw2``
and bias variance ``sb2``,

    S^1(x, y)     = sw2 * <x, y> + sb2      (independent of the input dimension)
    S^{l+1}(x, y) = sw2 * E[phi(u) phi(v)] + sb2,   (u, v) ~ N(0, S^l)
    Sdot^{l+1}    = sw2 * E[phi'(u) phi'(v)]
    NTK^1         = S^1
    NTK^{l+1}     = S^{l+1} + NTK^l * Sdot^{l+1}

and the NNGP kernel is S^{L+1}.  The RBF baseline is
``exp(-||x - y||^2 / (2 n))`` with ``n`` the data dimension.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ActivationKind",
    "NetworkConfig",
    "KernelSpec",
    "SingularKernelPointError",
    "dual_activation",
    "kernel_eval",
    "gram",
    "kernel_grad2",
    "grad2_coefficients",
]

_ACTIVATIONS = ("relu", "erf", "sigmoid_quadrature", "identity")

# Pairs closer than this in squared sine of the kernel angle are treated as
# exactly aligned; the singular part of the ReLU gradient chain cancels there.
# The threshold must sit above round-off in 1 - u^2 (a few hundred ulps), or
# coincident points produce huge near-cancelling span coefficients whose
# floating-point residue pushes gradients out of the data span.
_ALIGNED_SIN2 = 1e-13


class SingularKernelPointError(ValueError):
    """Gradient requested at a point where the kernel is not differentiable."""


@dataclass(frozen=True)
class ActivationKind:
    """Pointwise nonlinearity used inside the network."""

    variant: str
    quadrature_order: int = 64

    def __post_init__(self):
        if self.variant not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.variant!r}")
        if self.variant == "sigmoid_quadrature" and self.quadrature_order < 32:
            raise ValueError("sigmoid quadrature order must be >= 32")


RELU = ActivationKind("relu")
ERF = ActivationKind("erf")
SIGMOID = ActivationKind("sigmoid_quadrature")
IDENTITY = ActivationKind("identity")


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture of a fully-connected network compiled to a kernel."""

    hidden_layers: int = 3
    activation: ActivationKind = RELU
    weight_variance: float = 1.0
    bias_variance: float = 1.0

    def __post_init__(self):
        if self.hidden_layers < 1:
            raise ValueError("hidden_layers must be >= 1")
        if self.weight_variance <= 0:
            raise ValueError("weight_variance must be > 0")
        if self.bias_variance < 0:
            raise ValueError("bias_variance must be >= 0")

    @property
    def bias_free(self) -> bool:
        return self.bias_variance == 0.0


@dataclass(frozen=True)
class KernelSpec:
    """An analytic kernel: the NTK or NNGP of a network, or the RBF baseline."""

    variant: str
    config: NetworkConfig | None = None

    def __post_init__(self):
        if self.variant not in ("ntk", "nngp", "rbf"):
            raise ValueError(f"unknown kernel variant {self.variant!r}")
        if self.variant in ("ntk", "nngp") and self.config is None:
            raise ValueError(f"{self.variant} kernel needs a NetworkConfig")

    @staticmethod
    def ntk(config: NetworkConfig) -> "KernelSpec":
        return KernelSpec("ntk", config)

    @staticmethod
    def nngp(config: NetworkConfig) -> "KernelSpec":
        return KernelSpec("nngp", config)

    @staticmethod
    def rbf() -> "KernelSpec":
        return KernelSpec("rbf")


# ---------------------------------------------------------------------------
# Dual activations
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=8)
def _gauss_hermite(order: int):
    """Probabilists' Gauss-Hermite rule normalized to integrate against
    N(0, 1), built by Golub-Welsch (stable at high order, unlike the
    polynomial-evaluation route)."""
    from scipy.linalg import eigh_tridiagonal

    off = np.sqrt(np.arange(1, order, dtype=float))
    nodes, vectors = eigh_tridiagonal(np.zeros(order), off)
    weights = vectors[0] ** 2
    return nodes, weights / weights.sum()


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _sigmoid_deriv(x, order):
    s = _sigmoid(x)
    d1 = s * (1.0 - s)
    if order == 0:
        return s
    if order == 1:
        return d1
    if order == 2:
        return d1 * (1.0 - 2.0 * s)
    if order == 3:
        return d1 * (1.0 - 6.0 * s + 6.0 * s * s)
    raise ValueError(order)


def _relu_dual(sxx, sxy, syy):
    c = np.sqrt(sxx * syy)
    with np.errstate(invalid="ignore", divide="ignore"):
        u = np.where(c > 0, sxy / np.where(c > 0, c, 1.0), 0.0)
    u = np.clip(u, -1.0, 1.0)
    theta = np.arccos(u)
    s = np.sin(theta)
    f = c * (s + (np.pi - theta) * u) / (2.0 * np.pi)
    g = (np.pi - theta) / (2.0 * np.pi)
    return f, g


def _erf_dual(sxx, sxy, syy):
    d2 = (1.0 + 2.0 * sxx) * (1.0 + 2.0 * syy)
    r = np.clip(2.0 * sxy / np.sqrt(d2), -1.0, 1.0)
    f = (2.0 / np.pi) * np.arcsin(r)
    g = (4.0 / np.pi) / np.sqrt(np.maximum(d2 - 4.0 * sxy * sxy, 1e-300))
    return f, g


def _sigmoid_diag_gh(s, order, orders=(0, 0)):
    """1D Gauss-Hermite quadrature of E[phi^(i)(u) phi^(j)(u)], u ~ N(0, s)."""
    nodes, weights = _gauss_hermite(order)
    s = np.asarray(s, dtype=float)
    u = np.sqrt(np.maximum(s, 0.0))[..., None] * nodes
    return (_sigmoid_deriv(u, orders[0]) * _sigmoid_deriv(u, orders[1])) @ weights


def _sigmoid_dual_gh(sxx, sxy, syy, order, orders=(0, 0)):
    """Tensor Gauss-Hermite quadrature of E[phi^(i)(u) phi^(j)(v)]."""
    nodes, weights = _gauss_hermite(order)
    sxx, sxy, syy = np.broadcast_arrays(sxx, sxy, syy)
    shape = sxx.shape
    sx = np.sqrt(np.maximum(sxx, 0.0)).ravel()
    sy2 = np.maximum(syy, 0.0).ravel()
    cxy = sxy.ravel()
    with np.errstate(invalid="ignore", divide="ignore"):
        b = np.where(sx > 0, cxy / np.where(sx > 0, sx, 1.0), 0.0)
    w = np.sqrt(np.maximum(sy2 - b * b, 0.0))
    # u = sx * xi1, v = b * xi1 + w * xi2
    u = sx[:, None] * nodes[None, :]
    fu = _sigmoid_deriv(u, orders[0])  # (P, q)
    v = b[:, None, None] * nodes[None, :, None] + w[:, None, None] * nodes[None, None, :]
    fv = _sigmoid_deriv(v, orders[1])  # (P, q, q)
    inner = fv @ weights  # (P, q)
    out = ((fu * inner) @ weights).reshape(shape)
    return out


def dual_activation(activation: ActivationKind, sxx, sxy, syy):
    """E[phi(u) phi(v)] and E[phi'(u) phi'(v)] under a centered bivariate
    Gaussian with covariance [[sxx, sxy], [sxy, syy]].

    Accepts scalars or broadcastable arrays; the correlation is clamped to
    [-1, 1] to absorb roundoff in nearly degenerate covariances.
    """
    sxx = np.asarray(sxx, dtype=float)
    syy = np.asarray(syy, dtype=float)
    sxy = np.asarray(sxy, dtype=float)
    if np.any(sxx < 0) or np.any(syy < 0):
        raise ValueError("negative variance in dual activation")
    if activation.variant == "identity":
        return sxy + 0.0, np.ones_like(sxy)
    if activation.variant == "relu":
        return _relu_dual(sxx, sxy, syy)
    if activation.variant == "erf":
        return _erf_dual(sxx, sxy, syy)
    q = activation.quadrature_order
    f = _sigmoid_dual_gh(sxx, sxy, syy, q, (0, 0))
    g = _sigmoid_dual_gh(sxx, sxy, syy, q, (1, 1))
    return f, g


# ---------------------------------------------------------------------------
# Hermite-series dual for large sigmoid grids
# ---------------------------------------------------------------------------
#
# For (u, v) ~ N(0, [[sx^2, rho sx sy], [rho sx sy, sy^2]]) and any f, g:
#     E[f(u) g(v)] = sum_k a_k(sx) b_k(sy) rho^k,
# with a_k(s) = E[f(s xi) He_k(xi)] / sqrt(k!) the normalized Hermite
# coefficients.  The logistic function is analytic in a strip, so the
# coefficients decay like exp(-c sqrt(k)) and a modest truncation reaches
# near machine precision; the series costs O(K N M) instead of the
# O(q^2 N M) of tensor quadrature on an N x M pair grid.

_MEHLER_Q = 400
_MEHLER_K = 220
_MEHLER_GRID_CUTOFF = 4096


@functools.lru_cache(maxsize=2)
def _mehler_projection(q: int = _MEHLER_Q, kmax: int = _MEHLER_K):
    nodes, weights = _gauss_hermite(q)
    proj = np.empty((kmax, q))
    h_prev = np.zeros(q)
    h = np.ones(q)
    proj[0] = h * weights
    for k in range(1, kmax):
        h, h_prev = (nodes * h - np.sqrt(k - 1.0) * h_prev) / np.sqrt(float(k)), h
        proj[k] = h * weights
    return nodes, proj


def _hermite_coeffs(sigmas, order):
    """Normalized Hermite coefficients of phi^(order)(sigma * xi), per sigma."""
    nodes, proj = _mehler_projection()
    vals = _sigmoid_deriv(sigmas[:, None] * nodes[None, :], order)
    return proj @ vals.T  # (K, S)


class _MehlerDual:
    """Batched sigmoid dual activations on an (N, M) pair grid."""

    def __init__(self, sxx, syy):
        self.sx = np.sqrt(np.maximum(np.asarray(sxx, float).ravel(), 0.0))
        self.sy = np.sqrt(np.maximum(np.asarray(syy, float).ravel(), 0.0))
        self._coeffs = {}

    def _side(self, which, order):
        key = (which, order)
        if key not in self._coeffs:
            sig = self.sx if which == "x" else self.sy
            self._coeffs[key] = _hermite_coeffs(sig, order)
        return self._coeffs[key]

    def correlation(self, sxy):
        denom = self.sx[:, None] * self.sy[None, :]
        with np.errstate(invalid="ignore", divide="ignore"):
            rho = np.where(denom > 0, sxy / np.where(denom > 0, denom, 1.0), 0.0)
        return np.clip(rho, -1.0, 1.0)

    def expect(self, rho, order_x, order_y, tol=1e-13):
        """E[phi^(ox)(u) phi^(oy)(v)] on the pair grid via the Hermite series."""
        ax = self._side("x", order_x)
        by = self._side("y", order_y)
        bound = np.abs(ax).max(axis=1) * np.abs(by).max(axis=1)
        acc = ax[0][:, None] * by[0][None, :]
        rk = None
        for k in range(1, ax.shape[0]):
            if bound[k:].max(initial=0.0) < tol:
                break
            rk = rho if rk is None else rk * rho
            if bound[k] >= tol:
                acc += (ax[k][:, None] * by[k][None, :]) * rk
        return acc


# ---------------------------------------------------------------------------
# Layer recursion
# ---------------------------------------------------------------------------

def _diag_recursion(cfg: NetworkConfig, sdiag):
    """Per-point diagonal (S^l(x,x), NTK^l(x,x)) recursion; returns final pair."""
    sw2, sb2 = cfg.weight_variance, cfg.bias_variance
    s = sdiag
    th = s.copy()
    act = cfg.activation
    for _ in range(cfg.hidden_layers):
        if act.variant == "relu":
            f = 0.5 * s
            g = np.full_like(s, 0.5)
        elif act.variant == "identity":
            f, g = s, np.ones_like(s)
        elif act.variant == "erf":
            f = (2.0 / np.pi) * np.arcsin(np.clip(2.0 * s / (1.0 + 2.0 * s), -1.0, 1.0))
            g = (4.0 / np.pi) / np.sqrt(1.0 + 4.0 * s)
        else:
            f = _sigmoid_diag_gh(s, act.quadrature_order, (0, 0))
            g = _sigmoid_diag_gh(s, act.quadrature_order, (1, 1))
        s = sw2 * f + sb2
        th = s + th * (sw2 * g)
    return s, th


def _pair_recursion(cfg: NetworkConfig, sxx, sxy, syy, want_ntk: bool):
    """Kernel recursion on a pair grid: sxx (N,1), syy (1,M), sxy (N,M)."""
    sw2, sb2 = cfg.weight_variance, cfg.bias_variance
    act = cfg.activation
    th = sxy.copy()
    use_mehler = (
        act.variant == "sigmoid_quadrature" and sxy.size > _MEHLER_GRID_CUTOFF
    )
    for _ in range(cfg.hidden_layers):
        if use_mehler:
            md = _MehlerDual(sxx, syy)
            rho = md.correlation(sxy)
            f = md.expect(rho, 0, 0)
            g = md.expect(rho, 1, 1)
        else:
            f, g = dual_activation(act, sxx, sxy, syy)
        sxy = sw2 * f + sb2
        if want_ntk:
            th = sxy + th * (sw2 * g)
        if act.variant == "relu":
            fxx, fyy = 0.5 * sxx, 0.5 * syy
        elif act.variant == "identity":
            fxx, fyy = sxx, syy
        elif act.variant == "erf":
            fxx = (2.0 / np.pi) * np.arcsin(np.clip(2 * sxx / (1 + 2 * sxx), -1, 1))
            fyy = (2.0 / np.pi) * np.arcsin(np.clip(2 * syy / (1 + 2 * syy), -1, 1))
        else:
            fxx = _sigmoid_diag_gh(sxx, act.quadrature_order, (0, 0))
            fyy = _sigmoid_diag_gh(syy, act.quadrature_order, (0, 0))
        sxx = sw2 * fxx + sb2
        syy = sw2 * fyy + sb2
    return th if want_ntk else sxy


def _check_points(X, Y):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[0] == 0 or Y.shape[0] == 0:
        raise ValueError("empty point list")
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    if not (np.isfinite(X).all() and np.isfinite(Y).all()):
        raise ValueError("non-finite input coordinates")
    return X, Y


def gram(spec: KernelSpec, X, Y) -> np.ndarray:
    """Matrix of kernel values k(X[i], Y[j])."""
    X, Y = _check_points(X, Y)
    n = X.shape[1]
    if spec.variant == "rbf":
        sq = ((X[:, None, :] - Y[None, :, :]) ** 2).sum(axis=2)
        return np.exp(-sq / (2.0 * n))
    cfg = spec.config
    sw2, sb2 = cfg.weight_variance, cfg.bias_variance
    sxx = sw2 * (X * X).sum(axis=1)[:, None] + sb2
    syy = sw2 * (Y * Y).sum(axis=1)[None, :] + sb2
    sxy = sw2 * (X @ Y.T) + sb2
    return _pair_recursion(cfg, sxx, sxy, syy, want_ntk=(spec.variant == "ntk"))


def kernel_eval(spec: KernelSpec, x, y) -> float:
    """Kernel value k(x, y) for a single pair of points."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    return float(gram(spec, x[None, :], y[None, :])[0, 0])


# ---------------------------------------------------------------------------
# Gradients with respect to the second argument
# ---------------------------------------------------------------------------

def _relu_grad_terms(sxx, sxy, syy):
    c = np.sqrt(sxx * syy)
    safe_c = np.where(c > 0, c, 1.0)
    u = np.clip(sxy / safe_c, -1.0, 1.0)
    theta = np.arccos(u)
    sin2 = np.maximum(1.0 - u * u, 0.0)
    aligned = sin2 < _ALIGNED_SIN2
    s = np.sqrt(np.where(aligned, 1.0, sin2))
    f = c * (np.sin(theta) + (np.pi - theta) * u) / (2.0 * np.pi)
    g = (np.pi - theta) / (2.0 * np.pi)
    fxy = g
    fyy = c * np.sin(theta) / (4.0 * np.pi * syy)
    # dG = [d sxy - (u c / (2 syy)) d syy] / (2 pi c s); the bracket cancels
    # exactly for aligned pairs, where the quotient's limit along y == x is 0.
    inv = np.where(aligned, 0.0, 1.0 / (2.0 * np.pi * safe_c * s))
    gyy_factor = u * c / (2.0 * syy)
    return f, g, fxy, fyy, inv, gyy_factor


def _erf_grad_terms(sxx, sxy, syy):
    f, g = _erf_dual(sxx, sxy, syy)
    d2 = (1.0 + 2.0 * sxx) * (1.0 + 2.0 * syy)
    dd = np.maximum(d2 - 4.0 * sxy * sxy, 1e-300)
    fxy = g
    fyy = -(4.0 / np.pi) * sxy * (1.0 + 2.0 * sxx) / (d2 * np.sqrt(dd))
    gxy = (16.0 / np.pi) * sxy / dd ** 1.5
    gyy = -(4.0 / np.pi) * (1.0 + 2.0 * sxx) / dd ** 1.5
    return f, g, fxy, fyy, gxy, gyy


def _diag_derivative(cfg: NetworkConfig, s, act):
    """(F_diag(s), dF_diag/ds) for the self-covariance recursion."""
    if act.variant == "relu":
        return 0.5 * s, np.full_like(s, 0.5)
    if act.variant == "identity":
        return s, np.ones_like(s)
    if act.variant == "erf":
        f = (2.0 / np.pi) * np.arcsin(np.clip(2.0 * s / (1.0 + 2.0 * s), -1.0, 1.0))
        fp = (4.0 / np.pi) / ((1.0 + 2.0 * s) * np.sqrt(1.0 + 4.0 * s))
        return f, fp
    q = cfg.activation.quadrature_order
    f = _sigmoid_diag_gh(s, q, (0, 0))
    # dF/ds along the diagonal: G + E[phi phi''] at coincident arguments.
    g = _sigmoid_diag_gh(s, q, (1, 1))
    f02 = _sigmoid_diag_gh(s, q, (0, 2))
    return f, g + f02


def grad2_coefficients(spec: KernelSpec, X, Y):
    """Coefficients (A, B) with grad_y k(X[i], Y[j]) = A[i,j] X[i] + B[i,j] Y[j].

    The pair-coefficient form is exact for dot-product kernels and for the
    RBF baseline, and keeps discriminator gradients confined to the span of
    the data.
    """
    X, Y = _check_points(X, Y)
    n = X.shape[1]
    if spec.variant == "rbf":
        k = gram(spec, X, Y)
        return k / n, -k / n
    cfg = spec.config
    act = cfg.activation
    if cfg.bias_free and act.variant == "relu":
        if np.any((Y * Y).sum(axis=1) == 0.0) or np.any((X * X).sum(axis=1) == 0.0):
            raise SingularKernelPointError(
                "bias-free relu kernel is not differentiable at the origin"
            )
    sw2, sb2 = cfg.weight_variance, cfg.bias_variance
    sxx = sw2 * (X * X).sum(axis=1)[:, None] + sb2
    syy = sw2 * (Y * Y).sum(axis=1)[None, :] + sb2
    sxy = sw2 * (X @ Y.T) + sb2
    th = sxy.copy()
    # d(.)/dy is tracked as p * x + q * y per pair.
    pxy = np.full_like(sxy, sw2)
    qxy = np.zeros_like(sxy)
    qyy = np.full((1, Y.shape[0]), 2.0 * sw2)
    pth, qth = pxy.copy(), qxy.copy()
    want_ntk = spec.variant == "ntk"
    use_mehler = (
        act.variant == "sigmoid_quadrature" and sxy.size > _MEHLER_GRID_CUTOFF
    )
    for _ in range(cfg.hidden_layers):
        if act.variant == "relu":
            f, g, fxy, fyy, inv, gyy_factor = _relu_grad_terms(sxx, sxy, syy)
            p_g = pxy * inv
            q_g = (qxy - gyy_factor * qyy) * inv
        elif act.variant == "identity":
            f, g = sxy, np.ones_like(sxy)
            fxy, fyy = np.ones_like(sxy), 0.0
            p_g = q_g = np.zeros_like(sxy)
        elif act.variant == "erf":
            f, g, fxy, fyy, gxy, gyy = _erf_grad_terms(sxx, sxy, syy)
            p_g = gxy * pxy
            q_g = gxy * qxy + gyy * qyy
        elif use_mehler:
            md = _MehlerDual(sxx, syy)
            rho = md.correlation(sxy)
            f = md.expect(rho, 0, 0)
            g = md.expect(rho, 1, 1)
            fxy = g
            fyy = 0.5 * md.expect(rho, 0, 2)
            gxy = md.expect(rho, 2, 2)
            gyy = 0.5 * md.expect(rho, 1, 3)
            p_g = gxy * pxy
            q_g = gxy * qxy + gyy * qyy
        else:
            q = act.quadrature_order
            f = _sigmoid_dual_gh(sxx, sxy, syy, q, (0, 0))
            g = _sigmoid_dual_gh(sxx, sxy, syy, q, (1, 1))
            fxy = g
            fyy = 0.5 * _sigmoid_dual_gh(sxx, sxy, syy, q, (0, 2))
            gxy = _sigmoid_dual_gh(sxx, sxy, syy, q, (2, 2))
            gyy = 0.5 * _sigmoid_dual_gh(sxx, sxy, syy, q, (1, 3))
            p_g = gxy * pxy
            q_g = gxy * qxy + gyy * qyy
        p_f = fxy * pxy
        q_f = fxy * qxy + fyy * qyy
        new_sxy = sw2 * f + sb2
        pxy_new = sw2 * p_f
        qxy_new = sw2 * q_f
        if want_ntk:
            pth, qth = (
                pxy_new + pth * (sw2 * g) + th * (sw2 * p_g),
                qxy_new + qth * (sw2 * g) + th * (sw2 * q_g),
            )
            th = new_sxy + th * (sw2 * g)
        sxy, pxy, qxy = new_sxy, pxy_new, qxy_new
        fxx_d, _ = _diag_derivative(cfg, sxx, act)
        fyy_d, fyy_dp = _diag_derivative(cfg, syy, act)
        qyy = sw2 * fyy_dp * qyy
        sxx = sw2 * fxx_d + sb2
        syy = sw2 * fyy_d + sb2
    if want_ntk:
        return pth, qth
    return pxy, qxy


def kernel_grad2(spec: KernelSpec, x, y) -> np.ndarray:
    """Gradient of k(x, .) with respect to its second argument, at y."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    a, b = grad2_coefficients(spec, x[None, :], y[None, :])
    return a[0, 0] * x + b[0, 0] * y


def nngp_diag(config: NetworkConfig, X) -> np.ndarray:
    """NNGP variance of the network output at each row of X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    s0 = config.weight_variance * (X * X).sum(axis=1) + config.bias_variance
    s, _ = _diag_recursion(config, s0)
    return s


def ntk_diag(config: NetworkConfig, X) -> np.ndarray:
    """NTK diagonal k(x, x) at each row of X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    s0 = config.weight_variance * (X * X).sum(axis=1) + config.bias_variance
    _, th = _diag_recursion(config, s0)
    return th
