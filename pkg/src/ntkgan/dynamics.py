"""Infinite-width discriminator dynamics on the support of the data mixture.

A trained discriminator f_t is represented as a SupportFunction: its values on
supp(mixture) plus kernel-expansion coefficients h with

    f_t(z) = sum_i w_i k(z, x_i) h_i,

which allows exact evaluation and spatial gradients anywhere.  Closed forms
are provided for the IPM witness, the LSGAN exponential solution and a
Lambert-W approximation for the vanilla GAN; a fixed-step RK4 integrator of
the training ODE covers arbitrary losses and serves as the ground truth."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import KernelSpec, gram, grad2_coefficients
from .measures import EmpiricalMeasure, PairedData

__all__ = [
    "LossSpec",
    "SupportFunction",
    "expansion_gradient",
    "integral_operator_apply",
    "ipm_witness",
    "mmd_squared",
    "spectral_apply",
    "lsgan_solution",
    "vanilla_gan_approx",
    "lambert_w_exp",
    "ode_solve_discriminator",
    "discriminator_value",
    "discriminator_grad",
]


def _logistic(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass(frozen=True)
class LossSpec:
    """Discriminator/generator loss functions.

    The discriminator ascends L(f) = E_fake[a(f)] - E_real[b(f)]; particles
    descend the generator cost c(f).  The training-ODE gradient density on
    the mixture support is rho1 * a'(f) - rho2 * b'(f).
    """

    variant: str

    def __post_init__(self):
        if self.variant not in ("ipm", "lsgan", "vanilla"):
            raise ValueError(f"unknown loss {self.variant!r}")

    def a(self, f):
        if self.variant == "ipm":
            return f
        if self.variant == "lsgan":
            return -((f + 1.0) ** 2)
        return np.log(np.maximum(1.0 - _logistic(f), 1e-300))

    def a_prime(self, f):
        if self.variant == "ipm":
            return np.ones_like(f)
        if self.variant == "lsgan":
            return -2.0 * (f + 1.0)
        return -_logistic(f)

    def b(self, f):
        if self.variant == "ipm":
            return f
        if self.variant == "lsgan":
            return (f - 1.0) ** 2
        return -np.log(np.maximum(_logistic(f), 1e-300))

    def b_prime(self, f):
        if self.variant == "ipm":
            return np.ones_like(f)
        if self.variant == "lsgan":
            return 2.0 * (f - 1.0)
        return _logistic(f) - 1.0

    def c(self, f):
        if self.variant == "ipm":
            return f
        if self.variant == "lsgan":
            return f * f
        return -np.log(np.maximum(_logistic(f), 1e-300))

    def c_prime(self, f):
        if self.variant == "ipm":
            return np.ones_like(np.asarray(f, dtype=float))
        if self.variant == "lsgan":
            return 2.0 * f
        return _logistic(f) - 1.0

    def gradient_density(self, f, rho1, rho2):
        return rho1 * self.a_prime(f) - rho2 * self.b_prime(f)

    def discriminator_loss(self, f_support, data: PairedData):
        w = data.mixture.weights
        return float(
            (w * data.rho1 * self.a(f_support)).sum()
            - (w * data.rho2 * self.b(f_support)).sum()
        )


IPM = LossSpec("ipm")
LSGAN = LossSpec("lsgan")
VANILLA = LossSpec("vanilla")


@dataclass(frozen=True)
class SupportFunction:
    """Discriminator anchored on the mixture support (initial function 0)."""

    support: EmpiricalMeasure
    values: np.ndarray
    coefficients: np.ndarray
    kernel: KernelSpec
    approximate: bool = False

    def __post_init__(self):
        n = self.support.size
        if self.values.shape != (n,) or self.coefficients.shape != (n,):
            raise ValueError("values/coefficients must match the support size")

    def __call__(self, Z) -> np.ndarray:
        """Evaluate f at each row of Z through the kernel expansion."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        k = gram(self.kernel, Z, self.support.points)
        return k @ (self.support.weights * self.coefficients)

    def gradient(self, Z) -> np.ndarray:
        """Spatial gradient of f at each row of Z."""
        return expansion_gradient(self.kernel, self.support, self.coefficients, Z)


def expansion_gradient(kernel: KernelSpec, support: EmpiricalMeasure, coefficients, Z):
    """Gradient of z -> sum_i w_i k(x_i, z) h_i at each row of Z, assembled
    from the span coefficients of the batched kernel gradient."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    a, b = grad2_coefficients(kernel, support.points, Z)
    wh = support.weights * np.asarray(coefficients, dtype=float)
    out = (a * wh[:, None]).T @ support.points
    out += ((b * wh[:, None]).sum(axis=0))[:, None] * Z
    return out


def integral_operator_apply(
    kernel: KernelSpec, mixture: EmpiricalMeasure, h
) -> SupportFunction:
    """Apply the kernel integral operator of the mixture to values h."""
    h = np.asarray(h, dtype=float)
    if h.shape != (mixture.size,):
        raise ValueError("h must have one value per support point")
    k = gram(kernel, mixture.points, mixture.points)
    values = k @ (mixture.weights * h)
    return SupportFunction(mixture, values, h.copy(), kernel)


def ipm_witness(
    kernel: KernelSpec, data: PairedData, t: float, scale_by_t: bool = True
) -> SupportFunction:
    """IPM discriminator at training time t: the unnormalized MMD witness
    scaled by t (or unscaled when scale_by_t is off)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    scale = t if scale_by_t else 1.0
    h = scale * (-2.0 * data.rho)
    return integral_operator_apply(kernel, data.mixture, h)


def mmd_squared(kernel: KernelSpec, fake: EmpiricalMeasure, real: EmpiricalMeasure) -> float:
    """Squared maximum mean discrepancy (biased V-statistic)."""
    kaa = fake.weights @ gram(kernel, fake.points, fake.points) @ fake.weights
    kbb = real.weights @ gram(kernel, real.points, real.points) @ real.weights
    kab = fake.weights @ gram(kernel, fake.points, real.points) @ real.weights
    val = float(kaa - 2.0 * kab + kbb)
    if val < -1e-10:
        raise ArithmeticError(f"MMD^2 evaluated to {val}, below roundoff tolerance")
    return max(val, 0.0)


def spectral_apply(kernel_gram, weights, phi, v) -> np.ndarray:
    """phi(T) v for the weighted kernel integral operator T, restricted to
    the support.

    Uses the symmetrization S = diag(sqrt(w)) K diag(sqrt(w)), which shares
    T's eigenvalues; eigenvalues below 1e-12 times the largest are flattened
    to 0 before applying phi (phi must be defined at 0)."""
    k = np.asarray(kernel_gram, dtype=float)
    w = np.asarray(weights, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ValueError("gram matrix must be square")
    if not np.allclose(k, k.T, rtol=1e-10, atol=1e-10 * max(1.0, abs(k).max())):
        raise ValueError("gram matrix must be symmetric")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    v = np.asarray(v, dtype=float)
    sqw = np.sqrt(w)
    s = (k * sqw[None, :]) * sqw[:, None]
    lam, u = np.linalg.eigh(s)
    floor = 1e-12 * max(lam.max(), 0.0)
    lam = np.where(lam < floor, 0.0, lam)
    phl = np.asarray(phi(lam), dtype=float)
    return (u @ (phl * (u.T @ (sqw * v)))) / sqw


def lsgan_solution(kernel: KernelSpec, data: PairedData, t: float) -> SupportFunction:
    """Closed-form LSGAN discriminator: f_t = exp(-4 t T)(-rho) + rho.

    Off-support coefficients use g(lambda) = (exp(-4 t lambda) - 1)/lambda
    (limit -4t at 0), so the kernel expansion agrees with the support values."""
    if t < 0:
        raise ValueError("t must be >= 0")
    k = gram(kernel, data.mixture.points, data.mixture.points)
    w = data.mixture.weights
    rho = data.rho

    def phi(lam):
        return np.exp(-4.0 * t * lam)

    def g(lam):
        out = np.full_like(lam, -4.0 * t)
        nz = lam != 0.0
        out[nz] = np.expm1(-4.0 * t * lam[nz]) / lam[nz]
        return out

    values = spectral_apply(k, w, phi, -rho) + rho
    coeffs = spectral_apply(k, w, g, -rho)
    return SupportFunction(data.mixture, values, coeffs, kernel)


def lambert_w_exp(z: float) -> float:
    """W(exp(z)) for the principal Lambert branch, overflow-free.

    Solves w + log w = z by Halley iteration; total on finite reals."""
    z = float(z)
    if not math.isfinite(z):
        raise ValueError("z must be finite")
    if z < -2.0:
        w = math.exp(z)  # w ~ e^z (1 - e^z + ...)
        w = w * (1.0 - w)
        if w <= 0.0:
            w = math.exp(z)
        if w == 0.0:
            return math.exp(z)
    elif z < 2.0:
        w = 0.567 + 0.48 * (z - 0.0) / (1.0 + 0.4 * abs(z))
        w = max(w, 1e-12)
    else:
        w = z - math.log(z)
    for _ in range(100):
        lw = math.log(w)
        g0 = w + lw - z
        g1 = 1.0 + 1.0 / w
        g2 = -1.0 / (w * w)
        step = g0 / (g1 - 0.5 * g0 * g2 / g1)
        wn = w - step
        if wn <= 0.0:
            wn = w / 2.0
        if abs(wn - w) <= 1e-15 * max(1.0, abs(wn)):
            w = wn
            break
        w = wn
    return w


def vanilla_gan_approx(kernel: KernelSpec, data: PairedData, t: float) -> SupportFunction:
    """Approximate vanilla-GAN discriminator f_t = -phi_t(T) rho with
    phi_t(x) = W(exp(2 t x + 1)) - 2 t x - 1.

    Exact only in the scalar (single eigenvalue) case; flagged approximate.
    Requires disjoint fake/real supports."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if np.any((data.rho2 != 0.0) & (data.rho2 != 2.0)):
        raise ValueError("vanilla approximation requires disjoint supports")
    k = gram(kernel, data.mixture.points, data.mixture.points)
    w = data.mixture.weights
    rho = data.rho

    def phi_t(lam):
        return np.array([lambert_w_exp(2.0 * t * x + 1.0) - 2.0 * t * x - 1.0 for x in lam])

    def g(lam):
        out = np.full_like(lam, t)  # -phi_t'(0) = t
        nz = lam != 0.0
        out[nz] = -phi_t(lam[nz]) / lam[nz]
        return out

    values = spectral_apply(k, w, lambda lam: -phi_t(lam), rho)
    coeffs = spectral_apply(k, w, g, rho)
    return SupportFunction(data.mixture, values, coeffs, kernel, approximate=True)


def ode_solve_discriminator(
    kernel: KernelSpec,
    data: PairedData,
    loss: LossSpec,
    t_final: float,
    steps: int,
) -> SupportFunction:
    """Classical RK4 integration of the support-restricted training ODE

        df/dt = (K diag(w)) (rho1 a'(f) - rho2 b'(f)),

    accumulating the time integral of the gradient density with the same
    quadrature so that the kernel-expansion coefficients stay consistent."""
    if t_final < 0:
        raise ValueError("t_final must be >= 0")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    k = gram(kernel, data.mixture.points, data.mixture.points)
    kw = k * data.mixture.weights[None, :]
    rho1, rho2 = data.rho1, data.rho2
    f = np.zeros(data.mixture.size)
    h = np.zeros_like(f)
    dt = t_final / steps

    def density(fv):
        return loss.gradient_density(fv, rho1, rho2)

    for step in range(steps):
        d1 = density(f)
        d2 = density(f + 0.5 * dt * (kw @ d1))
        d3 = density(f + 0.5 * dt * (kw @ d2))
        d4 = density(f + dt * (kw @ d3))
        incr = (dt / 6.0) * (d1 + 2.0 * d2 + 2.0 * d3 + d4)
        f = f + kw @ incr
        h = h + incr
        if not np.isfinite(f).all():
            raise ArithmeticError(
                f"discriminator ODE diverged at step {step + 1}/{steps} "
                f"(t = {(step + 1) * dt:g}); max |f| = {np.abs(f).max():g}"
            )
    return SupportFunction(data.mixture, f, h, kernel)


def discriminator_value(f: SupportFunction, z) -> float:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    return float(f(z[None, :])[0])


def discriminator_grad(f: SupportFunction, z, loss: LossSpec) -> np.ndarray:
    """Gradient of the generator cost c(f(.)) at z."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    fz = discriminator_value(f, z)
    return float(loss.c_prime(fz)) * f.gradient(z[None, :])[0]
