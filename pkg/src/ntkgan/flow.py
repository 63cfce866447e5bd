"""Particle gradient flows driven by trained discriminators.

The generated point cloud descends the vector field -grad c(f*(x)), where f*
is the discriminator obtained at each step from the current fake/real mixture:
a closed form at training time tau in the infinite-width regime, or a
finite-width network trained by gradient ascent (optionally reinitialized at
every step).  Updates are simultaneous: all gradients are computed before any
particle moves."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import (
    LossSpec,
    SupportFunction,
    expansion_gradient,
    ipm_witness,
    lsgan_solution,
    ode_solve_discriminator,
    vanilla_gan_approx,
)
from .finite import AntisymmetricPair, forward, init_mlp, input_gradient, train_discriminator
from .kernels import KernelSpec, NetworkConfig, SingularKernelPointError
from .measures import EmpiricalMeasure, PairedData, make_mixture

__all__ = [
    "FlowConfig",
    "FlowState",
    "FieldResult",
    "flow_step",
    "run_flow",
    "gradient_field_2d",
    "sigmoid_eta",
]

logger = logging.getLogger(__name__)

_REGIMES = ("infinite", "finite", "finite_reset")

# Sigmoid networks produce witness gradients roughly three orders of
# magnitude smaller than relu ones; the step scale is compensated once.
SIGMOID_ETA_FACTOR = 1000.0


@dataclass(frozen=True)
class FlowConfig:
    loss: LossSpec
    regime: str = "infinite"
    eta: float = 1.0
    steps: int = 1
    tau: float = 1.0
    inner_lr: float = 0.01
    inner_steps: int = 1
    snapshot_every: int = 0
    seed: int = 0
    width: int = 128
    eta_sigmoid_scaled: bool = False  # True once sigmoid_eta has been applied

    def __post_init__(self):
        if self.regime not in _REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.eta <= 0:
            raise ValueError("eta must be > 0")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.regime == "infinite" and self.tau <= 0:
            raise ValueError("tau must be > 0 in the infinite regime")


def sigmoid_eta(config: FlowConfig) -> FlowConfig:
    """Scale eta by 1000 for sigmoid activations; guarded so the multiplier
    cannot be applied twice."""
    if config.eta_sigmoid_scaled:
        raise ValueError("sigmoid eta factor already applied")
    return replace(
        config, eta=config.eta * SIGMOID_ETA_FACTOR, eta_sigmoid_scaled=True
    )


@dataclass
class FlowState:
    particles: EmpiricalMeasure
    step: int = 0
    history: list = field(default_factory=list)  # (step, sinkhorn value)
    snapshots: list = field(default_factory=list)  # (step, particle array copy)
    net: object = None  # finite-regime discriminator parameters


def _infinite_discriminator(
    kernel: KernelSpec, data: PairedData, config: FlowConfig
) -> SupportFunction:
    loss = config.loss
    if loss.variant == "ipm":
        return ipm_witness(kernel, data, config.tau)
    if loss.variant == "lsgan":
        return lsgan_solution(kernel, data, config.tau)
    if config.tau <= 5.0:
        return vanilla_gan_approx(kernel, data, config.tau)
    # The Lambert-W closed form degrades for long training times; fall back
    # to direct integration of the training ODE.
    return ode_solve_discriminator(kernel, data, loss, config.tau, steps=200)


def _finite_net(config: FlowConfig, net_cfg: NetworkConfig, dim: int, step: int):
    # Per-step reinitialization uses a distinct stream derived from the seed.
    seed = int(np.random.SeedSequence([config.seed, step]).generate_state(1)[0])
    return init_mlp(net_cfg, config.width, seed, antisymmetric=True, input_dim=dim)


def flow_step(
    state: FlowState,
    target: EmpiricalMeasure,
    kernel_or_net,
    config: FlowConfig,
) -> FlowState:
    """One generator step: rebuild the mixture, obtain the discriminator for
    the current particles, move every particle along -eta * grad c(f*)."""
    particles = state.particles
    if particles.dim != target.dim:
        raise ValueError("particle/target dimension mismatch")
    data = make_mixture(particles, target)
    loss = config.loss
    net = state.net
    if config.regime == "infinite":
        if loss.variant == "ipm":
            # The generator cost is linear in f (c' == 1), so the witness
            # values are never needed: evaluate only the gradient of the
            # kernel expansion with coefficients -2*tau*rho.
            grads = expansion_gradient(
                kernel_or_net, data.mixture, -2.0 * config.tau * data.rho,
                particles.points,
            )
        else:
            f = _infinite_discriminator(kernel_or_net, data, config)
            fvals = f(particles.points)
            grads = f.gradient(particles.points)
            grads *= loss.c_prime(fvals)[:, None]
    else:
        if config.regime == "finite_reset":
            net_cfg = (
                kernel_or_net
                if isinstance(kernel_or_net, NetworkConfig)
                else kernel_or_net.config
            )
            net = _finite_net(config, net_cfg, particles.dim, state.step)
        elif net is None:  # first step of the carrying regime
            if isinstance(kernel_or_net, NetworkConfig):
                net = _finite_net(config, kernel_or_net, particles.dim, 0)
            else:
                net = kernel_or_net
        net = train_discriminator(net, data, loss, config.inner_lr, config.inner_steps)
        fvals = forward(net, particles.points)
        grads = input_gradient(net, particles.points)
        grads *= loss.c_prime(fvals)[:, None]
    # Particles are the generator's parameters: descending the total cost
    # integral c(f) d(alpha) gives each particle its measure weight as a factor.
    new_points = particles.points - config.eta * particles.weights[:, None] * grads
    if not np.isfinite(new_points).all():
        raise ArithmeticError(f"non-finite particle positions at step {state.step + 1}")
    return FlowState(
        EmpiricalMeasure(new_points, particles.weights),
        step=state.step + 1,
        history=state.history,
        snapshots=state.snapshots,
        net=net,
    )


def run_flow(
    source: EmpiricalMeasure,
    target: EmpiricalMeasure,
    kernel_or_net,
    config: FlowConfig,
    evaluator=None,
) -> FlowState:
    """Iterate flow_step for config.steps steps.

    `evaluator(particles, target) -> float` is recorded at step 0, every
    `snapshot_every` steps (if positive) and at the final step; particle
    snapshots are stored on the same schedule."""
    state = FlowState(source)

    def record(st: FlowState):
        st.snapshots.append((st.step, st.particles.points.copy()))
        if evaluator is not None:
            st.history.append((st.step, float(evaluator(st.particles, target))))

    record(state)
    for _ in range(config.steps):
        state = flow_step(state, target, kernel_or_net, config)
        due = config.snapshot_every > 0 and state.step % config.snapshot_every == 0
        if due or state.step == config.steps:
            record(state)
    return state


@dataclass(frozen=True)
class FieldResult:
    """Gradient-field samples in frame coordinates; NaN components mark grid
    points where the kernel gradient is singular."""

    u: np.ndarray
    v: np.ndarray
    gu: np.ndarray
    gv: np.ndarray
    singular_count: int = 0


def gradient_field_2d(
    kernel: KernelSpec,
    loss: LossSpec,
    x0,
    y,
    resolution: int = 17,
    extent: tuple = (-2.0, 2.0, -2.0, 2.0),
    tau: float = 1.0,
) -> FieldResult:
    """Generator-gradient field of the one-fake-atom vs one-real-atom game,
    expressed in the plane spanned by {x0, y} with y at coordinates (1, 0):
    grid coordinate (u, v) maps to the point u*y + v*||y||*e2."""
    x0 = np.asarray(x0, dtype=float)
    y = np.asarray(y, dtype=float)
    ny = np.linalg.norm(y)
    if ny == 0:
        raise ValueError("y must be nonzero")
    e1 = y / ny
    w = x0 - (x0 @ e1) * e1
    nw = np.linalg.norm(w)
    if nw < 1e-12 * max(1.0, np.linalg.norm(x0)):
        logger.warning(
            "x0 is collinear with y; using an arbitrary orthogonal complement"
        )
        probe = np.zeros_like(e1)
        probe[int(np.argmin(np.abs(e1)))] = 1.0
        w = probe - (probe @ e1) * e1
        nw = np.linalg.norm(w)
    e2 = w / nw
    umin, umax, vmin, vmax = extent
    us = np.linspace(umin, umax, resolution)
    vs = np.linspace(vmin, vmax, resolution)
    gu = np.zeros((resolution, resolution))
    gv = np.zeros((resolution, resolution))
    real = EmpiricalMeasure(y[None, :], np.array([1.0]))
    # The frame is scaled so that y sits at (1, 0): grid coordinate (u, v)
    # maps to the point u * y + v * ||y|| * e2.
    singular = 0
    for i, u in enumerate(us):
        for j, v in enumerate(vs):
            x = (u * e1 + v * e2) * ny
            fake = EmpiricalMeasure(x[None, :], np.array([1.0]))
            data = make_mixture(fake, real)
            if loss.variant == "ipm":
                f = ipm_witness(kernel, data, tau)
            elif loss.variant == "lsgan":
                f = lsgan_solution(kernel, data, tau)
            else:
                f = vanilla_gan_approx(kernel, data, tau)
            fx = float(f(x[None, :])[0])
            try:
                grad = float(loss.c_prime(fx)) * f.gradient(x[None, :])[0]
            except SingularKernelPointError:
                singular += 1
                gu[i, j] = gv[i, j] = np.nan
                continue
            gu[i, j] = grad @ e1
            gv[i, j] = grad @ e2
    uu, vv = np.meshgrid(us, vs, indexing="ij")
    return FieldResult(uu, vv, gu, gv, singular)
