"""Debiased entropic-optimal-transport Sinkhorn divergence for point clouds.

Cost C(x, y) = ||x - y||^2 / 2 with regularization eps = blur^2 (the p = 2
convention), solved by log-domain Sinkhorn iterations with geometric
eps-annealing from half the squared data diameter down to the target.  The
divergence is debiased:

    S(a, b) = OT_eps(a, b) - OT_eps(a, a)/2 - OT_eps(b, b)/2,

with the self-terms computed by the symmetric fixed-point iteration, so that
S(a, a) vanishes to roundoff.  A brute-force assignment solver is included as
an oracle for tiny uniform instances."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import logsumexp

from .measures import EmpiricalMeasure

__all__ = ["SinkhornConfig", "sinkhorn_divergence", "exact_ot_cost"]


@dataclass(frozen=True)
class SinkhornConfig:
    blur: float = 0.001
    scaling: float = 0.95
    max_iters: int = 5000

    def __post_init__(self):
        if self.blur <= 0:
            raise ValueError("blur must be > 0")
        if not 0.0 < self.scaling < 1.0:
            raise ValueError("scaling must lie in (0, 1)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")

    @property
    def eps(self) -> float:
        return self.blur * self.blur


def _cost_matrix(x, y):
    sq = ((x[:, None, :] - y[None, :, :]) ** 2).sum(axis=2)
    return 0.5 * sq


def _eps_schedule(eps0: float, eps: float, scaling: float):
    levels = []
    e = max(eps0, eps)
    while e > eps:
        levels.append(e)
        e *= scaling * scaling
    levels.append(eps)
    return levels


def _softmin(cost, log_w, pot, eps):
    # -eps * LSE_j [ log w_j + (pot_j - C_ij)/eps ]
    return -eps * logsumexp(log_w[None, :] + (pot[None, :] - cost) / eps, axis=1)


def _ot_eps(cost, log_a, log_b, cfg: SinkhornConfig, a, b, symmetric: bool):
    """Entropic OT value by annealed, damped log-domain Sinkhorn.

    When `symmetric` (self-transport), one potential is iterated through the
    averaged fixed-point map; otherwise both potentials get symmetric damped
    updates, which keeps the whole computation invariant under swapping the
    inputs."""
    eps0 = max(cost.max(), cfg.eps)
    levels = _eps_schedule(eps0, cfg.eps, cfg.scaling)
    f = np.zeros(cost.shape[0])
    g = np.zeros(cost.shape[1])
    for eps in levels[:-1]:
        if symmetric:
            f = 0.5 * (f + _softmin(cost, log_a, f, eps))
            g = f
        else:
            fn = _softmin(cost, log_b, g, eps)
            gn = _softmin(cost.T, log_a, f, eps)
            f = 0.5 * (f + fn)
            g = 0.5 * (g + gn)
    eps = levels[-1]
    scale = max(1.0, np.abs(f).max(), np.abs(g).max())
    tol = max(1e-9 * eps, 1e-14 * scale)
    delta = np.inf
    for it in range(cfg.max_iters):
        if symmetric:
            fn = 0.5 * (f + _softmin(cost, log_a, f, eps))
            delta_new = np.abs(fn - f).max()
            f = fn
            g = f
        else:
            fn = _softmin(cost, log_b, g, eps)
            gn = _softmin(cost.T, log_a, f, eps)
            fn = 0.5 * (f + fn)
            gn = 0.5 * (g + gn)
            delta_new = max(np.abs(fn - f).max(), np.abs(gn - g).max())
            f, g = fn, gn
        if delta_new <= tol:
            break
        if it >= 20 and delta_new >= delta * 0.999:
            # Refinement has entered its slow linear tail (for eps far below
            # the cost scale the contraction factor approaches 1 and tol sits
            # below float64 resolution); the annealed potentials are already
            # converged at the level the divergence values resolve.
            break
        delta = delta_new
    else:
        warnings.warn(
            f"Sinkhorn hit max_iters={cfg.max_iters} with residual {delta:.3e} "
            f"at eps={eps:.3e}"
        )
    return float(a @ f + b @ g)


def sinkhorn_divergence(
    a: EmpiricalMeasure, b: EmpiricalMeasure, cfg: SinkhornConfig = SinkhornConfig()
) -> float:
    """Debiased Sinkhorn divergence S_eps(a, b)."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    log_a = np.log(a.weights)
    log_b = np.log(b.weights)
    c_ab = _cost_matrix(a.points, b.points)
    ot_ab = _ot_eps(c_ab, log_a, log_b, cfg, a.weights, b.weights, symmetric=False)
    ot_aa = _ot_eps(
        _cost_matrix(a.points, a.points), log_a, log_a, cfg, a.weights, a.weights, True
    )
    ot_bb = _ot_eps(
        _cost_matrix(b.points, b.points), log_b, log_b, cfg, b.weights, b.weights, True
    )
    return ot_ab - 0.5 * ot_aa - 0.5 * ot_bb


def exact_ot_cost(a: EmpiricalMeasure, b: EmpiricalMeasure) -> float:
    """Optimal assignment cost (mean of ||x - y||^2 / 2 over the matching) for
    tiny uniform instances; test oracle."""
    if a.size != b.size or a.size > 10:
        raise ValueError("exact OT supports equal sizes with N <= 10")
    if not (
        np.allclose(a.weights, 1.0 / a.size) and np.allclose(b.weights, 1.0 / b.size)
    ):
        raise ValueError("exact OT requires uniform weights")
    cost = _cost_matrix(a.points, b.points)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())
