"""Acceptance gate: one test per numbered criterion, each printing a
pass/fail line with the measured quantity."""
import itertools
import time

import numpy as np
import pytest

from ntkgan import (
    EmpiricalMeasure,
    IPM,
    KernelSpec,
    LSGAN,
    NetworkConfig,
    RELU,
    SIGMOID,
    SinkhornConfig,
    FlowConfig,
    VANILLA,
    empirical_ntk_gram,
    flow_step,
    gradient_field_2d,
    gram,
    init_mlp,
    ipm_witness,
    kernel_eval,
    lambert_w_exp,
    lsgan_solution,
    make_mixture,
    mmd_squared,
    ode_solve_discriminator,
    run_flow,
    sample_8gaussians,
    sigmoid_eta,
    sinkhorn_divergence,
    vanilla_gan_approx,
)
from ntkgan.flow import FlowState

from conftest import random_cloud, rng


RELU_CFG = NetworkConfig(3, RELU, 1.0, 1.0)
RELU_NTK = KernelSpec.ntk(RELU_CFG)
NO_BIAS_NTK = KernelSpec.ntk(NetworkConfig(3, RELU, 1.0, 0.0))
SIGMOID_NTK = KernelSpec.ntk(NetworkConfig(3, SIGMOID, 1.0, 0.04))


def report(num: int, desc: str, ok: bool, detail: str):
    line = f"[criterion {num:02d}] {desc}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line, flush=True)
    assert ok, line


def _instance(seed, nf=6, nr=5, dim=2):
    fake = EmpiricalMeasure.uniform(random_cloud(nf, dim, seed))
    real = EmpiricalMeasure.uniform(random_cloud(nr, dim, seed + 777))
    return fake, real, make_mixture(fake, real)


# ---------------------------------------------------------------------------


def test_criterion_01_analytic_vs_empirical_ntk():
    t0 = time.perf_counter()
    X = random_cloud(10, 2, 0, scale=2.0)
    analytic = gram(RELU_NTK, X, X)
    est = np.zeros_like(analytic)
    n_seeds = 16
    for s in range(n_seeds):
        net = init_mlp(RELU_CFG, 8192, seed=1000 + s, input_dim=2, dtype=np.float32)
        est += empirical_ntk_gram(net, X, X)
    est /= n_seeds
    pairs = [(i, j) for i in range(10) for j in range(10) if i < j][:20]
    rels = [abs(est[i, j] - analytic[i, j]) / abs(analytic[i, j]) for i, j in pairs]
    dt = time.perf_counter() - t0
    ok = max(rels) < 0.05 and dt < 120.0
    report(
        1,
        "analytic relu NTK matches width-8192 empirical NTK (16 seeds, 20 pairs)",
        ok,
        f"max rel err {max(rels):.2e} < 5e-2, {dt:.0f}s < 120s",
    )


def test_criterion_02_shallow_arc_cosine_oracle():
    t0 = time.perf_counter()
    spec = KernelSpec.ntk(NetworkConfig(1, RELU, 1.0, 0.0))
    r = rng(7)
    ratios = []
    for _ in range(50):
        x, y = r.standard_normal(3), r.standard_normal(3)
        u = x @ y / (np.linalg.norm(x) * np.linalg.norm(y))
        kappa = (np.sqrt(1 - u * u) + 2 * u * (np.pi - np.arccos(u))) / (2 * np.pi)
        ratios.append(
            kernel_eval(spec, x, y) / (np.linalg.norm(x) * np.linalg.norm(y) * kappa)
        )
    spread = max(ratios) - min(ratios)
    dt = time.perf_counter() - t0
    ok = spread < 1e-8 and dt < 1.0
    report(
        2,
        "bias-free 1-hidden-layer relu NTK proportional to ||x||||y|| kappa(cos)",
        ok,
        f"ratio spread {spread:.2e} < 1e-8, {dt:.2f}s < 1s",
    )


def test_criterion_03_ipm_identity():
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        fake, real, data = _instance(seed)
        t = 0.1 + 2.0 * rng(seed).random()
        f = ipm_witness(RELU_NTK, data, t)
        gain = IPM.discriminator_loss(f(data.mixture.points), data)
        target = t * mmd_squared(RELU_NTK, fake, real)
        worst = max(worst, abs(gain - target) / max(abs(target), 1e-30))
    dt = time.perf_counter() - t0
    ok = worst < 1e-9 and dt < 10.0
    report(
        3,
        "IPM loss gain equals t * MMD^2 on 20 random instances",
        ok,
        f"max rel err {worst:.2e} < 1e-9, {dt:.1f}s < 10s",
    )


def test_criterion_04_lsgan_vs_rk4():
    t0 = time.perf_counter()
    _, _, data = _instance(21)
    t = 0.8
    f = lsgan_solution(RELU_NTK, data, t)
    g = ode_solve_discriminator(RELU_NTK, data, LSGAN, t, steps=10_000)
    probes = random_cloud(5, 2, 99)
    sup = max(
        float(np.max(np.abs(f(data.mixture.points) - g(data.mixture.points)))),
        float(np.max(np.abs(f(probes) - g(probes)))),
    )
    # order-4 step convergence of the integrator
    errs = []
    for steps in (40, 80, 160):
        gi = ode_solve_discriminator(RELU_NTK, data, LSGAN, 1.0, steps=steps)
        exact = lsgan_solution(RELU_NTK, data, 1.0)(data.mixture.points)
        errs.append(np.max(np.abs(gi(data.mixture.points) - exact)))
    orders = [np.log2(errs[k] / errs[k + 1]) for k in range(2)]
    dt = time.perf_counter() - t0
    ok = sup < 1e-6 and all(3.5 < o < 4.5 for o in orders) and dt < 30.0
    report(
        4,
        "LSGAN closed form matches RK4 (1e4 steps) with 4th-order convergence",
        ok,
        f"sup err {sup:.2e} < 1e-6, observed orders {orders[0]:.2f}/{orders[1]:.2f}, {dt:.1f}s < 30s",
    )


def test_criterion_05_lsgan_optimality():
    t0 = time.perf_counter()
    _, _, data = _instance(23)
    k = gram(RELU_NTK, data.mixture.points, data.mixture.points)
    assert np.linalg.eigvalsh(k).min() > 0  # positive-definite instance
    resid = float(
        np.max(np.abs(lsgan_solution(RELU_NTK, data, 20_000.0)(data.mixture.points) - data.rho))
    )
    losses = [
        LSGAN.discriminator_loss(lsgan_solution(RELU_NTK, data, t)(data.mixture.points), data)
        for t in [0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 20.0, 100.0]
    ]
    monotone = all(b >= a - 1e-12 for a, b in zip(losses, losses[1:]))
    dt = time.perf_counter() - t0
    ok = resid < 1e-6 and monotone and dt < 10.0
    report(
        5,
        "LSGAN support values converge to rho = +/-1 with non-decreasing loss",
        ok,
        f"sup |f_t - rho| {resid:.2e} < 1e-6, monotone={monotone}, {dt:.1f}s < 10s",
    )


def test_criterion_06_non_characteristic_kernel():
    t0 = time.perf_counter()
    y = np.array([1.2, -0.6])
    mid = EmpiricalMeasure.uniform(np.array([y / 2]))
    pair = EmpiricalMeasure.uniform(np.array([np.zeros(2), y]))
    degenerate = mmd_squared(NO_BIAS_NTK, mid, pair)
    separated = mmd_squared(RELU_NTK, mid, pair)
    dt = time.perf_counter() - t0
    ok = degenerate < 1e-10 and separated > 1e-6 and dt < 1.0
    report(
        6,
        "bias-free relu NTK is not characteristic (midpoint vs endpoint pair)",
        ok,
        f"MMD^2 without bias {degenerate:.2e} < 1e-10, with bias {separated:.2e} > 1e-6, {dt:.2f}s < 1s",
    )


def test_criterion_07_vanilla_approximation():
    t0 = time.perf_counter()
    _, _, data = _instance(31)
    worst = 0.0
    for t in (0.5, 2.0, 5.0):
        f = vanilla_gan_approx(RELU_NTK, data, t)
        g = ode_solve_discriminator(RELU_NTK, data, VANILLA, t, steps=4000)
        fv, gv = f(data.mixture.points), g(data.mixture.points)
        worst = max(worst, float(np.max(np.abs(fv - gv)) / np.max(np.abs(gv))))

    # scalar dynamic y' = lam (r - 2 sigma(y)), y0 = 0 vs its closed form
    def sigma(v):
        return 1.0 / (1.0 + np.exp(-v))

    scalar_err = 0.0
    for lam in (0.5, -0.5, 2.0, -2.0):
        for r in (0.0, 2.0):
            t_end, steps = 3.0, 30_000
            h = t_end / steps
            v = 0.0
            for _ in range(steps):
                k1 = lam * (r - 2 * sigma(v))
                k2 = lam * (r - 2 * sigma(v + 0.5 * h * k1))
                k3 = lam * (r - 2 * sigma(v + 0.5 * h * k2))
                k4 = lam * (r - 2 * sigma(v + h * k3))
                v += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            closed = (1.0 - r) * (
                lambert_w_exp(2 * lam * t_end + 1.0) - 2 * lam * t_end - 1.0
            )
            scalar_err = max(scalar_err, abs(v - closed))
    lam_res = max(
        abs(lambert_w_exp(z) + np.log(lambert_w_exp(z)) - z)
        for z in np.linspace(-50.0, 700.0, 76)
    )
    dt = time.perf_counter() - t0
    ok = worst <= 0.10 and scalar_err < 1e-10 and lam_res < 1e-10 and dt < 10.0
    report(
        7,
        "vanilla-GAN Lambert form: <=10% of the ODE for t<=5, exact scalar case",
        ok,
        f"rel err {worst:.2%} <= 10%, scalar err {scalar_err:.1e} < 1e-10, "
        f"W residual {lam_res:.1e} < 1e-10, {dt:.1f}s < 10s",
    )


def test_criterion_08_sinkhorn_oracles():
    t0 = time.perf_counter()
    cloud = EmpiricalMeasure.uniform(random_cloud(25, 2, 1))
    self_div = abs(sinkhorn_divergence(cloud, cloud, SinkhornConfig()))
    x, y = np.array([[0.5, -1.0]]), np.array([[2.0, 1.5]])
    dirac = sinkhorn_divergence(
        EmpiricalMeasure.uniform(x), EmpiricalMeasure.uniform(y), SinkhornConfig()
    )
    dirac_err = abs(dirac - 0.5 * np.sum((x - y) ** 2))
    # exhaustive-permutation oracle, N = 6
    a_pts, b_pts = random_cloud(6, 2, 2), random_cloud(6, 2, 3)
    exact = min(
        0.5 * sum(np.sum((a_pts[i] - b_pts[j]) ** 2) for i, j in enumerate(perm)) / 6
        for perm in itertools.permutations(range(6))
    )
    approx = sinkhorn_divergence(
        EmpiricalMeasure.uniform(a_pts),
        EmpiricalMeasure.uniform(b_pts),
        SinkhornConfig(blur=1e-4),
    )
    rel = abs(approx - exact) / exact
    dt = time.perf_counter() - t0
    ok = self_div < 1e-9 and dirac_err < 1e-12 and rel < 0.01 and dt < 30.0
    report(
        8,
        "Sinkhorn: zero self-divergence, exact Dirac pair, 1% vs exhaustive OT",
        ok,
        f"S(a,a) {self_div:.1e} < 1e-9, Dirac err {dirac_err:.1e}, "
        f"vs exact {rel:.2%} < 1%, {dt:.1f}s < 30s",
    )


# ---------------------------------------------------------------------------
# benchmark-scale flows (shared across criteria 9 and 10)

_SK = SinkhornConfig()  # blur 0.001, scaling 0.95


def _final_sinkhorn(kernel, seed, steps=5000, eta=1000.0, apply_sigmoid_scale=False):
    source, target = sample_8gaussians(200, seed)
    cfg = FlowConfig(loss=IPM, regime="infinite", eta=eta, steps=steps, tau=1.0)
    if apply_sigmoid_scale:
        cfg = sigmoid_eta(cfg)
    state = run_flow(source, target, kernel, cfg)
    return sinkhorn_divergence(state.particles, target, _SK)


@pytest.fixture(scope="module")
def eight_gaussian_results():
    results = {}
    t0 = time.perf_counter()
    for name, kernel in [
        ("relu", RELU_NTK),
        ("rbf", KernelSpec.rbf()),
        ("relu_nobias", NO_BIAS_NTK),
    ]:
        results[name] = [_final_sinkhorn(kernel, seed) for seed in range(3)]
    results["wall_time"] = time.perf_counter() - t0
    return results


def test_criterion_09_eight_gaussians_benchmark(eight_gaussian_results):
    res = eight_gaussian_results
    means = {k: float(np.mean(v)) for k, v in res.items() if k != "wall_time"}
    dt = res["wall_time"]
    ordered = means["relu"] < means["rbf"] < means["relu_nobias"]
    ok = means["relu"] <= 1e-2 and ordered and dt < 1800.0
    report(
        9,
        "8-Gaussians IPM infinite benchmark (3 seeds, 5000 steps, eta=1000)",
        ok,
        f"relu {means['relu']:.2e} <= 1e-2, ordering relu < rbf ({means['rbf']:.2e}) "
        f"< relu-no-bias ({means['relu_nobias']:.2e}) = {ordered}, {dt:.0f}s < 1800s",
    )


def test_criterion_10_sigmoid_underperformance(eight_gaussian_results):
    t0 = time.perf_counter()
    sig = _final_sinkhorn(SIGMOID_NTK, 0, apply_sigmoid_scale=True)
    dt = time.perf_counter() - t0
    relu_mean = float(np.mean(eight_gaussian_results["relu"]))
    ratio = sig / relu_mean
    ok = ratio >= 10.0 and dt < 1800.0
    report(
        10,
        "sigmoid NTK final Sinkhorn at least 10x worse than relu-with-bias",
        ok,
        f"sigmoid {sig:.2e} vs relu {relu_mean:.2e}, ratio {ratio:.1f}x >= 10x, {dt:.0f}s < 1800s",
    )


def test_criterion_11_gradient_field_properties():
    t0 = time.perf_counter()
    x0 = np.array([0.5, 0.5])
    y = np.array([1.0, 0.0])
    field = gradient_field_2d(RELU_NTK, IPM, x0, y, resolution=9)
    mirror = max(
        float(np.max(np.abs(field.gu[:, ::-1] - field.gu))),
        float(np.max(np.abs(field.gv[:, ::-1] + field.gv))),
    )
    i = int(np.argmin(np.abs(field.u[:, 0] - 1.0)))
    j = int(np.argmin(np.abs(field.v[0, :] - 0.0)))
    at_target = float(np.hypot(field.gu[i, j], field.gv[i, j]))

    # span confinement: a one-atom generator in R^8 never leaves span{x0, y}
    dim = 8
    r = rng(5)
    x8 = r.standard_normal(dim)
    y8 = r.standard_normal(dim)
    basis = np.linalg.qr(np.stack([x8, y8], axis=1))[0]
    target = EmpiricalMeasure.uniform(y8[None, :])
    state = FlowState(EmpiricalMeasure.uniform(x8[None, :]))
    cfg = FlowConfig(loss=IPM, eta=1.0, steps=1, tau=1.0)
    off_span = 0.0
    for _ in range(50):
        state = flow_step(state, target, RELU_NTK, cfg)
        p = state.particles.points[0]
        off_span = max(off_span, float(np.linalg.norm(p - basis @ (basis.T @ p))))

    # frame invariance: the same field computed after an isometry into R^512
    q = np.linalg.qr(rng(6).standard_normal((512, 2)))[0]
    lifted = gradient_field_2d(RELU_NTK, IPM, q @ x0, q @ y, resolution=9)
    frame_err = max(
        float(np.max(np.abs(lifted.gu - field.gu))),
        float(np.max(np.abs(lifted.gv - field.gv))),
    )
    dt = time.perf_counter() - t0
    ok = mirror < 1e-10 and at_target < 1e-10 and off_span < 1e-9 and frame_err < 1e-8 and dt < 300.0
    report(
        11,
        "gradient field: mirror symmetry, zero at target, span confinement, frame invariance",
        ok,
        f"mirror {mirror:.1e}, at-target {at_target:.1e}, off-span {off_span:.1e} < 1e-9, "
        f"R^2-vs-R^512 {frame_err:.1e} < 1e-8, {dt:.0f}s < 300s",
    )


def _synthetic_digit_images(count, seed):
    """White-stroke-on-black 28x28 rasters standing in for MNIST digits."""
    r = rng(seed)
    yy, xx = np.mgrid[0:28, 0:28].astype(float)
    images = np.zeros((count, 28, 28))
    for k in range(count):
        img = np.zeros((28, 28))
        for _ in range(3):  # a few bright strokes per image
            cx, cy = 6 + 16 * r.random(2)
            sx, sy = 1.0 + 3.0 * r.random(2)
            img += np.exp(-(((xx - cx) / sx) ** 2 + ((yy - cy) / sy) ** 2))
        images[k] = np.clip(img / img.max(), 0, 1) * 255
    return images.astype(np.uint8)


def test_criterion_12_mnist_smoke(tmp_path):
    import struct

    from ntkgan import load_mnist

    t0 = time.perf_counter()
    images = _synthetic_digit_images(300, seed=8)
    path = tmp_path / "train-images-idx3-ubyte"
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", 2051, *images.shape))
        fh.write(images.tobytes())
    target = load_mnist(path, 256, seed=0)
    source = EmpiricalMeasure.uniform(rng(1).standard_normal((256, 1024)))
    cfg = FlowConfig(loss=IPM, regime="infinite", eta=100.0, steps=2000, tau=1000.0,
                     snapshot_every=200)
    evaluator = lambda p, t: sinkhorn_divergence(p, t, _SK)
    try:
        import warnings

        with warnings.catch_warnings(), np.errstate(all="ignore"):
            warnings.simplefilter("ignore", RuntimeWarning)
            state = run_flow(source, target, RELU_NTK, cfg, evaluator=evaluator)
    except ArithmeticError as exc:
        # eta = 100 presupposes a first layer whose covariance is divided by
        # the input dimension; with the dimension-free covariance used here
        # (required by the frame-invariance property, criterion 11) the same
        # flow needs a step size smaller by that factor (eta = 100/1024
        # converges monotonically).  See the project decisions ledger.
        dt = time.perf_counter() - t0
        report(
            12,
            "image-cloud flow (256 particles, tau=1000, eta=100, 2000 steps)",
            False,
            f"diverged ({exc}); step size inconsistent with the "
            f"dimension-free first-layer covariance, {dt:.0f}s",
        )
        return
    vals = [v for _, v in state.history]
    monotone = all(b <= a * (1.0 + 1e-6) for a, b in zip(vals, vals[1:]))
    drop = 1.0 - vals[-1] / vals[0]
    dt = time.perf_counter() - t0
    ok = monotone and drop >= 0.5 and dt < 3600.0
    report(
        12,
        "image-cloud flow (256 particles, tau=1000, eta=100, 2000 steps)",
        ok,
        f"monotone={monotone}, drop {drop:.1%} >= 50%, {dt:.0f}s < 3600s",
    )
