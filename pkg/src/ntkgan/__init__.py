"""ntkgan: GAN discriminator training dynamics in the infinite-width regime.

Analytic NTK/NNGP kernels, closed-form trained discriminators for IPM, LSGAN
and vanilla losses, particle gradient flows, finite-width MLP oracles, and a
debiased Sinkhorn divergence for evaluating convergence."""

from .kernels import (
    ActivationKind,
    ERF,
    IDENTITY,
    KernelSpec,
    NetworkConfig,
    RELU,
    SIGMOID,
    SingularKernelPointError,
    dual_activation,
    grad2_coefficients,
    gram,
    kernel_eval,
    kernel_grad2,
)
from .measures import (
    EmpiricalMeasure,
    PairedData,
    load_mnist,
    make_mixture,
    sample_8gaussians,
    sample_image_density,
)
from .dynamics import (
    IPM,
    LSGAN,
    VANILLA,
    LossSpec,
    SupportFunction,
    discriminator_grad,
    discriminator_value,
    integral_operator_apply,
    ipm_witness,
    lambert_w_exp,
    lsgan_solution,
    mmd_squared,
    ode_solve_discriminator,
    spectral_apply,
    vanilla_gan_approx,
)
from .finite import (
    AntisymmetricPair,
    MLPParams,
    empirical_ntk,
    empirical_ntk_gram,
    forward,
    init_mlp,
    input_gradient,
    param_gradient,
    train_discriminator,
)
from .sinkhorn import SinkhornConfig, exact_ot_cost, sinkhorn_divergence
from .flow import FlowConfig, FlowState, flow_step, gradient_field_2d, run_flow, sigmoid_eta

__version__ = "0.1.0"
