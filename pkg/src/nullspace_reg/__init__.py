"""Null-space networks and M-regularization for finite-dimensional linear inverse problems."""

from .errors import (
    ConfigError,
    ContractViolation,
    IntegrityError,
    NumericalError,
    ParameterError,
    RejectedInput,
    TrainingStalled,
)
from .filters import FilterSpec, filter_value, reconstruct, verify_filter_axioms, verify_rate_conditions
from .linop import DenseOperator, SvdFactorization
from .network import (
    Activation,
    AffineLayer,
    ApproximateProjector,
    ExactProjector,
    FeedForwardNet,
    NullSpaceNetwork,
    lipschitz_bound,
    spectral_norm,
)
from .regpipeline import (
    MRegularizer,
    ParamChoice,
    alpha_star,
    approx_projector,
    m_generalized_inverse,
    reconstruct_two_step,
    reconstruct_two_step_approx,
    source_element,
)
from .training import (
    LossBreakdown,
    Regularized,
    TrainConfig,
    TrainingSet,
    grad,
    loss_exact,
    loss_regularized,
    piecewise_constant_phantoms,
    train,
)

__version__ = "0.1.0"
