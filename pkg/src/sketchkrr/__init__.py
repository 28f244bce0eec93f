"""Sketched kernel ridge regression with minimax nonparametric tests."""

from .errors import ComputationError
from .kernels import (
    KernelMatrix,
    KernelSpec,
    SpectrumDescriptor,
    eval_kernel,
    gaussian,
    kernel_matrix,
    periodic_sobolev,
    tail_regularity_check,
    theoretical_eigenvalues,
)
from .spectral import (
    EigenSystem,
    LambdaSplit,
    eigendecompose,
    eigen_concentration_check,
    lambda_split,
    lrc_fixed_point,
    rate_lambda,
    rate_table,
    tail_sum_check,
)
from .sketch import (
    SatisfiabilityCertificate,
    SketchMatrix,
    check_k_satisfiability,
    data_dependent_sketch,
    draw_sketch,
    sketch_admissibility_report,
)
from .krr import (
    DeltaOperator,
    GCVReport,
    SketchedKRRFit,
    default_lambda_grid,
    delta_matrix,
    fit_full,
    fit_sketched,
    gcv,
    predict,
)
from .testing import (
    TestReport,
    composite_linear_test,
    distance_test,
    null_moment_check,
    polynomial_design,
    separation_rate,
)
from .adaptive import (
    AdaptiveReport,
    adaptive_test,
    critical_value,
    extreme_value_constant,
    smoothness_schedule,
    standardized_statistic,
)
from .simulate import (
    MonteCarloConfig,
    MonteCarloResult,
    adversarial_estimation_signal,
    adversarial_testing_signal,
    beta_mixture_data,
    gaussian_interaction_data,
    monte_carlo,
    phase_grid,
    run_replication,
)

__version__ = "0.1.0"
