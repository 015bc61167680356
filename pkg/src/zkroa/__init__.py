"""Region-of-attraction estimation with a learned Zubov-Koopman operator."""
from .dictionary import Dictionary, make_dictionary
from .edmd import DataMatrices, OperatorMatrix, fit_operator, matrix_power_step, spectrum, stack_data
from .errors import (
    ConfigError,
    DegenerateDataError,
    DivergenceError,
    IntegrationBlowup,
    MissingArtifactError,
    NumericalError,
    SeedBelowThresholdError,
    ZKError,
)
from .integrate import (
    ClippedTrajectory,
    clip_to_region,
    evaluate_T_delta,
    simulate_augmented,
    stopped_trajectory,
    terminal_states,
)
from .roa import (
    FunctionField,
    RoaMask,
    UApprox,
    build_u_zk,
    extract_roa,
    lie_derivative,
    v_zk,
    verified_fraction,
)
from .smooth import SmoothModel, train
from .systems import SystemSpec, builtin, closed_form_u_1d, closed_form_v_1d

__version__ = "0.1.0"
