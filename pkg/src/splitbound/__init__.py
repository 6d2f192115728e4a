"""splitbound: operator-splitting PDE solver with weighted sup-norm tracking.

The package composes four exactly solvable evolution steps (diffusion,
transport, pointwise matrix exponential, source) over a time decomposition,
extends the composition to quasilinear problems by lagging the coefficients,
and verifies computed trajectories against explicit a-priori bound curves,
existence times, and blow-up laws.
"""

from splitbound.grid import (  # noqa: F401
    DEFAULT_DECAY_TOL,
    DEFAULT_MAX_ORDER,
    DecayReport,
    DomainTooSmallError,
    Field,
    Grid,
    MultiIndexPair,
    decay_guard,
    field_to_csv,
    interpolate_shifted,
    make_grid,
    monitor_pairs,
    read_field,
    sample_field,
    spectral_derivative,
    weighted_seminorm,
    write_field,
)
from splitbound.propagators import (  # noqa: F401
    CoefficientSet,
    DilationError,
    Viscosity,
    expm_batched,
    heat_step,
    multiply_step,
    scaling_step,
    source_step,
    transport_step,
)
from splitbound.splitting import (  # noqa: F401
    ConvergenceReport,
    Decomposition,
    SeminormTrace,
    SolverAbort,
    Trajectory,
    heat_source_exact,
    make_decomposition,
    refine_until,
    solve_linear,
)
from splitbound.nonlinear import (  # noqa: F401
    BlowupAbort,
    CoefficientBuilder,
    NonlinearReport,
    solve_delayed,
    solve_nonlinear,
)
from splitbound.bounds import (  # noqa: F401
    BlowupEstimate,
    BoundCurve,
    Envelope,
    GronwallPoleError,
    HeatData,
    IDisplacement,
    VelocityEnvelope,
    bound_curves_for_monitors,
    bounds_to_csv,
    build_envelope,
    build_heat_data,
    burgers_existence_time,
    detect_blowup,
    displacement_I,
    gronwall_c1,
    integrate_recursive_bound,
    linear_bound,
    linear_bound_curve,
    shifted_weighted_sup,
    vorticity_bound,
    vorticity_bound_curve,
)
from splitbound.models import (  # noqa: F401
    BlowupTimes,
    ColeHopfUnderflowError,
    VorticityState,
    VorticityTrajectory,
    biot_savart,
    bkm_integral,
    burgers_blowup,
    burgers_builder,
    burgers_oracle,
    cole_hopf,
    curl_div,
    energy,
    evolve_vorticity,
    support_radius,
    vorticity_coefficients,
)
from splitbound.presets import (  # noqa: F401
    PRESET_NAMES,
    Problem,
    get_preset,
    random_linear_problem,
)

__version__ = "0.1.0"
