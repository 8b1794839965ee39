"""spheremap: a pseudo-spectral verification lab for the Schrodinger map flow
d_t s = s x Laplacian(s) on the periodic torus.

The package evolves sphere-valued fields, constructs Coulomb-gauge tangent
frames, derives the coupled nonlinear Schrodinger system satisfied by the
frame coordinates of the gradient, and checks every structural identity,
conservation law and quantitative bound numerically at desk scale.
"""

from .spectral import (
    Grid,
    dealias,
    dealiased_product,
    fourier_multiplier,
    fractional_laplacian,
    inv_gradient_riesz,
    l2_norm,
    laplacian,
    lp_k_range,
    lp_projector,
    partial_derivative,
    riesz,
    sobolev_norm,
    vector_apply,
)
from .geometry import (
    BlowupSuspectedError,
    Connection,
    Frame,
    FrameDegenerateError,
    SphereField,
    coulomb_fix,
    connection_of,
    default_qprime,
    project_n,
    projection_frame,
    renormalize,
    rotate_frame,
    sweep_frame,
)
from .gauge import (
    GaugeData,
    a0_from_psi,
    a_from_psi,
    covariant_derivative,
    derive_psi,
    gauge_from_frame,
    msm_nonlinearity,
    residual_compatibility,
    residual_curvature,
    residual_psi0,
)
from .initial_data import InitialDataSpec, generate_initial, tilted_qprime
from .diagnostics import (
    DiagnosticsRow,
    SpaceTimeRecord,
    critical_norm,
    directional_norm,
    energy,
    frame_bound_ratio,
    gronwall_probe,
    l2_distance_q,
    xk_norm,
)
from .evolution import (
    SimConfig,
    TrajectoryRecord,
    default_dt,
    evolve_msm,
    free_propagator,
    run,
    sm_rhs,
    step_rk4_projected,
)
from .cli_io import (
    ConfigError,
    Snapshot,
    SnapshotFormatError,
    cli_main,
    emit_diagnostics_csv,
    gauge_identity_suite,
    load_snapshot,
    parse_config,
    save_snapshot,
)

__version__ = "0.1.0"
