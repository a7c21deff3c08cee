"""Numerical laboratory for the randomly forced Lorenz'63 flow.

Subpackage map: dynamics (vector field, Casimir, dissipativity bounds),
noise (forcing amplitude laws), section (Poincare section and embedded
chain), cuspmap (interval maps of cusp type), transfer (densities and
transfer operators), pdmp (continuous-time process and estimators).
"""

from .dynamics import (
    CLASSICAL_BETA,
    CLASSICAL_GAMMA,
    CLASSICAL_ZETA,
    FieldSpec,
    Frame,
    Trajectory,
    absorption_rate,
    casimir,
    casimir_derivatives,
    check_lyapunov_bound,
    integrate,
    lyapunov_sweep,
    to_x_frame,
    to_y_frame,
)
from .errors import (
    ConfigError,
    ConstructionError,
    DomainError,
    FitError,
    HorizonExceeded,
    IntegrationError,
    LorenzLabError,
    ShapeError,
    SingularPoint,
    SpectralError,
)
from .noise import NoiseKind, NoiseLaw, NoiseSequence
from .section import (
    MarkovRenewalTrace,
    SectionEvent,
    SectionSpec,
    calibrate_eps_box,
    next_crossing,
    on_section,
    return_map,
    sample_chain,
    settle_on_attractor,
)
from .cuspmap import (
    AuditReport,
    ConjugatedMap,
    EmpiricalCuspMap,
    IntervalMap,
    MapKind,
    SyntheticCuspMap,
    audit_assumptions,
    build_empirical_map,
    conjugate_map,
    find_expanding_conjugation,
    fit_branch_exponents,
    make_perturbed_family,
)
from .transfer import (
    Density,
    UlamMatrix,
    averaged_transfer_operator,
    birkhoff_histogram,
    build_ulam,
    build_ulam_exact,
    l1_distance,
    lasota_yorke_probe,
    operator_distance,
    pianigiani_check,
    quasi_holder_norm,
    quasi_holder_seminorm,
    stationary_density,
    statistical_stability_experiment,
)
from .pdmp import (
    DriftReport,
    EmpiricalMeasure,
    PdmpTrajectory,
    drift_check,
    empirical_stationary_measure,
    lifted_measure_probe,
    ratio_formula_estimate,
    simulate_pdmp,
    suspension_conjugation_check,
    time_average,
)

__version__ = "0.1.0"
