"""Worst-case linear rate certificates for distributed optimization over
jointly-connected time-varying networks.

The pipeline: write an algorithm in canonical per-agent form
(`Realization`), check it admits optimum-aligned fixed points, unravel it
over the connectivity horizon (`build_basis_maps`), assemble the coupled
consensus/disagreement semidefinite feasibility program
(`assemble_feasibility`), and bisect on the prospective rate
(`bisect_rate`) to obtain an independently verified `Certificate`.  A
gossip-network simulator cross-validates certificates against empirical
decay, and the closed-form gradient-tracking baseline is included for
head-to-head comparison.
"""

from .baseline import BaselineResult, baseline_rate_given_alpha, baseline_stepsize
from .basis import (
    BasisMaps,
    basis_size,
    build_basis_maps,
    build_psi,
    build_state_maps,
    state_size,
)
from .certify import (
    Certificate,
    CvxpyBackend,
    NoCertificate,
    RateBound,
    SolveOutcome,
    StepsizeSearch,
    bisect_rate,
    certificate_gamma,
    lyapunov_value,
    optimize_stepsize,
    solve_feasibility,
    verify_certificate,
)
from .errors import (
    AlgebraicLoop,
    ConditionsViolated,
    DimensionMismatch,
    EmptyIntersection,
    GradientSumNonzero,
    InfeasibleScheme,
    InsufficientDecay,
    InvariantViolated,
    NonpositiveStepsize,
    NonpositiveV0,
    ParseError,
    SolverFailure,
)
from .gossip import (
    Assumption2Report,
    GossipSequence,
    generate_sequence,
    joint_spectral_gap,
    verify_assumption2,
)
from .lmi import (
    ConicProgram,
    MultiplierConstants,
    assemble_feasibility,
    build_consensus_map,
    build_disagreement_map,
    build_multipliers,
)
from .realization import (
    BUILTIN_REALIZATIONS,
    FixedPointConditions,
    FixedPointWitness,
    FunctionClass,
    NetworkClass,
    Realization,
    check_fixed_point_conditions,
    construct_fixed_point,
    dgd_realization,
    diging_realization,
    fixed_point_residual,
    validate,
)
from .simulate import (
    EmpiricalRate,
    QuadraticEnsemble,
    Trajectory,
    diging_initial_state,
    empirical_rate,
    simulate,
    trajectory_lyapunov_state,
)
from .textio import (
    certificate_from_text,
    certificate_to_text,
    export_sdpa,
    realization_from_text,
    realization_to_text,
    sequence_from_text,
    sequence_to_text,
    write_csv,
)

__version__ = "0.1.0"
