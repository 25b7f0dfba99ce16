"""Certified randomness for source-independent QRNGs read by one phase-insensitive detector."""

from .certify import (
    DualCertificate,
    LinearProgram,
    LPSolution,
    RandomnessResult,
    VerificationReport,
    brute_force_guessing_bound,
    build_dual,
    build_primal,
    certify,
    min_entropy,
    repair_dual_certificate,
    solve_lp,
    verify_certificate,
)
from .detector import (
    TmdConfig,
    brute_force_occupancy,
    build_tmd_povm,
    occupancy_probability,
    stirling2,
)
from .errors import (
    BudgetExceededError,
    CertificationError,
    InvalidParameterError,
    TruncationError,
    VerificationError,
)
from .fock import (
    FockDiagonalOperator,
    MeasurementStatistics,
    PhaseInsensitivePOVM,
    PhotonSource,
    TailKind,
    coherent_source,
    custom_source,
    expected_outcome_probabilities,
    fock_source,
    povm_completeness_check,
)
from .harness import RunConfig, load_config, run_sweep
from .reduction import (
    TruncationContext,
    build_truncation_context,
    lower_probabilities,
    tail_infinity_norm,
    truncate_operator,
    weight_bound,
)

__version__ = "0.1.0"
