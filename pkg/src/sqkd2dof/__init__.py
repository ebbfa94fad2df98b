"""Semi-quantum key distribution on photons carrying two degrees of freedom.

An exact, seedable simulator of the protocol (quantum Alice, classical Bob),
pluggable eavesdropper models, exact detection oracles and a statistical
analysis layer.
"""

from .analysis import (
    CapacityReport,
    DetectionStats,
    SessionAbortError,
    capacity_compare,
    chi_square_uniform,
    estimate_detection,
    evasion_probability,
    wilson_interval,
)
from .attacks import (
    AttackModel,
    EntangleMeasure,
    EveRecord,
    FixedBasis,
    FixedState,
    InterceptResend,
    MeasureResend,
    NoAttack,
    ProbeIndependenceReport,
    RandomPerRound,
    UniformOverFour,
    controlled_orthogonal_attack,
    eve_information,
    identity_attack,
    probe_independence_check,
    sample_no_error_attack,
    tap_backward,
    tap_forward,
)
from .baseline import BaselineResult, QubitInterceptResend, QubitMeasureResend, run_baseline_session
from .oracle import ExactDetection, UnsupportedAttackError, exact_detection, exact_eve_information
from .protocol import (
    BobAction,
    InsufficientSiftError,
    RawKey,
    RoundRecord,
    RoundUse,
    SessionConfig,
    SessionResult,
    SessionStatus,
    alice_measure,
    alice_prepare,
    bob_act,
    ctrl_error_rate,
    derive_raw_key,
    run_session,
    sift_error_check,
    transcript_rows,
    transcript_to_csv,
    transcript_to_json,
)
from .rng import RandomSource
from .states import (
    ALL_BASES,
    BASIS_XX,
    BASIS_XZ,
    BASIS_ZX,
    BASIS_ZZ,
    JointState,
    Outcome,
    PhotonState,
    ProductBasis,
    apply_unitary,
    basis_from_name,
    basis_vectors,
    born_probabilities,
    conditional_probe_states,
    ket,
    measure,
    measure_photon,
    product_state,
    tensor,
    trace_distance,
)

__version__ = "0.1.0"
