"""Photon-level simulator of the three-stage (K06) rotation protocol.

Models the commuting-rotation exchange at the granularity of Poisson
photon pulses, the intensity-monitoring defense against photon siphoning,
and the published-digest defense against impersonation, together with the
Monte Carlo and exact-oracle analysis of the detection/leakage tradeoff.
"""

from .adversary import (
    DEFAULT_EVE_READ_FLOOR,
    EveKnowledge,
    EveMode,
    EveStrategy,
    InsufficientCapture,
    correlate_angles,
    eve_correlate,
    eve_impersonate,
    eve_intercept,
    min_photons_for_rmse,
)
from .analysis import (
    ExperimentPlan,
    LeakagePoint,
    ProportionEstimate,
    RocPoint,
    TradeoffPoint,
    TruncationError,
    detection_probability,
    eve_accuracy_sweep,
    exact_count_oracle,
    exact_detection_oracle,
    first_reaching_target,
    leakage_vs_n,
    roc_sweep,
    simulate_bit_recovery,
    tradeoff_csv_lines,
    wilson_interval,
)
from .protocol import (
    AbortSignal,
    DecodeError,
    DetectionRule,
    HashCheck,
    MessageAuth,
    PartyConfig,
    Scenario,
    SessionTranscript,
    StageEvent,
    UnknownAlgorithm,
    alice_stage1,
    alice_stage3,
    bits_from_hex,
    bob_finalize,
    bob_stage2,
    default_tap_budget,
    publish_hash,
    run_session,
    verify_hash,
)
from .pulses import (
    IntensityReading,
    Pulse,
    SourceModel,
    Stage,
    attenuate,
    emit_pulse,
    siphon,
    siphon_fraction,
    tap_intensity,
)
from .quantum import (
    AmbiguousEstimate,
    Basis,
    MeasurementOutcome,
    PolarizationState,
    Rotation,
    compose,
    encode_bit,
    estimate_angle,
    inverse,
    measure,
    nearest_bit,
    random_rotation,
    rotate,
    wrapped_distance,
)

__version__ = "0.1.0"
