"""The three-stage exchange with per-stage intensity monitoring.

The sender hides each message bit under her secret rotation, the receiver
stacks his own on top, and the secrets come off one per return trip, so the
bare bit is never on the wire. Every receive point taps a fixed photon
budget, reconstructs the arrival count as consumed + forwarded, and alarms
when it falls more than z standard deviations below the expected intensity
ledger. Impersonation leaves the ledger untouched and is caught separately
by comparing the decoded message against a digest published out of band.

With a lossless channel, nominal mean N, and a tap budget of N/4 at each of
the three receive points, the ledger of expected arrivals is N at stage 2,
3N/4 at stage 3, and N/2 at the final stage, leaving N/4 to decode with.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from .adversary import (
    DEFAULT_EVE_READ_FLOOR,
    EveKnowledge,
    EveMode,
    EveStrategy,
    eve_intercept,
)
from .pulses import (
    IntensityReading,
    Pulse,
    SourceModel,
    Stage,
    attenuate,
    emit_pulse,
    tap_intensity,
)
from .quantum import (
    Basis,
    Rotation,
    encode_bit,
    inverse,
    measure,
    random_rotation,
    rotate,
)


def validate_bits(bits: str) -> None:
    if set(bits) - {"0", "1"}:
        raise ValueError("message must contain only the characters 0 and 1")


def bits_from_hex(hex_string: str) -> str:
    """Expand a hex string into its bit string, four bits per digit."""
    if not hex_string:
        raise ValueError("empty hex string")
    try:
        return "".join(f"{int(ch, 16):04b}" for ch in hex_string)
    except ValueError:
        raise ValueError(f"invalid hex string {hex_string!r}") from None


def default_tap_budget(mean_photons: float) -> int:
    """Conventional per-stage tap: a quarter of the nominal pulse strength."""
    return round(mean_photons / 4.0)


class HashCheck(Enum):
    NOT_RUN = "NOT_RUN"
    MATCH = "MATCH"
    MISMATCH = "MISMATCH"


class UnknownAlgorithm(ValueError):
    """A message digest names an algorithm this build does not provide."""


DEFAULT_DIGEST = "sha256"
_DIGESTS = {"sha256": hashlib.sha256, "sha512": hashlib.sha512}


@dataclass(frozen=True)
class MessageAuth:
    """Published digest of a message bit string."""

    digest: bytes
    algorithm_id: str = DEFAULT_DIGEST


def publish_hash(bits: str, algorithm_id: str = DEFAULT_DIGEST) -> MessageAuth:
    """Digest a bit string so the decode can be authenticated later.

    The digest is computed over the ASCII bit characters, so it is a
    deterministic function of the exact message, including its length.
    """
    validate_bits(bits)
    try:
        algo = _DIGESTS[algorithm_id]
    except KeyError:
        raise UnknownAlgorithm(f"no digest algorithm {algorithm_id!r}") from None
    return MessageAuth(algo(bits.encode("ascii")).digest(), algorithm_id)


def verify_hash(bits: str, auth: MessageAuth) -> HashCheck:
    """MATCH iff the digest of bits byte-equals the published digest."""
    recomputed = publish_hash(bits, auth.algorithm_id)
    return HashCheck.MATCH if recomputed.digest == auth.digest else HashCheck.MISMATCH


@dataclass(frozen=True, repr=False)
class PartyConfig:
    """One party's session state: a secret rotation plus a tap budget.

    The rotation is fixed for the session and never appears in transcripts,
    wire records, or reprs.
    """

    secret_rotation: Rotation
    tap_budget: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "tap_budget", int(self.tap_budget))
        if self.tap_budget < 0:
            raise ValueError("tap_budget must be nonnegative")

    def __repr__(self) -> str:
        return f"PartyConfig(secret_rotation=<secret>, tap_budget={self.tap_budget})"


@dataclass(frozen=True)
class DetectionRule:
    """One-sided intensity alarm: observed < expected - z * sqrt(expected).

    expected_by_stage maps each checkpoint to the photon arrivals expected
    there; checkpoints absent from the map are simply not checked. Raising
    z_threshold only ever lowers the cutoff, so it can never turn a
    non-alarm into an alarm.
    """

    expected_by_stage: Mapping[Stage, float]
    z_threshold: float = 5.0

    def __post_init__(self) -> None:
        expectations = {s: float(e) for s, e in self.expected_by_stage.items()}
        object.__setattr__(self, "expected_by_stage", MappingProxyType(expectations))
        if self.z_threshold < 0.0:
            raise ValueError("z_threshold must be nonnegative")
        for stage, expected in expectations.items():
            if expected < 0.0 or not math.isfinite(expected):
                raise ValueError(f"expected arrivals at {stage.value} must be finite and nonnegative")

    def cutoff(self, stage: Stage) -> float | None:
        """Alarm threshold for a checkpoint, or None if it is unchecked."""
        expected = self.expected_by_stage.get(stage)
        if expected is None:
            return None
        return expected - self.z_threshold * math.sqrt(expected)

    def is_alarm(self, stage: Stage, arrivals: int) -> bool:
        cutoff = self.cutoff(stage)
        return cutoff is not None and arrivals < cutoff

    @classmethod
    def for_source(
        cls,
        source: SourceModel,
        tap_budget: int,
        z_threshold: float = 5.0,
    ) -> "DetectionRule":
        """Calibrated arrival ledger for the standard three-checkpoint run.

        Each hop applies the channel attenuation and each checkpoint then
        removes the fixed tap budget, so with a lossless channel and a
        budget of N/4 the expectations are N, 3N/4, and N/2.
        """
        a = source.attenuation
        s2 = source.mean_photons * a
        s3 = max(s2 - tap_budget, 0.0) * a
        final = max(s3 - tap_budget, 0.0) * a
        return cls({Stage.S2: s2, Stage.S3: s3, Stage.FINAL: final}, z_threshold)


# Per-event outcome vocabulary used in the transcript `decision` column:
#   sent    pulse emitted (stage 1 rows)
#   pass    intensity check passed
#   abort   intensity check alarmed
#   0 / 1   decoded bit value (final rows)
#   tie     final measurement tied, decode failed
#   empty   no photons left to decode
#   siphon  adversary capture on the preceding hop (simulator audit rows)
TRANSCRIPT_FIELDS = (
    "session_id",
    "bit_index",
    "stage",
    "consumed",
    "forwarded",
    "expected",
    "alarm",
    "decision",
)


@dataclass(frozen=True)
class StageEvent:
    """One per-pulse checkpoint record."""

    bit_index: int
    stage: Stage
    consumed: int
    forwarded: int
    expected: float
    alarm: bool
    decision: str


@dataclass
class SessionTranscript:
    """Ordered, auditable record of one session.

    decoded_bits is present only when the session was not aborted, and no
    events exist for stages after an abort. Secret rotations never appear
    here in any form.
    """

    session_id: str = "session"
    events: list[StageEvent] = field(default_factory=list)
    decoded_bits: str | None = None
    aborted: bool = False
    abort_stage: Stage | None = None
    hash_check: HashCheck = HashCheck.NOT_RUN
    low_power_continue: bool = False

    def alarm_count(self) -> int:
        return sum(1 for e in self.events if e.alarm)

    def arrivals(self, stage: Stage) -> list[int]:
        """Observed arrival counts (consumed + forwarded) at one checkpoint."""
        return [
            e.consumed + e.forwarded
            for e in self.events
            if e.stage is stage and e.decision != "siphon"
        ]

    def to_lines(self) -> list[str]:
        """Line-delimited event rows plus summary comment lines."""
        lines = [",".join(TRANSCRIPT_FIELDS)]
        for e in self.events:
            lines.append(
                f"{self.session_id},{e.bit_index},{e.stage.value},"
                f"{e.consumed},{e.forwarded},{e.expected!r},"
                f"{int(e.alarm)},{e.decision}"
            )
        lines.append(f"# aborted={str(self.aborted).lower()}")
        lines.append(f"# abort_stage={self.abort_stage.value if self.abort_stage else 'none'}")
        lines.append(f"# decoded_bits={self.decoded_bits if self.decoded_bits is not None else 'none'}")
        lines.append(f"# hash_check={self.hash_check.value}")
        lines.append(f"# low_power_continue={str(self.low_power_continue).lower()}")
        return lines

    def serialize(self) -> str:
        return "\n".join(self.to_lines()) + "\n"


class AbortSignal(Exception):
    """An intensity alarm fired; downstream stages must not run.

    Carries the stage that alarmed and the events recorded up to that point
    so the session transcript stays complete.
    """

    def __init__(self, stage: Stage, events: Sequence[StageEvent]):
        super().__init__(f"intensity alarm at stage {stage.value}")
        self.stage = stage
        self.events = list(events)


class DecodeError(Exception):
    """A final-stage pulse could not be decoded (tie or no photons left)."""

    def __init__(self, bit_index: int, reason: str, events: Sequence[StageEvent] = ()):
        super().__init__(f"bit {bit_index}: {reason}")
        self.bit_index = bit_index
        self.events = list(events)


def _require_stage(train: Sequence[Pulse], stage: Stage) -> None:
    for pulse in train:
        if pulse.stage_tag is not stage:
            raise ValueError(f"expected a {stage.value}-tagged train, got {pulse.stage_tag.value}")


def alice_stage1(
    bits: str,
    alice: PartyConfig,
    src: SourceModel,
    rng: np.random.Generator,
) -> tuple[list[Pulse], list[StageEvent]]:
    """Encode each bit, hide it under the sender's rotation, emit one pulse per bit."""
    validate_bits(bits)
    if not bits:
        raise ValueError("message must be nonempty")
    train: list[Pulse] = []
    events: list[StageEvent] = []
    for i, ch in enumerate(bits):
        pol = rotate(encode_bit(int(ch)), alice.secret_rotation)
        pulse = emit_pulse(src, pol, rng)
        train.append(pulse)
        events.append(
            StageEvent(i, Stage.S1, 0, pulse.photon_count, src.mean_photons, False, "sent")
        )
    return train, events


def _checked_tap(
    train: Sequence[Pulse],
    stage: Stage,
    tap_budget: int,
    rule: DetectionRule,
    alarm_enabled: bool = True,
) -> tuple[list[Pulse], list[StageEvent]]:
    """Tap every pulse, record events, and raise AbortSignal if any alarmed."""
    expected = rule.expected_by_stage.get(stage, math.nan)
    forwarded: list[Pulse] = []
    events: list[StageEvent] = []
    alarmed = False
    for i, pulse in enumerate(train):
        reading, kept = tap_intensity(pulse, tap_budget, expected=expected)
        arrivals = reading.photons_consumed + kept.photon_count
        alarm = alarm_enabled and rule.is_alarm(stage, arrivals)
        alarmed = alarmed or alarm
        events.append(
            StageEvent(
                i,
                stage,
                reading.photons_consumed,
                kept.photon_count,
                expected,
                alarm,
                "abort" if alarm else "pass",
            )
        )
        forwarded.append(kept)
    if alarmed:
        raise AbortSignal(stage, events)
    return forwarded, events


def bob_stage2(
    train: Sequence[Pulse],
    bob: PartyConfig,
    rule: DetectionRule,
    alarm_enabled: bool = True,
) -> tuple[list[Pulse], list[StageEvent]]:
    """Receive the outbound train: tap, alarm-check, and add the receiver's rotation.

    The alarm compares inferred arrivals (tap-consumed + forwarded) against
    the first-checkpoint expectation, before this tap has been subtracted.
    Raises AbortSignal when any pulse alarms; the check can be disabled to
    treat this reading as a sampling step only.
    """
    _require_stage(train, Stage.S1)
    tapped, events = _checked_tap(train, Stage.S2, bob.tap_budget, rule, alarm_enabled)
    out = [
        Pulse(p.photon_count, rotate(p.polarization, bob.secret_rotation), Stage.S2)
        for p in tapped
    ]
    return out, events


def alice_stage3(
    train: Sequence[Pulse],
    alice: PartyConfig,
    rule: DetectionRule,
    eve_read_floor: int = DEFAULT_EVE_READ_FLOOR,
) -> tuple[list[Pulse], list[StageEvent], bool]:
    """Receive the doubly rotated train: tap, alarm-check, strip the sender's rotation.

    Returns (train, events, low_power_continue). The advisory flag is True
    when every forwarded pulse is at or below eve_read_floor photons: the
    power is then too low for an eavesdropper to take another usable
    reading, so continuing the exchange is safe even near the alarm line.
    """
    _require_stage(train, Stage.S2)
    tapped, events = _checked_tap(train, Stage.S3, alice.tap_budget, rule)
    undo = inverse(alice.secret_rotation)
    out = [
        Pulse(p.photon_count, rotate(p.polarization, undo), Stage.S3) for p in tapped
    ]
    low_power = bool(out) and all(p.photon_count <= eve_read_floor for p in out)
    return out, events, low_power


def bob_finalize(
    train: Sequence[Pulse],
    bob: PartyConfig,
    rule: DetectionRule,
    rng: np.random.Generator,
) -> tuple[str, list[StageEvent]]:
    """Final tap and alarm check, strip the receiver's rotation, decode.

    Each bit is decided by majority vote over an HV measurement of all
    remaining photons. Ties and empty pulses raise DecodeError: an honest
    noiseless session leaves the angle exactly on an encoding axis, where
    the vote is unanimous, so either condition indicates tampering or
    misconfiguration.
    """
    _require_stage(train, Stage.S3)
    tapped, check_events = _checked_tap(train, Stage.FINAL, bob.tap_budget, rule)
    undo = inverse(bob.secret_rotation)
    expected = rule.expected_by_stage.get(Stage.FINAL, math.nan)
    events: list[StageEvent] = []
    bits: list[str] = []
    for i, pulse in enumerate(tapped):
        consumed = check_events[i].consumed
        bare = rotate(pulse.polarization, undo)
        if pulse.photon_count == 0:
            events.append(StageEvent(i, Stage.FINAL, consumed, 0, expected, False, "empty"))
            raise DecodeError(i, "no photons left to decode", events)
        outcome = measure(bare, pulse.photon_count, Basis.HV, rng)
        if outcome.v_count == outcome.h_count:
            events.append(
                StageEvent(i, Stage.FINAL, consumed, pulse.photon_count, expected, False, "tie")
            )
            raise DecodeError(i, "majority vote tied", events)
        bit = "1" if outcome.v_count > outcome.h_count else "0"
        events.append(
            StageEvent(i, Stage.FINAL, consumed, pulse.photon_count, expected, False, bit)
        )
        bits.append(bit)
    return "".join(bits), events


@dataclass(frozen=True)
class Scenario:
    """Everything needed to run one session end to end."""

    message_bits: str
    source: SourceModel
    alice: PartyConfig
    bob: PartyConfig
    rule: DetectionRule
    eve: EveStrategy | None = None
    verify_hash_always: bool = True
    stage2_alarm: bool = True
    eve_read_floor: int = DEFAULT_EVE_READ_FLOOR
    session_id: str = "session"

    def __post_init__(self) -> None:
        validate_bits(self.message_bits)
        if not self.message_bits:
            raise ValueError("message must be nonempty")


def _hop(
    train: list[Pulse],
    hop: Stage,
    scenario: Scenario,
    knowledge: EveKnowledge | None,
    transcript: SessionTranscript,
    rng: np.random.Generator,
) -> list[Pulse]:
    """One channel transmission: benign attenuation, then any configured tap."""
    if scenario.source.attenuation < 1.0:
        train = [attenuate(p, scenario.source, rng) for p in train]
    eve = scenario.eve
    if eve is None or eve.mode is not EveMode.SIPHON:
        return train
    forwarded, captured = eve_intercept(train, hop, eve, rng)
    if knowledge is not None:
        knowledge.absorb(hop, captured)
    for i, taken in enumerate(captured):
        if taken.photon_count:
            transcript.events.append(
                StageEvent(
                    i, hop, taken.photon_count, forwarded[i].photon_count,
                    math.nan, False, "siphon",
                )
            )
    return forwarded


def run_session(
    scenario: Scenario,
    rng: np.random.Generator,
    knowledge: EveKnowledge | None = None,
) -> SessionTranscript:
    """Execute stages 1 through finalize and record everything that happened.

    Interference is injected on each hop per the adversary strategy. An
    impersonating adversary replaces the sender outright: she runs the
    whole exchange with her own rotation and substitute message, which
    keeps the intensity ledger honest and leaves only the digest comparison
    to expose her. Stage aborts and decode failures land in the transcript
    rather than propagating.

    A caller studying the adversary may pass its own EveKnowledge to
    harvest what she captured; otherwise one is created and discarded.
    """
    transcript = SessionTranscript(session_id=scenario.session_id)
    auth = publish_hash(scenario.message_bits)
    eve = scenario.eve

    sender = scenario.alice
    sent_bits = scenario.message_bits
    impersonating = eve is not None and eve.mode is EveMode.IMPERSONATE
    if impersonating:
        rotation = eve.rotation if eve.rotation is not None else random_rotation(rng)
        sender = PartyConfig(rotation, scenario.alice.tap_budget)
        sent_bits = eve.substitute_bits
    if knowledge is None and eve is not None and eve.mode is EveMode.SIPHON:
        knowledge = EveKnowledge()

    try:
        train, events = alice_stage1(sent_bits, sender, scenario.source, rng)
        transcript.events.extend(events)
        train = _hop(train, Stage.S1, scenario, knowledge, transcript, rng)

        train, events = bob_stage2(
            train, scenario.bob, scenario.rule, alarm_enabled=scenario.stage2_alarm
        )
        transcript.events.extend(events)
        train = _hop(train, Stage.S2, scenario, knowledge, transcript, rng)

        train, events, low_power = alice_stage3(
            train, sender, scenario.rule, eve_read_floor=scenario.eve_read_floor
        )
        transcript.events.extend(events)
        transcript.low_power_continue = low_power
        train = _hop(train, Stage.S3, scenario, knowledge, transcript, rng)

        decoded, events = bob_finalize(train, scenario.bob, scenario.rule, rng)
        transcript.events.extend(events)
        transcript.decoded_bits = decoded
    except AbortSignal as signal:
        transcript.events.extend(signal.events)
        transcript.aborted = True
        transcript.abort_stage = signal.stage
        return transcript
    except DecodeError as failure:
        transcript.events.extend(failure.events)
        transcript.aborted = True
        transcript.abort_stage = Stage.FINAL
        return transcript

    if scenario.verify_hash_always or impersonating:
        transcript.hash_check = verify_hash(decoded, auth)
    return transcript
