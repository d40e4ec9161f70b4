"""Eavesdropper strategies against the three-stage exchange.

Two attack families are modeled. A siphoning Eve beam-splits photons off
each hop, measures them, and combines the three per-stage angle estimates
so that both secret rotations cancel, leaving the message angle. An
impersonating Eve abandons stealth on the channel entirely and plays the
sender role with her own message and rotation; intensity monitoring cannot
see her, only the published message digest can.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from .pulses import Pulse, SourceModel, Stage, emit_pulse, siphon, siphon_fraction
from .quantum import (
    AmbiguousEstimate,
    Basis,
    PolarizationState,
    Rotation,
    encode_bit,
    estimate_angle,
    measure,
    nearest_bit,
    random_rotation,
    rotate,
)

# Hops Eve can tap, keyed by the stage tag of the train in flight.
HOPS = (Stage.S1, Stage.S2, Stage.S3)


class EveMode(Enum):
    NONE = "NONE"
    SIPHON = "SIPHON"
    IMPERSONATE = "IMPERSONATE"


class InsufficientCapture(Exception):
    """Eve lacks a usable angle estimate for some stage of a bit."""


def min_photons_for_rmse(target_rmse: float) -> int:
    """Photons per tap Eve needs for a given angle-estimate RMSE.

    With the captured photons split evenly over two bases, the delta-method
    standard error of the two-basis estimate is about 1/sqrt(2n), so
    n = 1 / (2 * rmse^2).
    """
    if not target_rmse > 0.0:
        raise ValueError("target RMSE must be positive")
    return math.ceil(1.0 / (2.0 * target_rmse * target_rmse))


# Below this many photons a second tap cannot estimate the angle to 0.1 rad,
# which is the default sense in which a transmission is "too weak to read".
DEFAULT_EVE_READ_FLOOR = min_photons_for_rmse(0.1)


@dataclass(frozen=True)
class EveStrategy:
    """Adversary configuration.

    Siphon amounts are keyed by the hop being tapped (the stage tag of the
    train in flight). A fraction entry diverts each photon independently; a
    count entry removes exactly that many photons when available. A hop may
    carry at most one of the two forms.
    """

    mode: EveMode = EveMode.NONE
    fraction_per_hop: Mapping[Stage, float] = field(default_factory=dict)
    count_per_hop: Mapping[Stage, int] = field(default_factory=dict)
    substitute_bits: str | None = None
    rotation: Rotation | None = None

    def __post_init__(self) -> None:
        fractions = dict(self.fraction_per_hop)
        counts = dict(self.count_per_hop)
        object.__setattr__(self, "fraction_per_hop", MappingProxyType(fractions))
        object.__setattr__(self, "count_per_hop", MappingProxyType(counts))
        overlap = set(fractions) & set(counts)
        if overlap:
            raise ValueError(f"hops configured with both forms of siphon: {overlap}")
        for hop, f in fractions.items():
            if hop not in HOPS:
                raise ValueError(f"{hop} is not a tappable hop")
            if not 0.0 <= f <= 1.0:
                raise ValueError(f"siphon fraction must be in [0, 1], got {f}")
        for hop, n in counts.items():
            if hop not in HOPS:
                raise ValueError(f"{hop} is not a tappable hop")
            if n < 0:
                raise ValueError(f"siphon count must be nonnegative, got {n}")
        if self.mode is EveMode.SIPHON:
            if not fractions and not counts:
                raise ValueError("SIPHON mode needs at least one per-hop amount")
        elif fractions or counts:
            raise ValueError(f"{self.mode.value} mode takes no siphon amounts")
        if self.mode is EveMode.IMPERSONATE:
            if not self.substitute_bits or set(self.substitute_bits) - {"0", "1"}:
                raise ValueError("IMPERSONATE mode needs a nonempty bit string")
        elif self.substitute_bits is not None:
            raise ValueError(f"{self.mode.value} mode takes no substitute bits")

    @classmethod
    def none(cls) -> "EveStrategy":
        return cls(EveMode.NONE)

    @classmethod
    def siphon_fraction_all(
        cls, f: float, hops: Sequence[Stage] = HOPS
    ) -> "EveStrategy":
        """Beam-split every listed hop at the same fraction."""
        return cls(EveMode.SIPHON, fraction_per_hop={hop: f for hop in hops})

    @classmethod
    def siphon_count_all(cls, n: int, hops: Sequence[Stage] = HOPS) -> "EveStrategy":
        """Remove exactly n photons per pulse on every listed hop."""
        return cls(EveMode.SIPHON, count_per_hop={hop: n for hop in hops})

    @classmethod
    def impersonate(
        cls, bits: str, rotation: Rotation | None = None
    ) -> "EveStrategy":
        """Replace the sender entirely; rotation is drawn at run time if None."""
        return cls(EveMode.IMPERSONATE, substitute_bits=bits, rotation=rotation)


@dataclass(frozen=True)
class AngleEstimate:
    """One per-stage polarization estimate and the photons it consumed."""

    angle: float
    photons_used: int


@dataclass(frozen=True)
class RecoveredBit:
    """Eve's reconstructed message angle and the induced bit decision."""

    angle: float
    bit: int


class EveKnowledge:
    """What Eve accumulates in one session.

    Holds captured light per (bit, hop) until `measure_captures` destroys it
    into per-stage angle estimates; `eve_correlate` then fills `recovered`.
    Session-local mutable state, owned by a single session executor.
    """

    def __init__(self) -> None:
        self._light: dict[tuple[int, Stage], Pulse] = {}
        self._estimates: dict[tuple[int, Stage], AngleEstimate] = {}
        self.recovered: dict[int, RecoveredBit] = {}

    def absorb(self, hop: Stage, captured: Sequence[Pulse]) -> None:
        """Store one hop's captured pulses, indexed by bit position."""
        for i, pulse in enumerate(captured):
            self._light[(i, hop)] = pulse

    def captured_photons(self, bit_index: int, hop: Stage) -> int:
        pulse = self._light.get((bit_index, hop))
        if pulse is not None:
            return pulse.photon_count
        est = self._estimates.get((bit_index, hop))
        return est.photons_used if est else 0

    def bit_indices(self) -> list[int]:
        keys = {i for i, _ in self._light} | {i for i, _ in self._estimates}
        return sorted(keys)

    def measure_captures(self, rng: np.random.Generator) -> None:
        """Turn all stored light into angle estimates, destroying it.

        Photons are split evenly across the HV and diagonal bases. A capture
        of fewer than two photons cannot populate both bases and yields no
        estimate; neither does an unresolvable two-basis outcome.
        """
        for key, pulse in sorted(self._light.items(), key=lambda kv: (kv[0][0], kv[0][1].value)):
            est = estimate_from_photons(pulse.polarization, pulse.photon_count, rng)
            if est is not None:
                self._estimates[key] = AngleEstimate(est, pulse.photon_count)
        self._light.clear()

    def estimate(self, bit_index: int, hop: Stage) -> AngleEstimate | None:
        return self._estimates.get((bit_index, hop))


def estimate_from_photons(
    polarization: PolarizationState, photons: int, rng: np.random.Generator
) -> float | None:
    """Measure a photon bundle in two bases and estimate its angle.

    Returns None when the bundle is too small to populate both bases or the
    outcome is ambiguous.
    """
    if photons < 2:
        return None
    n_diag = photons // 2
    n_hv = photons - n_diag
    hv = measure(polarization, n_hv, Basis.HV, rng)
    diag = measure(polarization, n_diag, Basis.DIAGONAL, rng)
    try:
        return estimate_angle(hv, diag)
    except AmbiguousEstimate:
        return None


def eve_intercept(
    train: Sequence[Pulse],
    hop: Stage,
    strategy: EveStrategy,
    rng: np.random.Generator,
) -> tuple[list[Pulse], list[Pulse]]:
    """Split each pulse of a hop per the strategy; polarization is untouched.

    Returns (forwarded, captured), both indexed by bit position. Hops the
    strategy does not configure pass through with empty captures.
    """
    if strategy.mode is not EveMode.SIPHON:
        raise ValueError("eve_intercept requires a SIPHON strategy")
    f = strategy.fraction_per_hop.get(hop)
    n = strategy.count_per_hop.get(hop)
    forwarded: list[Pulse] = []
    captured: list[Pulse] = []
    for pulse in train:
        if f is not None:
            taken, kept = siphon_fraction(pulse, f, rng)
        else:
            taken, kept = siphon(pulse, n if n is not None else 0)
        captured.append(taken)
        forwarded.append(kept)
    return forwarded, captured


def correlate_angles(a1: float, a2: float, a3: float) -> float:
    """Cancel both secret rotations out of the three stage angles.

    The outbound train carries message + sender secrets, the middle train
    both secrets, and the return train message + receiver secret, so
    (a1 + a3 - a2) mod pi is exactly the message angle.
    """
    return (a1 + a3 - a2) % math.pi


def eve_correlate(knowledge: EveKnowledge, bit_index: int) -> RecoveredBit:
    """Combine one bit's three stage estimates into a message-angle estimate.

    Raises InsufficientCapture when any stage estimate is missing; the
    result is also cached on the knowledge object.
    """
    estimates = []
    for hop in HOPS:
        est = knowledge.estimate(bit_index, hop)
        if est is None:
            raise InsufficientCapture(
                f"bit {bit_index}: no usable estimate for hop {hop.value}"
            )
        estimates.append(est.angle)
    angle = correlate_angles(*estimates)
    recovered = RecoveredBit(angle, nearest_bit(angle))
    knowledge.recovered[bit_index] = recovered
    return recovered


def eve_impersonate(
    strategy: EveStrategy, src: SourceModel, rng: np.random.Generator
) -> tuple[list[Pulse], Rotation]:
    """Forge an outbound train carrying Eve's bits under her own rotation.

    Pulses are emitted at full source strength, so the intensity ledger
    looks honest; only a published-digest comparison can expose the forgery.
    Returns the train together with the rotation used (drawn here when the
    strategy left it unspecified), since Eve must strip it again on her
    later turn in the exchange.
    """
    if strategy.mode is not EveMode.IMPERSONATE:
        raise ValueError("eve_impersonate requires an IMPERSONATE strategy")
    rotation = strategy.rotation if strategy.rotation is not None else random_rotation(rng)
    train = [
        emit_pulse(src, rotate(encode_bit(int(ch)), rotation), rng)
        for ch in strategy.substitute_bits
    ]
    return train, rotation
