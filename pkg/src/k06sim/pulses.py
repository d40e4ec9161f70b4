"""Photon pulses: Poisson emission, channel splits, and intensity taps.

A pulse is a bundle of identically polarized photons. The source is
Poisson, so multi-photon pulses are the norm rather than the exception,
which is the entire reason photon siphoning is possible and intensity
monitoring is informative. Channel operations only ever remove photons,
never alter polarization, and conserve counts exactly across splits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .quantum import PolarizationState


class Stage(Enum):
    """Leg of the three-stage exchange a pulse or reading belongs to."""

    S1 = "S1"
    S2 = "S2"
    S3 = "S3"
    FINAL = "FINAL"


@dataclass(frozen=True)
class SourceModel:
    """Pulsed photon source with Poisson photon-number statistics.

    mean_photons is the average photon count per pulse. attenuation is the
    per-hop transmission applied by `attenuate`; the default 1.0 models a
    lossless channel, so any intensity deficit is attributable to a tap.
    """

    mean_photons: float
    attenuation: float = 1.0

    def __post_init__(self) -> None:
        if not self.mean_photons > 0.0 or not math.isfinite(self.mean_photons):
            raise ValueError(f"mean_photons must be positive, got {self.mean_photons}")
        if not 0.0 < self.attenuation <= 1.0:
            raise ValueError(f"attenuation must be in (0, 1], got {self.attenuation}")


@dataclass(frozen=True)
class Pulse:
    """A photon bundle with a shared polarization and a stage tag."""

    photon_count: int
    polarization: PolarizationState
    stage_tag: Stage = Stage.S1

    def __post_init__(self) -> None:
        object.__setattr__(self, "photon_count", int(self.photon_count))
        if self.photon_count < 0:
            raise ValueError("photon_count must be nonnegative")


@dataclass(frozen=True)
class IntensityReading:
    """Record of the photons destroyed by one intensity tap."""

    photons_consumed: int
    stage_tag: Stage
    expected: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "photons_consumed", int(self.photons_consumed))
        if self.photons_consumed < 0:
            raise ValueError("photons_consumed must be nonnegative")


def emit_pulse(
    src: SourceModel, pol: PolarizationState, rng: np.random.Generator
) -> Pulse:
    """Emit one pulse with a Poisson photon count.

    A count of zero is legal and physically meaningful (an empty pulse).
    """
    return Pulse(int(rng.poisson(src.mean_photons)), pol, Stage.S1)


def siphon(p: Pulse, n: int) -> tuple[Pulse, Pulse]:
    """Remove exactly n photons (clamped at what is available).

    Returns (taken, forwarded). Both halves keep the input polarization and
    stage tag, and counts are conserved exactly.
    """
    n = int(n)
    if n < 0:
        raise ValueError("siphon count must be nonnegative")
    taken = min(n, p.photon_count)
    return (
        Pulse(taken, p.polarization, p.stage_tag),
        Pulse(p.photon_count - taken, p.polarization, p.stage_tag),
    )


def siphon_fraction(
    p: Pulse, f: float, rng: np.random.Generator
) -> tuple[Pulse, Pulse]:
    """Divert each photon independently with probability f (beam splitter).

    The taken count is binomial in the pulse size; a physical tap cannot
    count-select photons, so this is the realistic form of a siphon.
    """
    if not 0.0 <= f <= 1.0:
        raise ValueError(f"siphon fraction must be in [0, 1], got {f}")
    taken = int(rng.binomial(p.photon_count, f)) if p.photon_count else 0
    return (
        Pulse(taken, p.polarization, p.stage_tag),
        Pulse(p.photon_count - taken, p.polarization, p.stage_tag),
    )


def attenuate(p: Pulse, src: SourceModel, rng: np.random.Generator) -> Pulse:
    """Apply per-hop channel transmission; lossless sources pass through."""
    if src.attenuation == 1.0:
        return p
    kept = int(rng.binomial(p.photon_count, src.attenuation)) if p.photon_count else 0
    return Pulse(kept, p.polarization, p.stage_tag)


def tap_intensity(
    p: Pulse, tap_photons: int, expected: float = 0.0
) -> tuple[IntensityReading, Pulse]:
    """Consume a fixed photon budget to read the pulse intensity.

    Returns (reading, forwarded). The reading destroys min(tap_photons,
    available) photons and preserves the stage tag; `expected` is carried
    through for downstream alarm bookkeeping.
    """
    tap_photons = int(tap_photons)
    if tap_photons < 0:
        raise ValueError("tap budget must be nonnegative")
    consumed = min(tap_photons, p.photon_count)
    reading = IntensityReading(consumed, p.stage_tag, expected)
    return reading, Pulse(p.photon_count - consumed, p.polarization, p.stage_tag)
