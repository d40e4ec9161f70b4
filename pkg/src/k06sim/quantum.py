"""Polarization algebra for the three-stage rotation protocol.

A linear polarization angle carries one message bit (horizontal = 0,
vertical = 1). Each party scrambles it with a secret planar rotation;
because all rotations share one axis they commute, which is what lets the
two secrets be peeled off in any order across the three stages. Photon
counting is modeled as independent per-photon projection, so measured
counts are binomial in the projection probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

TWO_PI = 2.0 * math.pi
HALF_PI = math.pi / 2.0


class Basis(Enum):
    """Measurement basis for photon counting."""

    HV = "HV"
    DIAGONAL = "DIAGONAL"


def wrapped_distance(a: float, b: float, period: float = math.pi) -> float:
    """Shortest distance between two angles on a circle of the given period."""
    d = math.fabs(a - b) % period
    return min(d, period - d)


@dataclass(frozen=True)
class PolarizationState:
    """Linear polarization angle, stored as its canonical value in [0, pi).

    Orientations theta and theta + pi are the same physical state, so the
    angle is reduced modulo pi on construction.
    """

    angle: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "angle", float(self.angle) % math.pi)


@dataclass(frozen=True)
class Rotation:
    """Planar polarization rotation by theta radians, canonical in [0, 2pi).

    All rotations share the propagation axis, so composition is angle
    addition and any two rotations commute.
    """

    theta: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", float(self.theta) % TWO_PI)


IDENTITY = Rotation(0.0)


def compose(a: Rotation, b: Rotation) -> Rotation:
    """Rotation equivalent to applying a and then b (order irrelevant)."""
    return Rotation((a.theta + b.theta) % TWO_PI)


def inverse(a: Rotation) -> Rotation:
    """Rotation undoing a: compose(a, inverse(a)) is the identity."""
    return Rotation((TWO_PI - a.theta) % TWO_PI)


def rotate(state: PolarizationState, r: Rotation) -> PolarizationState:
    """Apply a rotation to a polarization state."""
    return PolarizationState((state.angle + r.theta) % math.pi)


def random_rotation(rng: np.random.Generator) -> Rotation:
    """Draw a uniformly random secret rotation."""
    return Rotation(rng.uniform(0.0, TWO_PI))


def encode_bit(bit: int) -> PolarizationState:
    """Map bit 0 to horizontal (angle 0) and bit 1 to vertical (angle pi/2)."""
    if bit not in (0, 1):
        raise ValueError(f"bit must be 0 or 1, got {bit!r}")
    return PolarizationState(0.0 if bit == 0 else HALF_PI)


def nearest_bit(angle: float) -> int:
    """Bit whose encoding angle is closest to the given angle (mod pi).

    Ties (angle exactly between the two encodings) resolve to 0.
    """
    return 0 if wrapped_distance(angle, 0.0) <= wrapped_distance(angle, HALF_PI) else 1


@dataclass(frozen=True)
class MeasurementOutcome:
    """Photon-counting result of a projective measurement.

    v_count + h_count always equals the number of photons consumed by the
    measurement; the photons themselves are destroyed.
    """

    v_count: int
    h_count: int
    basis: Basis

    def __post_init__(self) -> None:
        object.__setattr__(self, "v_count", int(self.v_count))
        object.__setattr__(self, "h_count", int(self.h_count))
        if self.v_count < 0 or self.h_count < 0:
            raise ValueError("photon counts must be nonnegative")

    @property
    def photons(self) -> int:
        return self.v_count + self.h_count


def vertical_probability(state: PolarizationState, basis: Basis) -> float:
    """Per-photon probability of projecting onto the basis's vertical port."""
    offset = 0.0 if basis is Basis.HV else math.pi / 4.0
    p = math.sin(state.angle - offset) ** 2
    return min(1.0, max(0.0, p))


def measure(
    state: PolarizationState,
    photons: int,
    basis: Basis,
    rng: np.random.Generator,
) -> MeasurementOutcome:
    """Destructively count photons in the given basis.

    Each photon projects independently, so the vertical count is binomial
    with p = sin^2(angle) in the HV basis and p = sin^2(angle - pi/4) in
    the diagonal basis. Deterministic for a fixed generator state.
    """
    photons = int(photons)
    if photons < 0:
        raise ValueError("cannot measure a negative number of photons")
    if photons == 0:
        return MeasurementOutcome(0, 0, basis)
    p = vertical_probability(state, basis)
    v = int(rng.binomial(photons, p))
    return MeasurementOutcome(v, photons - v, basis)


class AmbiguousEstimate(ValueError):
    """Raised when counts cannot pin the polarization angle to one candidate."""


def _diagonal_loglik(candidate: float, diag: MeasurementOutcome) -> float:
    p = vertical_probability(PolarizationState(candidate), Basis.DIAGONAL)
    if p <= 0.0:
        return 0.0 if diag.v_count == 0 else -math.inf
    if p >= 1.0:
        return 0.0 if diag.h_count == 0 else -math.inf
    return diag.v_count * math.log(p) + diag.h_count * math.log1p(-p)


def estimate_angle(hv: MeasurementOutcome, diag: MeasurementOutcome) -> float:
    """Maximum-likelihood polarization angle from counts in two bases.

    The HV counts fix sin^2(theta), which leaves the candidates theta0 and
    pi - theta0; the diagonal counts select between them. Returns an angle
    in [0, pi).

    Raises AmbiguousEstimate when the HV outcome is empty, or when the
    candidate ambiguity is real (sin^2 estimate strictly between 0 and 1)
    but no diagonal photons were consumed. The latter is what happens to an
    eavesdropper who measured in a single basis only.
    """
    if hv.basis is not Basis.HV or diag.basis is not Basis.DIAGONAL:
        raise ValueError("estimate_angle expects one HV and one DIAGONAL outcome")
    if hv.photons == 0:
        raise AmbiguousEstimate("no photons consumed in the HV basis")
    s = hv.v_count / hv.photons
    theta0 = math.asin(min(1.0, math.sqrt(s)))
    if s == 0.0 or s == 1.0:
        # Candidates coincide: 0 and pi are the same state, pi/2 is its own mirror.
        return theta0 % math.pi
    if diag.photons == 0:
        raise AmbiguousEstimate(
            "sin^2 estimate is ambiguous and no diagonal photons were consumed"
        )
    best = max((theta0, math.pi - theta0), key=lambda c: _diagonal_loglik(c, diag))
    return best % math.pi
