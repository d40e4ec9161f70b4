"""Detection probability, adversary leakage, and their tradeoff.

Monte Carlo estimates are always paired with an independent route: alarm
probabilities have an exact enumeration oracle over the thinned-Poisson
photon statistics, and proportions carry Wilson intervals, which stay
honest near 0 and 1 where these experiments live. Sweep cells draw their
random streams from (master_seed, cell index), so result tables are
reproducible bit for bit regardless of execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Iterable, Sequence

import numpy as np

from .adversary import EveStrategy, correlate_angles, estimate_from_photons
from .protocol import DetectionRule, PartyConfig, Scenario, default_tap_budget, run_session
from .pulses import SourceModel, Stage
from .quantum import (
    PolarizationState,
    encode_bit,
    nearest_bit,
    random_rotation,
    wrapped_distance,
)

# Above this nominal strength the pmf enumeration stops being a desk-scale check.
ORACLE_MU_LIMIT = 1e5


class TruncationError(ValueError):
    """The exact oracle cannot cover the distribution within its feasibility bound."""


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    if not 0 <= successes <= trials:
        raise ValueError("successes must lie in [0, trials]")
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must be in (0, 1)")
    z = NormalDist().inv_cdf(0.5 + confidence / 2.0)
    n = float(trials)
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2.0 * n)) / denom
    half = (z / denom) * math.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n))
    return max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class ProportionEstimate:
    """A binomial proportion with its Wilson interval."""

    point: float
    lo: float
    hi: float
    successes: int
    trials: int

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi

    @classmethod
    def from_counts(
        cls, successes: int, trials: int, confidence: float = 0.95
    ) -> "ProportionEstimate":
        lo, hi = wilson_interval(successes, trials, confidence)
        return cls(successes / trials, lo, hi, successes, trials)


def _poisson_lower_tail(lam: float, k_max: int) -> float:
    """Sum of the Poisson(lam) pmf over 0..k_max, term by term in log space.

    Independent of any sampling path: terms below double-precision underflow
    contribute exactly nothing and are safely skipped.
    """
    if k_max < 0:
        return 0.0
    if lam == 0.0:
        return 1.0
    log_lam = math.log(lam)
    total = 0.0
    for k in range(k_max + 1):
        log_term = -lam + k * log_lam - math.lgamma(k + 1)
        if log_term > -745.0:
            total += math.exp(log_term)
    return min(total, 1.0)


def _alarm_k_max(rule: DetectionRule, stage: Stage) -> int:
    cutoff = rule.cutoff(stage)
    if cutoff is None:
        raise ValueError(f"the rule does not check stage {stage.value}")
    # Alarm iff arrivals < cutoff, arrivals integer.
    return math.ceil(cutoff) - 1


def exact_detection_oracle(
    mu: float, f: float, rule: DetectionRule, stage: Stage = Stage.S2
) -> float:
    """Exact per-pulse alarm probability at one checkpoint under a beam-split tap.

    An adversary diverting each photon with probability f on the hop into
    the checkpoint turns the Poisson(mu) arrivals into Poisson((1-f) mu),
    so the alarm probability is that distribution's mass below the cutoff.
    """
    if not 0.0 <= f <= 1.0:
        raise ValueError("fraction must be in [0, 1]")
    if not mu > 0.0:
        raise ValueError("mu must be positive")
    if mu > ORACLE_MU_LIMIT:
        raise TruncationError(f"mu={mu} exceeds enumeration bound {ORACLE_MU_LIMIT:g}")
    return _poisson_lower_tail((1.0 - f) * mu, _alarm_k_max(rule, stage))


def exact_count_oracle(
    mu: float, n: int, rule: DetectionRule, stage: Stage = Stage.S2
) -> float:
    """Exact per-pulse alarm probability when exactly n photons are removed.

    Arrivals are max(N - n, 0) for N ~ Poisson(mu); with a positive cutoff
    the alarm event is exactly N < cutoff + n.
    """
    if n < 0:
        raise ValueError("count must be nonnegative")
    if not mu > 0.0:
        raise ValueError("mu must be positive")
    if mu > ORACLE_MU_LIMIT:
        raise TruncationError(f"mu={mu} exceeds enumeration bound {ORACLE_MU_LIMIT:g}")
    cutoff = rule.cutoff(stage)
    if cutoff is None:
        raise ValueError(f"the rule does not check stage {stage.value}")
    if cutoff <= 0.0:
        return 0.0
    return _poisson_lower_tail(mu, math.ceil(cutoff + n) - 1)


def _random_bits(length: int, rng: np.random.Generator) -> str:
    return "".join("1" if b else "0" for b in rng.integers(0, 2, size=length))


def _session_scenario(
    mu: float,
    eve: EveStrategy | None,
    rule: DetectionRule,
    message_length: int,
    tap_budget: int | None,
    rng: np.random.Generator,
) -> Scenario:
    tap = default_tap_budget(mu) if tap_budget is None else tap_budget
    return Scenario(
        message_bits=_random_bits(message_length, rng),
        source=SourceModel(mu),
        alice=PartyConfig(random_rotation(rng), tap),
        bob=PartyConfig(random_rotation(rng), tap),
        rule=rule,
        eve=eve,
    )


def detection_probability(
    mu: float,
    eve: EveStrategy | None,
    rule: DetectionRule,
    trials: int,
    seed: int,
    message_length: int = 1,
    tap_budget: int | None = None,
    confidence: float = 0.95,
) -> ProportionEstimate:
    """Fraction of sessions aborted under the given adversary, with interval.

    Secrets and message bits are redrawn every trial; with no adversary this
    estimates the false-alarm rate of the rule itself.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials for a meaningful interval")
    rng = np.random.default_rng(seed)
    aborted = 0
    for _ in range(trials):
        scenario = _session_scenario(mu, eve, rule, message_length, tap_budget, rng)
        if run_session(scenario, rng).aborted:
            aborted += 1
    return ProportionEstimate.from_counts(aborted, trials, confidence)


def session_abort_probability(per_pulse: float, bits: int) -> float:
    """Session-level abort probability for independent per-pulse alarms."""
    return 1.0 - (1.0 - per_pulse) ** bits


@dataclass(frozen=True)
class ExperimentPlan:
    """Grid of sweep cells plus the master seed that makes them reproducible.

    Exactly one of siphon_counts / siphon_fractions selects the adversary's
    tap form; each amount applies to all three hops.
    """

    mu_values: tuple[float, ...]
    z_thresholds: tuple[float, ...]
    siphon_counts: tuple[int, ...] | None = None
    siphon_fractions: tuple[float, ...] | None = None
    message_length: int = 8
    trials: int = 200
    master_seed: int = 0
    accuracy_target: float = 0.95

    def __post_init__(self) -> None:
        if (self.siphon_counts is None) == (self.siphon_fractions is None):
            raise ValueError("exactly one of siphon_counts / siphon_fractions is required")
        if not self.mu_values or not self.z_thresholds:
            raise ValueError("grid must be nonempty")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.message_length < 1:
            raise ValueError("message_length must be at least 1")
        if not 0.0 < self.accuracy_target <= 1.0:
            raise ValueError("accuracy_target must be in (0, 1]")

    @property
    def siphon_values(self) -> tuple[float, ...] | tuple[int, ...]:
        return self.siphon_counts if self.siphon_counts is not None else self.siphon_fractions

    def cells(self) -> list[tuple[float, float | int, float]]:
        """Deterministic (mu, siphon, z) cell order."""
        return [
            (mu, amount, z)
            for mu in self.mu_values
            for amount in self.siphon_values
            for z in self.z_thresholds
        ]


@dataclass(frozen=True)
class TradeoffPoint:
    """Detection and leakage for one sweep cell."""

    mu: float
    siphon: float | int
    z_threshold: float
    trials: int
    detection: ProportionEstimate
    eve_accuracy: ProportionEstimate
    angle_rmse: float
    oracle_value: float


CSV_HEADER = "mu,n_or_f,z,trials,detection,det_lo,det_hi,eve_acc,acc_lo,acc_hi,rmse,oracle_value"


def tradeoff_csv_lines(points: Iterable[TradeoffPoint]) -> list[str]:
    """One header plus one row per cell, in the plan's cell order."""
    lines = [CSV_HEADER]
    for p in points:
        lines.append(
            f"{p.mu!r},{p.siphon!r},{p.z_threshold!r},{p.trials},"
            f"{p.detection.point!r},{p.detection.lo!r},{p.detection.hi!r},"
            f"{p.eve_accuracy.point!r},{p.eve_accuracy.lo!r},{p.eve_accuracy.hi!r},"
            f"{p.angle_rmse!r},{p.oracle_value!r}"
        )
    return lines


def _cell_strategy(amount: float | int, counts_mode: bool) -> EveStrategy:
    if counts_mode:
        return EveStrategy.siphon_count_all(int(amount))
    return EveStrategy.siphon_fraction_all(float(amount))


def _cell_oracle(mu: float, amount: float | int, counts_mode: bool, rule: DetectionRule) -> float:
    if counts_mode:
        return exact_count_oracle(mu, int(amount), rule)
    return exact_detection_oracle(mu, float(amount), rule)


def simulate_bit_recovery(
    photons_per_stage: Sequence[int], rng: np.random.Generator
) -> tuple[bool, float | None]:
    """One decoupled recovery attempt against a random bit and random secrets.

    The adversary is handed the given number of photons from each of the
    three stage polarizations, estimates each angle, and correlates. When a
    stage yields no usable estimate she falls back to a fair coin. Returns
    (guess correct?, squared wrapped angle error or None for the coin case).
    """
    bit = int(rng.integers(0, 2))
    theta_x = encode_bit(bit).angle
    theta_a = rng.uniform(0.0, 2.0 * math.pi)
    theta_b = rng.uniform(0.0, 2.0 * math.pi)
    stage_angles = (
        (theta_x + theta_a) % math.pi,
        (theta_x + theta_a + theta_b) % math.pi,
        (theta_x + theta_b) % math.pi,
    )
    estimates = []
    for angle, photons in zip(stage_angles, photons_per_stage):
        est = estimate_from_photons(PolarizationState(angle), int(photons), rng)
        if est is None:
            return int(rng.integers(0, 2)) == bit, None
        estimates.append(est)
    recovered = correlate_angles(*estimates)
    return nearest_bit(recovered) == bit, wrapped_distance(recovered, theta_x) ** 2


def run_cell(
    mu: float,
    amount: float | int,
    z: float,
    plan: ExperimentPlan,
    rng: np.random.Generator,
    confidence: float = 0.95,
) -> TradeoffPoint:
    """Run one sweep cell: the detection and leakage sides of the tradeoff.

    Detection is the channel experiment: full sessions with the adversary
    tapping every hop, counting aborts. Accuracy and RMSE are the estimator
    experiment: the adversary is handed the cell's photon allotment from
    each stage directly (exactly n in count mode; a beam-split share of a
    fresh pulse per stage in fraction mode), independent of whether a real
    session would have been cut short by an alarm. The pairing answers the
    operational question: by the time a tap is informative, how loudly does
    it ring the alarm.
    """
    counts_mode = plan.siphon_counts is not None
    tap = default_tap_budget(mu)
    source = SourceModel(mu)
    rule = DetectionRule.for_source(source, tap, z)
    strategy = _cell_strategy(amount, counts_mode)
    zero_tap = (counts_mode and int(amount) == 0) or (not counts_mode and float(amount) == 0.0)

    aborted = 0
    for _ in range(plan.trials):
        scenario = Scenario(
            message_bits=_random_bits(plan.message_length, rng),
            source=source,
            alice=PartyConfig(random_rotation(rng), tap),
            bob=PartyConfig(random_rotation(rng), tap),
            rule=rule,
            eve=None if zero_tap else strategy,
        )
        if run_session(scenario, rng).aborted:
            aborted += 1

    bit_hits = 0
    squared_errors: list[float] = []
    for _ in range(plan.trials):
        if counts_mode:
            allotment = (int(amount),) * 3
        else:
            allotment = tuple(
                int(rng.binomial(rng.poisson(mu), float(amount))) for _ in range(3)
            )
        correct, sq_error = simulate_bit_recovery(allotment, rng)
        bit_hits += correct
        if sq_error is not None:
            squared_errors.append(sq_error)

    rmse = math.sqrt(sum(squared_errors) / len(squared_errors)) if squared_errors else math.nan
    return TradeoffPoint(
        mu=mu,
        siphon=amount,
        z_threshold=z,
        trials=plan.trials,
        detection=ProportionEstimate.from_counts(aborted, plan.trials, confidence),
        eve_accuracy=ProportionEstimate.from_counts(bit_hits, plan.trials, confidence),
        angle_rmse=rmse,
        oracle_value=_cell_oracle(mu, amount, counts_mode, rule),
    )


def eve_accuracy_sweep(plan: ExperimentPlan, confidence: float = 0.95) -> list[TradeoffPoint]:
    """Run every cell of the plan grid.

    Each cell owns the stream default_rng([master_seed, cell_index]), so the
    result table is identical no matter how or in what order cells run.
    """
    points = []
    for index, (mu, amount, z) in enumerate(plan.cells()):
        rng = np.random.default_rng([plan.master_seed, index])
        points.append(run_cell(mu, amount, z, plan, rng, confidence))
    return points


def first_reaching_target(
    points: Sequence[TradeoffPoint], target: float
) -> TradeoffPoint | None:
    """First sweep cell (in grid order) where Eve's bit accuracy meets the target."""
    for p in points:
        if p.eve_accuracy.point >= target:
            return p
    return None


@dataclass(frozen=True)
class LeakagePoint:
    photons_per_stage: int
    angle_rmse: float


def leakage_vs_n(
    n_grid: Sequence[int],
    trials: int = 300,
    seed: int = 0,
) -> list[LeakagePoint]:
    """Message-angle recovery error as a function of photons captured per stage.

    Each trial draws a uniformly random message angle and secrets, hands the
    adversary n photons from each of the three stage polarizations, and
    correlates the estimates. The RMSE is over the wrapped angular error.
    """
    if any(n < 2 for n in n_grid):
        raise ValueError("need at least 2 photons per stage to estimate an angle")
    rng = np.random.default_rng(seed)
    points = []
    for n in n_grid:
        errors = []
        for _ in range(trials):
            theta_x = rng.uniform(0.0, math.pi)
            theta_a = rng.uniform(0.0, 2.0 * math.pi)
            theta_b = rng.uniform(0.0, 2.0 * math.pi)
            stage_angles = (
                (theta_x + theta_a) % math.pi,
                (theta_x + theta_a + theta_b) % math.pi,
                (theta_x + theta_b) % math.pi,
            )
            estimates = []
            for angle in stage_angles:
                est = estimate_from_photons(PolarizationState(angle), n, rng)
                if est is None:
                    break
                estimates.append(est)
            if len(estimates) < 3:
                continue
            recovered = correlate_angles(*estimates)
            errors.append(wrapped_distance(recovered, theta_x) ** 2)
        rmse = math.sqrt(sum(errors) / len(errors)) if errors else math.nan
        points.append(LeakagePoint(int(n), rmse))
    return points


def rmse_loglog_slope(points: Sequence[LeakagePoint]) -> float:
    """Slope of log(RMSE) against log(n); about -1/2 for a consistent estimator."""
    xs = np.log([p.photons_per_stage for p in points])
    ys = np.log([p.angle_rmse for p in points])
    return float(np.polyfit(xs, ys, 1)[0])


@dataclass(frozen=True)
class RocPoint:
    z_threshold: float
    false_alarm: float
    detection: float


def roc_sweep(
    mu: float, f: float, z_grid: Sequence[float], stage: Stage = Stage.S2
) -> list[RocPoint]:
    """Operating characteristic of the first-checkpoint alarm.

    Both coordinates come from the exact oracle: the false alarm is the
    honest (f = 0) tail and the detection the thinned tail at the same
    cutoff. Lowering z raises the cutoff, so both coordinates are
    non-increasing in z, componentwise.
    """
    if not z_grid:
        raise ValueError("z grid must be nonempty")
    points = []
    for z in z_grid:
        rule = DetectionRule({stage: mu}, z)
        points.append(
            RocPoint(
                z_threshold=z,
                false_alarm=exact_detection_oracle(mu, 0.0, rule, stage),
                detection=exact_detection_oracle(mu, f, rule, stage),
            )
        )
    return points
