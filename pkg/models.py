from bisect import bisect_right
from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, computed_field, model_validator

from exceptions import (
    InvalidScenarioError,
    InvalidThresholdError,
    NonPositiveDelayError,
    NonPositiveRateError,
    SpecParseError,
)
from utils import round_half_up

class LoadRegime(str, Enum):
    HR = "hr"
    LR = "lr"
    H2LR = "h2lr"
    L2HR = "l2hr"

    @property
    def label(self) -> str:
        return self.name

class Issuer(str, Enum):
    HONEST = "honest"
    ATTACKER = "attacker"
    OBSERVED = "observed"

class Provenance(str, Enum):
    ANALYTIC = "analytic"
    SIMULATION = "simulation"
    MONTE_CARLO = "monte_carlo"

class ExperimentKind(str, Enum):
    WEIGHT_CURVE = "weight_curve"
    TIP_SERIES = "tip_series"
    CONFIRMATION_DELAY = "confirmation_delay"
    ATTACK_SWEEP = "attack_sweep"
    FIGURE = "figure"

class FigureName(str, Enum):
    FIG8 = "fig8"
    FIG9 = "fig9"
    FIG10 = "fig10"
    FIG11 = "fig11"
    FIG12 = "fig12"
    FIG13 = "fig13"
    FIG14 = "fig14"
    FIG15 = "fig15"

class OutputFormat(str, Enum):
    CSV = "csv"
    JSON = "json"

class AttackMethod(str, Enum):
    FORMULA = "formula"
    DISTRIBUTION = "distribution"
    EXPECTED = "expected"

def check_threshold(m: int) -> int:
    if m < 2:
        raise InvalidThresholdError(f"Confirmation threshold must satisfy m >= 2, got {m}")
    return m

class NetworkParams(BaseModel):
    """Arrival rates and reveal delay; home of lambda_h, lambda_l, h_r and the tip equilibria"""
    model_config = ConfigDict(frozen=True)

    lambda_high: float = 50.0
    lambda_low: float = 0.5
    reveal_delay: float = 1.0

    @model_validator(mode="after")
    def _check_positive(self):
        if self.lambda_high <= 0 or self.lambda_low <= 0:
            raise NonPositiveRateError(
                f"Arrival rates must be positive (lambda_high={self.lambda_high}, lambda_low={self.lambda_low})"
            )
        if self.reveal_delay <= 0:
            raise NonPositiveDelayError(f"Reveal delay must be positive, got {self.reveal_delay}")
        return self

    @computed_field
    @property
    def tip_count_high(self) -> float:
        return 2.0 * self.lambda_high * self.reveal_delay

    @computed_field
    @property
    def tip_count_low(self) -> float:
        raw = 2.0 * self.lambda_low * self.reveal_delay
        # the low-load tip count settles at a single tip
        return 1.0 if raw <= 2.0 else raw

    @property
    def interarrival_high(self) -> float:
        return 1.0 / self.lambda_high

    @property
    def interarrival_low(self) -> float:
        return 1.0 / self.lambda_low

    @property
    def chain_tip_count(self) -> int:
        """L_h as an integer state count for the Markov chain"""
        return round_half_up(self.tip_count_high)

class ConfirmationThreshold(BaseModel):
    model_config = ConfigDict(frozen=True)

    m: int

    @model_validator(mode="after")
    def _check(self):
        check_threshold(self.m)
        return self

class AttackScenario(BaseModel):
    """Honest/attacker race setup; home of p, q, alpha and beta"""
    model_config = ConfigDict(frozen=True)

    honest_rate: float
    attacker_rate: float
    threshold: int = 2
    head_start_deficit: int = 0
    pre_confirmation_count: int = 0
    regime: Optional[LoadRegime] = None

    @model_validator(mode="after")
    def _check(self):
        if self.honest_rate <= 0 or self.attacker_rate <= 0:
            raise NonPositiveRateError(
                f"Race rates must be positive (lambda={self.honest_rate}, mu={self.attacker_rate})"
            )
        check_threshold(self.threshold)
        if self.head_start_deficit < 0 or self.pre_confirmation_count < 0:
            raise InvalidScenarioError("alpha and beta cannot be negative")
        return self

    @property
    def alpha(self) -> int:
        return self.pre_confirmation_count

    @property
    def beta(self) -> int:
        return self.head_start_deficit

    @property
    def p(self) -> float:
        return self.honest_rate / (self.honest_rate + self.attacker_rate)

    @property
    def q(self) -> float:
        return self.attacker_rate / (self.honest_rate + self.attacker_rate)

class RaceEstimate(BaseModel):
    probability: float
    standard_error: float
    replications: int
    censored: int
    bias_bound: Optional[float] = None

class WeightTrace(BaseModel):
    """Cumulative weight of the observed transaction; times are seconds since its reveal"""
    samples: List[Tuple[float, int]]
    reveal_time: float
    threshold: int
    horizon: float
    confirmation_time: Optional[float] = None
    censored: bool = False

    def weight_at(self, t: float) -> int:
        times = [s[0] for s in self.samples]
        index = bisect_right(times, t) - 1
        return self.samples[max(index, 0)][1]

    def weights_at(self, times: List[float]) -> List[int]:
        sample_times = [s[0] for s in self.samples]
        out = []
        for t in times:
            index = bisect_right(sample_times, t) - 1
            out.append(self.samples[max(index, 0)][1])
        return out

    @property
    def final_weight(self) -> int:
        return self.samples[-1][1]

class TipSeries(BaseModel):
    samples: List[Tuple[float, int]]
    switch_time: Optional[float] = None

    def value_at(self, t: float) -> int:
        times = [s[0] for s in self.samples]
        index = bisect_right(times, t) - 1
        return self.samples[max(index, 0)][1]

    def time_average(self, start: float, end: float) -> float:
        """Time-weighted mean of the piecewise constant tip count over [start, end]"""
        if end <= start:
            raise InvalidScenarioError("time_average needs end > start")
        total = 0.0
        current = self.value_at(start)
        cursor = start
        for t, value in self.samples:
            if t <= start:
                continue
            if t >= end:
                break
            total += current * (t - cursor)
            cursor, current = t, value
        total += current * (end - cursor)
        return total / (end - start)

    @property
    def final_count(self) -> int:
        return self.samples[-1][1]

class DelayEstimate(BaseModel):
    mean: float
    standard_error: float
    replications: int
    censored: int
    histogram: List[Tuple[float, float, int]] = Field(default_factory=list)

class WeightEstimate(BaseModel):
    times: List[float]
    means: List[float]
    standard_errors: List[float]
    replications: int
    censored: int = 0

class TipCountEstimate(BaseModel):
    times: List[float]
    means: List[float]
    standard_errors: List[float]
    replications: int

class StateDistribution(BaseModel):
    """Probability mass over chain states {W(k), L(k)}; L is a function of k alone"""
    step: int
    tip_count: int
    weights: List[float]

    @property
    def mass(self) -> Dict[Tuple[int, int], float]:
        return {(w, self.tip_count): p for w, p in enumerate(self.weights) if p > 0.0}

    def probability(self, weight: int) -> float:
        if weight < 0 or weight >= len(self.weights):
            return 0.0
        return self.weights[weight]

    def total(self) -> float:
        return float(sum(self.weights))

    def expected_weight(self) -> float:
        return float(sum(w * p for w, p in enumerate(self.weights)))

class ExperimentSpec(BaseModel):
    """Declarative experiment description, loadable from JSON"""
    model_config = ConfigDict(extra="forbid")

    kind: ExperimentKind
    params: NetworkParams = Field(default_factory=NetworkParams)
    regimes: List[LoadRegime] = Field(default_factory=lambda: list(LoadRegime))
    thresholds: List[int] = Field(default_factory=lambda: [50, 100, 200])
    mu: List[float] = Field(default_factory=list)
    mu_ratios: List[float] = Field(default_factory=list)
    replications: int = 0
    horizon: Optional[float] = None
    times: List[float] = Field(default_factory=list)
    seed: int = 1
    figure: Optional[FigureName] = None
    mc_replications: int = 0
    deficit_cutoff: int = 200
    h2lr_method: AttackMethod = AttackMethod.DISTRIBUTION
    output: Optional[str] = None
    format: OutputFormat = OutputFormat.CSV

    @model_validator(mode="after")
    def _check(self):
        for m in self.thresholds:
            check_threshold(m)
        if self.kind == ExperimentKind.FIGURE and self.figure is None:
            raise SpecParseError("kind 'figure' needs a figure name (fig8..fig15)")
        if self.replications < 0 or self.mc_replications < 0:
            raise InvalidScenarioError("replication counts cannot be negative")
        if self.horizon is not None and self.horizon <= 0:
            raise InvalidScenarioError("horizon must be positive")
        if any(mu <= 0 for mu in self.mu) or any(r <= 0 for r in self.mu_ratios):
            raise NonPositiveRateError("attacker rates must be positive")
        return self
