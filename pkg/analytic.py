import logging
import math
from typing import Dict, List, Optional

import numpy as np

from core import SeededStream
from exceptions import (
    AdaptationUndefinedError,
    InvalidScenarioError,
    NonPositiveDelayError,
    NonPositiveRateError,
)
from models import DelayEstimate, LoadRegime, NetworkParams, StateDistribution, check_threshold
from utils import round_half_up

logger = logging.getLogger(__name__)

# growth exponent of the adaptation period, per unit of h_r
ADAPTATION_RATE = 0.352
# W(t0) = L_h / (2 * ADAPTATION_RATE); t0 needs L_h above 4 * ADAPTATION_RATE
ADAPTATION_MIN_TIPS = 4 * ADAPTATION_RATE

SWITCH_AT_REVEAL = "reveal"
SWITCH_AT_CONFIRMATION = "confirmation"
MODE_ANALYTIC = "analytic"
MODE_MONTE_CARLO = "monte_carlo"

DEFAULT_MC_SAMPLES = 10_000

def tip_equilibrium(lam: float, reveal_delay: float) -> float:
    """Stationary tip count 2 * lambda * h_r"""
    if lam <= 0:
        raise NonPositiveRateError(f"Arrival rate must be positive, got {lam}")
    if reveal_delay <= 0:
        raise NonPositiveDelayError(f"Reveal delay must be positive, got {reveal_delay}")
    return 2.0 * lam * reveal_delay

def tip_drift(revealed_tips: float, unrevealed_tips: float) -> float:
    """Expected number of old tips an arrival removes when r tips are revealed
    and lambda * h_r are selected but unrevealed: 2r / (r + lambda h_r).

    The tip count is stable where this equals 1, i.e. r = lambda * h_r.
    """
    total = revealed_tips + unrevealed_tips
    if total <= 0:
        raise InvalidScenarioError("tip_drift needs at least one tip")
    return 2.0 * revealed_tips / total

def adaptation_period(tip_count: float, reveal_delay: float):
    """End of the HR adaptation period: returns (t0, W(t0))"""
    if tip_count <= ADAPTATION_MIN_TIPS:
        raise AdaptationUndefinedError(
            f"Adaptation period is undefined for L_h={tip_count} <= {ADAPTATION_MIN_TIPS}"
        )
    t0 = (reveal_delay / ADAPTATION_RATE) * math.log(tip_count / ADAPTATION_MIN_TIPS)
    return t0, tip_count / (2 * ADAPTATION_RATE)

def _check_time(t: float):
    if t < 0:
        raise InvalidScenarioError(f"time must be non-negative, got {t}")

def expected_weight_hr(t: float, params: NetworkParams) -> float:
    _check_time(t)
    t0, w_t0 = adaptation_period(params.tip_count_high, params.reveal_delay)
    if t <= t0:
        return 2.0 * math.exp(ADAPTATION_RATE * t / params.reveal_delay)
    return w_t0 + params.lambda_high * (t - t0)

def expected_weight_lr(t: float, lambda_low: float) -> float:
    _check_time(t)
    return 1.0 + lambda_low * t

def _approval_probabilities(steps: int, tip_count: int) -> np.ndarray:
    """Per-step probability that the chain's W grows: 2/L(k) while L(k) >= 2, then 1"""
    k = np.arange(steps)
    tips = np.maximum(tip_count - k, 1)
    return np.where(tips >= 2, 2.0 / tips, 1.0)

def _check_chain(tip_count: int):
    if tip_count < 2:
        raise InvalidScenarioError(f"The H2LR chain needs L_h >= 2, got {tip_count}")

def h2lr_distribution(k: int, tip_count: int) -> StateDistribution:
    """Distribution of {W(k), L(k)} for the H2LR chain started at {1, L_h}.

    While j = L(k) >= 2 an arrival approves the observed transaction's cone with
    probability 2/j and the tip count drops by one; at j = 2 the approval is
    certain. Once a single tip is left every arrival adds one.
    """
    if k < 0:
        raise InvalidScenarioError(f"step must be non-negative, got {k}")
    _check_chain(tip_count)
    weights = np.zeros(k + 2)
    weights[1] = 1.0
    for a in _approval_probabilities(k, tip_count):
        moved = weights[:-1] * a
        weights *= 1.0 - a
        weights[1:] += moved
    return StateDistribution(step=k, tip_count=max(tip_count - k, 1), weights=weights.tolist())

def h2lr_expected_weights(k_max: int, tip_count: int) -> np.ndarray:
    """E[W(k)] for k = 0..k_max; the approval probability never depends on W, so E[W] adds it up"""
    _check_chain(tip_count)
    increments = _approval_probabilities(k_max, tip_count)
    return np.concatenate(([1.0], 1.0 + np.cumsum(increments)))

def _arrival_counts(lam: float, t: float, mode: str, stream: Optional[SeededStream], samples: int):
    """Step index for time t: round(lambda t), or Poisson draws of the arrival count"""
    if mode == MODE_ANALYTIC:
        return np.array([round_half_up(lam * t)])
    if mode == MODE_MONTE_CARLO:
        if stream is None:
            raise InvalidScenarioError("monte_carlo mode needs a stream")
        return stream.rng.poisson(lam * t, size=samples)
    raise InvalidScenarioError(f"Unknown mode {mode!r}")

def expected_weight_h2lr(
    t: float,
    params: NetworkParams,
    mode: str = MODE_ANALYTIC,
    stream: Optional[SeededStream] = None,
    samples: int = DEFAULT_MC_SAMPLES,
) -> float:
    _check_time(t)
    counts = _arrival_counts(params.lambda_low, t, mode, stream, samples)
    table = h2lr_expected_weights(int(counts.max()), params.chain_tip_count)
    return float(table[counts].mean())

def expected_weight_l2hr(
    t: float,
    lambda_high: float,
    mode: str = MODE_ANALYTIC,
    stream: Optional[SeededStream] = None,
    samples: int = DEFAULT_MC_SAMPLES,
) -> float:
    _check_time(t)
    counts = _arrival_counts(lambda_high, t, mode, stream, samples)
    return float(1.0 + counts.mean())

def _effective_regime(regime: LoadRegime, switch: str) -> LoadRegime:
    """Switching at confirmation leaves the pre-switch regime in force"""
    if switch == SWITCH_AT_REVEAL:
        return regime
    if switch == SWITCH_AT_CONFIRMATION:
        if regime == LoadRegime.H2LR:
            return LoadRegime.HR
        if regime == LoadRegime.L2HR:
            return LoadRegime.LR
        return regime
    raise InvalidScenarioError(f"Unknown switch instant {switch!r}")

def expected_weight(
    t: float,
    regime: LoadRegime,
    params: NetworkParams,
    switch: str = SWITCH_AT_REVEAL,
    mode: str = MODE_ANALYTIC,
    stream: Optional[SeededStream] = None,
) -> float:
    regime = _effective_regime(regime, switch)
    if regime == LoadRegime.HR:
        return expected_weight_hr(t, params)
    if regime == LoadRegime.LR:
        return expected_weight_lr(t, params.lambda_low)
    if regime == LoadRegime.H2LR:
        return expected_weight_h2lr(t, params, mode, stream)
    return expected_weight_l2hr(t, params.lambda_high, mode, stream)

class WeightCurve:
    """E[W(t)] for one regime as a callable, with the HR breakpoint exposed"""

    def __init__(self, regime: LoadRegime, params: NetworkParams, switch: str = SWITCH_AT_REVEAL):
        self.regime = regime
        self.params = params
        self.switch = switch
        self._effective = _effective_regime(regime, switch)

    @property
    def breakpoints(self) -> Dict[str, float]:
        if self._effective != LoadRegime.HR:
            return {}
        t0, w_t0 = adaptation_period(self.params.tip_count_high, self.params.reveal_delay)
        return {"t0": t0, "W_t0": w_t0}

    def __call__(self, t: float) -> float:
        return expected_weight(t, self.regime, self.params, self.switch)

    def evaluate(self, times: List[float]) -> List[float]:
        if self._effective == LoadRegime.H2LR:
            steps = [round_half_up(self.params.lambda_low * t) for t in times]
            table = h2lr_expected_weights(max(steps), self.params.chain_tip_count)
            return [float(table[k]) for k in steps]
        return [self(t) for t in times]

def h2lr_first_passage(m: int, tip_count: int) -> np.ndarray:
    """P{K = k}: probability that the chain first reaches W = m at step k.

    States with W = m absorb, so a path is counted once at its first hit.
    Index k of the returned array is the step count; entries sum to 1.
    """
    check_threshold(m)
    _check_chain(tip_count)
    # after L_h - 1 steps W >= 2 and then grows by one per step
    k_max = m + tip_count
    passage = np.zeros(k_max + 1)
    weights = np.zeros(m)  # mass on W = 0..m-1 that has not been absorbed
    weights[1] = 1.0
    for k, a in enumerate(_approval_probabilities(k_max, tip_count), start=1):
        passage[k] = weights[m - 1] * a
        moved = weights[:-1] * a
        weights *= 1.0 - a
        weights[1:] += moved
        if weights.sum() < 1e-15:
            break
    return passage

def confirmation_delay(
    m: int,
    regime: LoadRegime,
    params: NetworkParams,
    switch: str = SWITCH_AT_REVEAL,
) -> float:
    """Expected seconds from reveal until W >= m"""
    check_threshold(m)
    regime = _effective_regime(regime, switch)
    if regime == LoadRegime.LR:
        return (m - 1) * params.interarrival_low
    if regime == LoadRegime.L2HR:
        return (m - 1) * params.interarrival_high
    if regime == LoadRegime.HR:
        t0, w_t0 = adaptation_period(params.tip_count_high, params.reveal_delay)
        if m <= round_half_up(w_t0):
            return (params.reveal_delay / ADAPTATION_RATE) * math.log(m / 2.0)
        return t0 + (m - w_t0) / params.lambda_high
    passage = h2lr_first_passage(m, params.chain_tip_count)
    expected_steps = float(np.dot(np.arange(len(passage)), passage))
    return expected_steps * params.interarrival_low

def sample_h2lr_weights(k: int, tip_count: int, replications: int, rng: np.random.Generator) -> np.ndarray:
    """W(k) for independent runs of the H2LR chain, one Bernoulli step at a time"""
    weights = np.ones(replications, dtype=np.int64)
    for a in _approval_probabilities(k, tip_count):
        weights += rng.random(replications) < a
    return weights

def simulate_h2lr_chain(
    k: int, tip_count: int, replications: int, stream: SeededStream
) -> StateDistribution:
    """Empirical distribution of W(k) from direct simulation of the H2LR chain"""
    _check_chain(tip_count)
    if replications < 1:
        raise InvalidScenarioError("replications must be at least 1")
    weights = sample_h2lr_weights(k, tip_count, replications, stream.rng)
    frequencies = np.bincount(weights, minlength=k + 2) / replications
    return StateDistribution(step=k, tip_count=max(tip_count - k, 1), weights=frequencies.tolist())

def simulate_h2lr_delay(
    m: int,
    tip_count: int,
    lambda_low: float,
    replications: int,
    stream: SeededStream,
) -> DelayEstimate:
    """Delay to W >= m by running the chain with exponential interarrival times of mean 1/lambda_low"""
    check_threshold(m)
    _check_chain(tip_count)
    if replications < 1:
        raise InvalidScenarioError("replications must be at least 1")
    rng = stream.rng
    weights = np.ones(replications, dtype=np.int64)
    steps = np.zeros(replications, dtype=np.int64)
    for a in _approval_probabilities(m + tip_count, tip_count):
        active = weights < m
        if not active.any():
            break
        steps += active
        weights += active & (rng.random(replications) < a)
    # the sum of K exponential interarrivals is Gamma(K, 1/lambda)
    delays = rng.gamma(steps, 1.0 / lambda_low)
    return DelayEstimate(
        mean=float(delays.mean()),
        standard_error=float(delays.std(ddof=1) / np.sqrt(replications)) if replications > 1 else float("nan"),
        replications=replications,
        censored=int((weights < m).sum()),
    )

def expected_tip_count(t: float, regime: LoadRegime, params: NetworkParams, switch_time: Optional[float] = None) -> float:
    """Stationary tip level in force at t; after a drop to low load the chain loses one tip per arrival"""
    _check_time(t)
    high, low = params.tip_count_high, params.tip_count_low
    if regime == LoadRegime.HR:
        return high
    if regime == LoadRegime.LR:
        return low
    if switch_time is None or t < switch_time:
        return high if regime == LoadRegime.H2LR else low
    if regime == LoadRegime.L2HR:
        return high
    return max(high - params.lambda_low * (t - switch_time), low)
