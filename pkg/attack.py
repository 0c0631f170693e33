import logging
import math
from typing import Optional, Tuple

import numpy as np
from scipy.special import gammaln
from scipy.stats import nbinom

from analytic import adaptation_period, h2lr_distribution, sample_h2lr_weights
from core import SeededStream
from exceptions import InvalidScenarioError, NonPositiveRateError
from models import AttackMethod, AttackScenario, LoadRegime, NetworkParams, RaceEstimate, check_threshold
from utils import round_half_up

logger = logging.getLogger(__name__)

DEFAULT_DEFICIT_CUTOFF = 200
# steps taken per vectorized block of the ruin phase
_WALK_BLOCK = 64

def race_probabilities(honest_rate: float, attacker_rate: float) -> Tuple[float, float]:
    """(p, q): the next transaction is honest with p = lambda / (lambda + mu), adversarial with q = 1 - p.

    While the honest side collects alpha transactions the attacker collects N,
    negative-binomially distributed; if the attacker is then still behind it must
    close the remaining deficit as in the gambler's ruin.
    """
    if honest_rate <= 0 or attacker_rate <= 0:
        raise NonPositiveRateError(f"Race rates must be positive (lambda={honest_rate}, mu={attacker_rate})")
    total = honest_rate + attacker_rate
    return honest_rate / total, attacker_rate / total

def _log_nb_pmf(n, alpha: int, p: float, q: float):
    n = np.asarray(n, dtype=float)
    return gammaln(n + alpha) - gammaln(alpha) - gammaln(n + 1) + alpha * math.log(p) + n * math.log(q)

def negative_binomial_pmf(n, alpha: int, p: float, q: float):
    """P{N = n}: the attacker issues n transactions while the honest side issues alpha.

    C(n + alpha - 1, alpha - 1) p^alpha q^n, evaluated in log space. Accepts
    scalar or array n.
    """
    if alpha < 1:
        raise InvalidScenarioError(f"negative_binomial_pmf needs alpha >= 1, got {alpha}")
    result = np.exp(_log_nb_pmf(n, alpha, p, q))
    return float(result) if np.ndim(result) == 0 else result

def negative_binomial_tail(k: int, alpha: int, p: float) -> float:
    """P{N > k}"""
    if alpha < 1:
        return 0.0 if k >= 0 else 1.0
    return float(nbinom.sf(k, alpha, p))

def catchup_probability(deficit: int, p: float, q: float) -> float:
    if deficit <= 0 or p <= q:
        return 1.0
    return (q / p) ** deficit

def attack_success(alpha: int, p: float, q: float) -> float:
    """Success probability of a parasite chain started alpha honest transactions before confirmation"""
    if alpha < 0:
        raise InvalidScenarioError(f"alpha cannot be negative, got {alpha}")
    if p <= q:
        return 1.0
    if alpha == 0:
        return q / p
    n = np.arange(alpha + 1)
    log_binom = gammaln(n + alpha) - gammaln(alpha) - gammaln(n + 1)
    caught_up = np.exp(log_binom + (n - 1) * math.log(p) + (alpha + 1) * math.log(q))
    # 1 - sum(P{N = n}) over n <= alpha is the tail P{N > alpha}; taking it from
    # nbinom.sf keeps tiny probabilities accurate
    return float(min(negative_binomial_tail(alpha, alpha, p) + caught_up.sum(), 1.0))

def attack_success_with_gap(alpha: int, beta: int, p: float, q: float) -> float:
    """Success probability when the parasite chain also starts beta transactions behind.

    Written as P{N > alpha + beta} + sum over n <= alpha + beta of
    P{N = n} (q/p)^(alpha + beta + 1 - n), which keeps every term positive.
    """
    if alpha < 0 or beta < 0:
        raise InvalidScenarioError(f"alpha and beta cannot be negative (alpha={alpha}, beta={beta})")
    if p <= q:
        return 1.0
    if alpha == 0:
        return (q / p) ** (beta + 1)
    horizon = alpha + beta
    n = np.arange(horizon + 1)
    log_terms = _log_nb_pmf(n, alpha, p, q) + (horizon + 1 - n) * math.log(q / p)
    probability = negative_binomial_tail(horizon, alpha, p) + float(np.exp(log_terms).sum())
    return min(probability, 1.0)

def scenario_success(scenario: AttackScenario) -> float:
    return attack_success_with_gap(scenario.alpha, scenario.beta, scenario.p, scenario.q)

def _hr_confirmation_weight(params: NetworkParams) -> int:
    _, w_t0 = adaptation_period(params.tip_count_high, params.reveal_delay)
    return round_half_up(w_t0)

def attack_success_h2lr_distribution(m: int, params: NetworkParams, mu: float) -> float:
    """Mixture over the chain state when two tips are left, the moment the parasite chain starts"""
    check_threshold(m)
    p, q = race_probabilities(params.lambda_low, mu)
    if p <= q:
        return 1.0
    tip_count = params.chain_tip_count
    state = h2lr_distribution(tip_count - 2, tip_count)
    total = 0.0
    for weight, mass in enumerate(state.weights):
        if mass == 0.0:
            continue
        total += mass * attack_success(max(m - weight, 0), p, q)
    return total

def h2lr_attack_weight(params: NetworkParams) -> float:
    """W0: expected weight of the payment when the H2LR chain reaches two tips"""
    tip_count = params.chain_tip_count
    return h2lr_distribution(tip_count - 2, tip_count).expected_weight()

def attack_success_h2lr_expected(m: int, params: NetworkParams, mu: float) -> float:
    """H2LR success probability using only the expected weight W0 at the two-tip state"""
    check_threshold(m)
    p, q = race_probabilities(params.lambda_low, mu)
    if p <= q:
        return 1.0
    w0 = round_half_up(h2lr_attack_weight(params))
    if m < w0:
        return q / p
    return attack_success(m - w0, p, q)

def attack_success_regime(
    m: int,
    regime: LoadRegime,
    params: NetworkParams,
    mu: float,
    h2lr_method: AttackMethod = AttackMethod.DISTRIBUTION,
) -> float:
    """Success probability of a parasite-chain attack on a payment confirmed at threshold m"""
    check_threshold(m)
    if regime == LoadRegime.HR:
        p, q = race_probabilities(params.lambda_high, mu)
        if p <= q:
            return 1.0
        alpha = max(m - _hr_confirmation_weight(params) + 1, 0)
        return attack_success(alpha, p, q)
    if regime == LoadRegime.LR:
        p, q = race_probabilities(params.lambda_low, mu)
        return attack_success_with_gap(m - 1, 1, p, q)
    if regime == LoadRegime.L2HR:
        p, q = race_probabilities(params.lambda_high, mu)
        return attack_success_with_gap(m - 1, 1, p, q)
    if h2lr_method == AttackMethod.EXPECTED:
        return attack_success_h2lr_expected(m, params, mu)
    return attack_success_h2lr_distribution(m, params, mu)

def regime_scenario(m: int, regime: LoadRegime, params: NetworkParams, mu: float) -> AttackScenario:
    """Race set-up of a single-chain regime: HR after adaptation, LR and L2HR attached one below the payment"""
    check_threshold(m)
    if regime == LoadRegime.H2LR:
        raise InvalidScenarioError("H2LR has no single race set-up; the two-tip state is random")
    if regime == LoadRegime.HR:
        alpha = max(m - _hr_confirmation_weight(params) + 1, 0)
        return AttackScenario(honest_rate=params.lambda_high, attacker_rate=mu, threshold=m,
                              pre_confirmation_count=alpha, regime=regime)
    lam = params.lambda_high if regime == LoadRegime.L2HR else params.lambda_low
    return AttackScenario(honest_rate=lam, attacker_rate=mu, threshold=m,
                          pre_confirmation_count=m - 1, head_start_deficit=1, regime=regime)

def regime_race_probabilities(regime: LoadRegime, params: NetworkParams, mu: float) -> Tuple[float, float]:
    """(p, q) against the honest rate in force after the payment reveals"""
    if regime in (LoadRegime.HR, LoadRegime.L2HR):
        return race_probabilities(params.lambda_high, mu)
    return race_probabilities(params.lambda_low, mu)

def pre_confirmation_count(m0: int, offset: int) -> int:
    """alpha given m0 honest transactions from payment to confirmation and the
    signed count of honest transactions from payment to parasite-chain creation"""
    return max(m0 - offset, 0)

def _race_outcomes(
    alpha: np.ndarray, beta: np.ndarray, p: float, cutoff: int, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """Run one race per (alpha, beta) pair; returns (succeeded, censored) boolean arrays"""
    size = len(alpha)
    attacker = np.zeros(size, dtype=np.int64)
    racing = alpha > 0
    if racing.any():
        attacker[racing] = rng.negative_binomial(alpha[racing], p)
    succeeded = attacker > alpha + beta
    censored = np.zeros(size, dtype=bool)

    deficit = alpha + beta - attacker + 1
    active = np.flatnonzero(~succeeded)
    position = deficit[active]
    while len(active):
        moves = np.where(rng.random((len(active), _WALK_BLOCK)) < p, 1, -1)
        paths = position[:, None] + np.cumsum(moves, axis=1)
        caught = paths <= 0
        gave_up = paths >= cutoff
        finished = caught | gave_up
        done = finished.any(axis=1)
        first = np.argmax(finished, axis=1)
        rows = np.flatnonzero(done)
        won = caught[rows, first[rows]]
        succeeded[active[rows[won]]] = True
        censored[active[rows[~won]]] = True
        keep = ~done
        active = active[keep]
        position = paths[keep, -1]
    return succeeded, censored

def _estimate(succeeded: np.ndarray, censored: np.ndarray, p: float, q: float, cutoff: int) -> RaceEstimate:
    replications = len(succeeded)
    probability = float(succeeded.mean())
    return RaceEstimate(
        probability=probability,
        standard_error=math.sqrt(probability * (1.0 - probability) / replications),
        replications=replications,
        censored=int(censored.sum()),
        bias_bound=(q / p) ** cutoff if p > q else 1.0,
    )

def monte_carlo_race(
    scenario: AttackScenario,
    replications: int,
    stream: SeededStream,
    deficit_cutoff: int = DEFAULT_DEFICIT_CUTOFF,
) -> RaceEstimate:
    """Independent estimate of the race success probability.

    Runs reaching the deficit cutoff are counted as failures; bias_bound is the
    largest amount that truncation can hide, (q/p)^cutoff.
    """
    if replications < 1:
        raise InvalidScenarioError("replications must be at least 1")
    if deficit_cutoff < scenario.alpha + scenario.beta + 2:
        raise InvalidScenarioError(
            f"deficit_cutoff={deficit_cutoff} must be at least alpha + beta + 2 = {scenario.alpha + scenario.beta + 2}"
        )
    alpha = np.full(replications, scenario.alpha, dtype=np.int64)
    beta = np.full(replications, scenario.beta, dtype=np.int64)
    succeeded, censored = _race_outcomes(alpha, beta, scenario.p, deficit_cutoff, stream.rng)
    estimate = _estimate(succeeded, censored, scenario.p, scenario.q, deficit_cutoff)
    if estimate.censored:
        logger.debug(f"{estimate.censored}/{replications} races reached the deficit cutoff {deficit_cutoff}")
    return estimate

def monte_carlo_h2lr_attack(
    m: int,
    tip_count: int,
    lambda_low: float,
    mu: float,
    replications: int,
    stream: SeededStream,
    deficit_cutoff: Optional[int] = None,
) -> RaceEstimate:
    """Run the H2LR chain to the two-tip state, then race from alpha = max(m - W, 0)"""
    check_threshold(m)
    if replications < 1:
        raise InvalidScenarioError("replications must be at least 1")
    if tip_count < 2:
        raise InvalidScenarioError(f"The H2LR chain needs L_h >= 2, got {tip_count}")
    if deficit_cutoff is None:
        deficit_cutoff = max(DEFAULT_DEFICIT_CUTOFF, m + 2)
    if deficit_cutoff < m + 2:
        raise InvalidScenarioError(f"deficit_cutoff={deficit_cutoff} must be at least m + 2 = {m + 2}")
    p, q = race_probabilities(lambda_low, mu)
    weights = sample_h2lr_weights(tip_count - 2, tip_count, replications, stream.rng)
    alpha = np.maximum(m - weights, 0)
    succeeded, censored = _race_outcomes(alpha, np.zeros(replications, dtype=np.int64), p, deficit_cutoff, stream.rng)
    return _estimate(succeeded, censored, p, q, deficit_cutoff)
