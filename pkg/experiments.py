import logging
import math
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from analytic import WeightCurve, confirmation_delay, expected_tip_count
from attack import (
    attack_success_regime,
    attack_success_with_gap,
    h2lr_attack_weight,
    monte_carlo_h2lr_attack,
    monte_carlo_race,
    pre_confirmation_count,
    race_probabilities,
    regime_race_probabilities,
    regime_scenario,
)
from core import derive_stream, validate
from models import (
    AttackMethod,
    AttackScenario,
    ExperimentKind,
    ExperimentSpec,
    FigureName,
    LoadRegime,
    NetworkParams,
    Provenance,
    RaceEstimate,
)
from records import ATTACK, DELAY, RACE, TIP_SERIES, WEIGHT, ResultTable, new_table
from sim import WARMUP_FACTOR, estimate_confirmation_delay, estimate_tip_count, estimate_weight_curve
from utils import round_half_up

logger = logging.getLogger(__name__)

DEFAULT_TIMES = [0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0]
FIG12_TIMES = [0.0, 1.0, 2.0] + [float(t) for t in range(5, 101, 5)]
DEFAULT_MU_RATIOS = [round(0.1 * i, 1) for i in range(1, 10)]
FIG8_9_MU_RATIOS = [0.2, 0.4, 0.6, 0.8]
FIG11_MU_RATIOS = [0.1, 0.3, 0.5]
FIG14_15_MU_RATIOS = [round(0.05 * i, 2) for i in range(1, 21)]
FIG10_CONFIRMATION_COUNT = 20
FIG13_POINTS = 40
# formula/Monte-Carlo gap, in standard errors, above which a row is logged
ORACLE_TOLERANCE_SE = 3.0

def honest_rate(regime: LoadRegime, params: NetworkParams) -> float:
    """Arrival rate in force once the observed transaction has revealed"""
    return params.lambda_high if regime in (LoadRegime.HR, LoadRegime.L2HR) else params.lambda_low

def attacker_rates(spec: ExperimentSpec, lam: float, default_ratios: List[float]) -> List[float]:
    if spec.mu:
        return list(spec.mu)
    ratios = spec.mu_ratios or default_ratios
    return [ratio * lam for ratio in ratios]

def _float(value) -> Optional[float]:
    if value is None:
        return None
    value = float(value)
    return None if np.isnan(value) else value

def _stream(spec: ExperimentSpec, label: str):
    """Stream labelled by what a row estimates, independent of the other rows and the worker count"""
    return derive_stream(spec.seed, 0, label)

def weight_curve_table(spec: ExperimentSpec, workers: int = 1, times: Optional[List[float]] = None) -> ResultTable:
    table = new_table(WEIGHT, spec)
    times = times or spec.times or DEFAULT_TIMES
    m = spec.thresholds[0]
    for regime in spec.regimes:
        params = validate(spec.params, regime)
        analytic = WeightCurve(regime, params).evaluate(times)
        estimate = None
        if spec.replications:
            logger.info(f"Simulating {regime.label} weight curve, {spec.replications} replications")
            estimate = estimate_weight_curve(
                params, regime, times, spec.replications, _stream(spec, f"weight/{regime.value}"), m, workers
            )
        for j, t in enumerate(times):
            if estimate is None:
                table.add(Provenance.ANALYTIC, regime=regime.value, t=t, expected_weight=analytic[j])
            else:
                table.add(
                    Provenance.SIMULATION, seed=spec.seed, regime=regime.value, t=t, expected_weight=analytic[j],
                    sim_mean=estimate.means[j], sim_se=_float(estimate.standard_errors[j]),
                    replications=estimate.replications,
                )
    return table

def tip_series_table(spec: ExperimentSpec, workers: int = 1) -> ResultTable:
    table = new_table(TIP_SERIES, spec)
    horizon = spec.horizon or 300.0
    times = spec.times or [float(t) for t in np.linspace(0.0, horizon, 31)]
    for regime in spec.regimes:
        params = validate(spec.params, regime)
        switch_time = WARMUP_FACTOR * params.reveal_delay if regime in (LoadRegime.H2LR, LoadRegime.L2HR) else None
        if not spec.replications:
            for t in times:
                table.add(Provenance.ANALYTIC, regime=regime.value, t=t,
                          mean_tip_count=expected_tip_count(t, regime, params, switch_time))
            continue
        estimate = estimate_tip_count(
            params, regime, times, spec.replications, _stream(spec, f"tips/{regime.value}"), workers
        )
        for j, t in enumerate(times):
            table.add(
                Provenance.SIMULATION, seed=spec.seed, regime=regime.value, t=t,
                mean_tip_count=estimate.means[j], se_tip_count=_float(estimate.standard_errors[j]),
                replications=estimate.replications,
            )
    return table

def _delay_row(table: ResultTable, spec: ExperimentSpec, regime: LoadRegime, params: NetworkParams,
               m: int, lam: float, workers: int):
    analytic = confirmation_delay(m, regime, params)
    if not spec.replications:
        table.add(Provenance.ANALYTIC, regime=regime.value, m=m, **{"lambda": lam}, delay_analytic=analytic)
        return
    estimate = estimate_confirmation_delay(
        params, regime, m, spec.replications, _stream(spec, f"delay/{regime.value}/{m}/{lam!r}"),
        horizon=spec.horizon, workers=workers,
    )
    table.add(
        Provenance.SIMULATION, seed=spec.seed, regime=regime.value, m=m, **{"lambda": lam},
        delay_analytic=analytic, delay_sim_mean=_float(estimate.mean), delay_sim_se=_float(estimate.standard_error),
    )

def confirmation_delay_table(spec: ExperimentSpec, workers: int = 1) -> ResultTable:
    table = new_table(DELAY, spec)
    for regime in spec.regimes:
        params = validate(spec.params, regime)
        for m in spec.thresholds:
            _delay_row(table, spec, regime, params, m, honest_rate(regime, params), workers)
    return table

def _check_oracle(label: str, formula: float, estimate: RaceEstimate):
    """Report, never correct, a formula that the Monte-Carlo race disagrees with"""
    se = max(estimate.standard_error, math.sqrt(formula * (1.0 - formula) / estimate.replications))
    gap = abs(estimate.probability - formula) - (estimate.bias_bound or 0.0)
    if gap > ORACLE_TOLERANCE_SE * se:
        logger.warning(
            f"{label}: formula {formula:.6g} vs Monte-Carlo {estimate.probability:.6g} "
            f"(se {se:.2g}, {estimate.replications} runs)"
        )

def _attack_row(table: ResultTable, spec: ExperimentSpec, regime: LoadRegime, params: NetworkParams,
                m: int, mu: float, method: AttackMethod):
    lam = honest_rate(regime, params)
    p, q = regime_race_probabilities(regime, params, mu)
    formula = attack_success_regime(m, regime, params, mu, method)
    method_name = method.value if regime == LoadRegime.H2LR else AttackMethod.FORMULA.value
    values = dict(regime=regime.value, m=m, **{"lambda": lam}, mu=mu, p=p, q=q, prob_formula=formula,
                  method=method_name)
    if not spec.mc_replications:
        table.add(Provenance.ANALYTIC, **values)
        return
    stream = _stream(spec, f"attack/{regime.value}/{m}/{mu!r}")
    if regime == LoadRegime.H2LR:
        estimate = monte_carlo_h2lr_attack(
            m, params.chain_tip_count, params.lambda_low, mu, spec.mc_replications, stream,
            max(spec.deficit_cutoff, m + 2),
        )
    else:
        scenario = regime_scenario(m, regime, params, mu)
        cutoff = max(spec.deficit_cutoff, scenario.alpha + scenario.beta + 2)
        estimate = monte_carlo_race(scenario, spec.mc_replications, stream, cutoff)
    if method != AttackMethod.EXPECTED:
        _check_oracle(f"{regime.label} m={m} mu={mu:g}", formula, estimate)
    table.add(Provenance.MONTE_CARLO, seed=spec.seed, prob_mc=estimate.probability,
              mc_se=estimate.standard_error, **values)

def attack_sweep_table(spec: ExperimentSpec, default_ratios: Optional[List[float]] = None,
                       methods: Optional[List[AttackMethod]] = None) -> ResultTable:
    table = new_table(ATTACK, spec)
    for regime in spec.regimes:
        params = validate(spec.params, regime)
        rates = attacker_rates(spec, honest_rate(regime, params), default_ratios or DEFAULT_MU_RATIOS)
        regime_methods = (methods or [spec.h2lr_method]) if regime == LoadRegime.H2LR else [AttackMethod.FORMULA]
        for m in spec.thresholds:
            for mu in rates:
                for method in regime_methods:
                    _attack_row(table, spec, regime, params, m, mu, method)
    return table

def _race_row(table: ResultTable, spec: ExperimentSpec, alpha: int, beta: int, offset: Optional[int],
              lam: float, mu: float):
    p, q = race_probabilities(lam, mu)
    values = dict(alpha=alpha, beta=beta, offset=offset, **{"lambda": lam}, mu=mu, p=p, q=q,
                  prob_formula=attack_success_with_gap(alpha, beta, p, q))
    if not spec.mc_replications:
        table.add(Provenance.ANALYTIC, **values)
        return
    scenario = AttackScenario(honest_rate=lam, attacker_rate=mu, pre_confirmation_count=alpha,
                              head_start_deficit=beta)
    estimate = monte_carlo_race(
        scenario, spec.mc_replications, _stream(spec, f"race/{alpha}/{beta}/{mu!r}"),
        max(spec.deficit_cutoff, alpha + beta + 2),
    )
    _check_oracle(f"race alpha={alpha} beta={beta} mu={mu:g}", values["prob_formula"], estimate)
    table.add(Provenance.MONTE_CARLO, seed=spec.seed, prob_mc=estimate.probability,
              mc_se=estimate.standard_error, **values)

def fig8(spec: ExperimentSpec, workers: int = 1) -> ResultTable:
    """Success probability against the deficit beta at alpha = 1"""
    table = new_table(RACE, spec)
    lam = spec.params.lambda_high
    for mu in attacker_rates(spec, lam, FIG8_9_MU_RATIOS):
        for beta in range(0, 21):
            _race_row(table, spec, 1, beta, None, lam, mu)
    return table

def fig9(spec: ExperimentSpec, workers: int = 1) -> ResultTable:
    """Success probability against alpha at beta = 1"""
    table = new_table(RACE, spec)
    lam = spec.params.lambda_high
    for mu in attacker_rates(spec, lam, FIG8_9_MU_RATIOS):
        for alpha in range(0, 21):
            _race_row(table, spec, alpha, 1, None, lam, mu)
    return table

def fig10(spec: ExperimentSpec, workers: int = 1) -> ResultTable:
    """Success probability as parasite-chain creation moves relative to the payment"""
    table = new_table(RACE, spec)
    lam = spec.params.lambda_high
    m0 = FIG10_CONFIRMATION_COUNT
    for mu in attacker_rates(spec, lam, FIG8_9_MU_RATIOS):
        for offset in range(-10, m0 + 1):
            _race_row(table, spec, pre_confirmation_count(m0, offset), 0, offset, lam, mu)
    return table

def fig11(spec: ExperimentSpec, workers: int = 1) -> ResultTable:
    """H2LR: distribution-based against expected-value success probability over m"""
    params = validate(spec.params, LoadRegime.H2LR)
    w0 = round_half_up(h2lr_attack_weight(params))
    thresholds = sorted(set([m for m in range(2, w0, 5)] + [w0 + d for d in range(0, 301, 10)]))
    sweep = spec.model_copy(update={"regimes": [LoadRegime.H2LR], "thresholds": thresholds})
    return attack_sweep_table(sweep, FIG11_MU_RATIOS, [AttackMethod.DISTRIBUTION, AttackMethod.EXPECTED])

def fig12(spec: ExperimentSpec, workers: int = 1) -> ResultTable:
    """Expected cumulative weight against time, with simulation columns when replications > 0"""
    return weight_curve_table(spec, workers, spec.times or FIG12_TIMES)

def fig13_rates(regime: LoadRegime, reveal_delay: float = 1.0) -> List[float]:
    """Log-spaced rates with lambda * h_r in [0.05, 1) for the low-rate regimes and [1, 100] otherwise"""
    if regime in (LoadRegime.LR, LoadRegime.H2LR):
        # lambda * h_r = 1 is already high load
        return [float(v) for v in np.geomspace(0.05 / reveal_delay, 1.0 / reveal_delay, FIG13_POINTS, endpoint=False)]
    return [float(v) for v in np.geomspace(1.0 / reveal_delay, 100.0 / reveal_delay, FIG13_POINTS)]

def fig13(spec: ExperimentSpec, workers: int = 1) -> ResultTable:
    """Confirmation delay against the arrival rate of the regime"""
    table = new_table(DELAY, spec)
    base = spec.params
    for regime in spec.regimes:
        for rate in fig13_rates(regime, base.reveal_delay):
            if regime in (LoadRegime.HR, LoadRegime.L2HR):
                params = NetworkParams(lambda_high=rate, lambda_low=base.lambda_low, reveal_delay=base.reveal_delay)
            else:
                params = NetworkParams(lambda_high=base.lambda_high, lambda_low=rate, reveal_delay=base.reveal_delay)
            validate(params, regime)
            for m in spec.thresholds:
                _delay_row(table, spec, regime, params, m, rate, workers)
    return table

def fig14(spec: ExperimentSpec, workers: int = 1) -> ResultTable:
    """HR and L2HR success probability against the attacker rate"""
    sweep = spec.model_copy(update={"regimes": [LoadRegime.HR, LoadRegime.L2HR]})
    return attack_sweep_table(sweep, FIG14_15_MU_RATIOS)

def fig15(spec: ExperimentSpec, workers: int = 1) -> ResultTable:
    """LR and H2LR success probability against the attacker rate"""
    sweep = spec.model_copy(update={"regimes": [LoadRegime.LR, LoadRegime.H2LR]})
    return attack_sweep_table(sweep, FIG14_15_MU_RATIOS)

FIGURES: Dict[FigureName, Callable[[ExperimentSpec, int], ResultTable]] = {
    FigureName.FIG8: fig8,
    FigureName.FIG9: fig9,
    FigureName.FIG10: fig10,
    FigureName.FIG11: fig11,
    FigureName.FIG12: fig12,
    FigureName.FIG13: fig13,
    FigureName.FIG14: fig14,
    FigureName.FIG15: fig15,
}

# thresholds each figure uses when the caller does not choose any
FIGURE_THRESHOLDS: Dict[FigureName, Tuple[int, ...]] = {
    FigureName.FIG12: (50,),
    FigureName.FIG13: (50, 100, 200),
    FigureName.FIG14: (50, 100, 150),
    FigureName.FIG15: (50, 100, 150),
}

def run(spec: ExperimentSpec, workers: int = 1) -> ResultTable:
    logger.info(f"Running {spec.kind.value} experiment (seed={spec.seed})")
    if spec.kind == ExperimentKind.WEIGHT_CURVE:
        return weight_curve_table(spec, workers)
    if spec.kind == ExperimentKind.TIP_SERIES:
        return tip_series_table(spec, workers)
    if spec.kind == ExperimentKind.CONFIRMATION_DELAY:
        return confirmation_delay_table(spec, workers)
    if spec.kind == ExperimentKind.ATTACK_SWEEP:
        return attack_sweep_table(spec)
    return FIGURES[spec.figure](spec, workers)
