import heapq
import logging
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from core import SeededStream, regime_rates
from exceptions import EmptyTipSetError, HorizonTooShortError, InvalidScenarioError
from models import (
    DelayEstimate,
    Issuer,
    LoadRegime,
    NetworkParams,
    TipCountEstimate,
    TipSeries,
    WeightEstimate,
    WeightTrace,
    check_threshold,
)
from runner import run_replications

logger = logging.getLogger(__name__)

# warm-up before the observed transaction is issued, in units of h_r
WARMUP_FACTOR = 50.0

class Transaction(NamedTuple):
    id: int
    issue_time: float
    reveal_time: float
    parents: Tuple[int, ...]
    issuer: Issuer
    own_weight: int = 1

class TipSet:
    """Set of transaction ids with O(1) add, remove and uniform sampling"""

    def __init__(self):
        self._items: List[int] = []
        self._positions: Dict[int, int] = {}

    def __len__(self) -> int:
        return len(self._items)

    def __contains__(self, tx_id: int) -> bool:
        return tx_id in self._positions

    def __iter__(self):
        return iter(self._items)

    def add(self, tx_id: int):
        self._positions[tx_id] = len(self._items)
        self._items.append(tx_id)

    def remove(self, tx_id: int):
        index = self._positions.pop(tx_id)
        last = self._items.pop()
        if index < len(self._items):
            self._items[index] = last
            self._positions[last] = index

    def at(self, index: int) -> int:
        return self._items[index]

class LedgerState:
    """The simulated DAG: transactions, visible tips and the reveal queue.

    A tip stays visible until a transaction that approves it reveals, so tips
    already picked by unrevealed transactions remain selectable. That is what
    keeps the tip count near 2 * lambda * h_r under high load.
    """

    def __init__(self, reveal_delay: float):
        self.reveal_delay = reveal_delay
        genesis = Transaction(0, 0.0, 0.0, (), Issuer.HONEST)
        self.transactions: List[Transaction] = [genesis]
        self.covered: List[bool] = [False]
        self.visible_tips = TipSet()
        self.visible_tips.add(genesis.id)
        self.pending: List[Tuple[float, int]] = []
        self.now = 0.0
        self.revealed_count = 1
        self.covered_revealed_count = 0

    def issue(self, t: float, parents: Tuple[int, ...], issuer: Issuer = Issuer.HONEST) -> Transaction:
        tx = Transaction(len(self.transactions), t, t + self.reveal_delay, parents, issuer)
        self.transactions.append(tx)
        self.covered.append(False)
        heapq.heappush(self.pending, (tx.reveal_time, tx.id))
        self.now = t
        return tx

    def reveal(self, tx_id: int):
        tx = self.transactions[tx_id]
        self.now = tx.reveal_time
        self.visible_tips.add(tx_id)
        self.revealed_count += 1
        for parent in tx.parents:
            if not self.covered[parent]:
                self.covered[parent] = True
                self.visible_tips.remove(parent)
                self.covered_revealed_count += 1

def tip_select(state: LedgerState, stream: SeededStream) -> Tuple[int, ...]:
    """Two distinct visible tips uniformly at random, or the only one there is"""
    tips = state.visible_tips
    count = len(tips)
    if count == 0:
        raise EmptyTipSetError(f"No visible tips at t={state.now}")
    if count == 1:
        return (tips.at(0),)
    first = stream.index(count)
    second = stream.index(count - 1)
    if second >= first:
        second += 1
    return (tips.at(first), tips.at(second))

class ArrivalProcess:
    """Poisson arrivals whose rate may switch once at a given instant"""

    def __init__(self, stream: SeededStream, rate: float, start: float = 0.0):
        self.stream = stream
        self.rate = rate
        self.now = start
        self.switch_time: Optional[float] = None
        self.rate_after = rate

    def switch(self, at: float, rate_after: float):
        self.switch_time = at
        self.rate_after = rate_after

    def next(self) -> float:
        t = self.now + self.stream.exponential(1.0 / self.rate)
        if self.switch_time is not None and t >= self.switch_time:
            # memoryless: restart the clock at the switch with the new rate
            if self.now < self.switch_time:
                t = self.switch_time + self.stream.exponential(1.0 / self.rate_after)
            self.rate = self.rate_after
            self.switch_time = None
        self.now = t
        return t

class DagSimulator:
    """Drives a LedgerState and tracks the approval cone of one observed transaction"""

    def __init__(self, reveal_delay: float, stream: SeededStream, record_tips: bool = False):
        self.state = LedgerState(reveal_delay)
        self.stream = stream
        self.in_cone: List[bool] = [False]
        self.weight = 0
        self.tip_samples: Optional[List[Tuple[float, int]]] = [(0.0, 1)] if record_tips else None

    def reveal_until(self, t: float):
        """Process every reveal with reveal_time <= t; reveals go before arrivals at equal times"""
        state = self.state
        pending = state.pending
        while pending and pending[0][0] <= t:
            reveal_time, tx_id = heapq.heappop(pending)
            state.reveal(tx_id)
            if self.tip_samples is not None:
                self.tip_samples.append((reveal_time, len(state.visible_tips)))

    def arrive(self, t: float, issuer: Issuer = Issuer.HONEST) -> bool:
        """Issue a transaction at t; True when it approves the observed transaction"""
        self.reveal_until(t)
        parents = tip_select(self.state, self.stream)
        self.state.issue(t, parents, issuer)
        approves = False
        for parent in parents:
            if self.in_cone[parent]:
                approves = True
                break
        self.in_cone.append(approves)
        if approves:
            self.weight += 1
        if self.tip_samples is not None:
            self.tip_samples.append((t, len(self.state.visible_tips)))
        return approves

    def observe(self, tx_id: int):
        self.in_cone[tx_id] = True
        self.weight = 1

def run_weight_experiment(
    params: NetworkParams,
    regime: LoadRegime,
    m: int,
    horizon: float,
    stream: SeededStream,
    warmup: Optional[float] = None,
    stop_at_confirmation: bool = False,
    strict: bool = False,
) -> WeightTrace:
    """Simulate one observed transaction and return its cumulative weight trace.

    The observed transaction is the first arrival after the warm-up. For the
    switching regimes the rate changes exactly when it reveals. Trace times
    are seconds since the reveal; the horizon is counted from the reveal too.
    """
    check_threshold(m)
    if horizon <= 0:
        raise InvalidScenarioError(f"horizon must be positive, got {horizon}")
    reveal_delay = params.reveal_delay
    if warmup is None:
        warmup = WARMUP_FACTOR * reveal_delay
    rate_before, rate_after = regime_rates(params, regime)

    sim = DagSimulator(reveal_delay, stream)
    arrivals = ArrivalProcess(stream, rate_before)
    t = arrivals.next()
    while t < warmup:
        sim.arrive(t)
        t = arrivals.next()
    sim.arrive(t, Issuer.OBSERVED)
    sim.observe(len(sim.state.transactions) - 1)
    reveal = t + reveal_delay
    arrivals.switch(reveal, rate_after)
    end = reveal + horizon

    samples: List[Tuple[float, int]] = [(0.0, 1)]
    confirmation_time = None
    while True:
        t = arrivals.next()
        if t > end:
            break
        if sim.arrive(t):
            samples.append((t - reveal, sim.weight))
            if confirmation_time is None and sim.weight >= m:
                confirmation_time = t - reveal
                if stop_at_confirmation:
                    break

    censored = confirmation_time is None
    if censored:
        message = f"{regime.label}: W={sim.weight} < m={m} after horizon {horizon}s"
        if strict:
            raise HorizonTooShortError(message)
        logger.debug(message)
    return WeightTrace.model_construct(
        samples=samples,
        reveal_time=reveal,
        threshold=m,
        horizon=horizon,
        confirmation_time=confirmation_time,
        censored=censored,
    )

def tip_count_series(
    params: NetworkParams,
    regime: LoadRegime,
    horizon: float,
    stream: SeededStream,
    switch_time: Optional[float] = None,
) -> TipSeries:
    """L(t) from genesis to the horizon, sampled at every arrival and reveal"""
    if horizon <= 0:
        raise InvalidScenarioError(f"horizon must be positive, got {horizon}")
    rate_before, rate_after = regime_rates(params, regime)
    if switch_time is None and rate_before != rate_after:
        switch_time = WARMUP_FACTOR * params.reveal_delay

    sim = DagSimulator(params.reveal_delay, stream, record_tips=True)
    arrivals = ArrivalProcess(stream, rate_before)
    if switch_time is not None:
        arrivals.switch(switch_time, rate_after)
    t = arrivals.next()
    while t <= horizon:
        sim.arrive(t)
        t = arrivals.next()
    sim.reveal_until(horizon)
    return TipSeries.model_construct(samples=sim.tip_samples, switch_time=switch_time)

def _standard_error(values: np.ndarray) -> float:
    if len(values) < 2:
        return float("nan")
    return float(np.std(values, ddof=1) / np.sqrt(len(values)))

def default_horizon(params: NetworkParams, regime: LoadRegime, m: int) -> float:
    """Generous horizon: five times the analytic delay plus a few reveal delays"""
    from analytic import confirmation_delay

    return 5.0 * confirmation_delay(m, regime, params) + 20.0 * params.reveal_delay

def _delay_replication(params, regime, m, horizon, stream) -> Optional[float]:
    trace = run_weight_experiment(params, regime, m, horizon, stream, stop_at_confirmation=True)
    return trace.confirmation_time

def estimate_confirmation_delay(
    params: NetworkParams,
    regime: LoadRegime,
    m: int,
    replications: int,
    stream: SeededStream,
    horizon: Optional[float] = None,
    workers: int = 1,
    bins: int = 20,
) -> DelayEstimate:
    """Mean delay from reveal to W >= m over independent replications; censored runs are counted, not averaged"""
    check_threshold(m)
    if replications < 1:
        raise InvalidScenarioError("replications must be at least 1")
    if horizon is None:
        horizon = default_horizon(params, regime, m)
    tasks = [(params, regime, m, horizon, stream.child(i)) for i in range(replications)]
    results = run_replications(_delay_replication, tasks, workers)

    delays = np.array([d for d in results if d is not None], dtype=float)
    censored = replications - len(delays)
    if censored:
        logger.warning(f"{regime.label} m={m}: {censored}/{replications} runs not confirmed within {horizon:.1f}s")
    if len(delays) == 0:
        return DelayEstimate(mean=float("nan"), standard_error=float("nan"), replications=replications, censored=censored)
    counts, edges = np.histogram(delays, bins=bins)
    histogram = [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(len(counts))]
    return DelayEstimate(
        mean=float(delays.mean()),
        standard_error=_standard_error(delays),
        replications=replications,
        censored=censored,
        histogram=histogram,
    )

def _weight_replication(params, regime, m, horizon, stream, times) -> Tuple[List[int], bool]:
    trace = run_weight_experiment(params, regime, m, horizon, stream)
    return trace.weights_at(times), trace.censored

def estimate_weight_curve(
    params: NetworkParams,
    regime: LoadRegime,
    times: List[float],
    replications: int,
    stream: SeededStream,
    m: int = 2,
    workers: int = 1,
) -> WeightEstimate:
    """Mean and standard error of W(t) at the given seconds after reveal"""
    if replications < 1:
        raise InvalidScenarioError("replications must be at least 1")
    horizon = max(max(times), params.reveal_delay)
    tasks = [(params, regime, m, horizon, stream.child(i), list(times)) for i in range(replications)]
    results = run_replications(_weight_replication, tasks, workers)
    matrix = np.array([weights for weights, _ in results], dtype=float)
    return WeightEstimate(
        times=list(times),
        means=[float(v) for v in matrix.mean(axis=0)],
        standard_errors=[_standard_error(matrix[:, j]) for j in range(matrix.shape[1])],
        replications=replications,
        censored=sum(1 for _, censored in results if censored),
    )

def _tip_replication(params, regime, horizon, stream, times) -> List[int]:
    series = tip_count_series(params, regime, horizon, stream)
    return [series.value_at(t) for t in times]

def estimate_tip_count(
    params: NetworkParams,
    regime: LoadRegime,
    times: List[float],
    replications: int,
    stream: SeededStream,
    workers: int = 1,
) -> TipCountEstimate:
    """Mean tip count at the given seconds since genesis"""
    if replications < 1:
        raise InvalidScenarioError("replications must be at least 1")
    horizon = max(times)
    tasks = [(params, regime, horizon, stream.child(i), list(times)) for i in range(replications)]
    matrix = np.array(run_replications(_tip_replication, tasks, workers), dtype=float)
    return TipCountEstimate(
        times=list(times),
        means=[float(v) for v in matrix.mean(axis=0)],
        standard_errors=[_standard_error(matrix[:, j]) for j in range(matrix.shape[1])],
        replications=replications,
    )

def arrival_indexed_weights(
    params: NetworkParams,
    steps: List[int],
    stream: SeededStream,
    regime: LoadRegime = LoadRegime.H2LR,
    warmup: Optional[float] = None,
) -> List[int]:
    """W of the observed transaction after the k-th arrival following its reveal, for each k in steps"""
    if not steps or min(steps) < 0:
        raise InvalidScenarioError("steps must be a non-empty list of non-negative counts")
    reveal_delay = params.reveal_delay
    if warmup is None:
        warmup = WARMUP_FACTOR * reveal_delay
    rate_before, rate_after = regime_rates(params, regime)

    sim = DagSimulator(reveal_delay, stream)
    arrivals = ArrivalProcess(stream, rate_before)
    t = arrivals.next()
    while t < warmup:
        sim.arrive(t)
        t = arrivals.next()
    sim.arrive(t, Issuer.OBSERVED)
    sim.observe(len(sim.state.transactions) - 1)
    reveal = t + reveal_delay
    arrivals.switch(reveal, rate_after)

    # arrivals between the issue and the reveal of the observed transaction are not counted
    t = arrivals.next()
    while t < reveal:
        sim.arrive(t)
        t = arrivals.next()
    wanted = sorted(set(steps))
    weights = {0: sim.weight}
    count = 0
    while count < wanted[-1]:
        sim.arrive(t)
        count += 1
        weights[count] = sim.weight
        t = arrivals.next()
    return [weights[k] for k in steps]

def _arrival_weight_replication(params, step, warmup, stream) -> int:
    return arrival_indexed_weights(params, [step], stream, warmup=warmup)[0]

def arrival_weight_distribution(
    params: NetworkParams,
    step: int,
    replications: int,
    stream: SeededStream,
    warmup: Optional[float] = None,
    workers: int = 1,
) -> np.ndarray:
    """Empirical H2LR distribution of W after `step` post-reveal arrivals, indexed by weight"""
    if replications < 1:
        raise InvalidScenarioError("replications must be at least 1")
    tasks = [(params, step, warmup, stream.child(i)) for i in range(replications)]
    weights = run_replications(_arrival_weight_replication, tasks, workers)
    return np.bincount(weights, minlength=step + 2) / replications
