import logging
import math
import zlib
from typing import Optional, Tuple, Union

import numpy as np

from exceptions import RegimeConditionViolatedError
from models import LoadRegime, NetworkParams

logger = logging.getLogger(__name__)

HIGH_LOAD_REGIMES = (LoadRegime.HR, LoadRegime.H2LR, LoadRegime.L2HR)
LOW_LOAD_REGIMES = (LoadRegime.LR, LoadRegime.H2LR, LoadRegime.L2HR)

_BUFFER_SIZE = 4096

def validate(params: Union[NetworkParams, dict], regime: Optional[LoadRegime] = None) -> NetworkParams:
    """Check the load conditions for the rates the regime uses.

    HR needs 1/lambda_h <= h_r, LR needs 1/lambda_l > h_r; the switching regimes
    need both. Without a regime both conditions are checked.
    """
    if not isinstance(params, NetworkParams):
        params = NetworkParams(**params)
    needs_high = regime is None or regime in HIGH_LOAD_REGIMES
    needs_low = regime is None or regime in LOW_LOAD_REGIMES
    label = regime.label if regime else "any regime"
    if needs_high and params.lambda_high * params.reveal_delay < 1.0:
        raise RegimeConditionViolatedError(
            f"{label}: high load needs lambda_high * reveal_delay >= 1 "
            f"(got {params.lambda_high} * {params.reveal_delay})"
        )
    if needs_low and params.lambda_low * params.reveal_delay >= 1.0:
        raise RegimeConditionViolatedError(
            f"{label}: low load needs lambda_low * reveal_delay < 1 "
            f"(got {params.lambda_low} * {params.reveal_delay})"
        )
    return params

def regime_rates(params: NetworkParams, regime: LoadRegime) -> Tuple[float, float]:
    """Arrival rate before and after the switch instant"""
    if regime == LoadRegime.HR:
        return params.lambda_high, params.lambda_high
    if regime == LoadRegime.LR:
        return params.lambda_low, params.lambda_low
    if regime == LoadRegime.H2LR:
        return params.lambda_high, params.lambda_low
    return params.lambda_low, params.lambda_high

def _label_key(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))

class SeededStream:
    """A reproducible random stream addressed by (master_seed, key path).

    Streams are derived with numpy's SeedSequence spawn keys, so replication i
    gets the same numbers no matter which worker runs it or in which order.
    A stream has one owner; scalar draws are served from a buffer.
    """

    def __init__(self, master_seed: int, key: Tuple[int, ...]):
        self.master_seed = int(master_seed)
        self.key = tuple(int(k) for k in key)
        sequence = np.random.SeedSequence(entropy=self.master_seed, spawn_key=self.key)
        self.rng = np.random.Generator(np.random.PCG64(sequence))
        self._buffer = np.empty(0)
        self._cursor = 0

    @property
    def stream_index(self) -> int:
        return self.key[-1] if self.key else 0

    def child(self, index: int) -> "SeededStream":
        return SeededStream(self.master_seed, self.key + (index,))

    def random(self) -> float:
        if self._cursor >= len(self._buffer):
            self._buffer = self.rng.random(_BUFFER_SIZE)
            self._cursor = 0
        value = self._buffer[self._cursor]
        self._cursor += 1
        return float(value)

    def exponential(self, mean: float) -> float:
        return -mean * math.log1p(-self.random())

    def index(self, n: int) -> int:
        """Uniform integer in [0, n)"""
        return min(int(self.random() * n), n - 1)

    def __repr__(self) -> str:
        return f"SeededStream(master_seed={self.master_seed}, key={self.key})"

def derive_stream(master_seed: int, index: int, label: str = "") -> SeededStream:
    """Stream `index` of `master_seed`; a label separates unrelated experiments sharing a seed"""
    key = (_label_key(label), index) if label else (index,)
    return SeededStream(master_seed, key)
