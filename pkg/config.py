import os
from dotenv import load_dotenv

from exceptions import ConfigurationError

load_dotenv()

def _int_env(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigurationError(f"{name} must be an integer, got {raw!r}")

class Config:
    SEED = _int_env("DAGLEDGER_SEED", 1)
    WORKERS = _int_env("DAGLEDGER_WORKERS", 0) or (os.cpu_count() or 1)
    REPLICATIONS = _int_env("DAGLEDGER_REPLICATIONS", 500)
    MC_REPLICATIONS = _int_env("DAGLEDGER_MC_REPLICATIONS", 0)
    DEFICIT_CUTOFF = _int_env("DAGLEDGER_DEFICIT_CUTOFF", 200)
    OUTPUT_DIR = os.getenv("DAGLEDGER_OUTPUT_DIR", "results")
    LOG_LEVEL = os.getenv("DAGLEDGER_LOG_LEVEL", "WARNING")

    # numerical-results parameter block
    LAMBDA_HIGH = 50.0
    LAMBDA_LOW = 0.5
    REVEAL_DELAY = 1.0
    THRESHOLDS = (50, 100, 200)

    @classmethod
    def validate(cls):
        if cls.WORKERS < 1:
            raise ConfigurationError("DAGLEDGER_WORKERS must be positive.")
        if cls.REPLICATIONS < 1:
            raise ConfigurationError("DAGLEDGER_REPLICATIONS must be at least 1.")
        if cls.MC_REPLICATIONS < 0:
            raise ConfigurationError("DAGLEDGER_MC_REPLICATIONS cannot be negative.")
        if cls.DEFICIT_CUTOFF < 2:
            raise ConfigurationError("DAGLEDGER_DEFICIT_CUTOFF must be at least 2.")
        if cls.LOG_LEVEL.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ConfigurationError(f"Unknown DAGLEDGER_LOG_LEVEL {cls.LOG_LEVEL!r}.")
