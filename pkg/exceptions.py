class DagLedgerError(Exception):
    """Base exception for the DAG ledger toolkit"""
    pass

class ValidationError(DagLedgerError):
    """Input validation errors"""
    pass

class NonPositiveRateError(ValidationError):
    """An arrival rate is zero or negative"""
    pass

class NonPositiveDelayError(ValidationError):
    """The reveal delay is zero or negative"""
    pass

class RegimeConditionViolatedError(ValidationError):
    """Rates do not satisfy the high/low load condition of the requested regime"""
    pass

class InvalidThresholdError(ValidationError):
    """Confirmation threshold below 2"""
    pass

class InvalidScenarioError(ValidationError):
    """Attack scenario or Monte-Carlo settings out of range"""
    pass

class AdaptationUndefinedError(ValidationError):
    """Adaptation period needs L_h > 1.408"""
    pass

class ConfigurationError(DagLedgerError):
    """Configuration related errors"""
    pass

class EmptyTipSetError(DagLedgerError):
    """Tip selection on a ledger without revealed tips"""
    pass

class HorizonTooShortError(DagLedgerError):
    """Observed transaction not confirmed before the horizon elapsed"""
    pass

class SpecParseError(DagLedgerError):
    """Experiment spec could not be parsed"""
    pass

class SchemaMismatchError(DagLedgerError):
    """Result files do not share a schema or row keys"""
    pass
