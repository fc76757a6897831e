class LabError(Exception):
    pass


class PrecisionExhausted(LabError):
    """
    An exact comparison stayed undecided up to the configured cap.
    For random points this means a (measure-zero) boundary hit or a cap that is too small.
    """


class ScanLimitExceeded(LabError):
    """
    No further return was found below the scan horizon.
    The terms found so far travel with the exception so callers can flush partial output.
    """

    def __init__(self, message: str, terms=(), scanned: int = 0):
        super().__init__(message)
        self.terms = list(terms)
        self.scanned = scanned


class InsufficientTerms(LabError):
    pass


class BudgetExceeded(LabError):
    pass


class IncompatibleTarget(LabError):
    pass


class ConfigError(LabError):
    pass
