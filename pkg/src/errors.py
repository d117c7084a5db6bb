"""
Exception hierarchy for estimation and ingestion failures
"""


class EstimationError(ValueError):
    """A numerical estimator could not produce a valid result"""


class DegenerateDataError(EstimationError):
    """Data lacks the variability an estimator needs (constant columns, identical points)"""


class QpInfeasibleError(EstimationError):
    """Box and equality constraints of a quadratic program have no common point"""


class DataFormatError(ValueError):
    """Input file does not follow the long-format panel contract"""

    def __init__(self, message: str, problems=None):
        self.problems = list(problems or [])
        if self.problems:
            shown = "; ".join(self.problems[:10])
            more = f" (+{len(self.problems) - 10} more)" if len(self.problems) > 10 else ""
            message = f"{message}: {shown}{more}"
        super().__init__(message)
