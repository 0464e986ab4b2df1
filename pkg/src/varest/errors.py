"""Exception hierarchy for varest.

Every error raised on purpose by the library derives from ``VarestError`` so the
CLI can map it to an exit code without catching unrelated bugs.
"""

from __future__ import annotations


class VarestError(Exception):
    """Base class for all library errors."""


class DataError(VarestError):
    """Problems with input files or populations (CLI exit code 2)."""


class MissingFile(DataError, FileNotFoundError):
    def __init__(self, path):
        self.path = str(path)
        super().__init__(f"file not found: {self.path}")


class MalformedRow(DataError):
    def __init__(self, line: int, detail: str = ""):
        self.line = line
        msg = f"malformed row at line {line}"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class DegeneratePopulation(DataError):
    pass


class MissingKey(DataError, KeyError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"missing required key: {name}")

    def __str__(self) -> str:  # KeyError would otherwise repr() the message
        return self.args[0]


class InvariantViolation(DataError):
    pass


class InvalidDesign(VarestError, ValueError):
    """Sample size outside 2 <= n <= N."""


class TooManyCombinations(VarestError):
    def __init__(self, count: int, cap: int):
        self.count = count
        self.cap = cap
        super().__init__(f"C(N, n) = {count} exceeds the enumeration cap {cap}")


class InvalidSpec(VarestError, ValueError):
    """Malformed or contradictory estimator specification."""


class EstimatorError(VarestError, ArithmeticError):
    """An estimator cannot be evaluated on a particular sample."""


class DegenerateSample(EstimatorError):
    pass


class NumericalDomain(EstimatorError):
    pass


class DegenerateAuxiliary(VarestError, ArithmeticError):
    pass


class SingularOptimum(VarestError, ArithmeticError):
    pass


class EmptyGrid(VarestError, ValueError):
    pass
