"""Exception hierarchy shared across the package."""


class GapError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(GapError, ValueError):
    """A model or distribution parameter is outside its admissible domain."""


class ShapeError(GapError, ValueError):
    """Array dimensions are inconsistent with the declared problem size."""


class DataFormatError(GapError, ValueError):
    """An input file does not conform to its declared format."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class BudgetExceededError(GapError):
    """Exact enumeration would exceed the configured term budget.

    Attributes
    ----------
    cardinality : int
        Number of admissible component tensors for the full matrix.
    n_terms : int
        Number of terms the per-document enumeration would visit.
    budget : int
        The limit that was exceeded.
    """

    def __init__(self, cardinality, n_terms, budget):
        super().__init__(
            f"enumeration needs {n_terms} terms (admissible set cardinality "
            f"{cardinality}), exceeding the budget of {budget}"
        )
        self.cardinality = cardinality
        self.n_terms = n_terms
        self.budget = budget


class DegenerateSupportError(GapError):
    """A positive count sits on a cell whose model intensity is exactly zero."""


class NumericalError(GapError):
    """A numerical invariant was violated (NaN or overflow in an iterate)."""
