"""Exception types shared across the package."""


class InvalidDistribution(ValueError):
    pass


class AlphabetMismatch(ValueError):
    pass


class InfiniteDivergence(ValueError):
    """Raised where a finite relative entropy is required but S(P||Q) = +inf."""


class DominationError(ValueError):
    """2^-a P(i) <= Q(i) fails; ``witness`` is the offending symbol."""

    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


class ProtocolError(ValueError):
    pass


class ResourceGuard(ValueError):
    """Instance exceeds an explicit size guard."""


class BudgetExhausted(RuntimeError):
    """An existential search (retries, coin realizations) missed within its budget.

    ``best`` carries the best object found, if any.
    """

    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best
