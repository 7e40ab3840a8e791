"""Exception types shared across the toolkit."""


class PairSynthError(Exception):
    """Base class for all toolkit errors."""


class UnresolvedSymbol(PairSynthError):
    pass


class ForeignSymbol(PairSynthError):
    pass


class InvalidSkeleton(PairSynthError):
    pass


class IncompatibleLocalStructure(PairSynthError):
    pass


class EmptyInitialSet(PairSynthError):
    pass


class BudgetExceeded(PairSynthError):
    """Raised when an explicit-state construction would exceed its state budget."""

    def __init__(self, budget, what="states"):
        super().__init__(f"budget of {budget} {what} exceeded")
        self.budget = budget


class UndefinedProjection(PairSynthError):
    pass


class SpecViolated(PairSynthError):
    def __init__(self, pair, state=None):
        super().__init__(f"pair-program {sorted(pair)} violates its specification")
        self.pair = pair
        self.state = state


class RuleForbids(PairSynthError):
    pass


class InconsistentJoinState(PairSynthError):
    pass


class NoCompatibleState(PairSynthError):
    pass


class DeadlockReached(PairSynthError):
    def __init__(self, config, wfg=None):
        super().__init__("no enabled transition and no permitted create")
        self.config = config
        self.wfg = wfg


class InvalidScenario(PairSynthError):
    pass


class Interrupted(PairSynthError):
    """A halt request from the creation protocol arrived while polling."""


class InputError(PairSynthError):
    """Malformed input file or expression."""
