"""Exception hierarchy shared by all ruintail modules."""


class RuinTailError(Exception):
    """Base class for all library errors."""


class InvalidSpecError(RuinTailError, ValueError):
    """A joint risk specification violates the model assumptions."""

    def __init__(self, violations):
        self.violations = tuple(violations)
        super().__init__("invalid risk spec: " + "; ".join(self.violations))


class Refusal(RuinTailError):
    """An operation declined to run because a stated precondition fails.

    Refusals are verdicts, not bugs: the message states which hypothesis
    is not met (e.g. nonnegative drift, bounded supremum).
    """


class MomentUnavailableError(RuinTailError):
    """No closed form or quadrature route exists for the requested moment."""


class EmptyEventError(RuinTailError, ValueError):
    """Conditioning event has empirical probability zero."""


class InsufficientPointsError(RuinTailError, ValueError):
    """Too few usable grid points for a log-log slope fit."""


class InfeasibleConstructionError(RuinTailError):
    """A minorant construction has no feasible solution for the given input."""


class ConfigError(RuinTailError, ValueError):
    """Malformed configuration tree or unknown schema key."""
