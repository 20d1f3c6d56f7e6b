"""Exception types shared across the package."""


class EdgeplanError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(EdgeplanError):
    """A document could not be decoded or has the wrong structure."""


class ValidationError(EdgeplanError):
    """A decoded document or constructed value violates an invariant."""


class PlanError(EdgeplanError):
    """A plan is structurally invalid for the given graph and testbed."""


class PlannerError(EdgeplanError):
    """The planner could not produce a plan (e.g. no feasible scheme)."""


class SearchCapExceeded(PlannerError):
    """Exhaustive enumeration was requested beyond the configured cap."""
