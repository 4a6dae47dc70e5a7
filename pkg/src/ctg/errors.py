"""Exception taxonomy shared across the package.

Every error raised by the engine is a subclass of CtgError so callers
(CLI, HTTP service) can map failures to a closed set of codes.
"""


class CtgError(Exception):
    """Base class for all engine errors."""

    code = "ENGINE_ERROR"


# --- graph store ---------------------------------------------------------


class InvalidVariable(CtgError):
    code = "INVALID_VARIABLE"


class WorldCollision(CtgError):
    """Same node and world already hold a different current_value."""

    code = "WORLD_COLLISION"


class UnknownNode(CtgError):
    code = "UNKNOWN_NODE"


class UnknownEndpoint(CtgError):
    code = "UNKNOWN_ENDPOINT"


class SelfLoop(CtgError):
    code = "SELF_LOOP"


class CyclicQueryRegion(CtgError):
    """The ancestor region of a query target contains a directed cycle."""

    code = "CYCLIC_QUERY_REGION"


# --- blankets and matching -----------------------------------------------


class NoBlanketFound(CtgError):
    code = "NO_BLANKET_FOUND"


class NoSharedObservations(CtgError):
    """The two worlds have no node instantiated with equal values."""

    code = "NO_SHARED_OBSERVATIONS"


class InsufficientMaterialWarning(UserWarning):
    """Dataset generation could not fill the requested quota."""


# --- SCM oracle -----------------------------------------------------------


class MissingExogenous(CtgError):
    code = "MISSING_EXOGENOUS"


class DomainViolation(CtgError):
    code = "DOMAIN_VIOLATION"


class StateSpaceTooLarge(CtgError):
    """Exogenous product domain exceeds the enumeration cap."""

    code = "STATE_SPACE_TOO_LARGE"


class InfeasibleEvidence(CtgError):
    """No exogenous assignment reproduces the given evidence."""

    code = "INFEASIBLE_EVIDENCE"


class MechanismMissing(CtgError):
    code = "MECHANISM_MISSING"


# --- retrieval and backends -----------------------------------------------


class BackendFailure(CtgError):
    """Embedding or chat backend misbehaved (retriable at call sites)."""

    code = "BACKEND_FAILURE"


class EmptyIndex(CtgError):
    code = "EMPTY_INDEX"


# --- extraction -----------------------------------------------------------


class MaxRetriesExceeded(CtgError):
    code = "MAX_RETRIES_EXCEEDED"


class SchemaViolation(CtgError):
    code = "SCHEMA_VIOLATION"


# --- inference ------------------------------------------------------------


class UnresolvableNode(CtgError):
    """A required node has neither a value nor resolvable neighbors."""

    code = "UNRESOLVABLE_NODE"


class ReasonerFailure(CtgError):
    code = "REASONER_FAILURE"


class ParseFailure(ReasonerFailure):
    """Reasoner reply could not be parsed; triggers a retry."""

    code = "PARSE_FAILURE"


class AmbiguousAbduction(ReasonerFailure):
    """Several node values are consistent with the observed children."""

    code = "AMBIGUOUS_ABDUCTION"


class AbductionConflict(ReasonerFailure):
    """No node value is consistent with all observed children."""

    code = "ABDUCTION_CONFLICT"


# --- evaluation / service ---------------------------------------------------


class JoinFailure(CtgError):
    """Result line has no matching dataset line."""

    code = "JOIN_FAILURE"


class GraphNotLoaded(CtgError):
    code = "GRAPH_NOT_LOADED"
