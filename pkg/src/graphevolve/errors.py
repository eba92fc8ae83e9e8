"""Exception types raised across the package.

Every error is a subclass of :class:`GraphEvolveError` so callers can catch
the whole family; the CLI maps validation errors to exit code 2 and runtime
errors to exit code 1.
"""


class GraphEvolveError(Exception):
    """Base class for all package errors."""


# --- graph ---------------------------------------------------------------

class DuplicateId(GraphEvolveError):
    """Node id already present in the graph."""


class EmbeddingDimensionMismatch(GraphEvolveError):
    """Node embedding length differs from the graph's configured dimension."""


class UnknownEndpoint(GraphEvolveError):
    """Edge endpoint references a node id that does not exist."""


class IllegalSelfLoop(GraphEvolveError):
    """Self-loop on an edge type that does not allow them."""


class MalformedInput(GraphEvolveError):
    """Unparseable or invalid serialized graph; message carries a field path."""


# --- metrics -------------------------------------------------------------

class EmptyInput(GraphEvolveError):
    """An operation that needs at least one element got none."""


class WeightsOffSimplex(GraphEvolveError):
    """Weight vector is not on the probability simplex."""


# --- operators -----------------------------------------------------------

class ShapeMismatch(GraphEvolveError):
    """Merge tensors have incompatible shapes."""


class OperatorPrecondition(GraphEvolveError):
    """A mutation operator's graph precondition is unmet.

    The engine downgrades these to rejected outcomes; direct calls raise.
    """


class NoCodeNodes(OperatorPrecondition):
    pass


class NoDocPairs(OperatorPrecondition):
    pass


class NoBuildNodes(OperatorPrecondition):
    pass


class NoLegacyNodes(OperatorPrecondition):
    pass


class NoMergeableNodes(OperatorPrecondition):
    """Graph holds no compiler/policy node carrying a merge tensor."""


class NonPositiveImprovement(GraphEvolveError):
    """Transmute improvement factor is <= 0 while below threshold."""


class AllOperatorsDisabled(GraphEvolveError):
    """Operator sampling has no enabled kinds to draw from."""


# --- selection -----------------------------------------------------------

class DimensionMismatch(GraphEvolveError):
    """Fitness vector of unexpected length."""


class LengthMismatch(GraphEvolveError):
    """Parallel lists have different lengths."""


class PoolTooSmall(GraphEvolveError):
    """Selection pool smaller than the requested population size."""


# --- bandit --------------------------------------------------------------

class NonFiniteInput(GraphEvolveError):
    """Vector contains NaN or infinity."""


# --- safety --------------------------------------------------------------

class NoProbes(GraphEvolveError):
    """Environment defines no behavioral probes."""


class EmptyWindow(GraphEvolveError):
    """Risk estimate requested over an empty window."""


# --- engine --------------------------------------------------------------

class EmptyPopulation(GraphEvolveError):
    pass


class UnknownEventKind(GraphEvolveError):
    pass


class OutOfRangeEvent(GraphEvolveError):
    """Scheduled event generation index falls outside the run."""


class EngineRunError(GraphEvolveError):
    """A module error aborted the run; carries the failing generation."""

    def __init__(self, generation: int, cause: Exception):
        super().__init__(f"generation {generation}: {cause}")
        self.generation = generation
        self.cause = cause


# --- environment ---------------------------------------------------------

class InvalidSpec(GraphEvolveError):
    """Estate specification violates its invariants."""


# --- cli -----------------------------------------------------------------

class UnknownScenario(GraphEvolveError):
    pass


class ConfigError(GraphEvolveError):
    """Configuration parse or validation failure; message names the field."""
