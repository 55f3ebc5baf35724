"""Exception hierarchy shared by every module."""


class EdgeSchedError(Exception):
    """Base class for all scheduling library errors."""


class ConfigError(EdgeSchedError, ValueError):
    """Invalid pool, catalog, scenario or generator configuration."""


class ProfileNotFoundError(EdgeSchedError, LookupError):
    """A query type has no catalog entry for the requested resource class."""


class InvalidDagError(EdgeSchedError, ValueError):
    """Dataflow graph is cyclic or breaks the source/sink structure rules."""


class IncompleteMappingError(EdgeSchedError, ValueError):
    """A mapping does not cover every vertex of its dataflow."""


class DomainError(EdgeSchedError, ValueError):
    """Argument outside the domain of a function."""


class ResourceNotFoundError(EdgeSchedError, LookupError):
    """Resource index is not part of the pool."""


class InstanceTooLargeError(EdgeSchedError, ValueError):
    """Brute-force oracle called on an instance above its size guard."""


class GenerationError(EdgeSchedError, RuntimeError):
    """Workload generator could not produce a feasible dataflow."""


class ProvenanceError(EdgeSchedError, ValueError):
    """Two traces do not share pool, workload and strategy provenance."""


class StateError(EdgeSchedError, ValueError):
    """Placement state is internally inconsistent."""
