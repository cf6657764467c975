"""Exception types shared across the library."""


class OpticlustError(Exception):
    """Base class for all library errors."""


class DegreeProductMismatch(OpticlustError):
    """tp*cp*pp*dp does not equal the device count."""


class IndivisibleDimension(OpticlustError):
    """A model dimension is not divisible by its parallelism degree."""

    def __init__(self, dimension: str, message: str):
        self.dimension = dimension
        super().__init__(message)


class PlacementIncomplete(OpticlustError):
    """A device is missing a rank assignment for some parallelism."""


class EdgeBudgetExceeded(OpticlustError):
    """Memory, D2D and CPO interfaces do not fit on the die perimeter."""


class OpticalPortOverflow(OpticlustError):
    """Requested optical links per edge exceed the CPO edge budget."""


class TpExceedsMcm(OpticlustError):
    """Tensor-parallel degree larger than the die count of one MCM."""


class NoIntraFill(OpticlustError):
    """Intra-MCM parallelism degrees cannot exactly fill the die grid."""


class InsufficientLinks(OpticlustError):
    """Fewer optical links than inter-MCM parallelisms needing one."""


class NoFeasibleMapping(OpticlustError):
    """No parallelism-to-rail-dimension assignment satisfies the port cap."""


class CapacityExceeded(OpticlustError):
    """Per-die memory footprint exceeds attached HBM capacity."""


class NoFeasibleStrategy(OpticlustError):
    """Every sampled parallel strategy violated a constraint."""


class SearchExhausted(OpticlustError):
    """The outer search has no unvisited architecture neighbor left."""


class ParseError(OpticlustError):
    """Config file could not be parsed."""


class ValidationError(OpticlustError):
    """Config parsed but failed schema validation."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(message)
