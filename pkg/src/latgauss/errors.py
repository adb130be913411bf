"""Exception types shared across the package."""


class LatticeError(ValueError):
    """Invalid lattice input."""


class DegenerateBasisError(LatticeError):
    """Basis vectors are linearly dependent."""


class TargetNotInSpanError(LatticeError):
    """Target lies outside the span of the basis."""


class NotLatticeVectorError(LatticeError):
    """Vector has non-integral coefficients."""


class PreconditionError(LatticeError):
    """A documented precondition does not hold."""


class KleinParameterError(PreconditionError):
    """Gaussian parameter too small for the randomized nearest-plane sampler."""


class RadiusTooSmallError(PreconditionError):
    """Sublattice radius below the containment requirement."""


class MassDidNotConvergeError(RuntimeError):
    """Enumeration needed more points than the configured cap."""


class PipelineStarvedError(RuntimeError):
    """Too few samples for the requested combiner stages."""


class SolverStarvedError(RuntimeError):
    """Sampler produced no usable output."""


class LadderViolationError(RuntimeError):
    """No ladder index met its bound; indicates a bug."""
