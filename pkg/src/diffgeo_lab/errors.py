"""Exception types shared across the toolkit."""


class DiffgeoError(Exception):
    """Base class for all toolkit errors."""


class DomainError(DiffgeoError):
    """Evaluation requested outside a metric's or output's domain of validity."""


class MismatchedGrids(DiffgeoError):
    """Two trajectories do not share a time grid."""


class ZeroTangent(DiffgeoError):
    """A direction-dependent quantity was requested for the zero tangent vector."""


class EquilibriumPoint(DiffgeoError):
    """A flow-dependent construction was requested where the vector field vanishes."""


class StepSizeUnderflow(DiffgeoError):
    """Adaptive step control drove the step below h_min."""


class NonFiniteState(DiffgeoError):
    """Integration produced a non-finite state."""


class TangentialCrossing(DiffgeoError):
    """A section sign change failed the transversality threshold."""


class NoConvergence(DiffgeoError):
    """An iterative solve exhausted its iteration budget."""


class NoCycle(DiffgeoError):
    """Limit-cycle search fell into a fixed point or found no closed orbit."""


class NotASaddle(DiffgeoError):
    """Invariant-manifold seeding requires a saddle fixed point."""


class BranchEscaped(DiffgeoError):
    """An invariant-manifold branch left the trapping region before the section."""


class NoSignChange(DiffgeoError):
    """Bisection found no bracket (e.g. no homoclinic connection at this damping)."""


class LeftRegion(DiffgeoError):
    """A trajectory exited the certified contraction domain."""


class Inconclusive(DiffgeoError):
    """The analysis horizon was insufficient to classify the limit behavior."""


class ScenarioError(DiffgeoError):
    """A JSON scenario failed strict validation."""
