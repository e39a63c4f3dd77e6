"""Exception and warning types shared across the package."""


class DimensionMismatch(ValueError):
    """Array lengths incompatible with the manifold or with each other."""


class NotTangent(ValueError):
    """Vector violates the tangent-space constraint beyond tolerance."""


class AntipodalPoints(ValueError):
    """Sphere log map requested at or beyond the cut locus."""


class DegenerateConfiguration(ValueError):
    """Landmark configuration collapses to a point after centering."""


class EmptyInput(ValueError):
    """An operation that needs at least one element received none."""


class GridMismatch(ValueError):
    """Curves do not share a common time grid."""


class ParallelVector(ValueError):
    """Vector is (numerically) parallel to the base point; no tangent direction."""


class NotPositiveDefinite(RuntimeError):
    """Gram matrix failed factorization even after jitter escalation."""


class AllRestartsFailed(RuntimeError):
    """Every hyperparameter optimization start was infeasible."""


class LengthMismatch(ValueError):
    """Paired sequences have different lengths."""


class EmptyCurve(ValueError):
    """A curve metric received an empty curve."""


class TooFewRecords(ValueError):
    """Trajectory preprocessing needs at least two records."""


class OutOfRange(ValueError):
    """Coordinate value outside its documented domain."""


class ConfigInvalid(ValueError):
    """Run configuration failed validation."""


class SchemaViolation(ValueError):
    """Serialized file does not match the expected schema."""


class RankDeficientWarning(UserWarning):
    """Least-squares design is rank deficient; ridge fallback engaged."""


class NonConvergedWarning(UserWarning):
    """Iterative routine stopped at its iteration cap before meeting tolerance."""
