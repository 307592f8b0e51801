"""Exception types shared across the package."""


class HeisenlabError(Exception):
    """Base class for all package-specific errors."""


class StructureError(HeisenlabError):
    """A proposed H-type structure violates one of the defining identities."""


class DegenerateBasis(HeisenlabError):
    """Gram-Schmidt seeding failed; input data is numerically corrupted."""


class QuadratureOverflow(HeisenlabError):
    """Representation matrix requested outside the truncation envelope."""


class BoundaryMass(HeisenlabError):
    """Too much L2 mass sits in the outer shell of a sampling box."""


class BandLimitError(HeisenlabError):
    """Field is not band-limited on the given frequency grid."""


class SupportOverflow(HeisenlabError):
    """Scaled kernel support does not fit on the grid."""


class EpsTooLarge(HeisenlabError):
    """Wave-packet support condition fails at this epsilon."""


class CalibrationDivergence(HeisenlabError):
    """Numerical and closed-form Plancherel constants disagree."""


class InsufficientResolution(HeisenlabError):
    """Grid error dominates the quantity being measured."""


class NonConvergent(HeisenlabError):
    """Successive refinements fail to shrink."""
