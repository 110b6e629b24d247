"""Exception hierarchy. Every error is a ValueError so callers can catch broadly."""


class MMPairError(ValueError):
    pass


class LayoutError(MMPairError):
    pass


class SizeError(MMPairError):
    pass


class ShapeError(MMPairError):
    pass


class PreconditionError(MMPairError):
    pass


class SymmetryError(MMPairError):
    pass


class ConvergenceError(MMPairError):
    pass


class PermutationError(MMPairError):
    pass


class ConfigurationError(MMPairError):
    pass


class CertificationError(MMPairError):
    pass


class NumericError(MMPairError):
    pass
