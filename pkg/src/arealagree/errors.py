"""Exception types shared across the package."""


class LatticeError(ValueError):
    """Invalid areal graph (bad indices, self-loops, malformed edge files)."""


class IsolatedUnitError(LatticeError):
    """A unit has no neighbors; CAR precision matrices would be singular."""


class InvalidParameterError(ValueError):
    """Model parameter outside its admissible domain."""


class DegenerateInputError(ValueError):
    """Inputs are valid individually but jointly degenerate (e.g. zero denominator)."""


class SingularDesignError(ValueError):
    """Rank-deficient design matrix in a least-squares fit."""


class DataFormatError(ValueError):
    """Malformed or inconsistent data file contents."""


class ChainInitError(RuntimeError):
    """MCMC could not start: non-finite posterior at the initial state."""
