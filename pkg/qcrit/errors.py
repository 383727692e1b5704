"""Exception hierarchy shared by every qcrit module."""
from typing import List, Optional


class QcritError(Exception):
    """Base class for all errors raised by qcrit."""


class ModelError(QcritError):
    """A model description or config file is malformed."""


class SingularSymbolError(QcritError):
    """The per-momentum Sylvester system (or a dense fixed-point equation) is singular."""

    def __init__(self, message: str, momenta: Optional[List[float]] = None):
        super().__init__(message)
        self.momenta = list(momenta or [])


class UnstableSteadyStateError(QcritError):
    """Some drift eigenvalue has negative real part: there is no physical fixed point."""

    def __init__(self, message: str, momenta: Optional[List[float]] = None):
        super().__init__(message)
        self.momenta = list(momenta or [])


class NoPolesError(QcritError):
    """No root of the pole conditions lies inside the searched strip."""

    def __init__(self, message: str, im_cap: float):
        super().__init__(message)
        self.im_cap = im_cap


class FitDegenerateError(QcritError):
    """The sweep shows no divergence that a power law could describe."""


class TailTooFatError(QcritError):
    """Correlation blocks beyond the computed range are not negligible."""


class NotPositiveError(QcritError):
    """A bosonic covariance matrix is not positive definite."""


class DegenerateKernelError(QcritError):
    """The Liouvillian has more than one steady state."""

    def __init__(self, message: str, kernel_dimension: int):
        super().__init__(message)
        self.kernel_dimension = kernel_dimension
