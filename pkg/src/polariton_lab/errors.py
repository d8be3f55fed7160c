"""Exception types raised by polariton_lab."""


class PolaritonLabError(Exception):
    """Base class for all library errors."""


class InvalidInputError(PolaritonLabError, ValueError):
    """Malformed or out-of-range input."""


class DegenerateControlError(InvalidInputError):
    """Both control Rabi frequencies vanish, so the mixing angles are undefined."""


class UnsupportedRegimeError(PolaritonLabError):
    """The requested quantity is not defined for these parameters."""


class TrackingError(PolaritonLabError):
    """Eigenvector continuation lost a branch.

    Attributes
    ----------
    k : float
        Wavenumber at which the maximal overlap dropped below threshold.
    overlap : float
        The offending overlap.
    """

    def __init__(self, k, overlap):
        self.k = float(k)
        self.overlap = float(overlap)
        super().__init__(
            f"branch tracking ambiguous at k={self.k:.6g} "
            f"(max overlap {self.overlap:.3f} < 0.5); refine the k-grid"
        )


class StepSizeError(InvalidInputError):
    """Time step exceeds the stability/accuracy bound."""


class NonAdiabaticSpectrumError(PolaritonLabError):
    """Pulse spectrum has significant weight outside the adiabatic window."""


class ConfigError(PolaritonLabError, ValueError):
    """Configuration failed validation. ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
