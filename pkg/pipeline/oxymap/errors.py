"""Exceptions raised by the oxygenation mapping pipeline.
"""

# Standard library imports
from typing import Dict, Optional


class OxymapError(ValueError):
    """Base class for all domain failures raised by the pipeline."""


class DimensionMismatchError(OxymapError):
    """Raised when rasters, masks or tensors do not share a shape."""


class EmptyMaskError(OxymapError):
    """Raised when a mask selects no pixels."""


class ZeroDenominatorError(OxymapError):
    """Raised when a normalizing sum evaluates to zero."""


class OutOfGamutError(OxymapError):
    """Raised when a reflectance pair cannot be reached by a lookup table."""

    def __init__(self, message: str, diagnostic: Optional[Dict] = None) -> None:
        """Initializes a new instance of an `OutOfGamutError`.

        Args:
            message (`str`): The error message.

            diagnostic (`dict`): The nearest point on the table
                boundary, holding the keys "rd_dc", "rd_ac", "mua",
                "musp" and "distance". Defaults to `None`.

        Returns:
            `None`
        """
        super().__init__(message)
        self.diagnostic = diagnostic or {}


class FrequencyMismatchError(OxymapError):
    """Raised when data and lookup table spatial frequencies disagree."""


class WavelengthMismatchError(OxymapError):
    """Raised when wavelengths do not match a basis or each other."""


class SingularBasisError(OxymapError):
    """Raised when extinction coefficient columns are linearly dependent."""


class MissingChromophoreError(OxymapError):
    """Raised when a required chromophore channel is absent."""


class ManifestError(OxymapError):
    """Raised when a network manifest or weight table is inconsistent."""


class ContainerFormatError(OxymapError):
    """Raised when a binary container cannot be parsed."""
