"""Three-phase demodulation of structured-illumination images.
"""

# Standard library imports
from dataclasses import dataclass
from typing import Optional, Tuple

# Third-party imports
import numpy as np

# Application imports
from oxymap.core.raster import ImagePlane
from oxymap.errors import DimensionMismatchError

PHASES_RAD = (0.0, 2.0 * np.pi / 3.0, 4.0 * np.pi / 3.0)
"""The illumination phase offsets of the three images in a triplet.
"""


@dataclass(frozen=True)
class PhaseTriplet:
    """Three images of the same field under sinusoidal illumination of
    one spatial frequency, shifted by 0, 2pi/3 and 4pi/3.
    """

    i0: ImagePlane
    i1: ImagePlane
    i2: ImagePlane
    fx: float
    """The illumination spatial frequency in mm^-1.
    """

    wavelength_nm: Optional[float] = None

    def __post_init__(self) -> None:
        if not (self.i0.shape == self.i1.shape == self.i2.shape):
            raise DimensionMismatchError(
                "The three phase images must share dimensions. Received "
                f"{self.i0.shape}, {self.i1.shape} and {self.i2.shape}."
            )
        if self.fx < 0:
            raise ValueError(
                "Expected a non-negative spatial frequency, received "
                f"{self.fx}."
            )

    @property
    def shape(self) -> tuple:
        """The `(height, width)` pair."""
        return self.i0.shape


def demodulate(triplet: PhaseTriplet) -> Tuple[ImagePlane, ImagePlane]:
    """Recovers the unmodulated (DC) and modulation-amplitude (AC)
    magnitudes of a phase triplet pixel by pixel:

        m_ac = (sqrt(2) / 3) sqrt((i0 - i1)^2 + (i1 - i2)^2 + (i2 - i0)^2)
        m_dc = (i0 + i1 + i2) / 3

    Args:
        triplet (`PhaseTriplet`): The images.

    Returns:
        ((`ImagePlane`, `ImagePlane`)): The DC and AC magnitudes.
    """
    a, b, c = triplet.i0.data, triplet.i1.data, triplet.i2.data
    m_dc = (a + b + c) / 3.0
    spread = (a - b) ** 2 + (b - c) ** 2 + (c - a) ** 2
    m_ac = (np.sqrt(2.0) / 3.0) * np.sqrt(spread)
    suffix = f"@{triplet.wavelength_nm:g}" if triplet.wavelength_nm else ""
    return (
        triplet.i0.with_data(m_dc, semantic=f"m_dc{suffix}"),
        triplet.i0.with_data(m_ac, semantic=f"m_ac{suffix}"),
    )
