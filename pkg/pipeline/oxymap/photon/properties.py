"""Per-pixel optical property maps.
"""

# Standard library imports
from dataclasses import dataclass
from typing import Optional

# Third-party imports
import numpy as np

# Application imports
from oxymap.core.raster import ImagePlane, Mask
from oxymap.errors import DimensionMismatchError


@dataclass(frozen=True)
class OpticalPropertyMap:
    """Absorption and reduced scattering coefficients (mm^-1) recovered
    at one wavelength. Pixels that could not be recovered are invalid
    in both planes.
    """

    mua: ImagePlane
    """The absorption coefficient map.
    """

    musp: ImagePlane
    """The reduced scattering coefficient map.
    """

    wavelength_nm: Optional[float] = None
    """The illumination wavelength, when known.
    """

    out_of_gamut: int = 0
    """The number of evaluated pixels whose reflectance pair could not
    be reached by the lookup table.
    """

    evaluated: int = 0
    """The number of pixels submitted for inversion.
    """

    def __post_init__(self) -> None:
        if self.mua.shape != self.musp.shape:
            raise DimensionMismatchError(
                "Absorption and scattering maps must share dimensions. "
                f"Received {self.mua.shape} and {self.musp.shape}."
            )
        if self.wavelength_nm is not None and not self.wavelength_nm > 0:
            raise ValueError(
                "Expected a positive wavelength, received "
                f"{self.wavelength_nm}."
            )
        planes = (("absorption", self.mua), ("scattering", self.musp))
        for name, plane in planes:
            values = plane.data[plane.valid]
            if values.size and values.min() <= 0:
                raise ValueError(
                    f"Valid {name} coefficients must be positive."
                )

    @property
    def shape(self) -> tuple:
        """The `(height, width)` pair."""
        return self.mua.shape

    @property
    def valid(self) -> Mask:
        """The pixels holding both coefficients."""
        return Mask(bits=self.mua.valid & self.musp.valid)

    @property
    def out_of_gamut_fraction(self) -> float:
        """The share of evaluated pixels that fell outside the table."""
        if self.evaluated == 0:
            return 0.0
        return self.out_of_gamut / self.evaluated

    @classmethod
    def constant(
        cls,
        mua: float,
        musp: float,
        height: int,
        width: int,
        pitch_mm: float = 1.0,
        wavelength_nm: Optional[float] = None,
    ) -> "OpticalPropertyMap":
        """Creates a homogeneous map."""
        return OpticalPropertyMap(
            mua=ImagePlane(np.full((height, width), mua), pitch_mm, "mua"),
            musp=ImagePlane(np.full((height, width), musp), pitch_mm, "musp"),
            wavelength_nm=wavelength_nm,
            evaluated=height * width,
        )
