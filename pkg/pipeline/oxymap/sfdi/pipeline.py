"""Conventional SFDI: demodulate, calibrate and invert a pair of phase
triplets into an optical property map.
"""

# Standard library imports
from typing import Optional

# Third-party imports
import numpy as np

# Application imports
from common.logger import LoggerFactory
from oxymap.core.raster import Mask
from oxymap.errors import FrequencyMismatchError, WavelengthMismatchError
from oxymap.photon.lut import ReflectanceLut, lut_invert_map
from oxymap.photon.properties import OpticalPropertyMap
from oxymap.sfdi.calibration import ReferenceMeasurement, calibrate
from oxymap.sfdi.demodulation import PhaseTriplet, demodulate

logger = LoggerFactory.get("OXYMAP.SFDI")


def _check_wavelengths(*wavelengths: Optional[float]) -> Optional[float]:
    """Returns the common wavelength of the given values, ignoring
    unknowns, or raises a `WavelengthMismatchError`.
    """
    known = {float(w) for w in wavelengths if w}
    if len(known) > 1:
        raise WavelengthMismatchError(
            f"Expected a single wavelength, received {sorted(known)} nm."
        )
    return known.pop() if known else None


def sfdi_optical_properties(
    triplet_dc: PhaseTriplet,
    triplet_ac: PhaseTriplet,
    ref: ReferenceMeasurement,
    lut: ReflectanceLut,
    mask: Optional[Mask] = None,
    workers: Optional[int] = None,
) -> OpticalPropertyMap:
    """Recovers per-pixel absorption and reduced scattering from one DC
    and one AC phase triplet at a single wavelength.

    Raises:
        `WavelengthMismatchError` if the triplets and reference were
            acquired at different wavelengths.

        `FrequencyMismatchError` if the triplets' frequencies differ
            from the lookup table's.

    Args:
        triplet_dc (`PhaseTriplet`): Images at the DC frequency.

        triplet_ac (`PhaseTriplet`): Images at the AC frequency.

        ref (`ReferenceMeasurement`): The reference measurement.

        lut (`ReflectanceLut`): The lookup table.

        mask (`Mask`): Pixels to process. Defaults to every pixel.

        workers (`int`): Threads used by the inversion.

    Returns:
        (`OpticalPropertyMap`): The recovered coefficients.
    """
    # Validate acquisition metadata
    wavelength = _check_wavelengths(
        triplet_dc.wavelength_nm, triplet_ac.wavelength_nm, ref.wavelength_nm
    )
    if triplet_dc.fx != lut.fx_dc or not np.isclose(triplet_ac.fx, lut.fx_ac):
        raise FrequencyMismatchError(
            f"The data were acquired at ({triplet_dc.fx}, {triplet_ac.fx}) "
            f"mm^-1 but the lookup table was built for ({lut.fx_dc}, "
            f"{lut.fx_ac}) mm^-1."
        )
    if not np.isclose(ref.fx_ac, lut.fx_ac):
        raise FrequencyMismatchError(
            f"The reference was acquired at {ref.fx_ac} mm^-1 but the "
            f"lookup table was built for {lut.fx_ac} mm^-1."
        )

    # Demodulate
    logger.debug(f"Demodulating triplets at {wavelength} nm.")
    m_dc, _ = demodulate(triplet_dc)
    _, m_ac = demodulate(triplet_ac)

    # Calibrate both bands against the reference
    model = lut.forward_model
    rd_dc = calibrate(m_dc, ref, model, triplet_dc.fx, mask)
    rd_ac = calibrate(m_ac, ref, model, triplet_ac.fx, mask)

    # Invert
    return lut_invert_map(
        rd_dc, rd_ac, lut, mask, wavelength_nm=wavelength, workers=workers
    )
