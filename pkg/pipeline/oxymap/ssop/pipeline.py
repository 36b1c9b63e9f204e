"""Oxygen saturation from one structured image per wavelength.
"""

# Standard library imports
from typing import Mapping, Optional

# Third-party imports
import numpy as np

# Application imports
from common.logger import LoggerFactory
from oxymap.chromophore.basis import ChromophoreBasis
from oxymap.chromophore.fitting import sto2_from_mua
from oxymap.core.raster import ImagePlane, Mask, StO2Map
from oxymap.errors import DimensionMismatchError, FrequencyMismatchError
from oxymap.photon.lut import ReflectanceLut, lut_invert_map
from oxymap.sfdi.calibration import (
    ReferenceMeasurement,
    calibrate,
    reference_at,
)
from oxymap.ssop.filtering import SsopFilterSpec, ssop_demodulate

logger = LoggerFactory.get("OXYMAP.SSOP")


def ssop_sto2(
    images: Mapping[float, ImagePlane],
    refs: Mapping[float, ReferenceMeasurement],
    lut: ReflectanceLut,
    basis: ChromophoreBasis,
    spec: Optional[SsopFilterSpec] = None,
    mask: Optional[Mask] = None,
    workers: Optional[int] = None,
) -> StO2Map:
    """Demodulates one single-phase structured image per wavelength,
    calibrates both bands, inverts them to absorption and reduces the
    absorption stack to oxygen saturation. The low-confidence border
    of the filter is marked invalid in the result.

    Raises:
        `DimensionMismatchError` if the images are not co-registered.

        `WavelengthMismatchError` if a wavelength lacks a reference.

        `FrequencyMismatchError` if the filter carrier differs from the
            lookup table's AC frequency.

    Args:
        images (`dict` of `float`, `ImagePlane`): Structured images
            keyed by wavelength (e.g., 659 and 851 nm).

        refs (`dict` of `float`, `ReferenceMeasurement`): References
            keyed by wavelength.

        lut (`ReflectanceLut`): The lookup table.

        basis (`ChromophoreBasis`): The extinction basis for the
            image wavelengths.

        spec (`SsopFilterSpec`): The filter settings. Defaults to the
            configured windows at the table's AC frequency.

        mask (`Mask`): Pixels to process. Defaults to every pixel.

        workers (`int`): Worker threads for transforms and inversion.

    Returns:
        (`StO2Map`): The saturation.
    """
    # Validate inputs
    shapes = {img.shape for img in images.values()}
    if len(shapes) != 1:
        raise DimensionMismatchError(
            f"The structured images are not co-registered: {sorted(shapes)}."
        )
    spec = spec or SsopFilterSpec.from_settings(lut.fx_ac)
    if not np.isclose(spec.fx, lut.fx_ac):
        raise FrequencyMismatchError(
            f"The filter carrier {spec.fx} mm^-1 differs from the lookup "
            f"table's AC frequency {lut.fx_ac} mm^-1."
        )

    # Restrict processing to the confident interior
    shape = shapes.pop()
    region = spec.interior_mask(shape)
    if mask is not None:
        region = region & mask

    # Recover absorption at each wavelength
    model = lut.forward_model
    mua_stack = {}
    for wavelength, img in sorted(images.items()):
        ref = reference_at(refs, wavelength)
        logger.debug(f"Demodulating snapshot at {wavelength:g} nm.")
        m_dc, m_ac = ssop_demodulate(img, spec, workers)
        rd_dc = calibrate(m_dc, ref, model, 0.0, region)
        rd_ac = calibrate(m_ac, ref, model, lut.fx_ac, region)
        op_map = lut_invert_map(
            rd_dc, rd_ac, lut, region, wavelength_nm=wavelength, workers=workers
        )
        mua_stack[wavelength] = op_map.mua

    return sto2_from_mua(mua_stack, basis, region, workers)
