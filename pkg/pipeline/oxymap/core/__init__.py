"""Shared raster types, masking and the evaluation metric.
"""

from .raster import (  # noqa: F401
    ImagePlane,
    Mask,
    PlaneStatistics,
    StO2Map,
    apply_mask,
    nmae,
    plane_statistics,
)
