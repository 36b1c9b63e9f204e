"""Conventional three-phase SFDI.
"""

from .calibration import (  # noqa: F401
    ReferenceMeasurement,
    calibrate,
    load_reference_bundle,
    reference_at,
    save_reference_bundle,
)
from .demodulation import PHASES_RAD, PhaseTriplet, demodulate  # noqa: F401
from .pipeline import sfdi_optical_properties  # noqa: F401
