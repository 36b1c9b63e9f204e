"""Beer-Lambert chromophore fitting and oxygen saturation.
"""

from .basis import DEOXY, OXY, ChromophoreBasis, load_basis  # noqa: F401
from .fitting import (  # noqa: F401
    ConcentrationMap,
    fit_chromophores,
    sto2,
    sto2_from_mua,
)
