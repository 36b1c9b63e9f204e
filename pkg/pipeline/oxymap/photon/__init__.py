"""Forward reflectance models and lookup-table inversion.
"""

from .forward import (  # noqa: F401
    DiffusionForwardModel,
    ForwardModelFactory,
    IForwardModel,
    diffuse_reflectance,
)
from .lut import (  # noqa: F401
    ReflectanceLut,
    build_lut,
    load_lut,
    lut_invert,
    lut_invert_map,
    save_lut,
)
from .properties import OpticalPropertyMap  # noqa: F401
