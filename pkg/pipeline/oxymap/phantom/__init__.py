"""Synthetic scenes, structured-illumination rendering and datasets.
"""

from .dataset import (  # noqa: F401
    DatasetSample,
    load_patch,
    make_dataset,
    make_sample,
    read_manifest,
)
from .occlusion import (  # noqa: F401
    OcclusionProtocol,
    render_occlusion_sequence,
)
from .render import (  # noqa: F401
    make_reference,
    render_optical,
    render_sfdi_stack,
    render_structured,
    render_triplet,
)
from .scene import (  # noqa: F401
    PhantomConfig,
    Scene,
    generate_scene,
    load_phantom_config,
)
from .tensor import (  # noqa: F401
    InputTensor,
    build_input_tensor,
    checkerboard_parity,
)
