"""The fusion generator inference engine and its weight container.
"""

from .container import OxwContainer, load_oxw, save_oxw  # noqa: F401
from .engine import (  # noqa: F401
    ActivationOracle,
    GeneratorWeights,
    InferenceBenchmark,
    benchmark_inference,
    forward_generator,
    load_oracle,
    load_weights,
    run_generator,
    save_oracle,
    save_weights,
)
from .manifest import (  # noqa: F401
    GeneratorManifest,
    LayerSpec,
    build_generator_manifest,
)
from .ops import conv2d_3x3, maxpool_2x2, upconv_3x3  # noqa: F401
