"""Executes an exported fusion generator in double precision.
"""

# Standard library imports
import time
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

# Third-party imports
import numpy as np
from django.conf import settings
from pydantic import BaseModel
from threadpoolctl import threadpool_limits

# Application imports
from common.logger import LoggerFactory
from common.storage import IDataStore
from oxymap.core.raster import StO2Map
from oxymap.errors import DimensionMismatchError, ManifestError
from oxymap.neural.container import OxwContainer, load_oxw, save_oxw
from oxymap.neural.manifest import INPUT_NODE, GeneratorManifest, LayerSpec
from oxymap.neural.ops import activate, conv2d_3x3, maxpool_2x2, upconv_3x3
from oxymap.phantom.tensor import InputTensor

PathLike = Union[Path, str]

OUTPUT_NODE = "output"

logger = LoggerFactory.get("OXYMAP.ENGINE")


@dataclass(frozen=True)
class GeneratorWeights:
    """A manifest and its named weight and bias tensors. Instances are
    read-only and may be shared by concurrent forward passes.
    """

    manifest: GeneratorManifest
    tensors: Dict[str, np.ndarray]
    metadata: Dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.manifest.validate_graph()
        expected = self.manifest.tensor_shapes()
        missing = sorted(set(expected) - set(self.tensors))
        extra = sorted(set(self.tensors) - set(expected))
        if missing or extra:
            raise ManifestError(
                f"The weight table does not match the manifest. Missing: "
                f"{missing or 'none'}. Unexpected: {extra or 'none'}."
            )
        frozen = {}
        for name, shape in expected.items():
            value = np.array(self.tensors[name], dtype=np.float64)
            if value.shape != tuple(shape):
                raise ManifestError(
                    f'Tensor "{name}" has shape {value.shape}; the manifest '
                    f"expects {tuple(shape)}."
                )
            if not np.all(np.isfinite(value)):
                raise ManifestError(
                    f'Tensor "{name}" holds non-finite values.'
                )
            value.setflags(write=False)
            frozen[name] = value
        object.__setattr__(self, "tensors", frozen)

    @classmethod
    def zeros(cls, manifest: GeneratorManifest) -> "GeneratorWeights":
        """Creates all-zero weights and biases for a manifest."""
        return GeneratorWeights(
            manifest,
            {k: np.zeros(s) for k, s in manifest.tensor_shapes().items()},
        )

    @classmethod
    def random(
        cls, manifest: GeneratorManifest, seed: int = 0, std: float = 0.02
    ) -> "GeneratorWeights":
        """Creates Gaussian weights with zero biases."""
        rng = np.random.default_rng(seed)
        tensors = {}
        for name, shape in manifest.tensor_shapes().items():
            if name.endswith(".bias"):
                tensors[name] = np.zeros(shape)
            else:
                tensors[name] = rng.normal(0.0, std, shape)
        return GeneratorWeights(manifest, tensors)

    def layer(self, spec: LayerSpec) -> tuple:
        """Fetches a layer's `(weight, bias)` pair."""
        return (
            self.tensors[f"{spec.name}.weight"],
            self.tensors[f"{spec.name}.bias"],
        )

    def to_container(self) -> OxwContainer:
        """Packs the weights in layer order."""
        tensors = {}
        for spec in self.manifest.layers:
            tensors[f"{spec.name}.weight"], tensors[f"{spec.name}.bias"] = (
                self.layer(spec)
            )
        return OxwContainer(
            role="generator",
            architecture=self.manifest,
            tensors=tensors,
            metadata=self.metadata,
        )

    @classmethod
    def from_container(cls, container: OxwContainer) -> "GeneratorWeights":
        """Unpacks a generator container.

        Raises:
            `ManifestError` if the container holds an oracle.
        """
        if container.role != "generator":
            raise ManifestError(
                f'Expected a generator container, received role "'
                f'{container.role}".'
            )
        return GeneratorWeights(
            container.architecture, container.tensors, container.metadata
        )


@dataclass(frozen=True)
class ActivationOracle:
    """Reference activations for one fixed input: the input itself,
    every layer output after its activation, and the final tanh output.
    """

    manifest: GeneratorManifest
    activations: Dict[str, np.ndarray]

    def __post_init__(self) -> None:
        names = set(self.manifest.layer_names) | {INPUT_NODE, OUTPUT_NODE}
        unknown = sorted(set(self.activations) - names)
        if unknown:
            raise ManifestError(
                f"Oracle activations {unknown} match no manifest layer."
            )
        for required in (INPUT_NODE, OUTPUT_NODE):
            if required not in self.activations:
                raise ManifestError(
                    f'The oracle lacks the "{required}" tensor.'
                )

    @property
    def input(self) -> np.ndarray:
        return self.activations[INPUT_NODE]

    @property
    def output(self) -> np.ndarray:
        return self.activations[OUTPUT_NODE]

    def to_container(self) -> OxwContainer:
        order = [INPUT_NODE, *self.manifest.layer_names, OUTPUT_NODE]
        return OxwContainer(
            role="oracle",
            architecture=self.manifest,
            tensors={
                k: self.activations[k] for k in order if k in self.activations
            },
        )

    @classmethod
    def from_container(cls, container: OxwContainer) -> "ActivationOracle":
        """Unpacks an oracle container.

        Raises:
            `ManifestError` if the container holds generator weights.
        """
        if container.role != "oracle":
            raise ManifestError(
                f'Expected an oracle container, received role "'
                f'{container.role}".'
            )
        return ActivationOracle(container.architecture, container.tensors)


def load_weights(
    fpath: PathLike, store: Optional[IDataStore] = None
) -> GeneratorWeights:
    """Reads generator weights from an OXW file."""
    return GeneratorWeights.from_container(load_oxw(fpath, store))


def save_weights(
    weights: GeneratorWeights,
    fpath: PathLike,
    store: Optional[IDataStore] = None,
) -> Path:
    """Writes generator weights to an OXW file."""
    return save_oxw(weights.to_container(), fpath, store)


def load_oracle(
    fpath: PathLike, store: Optional[IDataStore] = None
) -> ActivationOracle:
    """Reads an activation oracle from an OXW file."""
    return ActivationOracle.from_container(load_oxw(fpath, store))


def save_oracle(
    oracle: ActivationOracle,
    fpath: PathLike,
    store: Optional[IDataStore] = None,
) -> Path:
    """Writes an activation oracle to an OXW file."""
    return save_oxw(oracle.to_container(), fpath, store)


def _apply_layer(
    spec: LayerSpec,
    x: np.ndarray,
    weights: GeneratorWeights,
    executor: Optional[Executor],
) -> np.ndarray:
    weight, bias = weights.layer(spec)
    if spec.kind == "upconv3x3":
        y = upconv_3x3(
            x,
            weight,
            bias,
            stride=spec.stride,
            padding=spec.padding,
            output_padding=spec.output_padding,
            executor=executor,
        )
    else:
        y = conv2d_3x3(
            x, weight, bias, spec.stride, spec.padding, executor=executor
        )
    return activate(y, spec.activation, spec.slope)


def run_generator(
    x: np.ndarray,
    weights: GeneratorWeights,
    threads: Optional[int] = None,
    trace: Optional[Dict[str, np.ndarray]] = None,
) -> np.ndarray:
    """Runs the manifest graph on a `(C, H, W)` input and returns the
    raw tanh output shaped `(out_channels, H, W)`. BLAS is pinned to
    one thread per worker, so output bits do not depend on `threads`.

    Raises:
        `DimensionMismatchError` if the channel count is wrong or a
            spatial size is not a multiple of `2^depth`.

    Args:
        x (`np.ndarray`): The input.

        weights (`GeneratorWeights`): The generator.

        threads (`int`): Worker threads. Defaults to `ENGINE_WORKERS`.

        trace (`dict`): Receives every layer output when given.

    Returns:
        (`np.ndarray`): The output.
    """
    # Validate the input
    manifest = weights.manifest
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] != manifest.in_channels:
        raise DimensionMismatchError(
            f"Expected an input of shape ({manifest.in_channels}, H, W), "
            f"received {x.shape}."
        )
    multiple = manifest.size_multiple
    if x.shape[1] % multiple or x.shape[2] % multiple:
        raise DimensionMismatchError(
            f"A {x.shape[1]}x{x.shape[2]} input is not a multiple of "
            f"{multiple} in each dimension."
        )

    # Execute layers, dropping nodes after their last reader
    threads = threads or settings.ENGINE_WORKERS
    last_uses = manifest.last_uses()
    nodes = {INPUT_NODE: x}
    with threadpool_limits(limits=1):
        executor = ThreadPoolExecutor(threads) if threads > 1 else None
        try:
            for k, spec in enumerate(manifest.layers):
                h = nodes[spec.inputs[0]]
                for name in spec.inputs[1:]:
                    h = h + nodes[name]
                if spec.pool:
                    h = maxpool_2x2(h)
                nodes[spec.name] = _apply_layer(spec, h, weights, executor)
                if trace is not None:
                    trace[spec.name] = nodes[spec.name]
                for name in spec.inputs:
                    if last_uses[name] == k:
                        del nodes[name]
        finally:
            if executor is not None:
                executor.shutdown()
    return nodes[manifest.layers[-1].name]


def forward_generator(
    tensor: Union[InputTensor, np.ndarray],
    weights: GeneratorWeights,
    threads: Optional[int] = None,
) -> StO2Map:
    """Predicts oxygen saturation `(y + 1) / 2` from the generator's
    tanh output `y`.

    Raises:
        `DimensionMismatchError` if the input size is not accepted.
    """
    data = tensor.data if isinstance(tensor, InputTensor) else tensor
    pitch = tensor.pitch_mm if isinstance(tensor, InputTensor) else 1.0
    y = run_generator(data, weights, threads)
    sto2 = np.clip((y[0] + 1.0) / 2.0, 0.0, 1.0)
    return StO2Map.from_array(sto2, pitch_mm=pitch)


class InferenceBenchmark(BaseModel):
    """Timing of repeated forward passes."""

    size: int
    threads: int
    repeats: int
    seconds_per_frame: float
    single_thread_seconds: float
    speedup: float
    frames_per_second: float
    deterministic: bool
    """Whether single- and multi-thread outputs are bit-identical.
    """


def _time_frames(
    x: np.ndarray, weights: GeneratorWeights, threads: int, repeats: int
) -> tuple:
    seconds: List[float] = []
    out = None
    for _ in range(repeats):
        start = time.perf_counter()
        out = run_generator(x, weights, threads)
        seconds.append(time.perf_counter() - start)
    return float(np.median(seconds)), out


def benchmark_inference(
    weights: GeneratorWeights,
    size: int,
    threads: int,
    repeats: int = 3,
    seed: int = 0,
) -> InferenceBenchmark:
    """Times forward passes on a random square input at one thread and
    at `threads` threads.

    Raises:
        `DimensionMismatchError` if `size` is not accepted.

    Args:
        weights (`GeneratorWeights`): The generator.

        size (`int`): The input side.

        threads (`int`): The worker count to compare against one.

        repeats (`int`): Timed passes per setting; the median is kept.

        seed (`int`): Seeds the input.

    Returns:
        (`InferenceBenchmark`): The report.
    """
    multiple = weights.manifest.size_multiple
    if size <= 0 or size % multiple:
        raise DimensionMismatchError(
            f"A benchmark size of {size} is not a positive multiple of "
            f"{multiple}."
        )
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, (weights.manifest.in_channels, size, size))

    logger.info(f"Timing {repeats} frame(s) of {size}x{size} at 1 thread.")
    single, out_single = _time_frames(x, weights, 1, repeats)
    if threads > 1:
        logger.info(f"Timing {repeats} frame(s) at {threads} threads.")
        multi, out_multi = _time_frames(x, weights, threads, repeats)
    else:
        multi, out_multi = single, out_single
    return InferenceBenchmark(
        size=size,
        threads=threads,
        repeats=repeats,
        seconds_per_frame=multi,
        single_thread_seconds=single,
        speedup=single / multi if multi > 0 else 1.0,
        frames_per_second=1.0 / multi if multi > 0 else float("inf"),
        deterministic=bool(np.array_equal(out_single, out_multi)),
    )
