"""The fusion generator's architecture, described as an ordered list of
layers so the inference engine and the trainer execute the same graph
without either hard-coding it.

The generator is an encoder-decoder. Each level holds a block of five
3x3 convolutions in which the fifth convolution receives the sum of the
first and fourth outputs. The encoder descends by 2x2 max pooling into
a bottleneck block; the decoder ascends by 3x3 up-convolutions whose
outputs are added to the encoder block output of the same level. A
final 3x3 convolution with tanh produces one channel.
"""

# Standard library imports
from typing import Dict, List, Literal, Optional, Sequence, Tuple

# Third-party imports
from django.conf import settings
from pydantic import BaseModel, Field

# Application imports
from oxymap.errors import ManifestError

INPUT_NODE = "input"

LayerKind = Literal["conv3x3", "upconv3x3", "final_conv3x3"]
Activation = Literal["none", "relu", "leaky_relu", "tanh"]
Stage = Literal["encoder", "bottleneck", "decoder", "output"]


class LayerSpec(BaseModel):
    """One convolution of the generator graph."""

    name: str
    kind: LayerKind
    stage: Stage
    level: int = Field(ge=0)
    in_channels: int = Field(gt=0)
    out_channels: int = Field(gt=0)
    activation: Activation
    slope: float = Field(default=0.0, ge=0)
    """The negative slope of a leaky rectifier.
    """

    inputs: List[str] = Field(min_length=1)
    """Nodes summed to form the layer input, in summation order.
    """

    pool: bool = False
    """Whether the summed input is max pooled before the layer.
    """

    stride: int = Field(default=1, ge=1)
    padding: int = Field(default=1, ge=0)
    output_padding: int = Field(default=0, ge=0)

    @property
    def weight_shape(self) -> Tuple[int, int, int, int]:
        """The kernel layout: `(out, in, 3, 3)` for convolutions and
        `(in, out, 3, 3)` for up-convolutions.
        """
        if self.kind == "upconv3x3":
            return (self.in_channels, self.out_channels, 3, 3)
        return (self.out_channels, self.in_channels, 3, 3)


class GeneratorManifest(BaseModel):
    """The ordered layer graph of a fusion generator."""

    version: int = 1
    in_channels: int = Field(default=3, gt=0)
    out_channels: int = Field(default=1, gt=0)
    channels: List[int] = Field(min_length=1)
    leaky_slope: float = Field(default=0.2, ge=0)
    layers: List[LayerSpec] = Field(min_length=1)

    @property
    def depth(self) -> int:
        """The number of pooling descents."""
        return sum(1 for layer in self.layers if layer.pool)

    @property
    def size_multiple(self) -> int:
        """The granularity of accepted input sizes."""
        return 2**self.depth

    @property
    def layer_names(self) -> List[str]:
        """The layer names in execution order."""
        return [layer.name for layer in self.layers]

    def tensor_shapes(self) -> Dict[str, Tuple[int, ...]]:
        """The expected shape of every weight and bias tensor."""
        shapes = {}
        for layer in self.layers:
            shapes[f"{layer.name}.weight"] = layer.weight_shape
            shapes[f"{layer.name}.bias"] = (layer.out_channels,)
        return shapes

    def last_uses(self) -> Dict[str, int]:
        """Maps every node to the index of the last layer reading it."""
        uses = {}
        for k, layer in enumerate(self.layers):
            for node in layer.inputs:
                uses[node] = k
        return uses

    def validate_graph(self) -> None:
        """Checks the wiring, channel counts, activations and scale of
        the graph.

        Raises:
            `ManifestError` if the graph is inconsistent.
        """
        channels = {INPUT_NODE: self.in_channels}
        scale = {INPUT_NODE: 0}
        for layer in self.layers:
            where = f'Layer "{layer.name}"'
            if layer.name in channels:
                raise ManifestError(f"{where} is defined twice.")

            # Inputs must exist and agree
            for node in layer.inputs:
                if node not in channels:
                    raise ManifestError(
                        f'{where} reads "{node}" before it is computed.'
                    )
            in_channels = {channels[n] for n in layer.inputs}
            in_scales = {scale[n] for n in layer.inputs}
            if in_channels != {layer.in_channels}:
                raise ManifestError(
                    f"{where} expects {layer.in_channels} input channel(s) "
                    f"but its inputs carry {sorted(in_channels)}."
                )
            if len(in_scales) != 1:
                raise ManifestError(
                    f"{where} sums inputs at different resolutions."
                )

            # Activations follow the stage
            expected = {
                "encoder": "relu",
                "bottleneck": "relu",
                "decoder": "leaky_relu",
                "output": "tanh",
            }[layer.stage]
            if layer.activation != expected:
                raise ManifestError(
                    f"{where} in the {layer.stage} uses {layer.activation}; "
                    f"expected {expected}."
                )
            if layer.activation == "leaky_relu" and (
                layer.slope != self.leaky_slope
            ):
                raise ManifestError(
                    f"{where} has slope {layer.slope}, expected "
                    f"{self.leaky_slope}."
                )

            # Track resolution
            level = in_scales.pop() + (1 if layer.pool else 0)
            if layer.kind == "upconv3x3":
                if layer.stride != 2 or layer.output_padding != 1:
                    raise ManifestError(
                        f"{where} must upsample by exactly two."
                    )
                level -= 1
            elif layer.stride != 1:
                raise ManifestError(f"{where} must preserve its size.")
            channels[layer.name] = layer.out_channels
            scale[layer.name] = level

        # The output closes the graph
        last = self.layers[-1]
        if last.kind != "final_conv3x3" or last.out_channels != (
            self.out_channels
        ):
            raise ManifestError(
                "The graph must end in a final convolution producing "
                f"{self.out_channels} channel(s)."
            )
        if scale[last.name] != 0:
            raise ManifestError(
                "The output is not at the input resolution."
            )


def _block(
    prefix: str,
    stage: Stage,
    level: int,
    source: List[str],
    in_channels: int,
    channels: int,
    activation: Activation,
    slope: float,
    pool: bool,
) -> List[LayerSpec]:
    """Builds a five-convolution block whose fifth layer reads the sum
    of the first and fourth outputs.
    """
    names = [f"{prefix}.conv{k}" for k in range(1, 6)]
    wiring = [source, [names[0]], [names[1]], [names[2]], [names[0], names[3]]]
    layers = []
    for k, (name, inputs) in enumerate(zip(names, wiring)):
        layers.append(
            LayerSpec(
                name=name,
                kind="conv3x3",
                stage=stage,
                level=level,
                in_channels=in_channels if k == 0 else channels,
                out_channels=channels,
                activation=activation,
                slope=slope,
                inputs=inputs,
                pool=pool and k == 0,
            )
        )
    return layers


def build_generator_manifest(
    channels: Optional[Sequence[int]] = None,
    in_channels: int = 3,
    out_channels: int = 1,
    leaky_slope: Optional[float] = None,
) -> GeneratorManifest:
    """Creates the canonical fusion generator graph.

    Args:
        channels (`list` of `int`): Channels per level, shallowest
            first. The bottleneck repeats the deepest count. Defaults
            to `GENERATOR_CHANNELS`.

        in_channels (`int`): Input channels. Defaults to 3.

        out_channels (`int`): Output channels. Defaults to 1.

        leaky_slope (`float`): The decoder rectifier slope. Defaults to
            `GENERATOR_LEAKY_SLOPE`.

    Returns:
        (`GeneratorManifest`): The validated manifest.
    """
    channels = list(channels or settings.GENERATOR_CHANNELS)
    slope = (
        settings.GENERATOR_LEAKY_SLOPE if leaky_slope is None else leaky_slope
    )
    layers: List[LayerSpec] = []

    # Encoder
    source, width = [INPUT_NODE], in_channels
    for level, c in enumerate(channels, start=1):
        layers += _block(
            f"enc{level}", "encoder", level, source, width, c, "relu", 0.0,
            pool=level > 1,
        )
        source, width = [f"enc{level}.conv5"], c

    # Bottleneck
    bottom = len(channels) + 1
    layers += _block(
        "bottleneck", "bottleneck", bottom, source, width, width, "relu", 0.0,
        pool=True,
    )
    source = ["bottleneck.conv5"]

    # Decoder
    for level in range(len(channels), 0, -1):
        c = channels[level - 1]
        up = f"dec{level}.up"
        layers.append(
            LayerSpec(
                name=up,
                kind="upconv3x3",
                stage="decoder",
                level=level,
                in_channels=width,
                out_channels=c,
                activation="leaky_relu",
                slope=slope,
                inputs=source,
                stride=2,
                padding=1,
                output_padding=1,
            )
        )
        layers += _block(
            f"dec{level}", "decoder", level, [up, f"enc{level}.conv5"], c, c,
            "leaky_relu", slope, pool=False,
        )
        source, width = [f"dec{level}.conv5"], c

    # Output
    layers.append(
        LayerSpec(
            name="final",
            kind="final_conv3x3",
            stage="output",
            level=1,
            in_channels=width,
            out_channels=out_channels,
            activation="tanh",
            inputs=source,
        )
    )
    manifest = GeneratorManifest(
        in_channels=in_channels,
        out_channels=out_channels,
        channels=channels,
        leaky_slope=slope,
        layers=layers,
    )
    manifest.validate_graph()
    return manifest
