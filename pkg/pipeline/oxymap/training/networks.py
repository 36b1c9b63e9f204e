"""Torch modules for the fusion generator and the patch discriminator.
"""

# Standard library imports
from typing import Dict, Optional

# Third-party imports
import torch
import torch.nn.functional as F
from torch import nn
from torch.nn.utils import parametrize
from torch.nn.utils.parametrizations import spectral_norm

# Application imports
from oxymap.neural.manifest import INPUT_NODE, GeneratorManifest, LayerSpec


def init_weights(module: nn.Module, std: float = 0.02) -> None:
    """Draws every convolution weight from N(0, std) and zeroes biases.
    Spectral-normalized layers are initialized through their original
    (unnormalized) weight.
    """
    for m in module.modules():
        if not isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            continue
        with torch.no_grad():
            if parametrize.is_parametrized(m, "weight"):
                m.parametrizations.weight.original.normal_(0.0, std)
            else:
                m.weight.normal_(0.0, std)
            if m.bias is not None:
                m.bias.zero_()


def _key(name: str) -> str:
    return name.replace(".", "_")


def _make_layer(
    spec: LayerSpec, init_std: Optional[float], use_sn: bool
) -> nn.Module:
    if spec.kind == "upconv3x3":
        layer = nn.ConvTranspose2d(
            spec.in_channels,
            spec.out_channels,
            3,
            stride=spec.stride,
            padding=spec.padding,
            output_padding=spec.output_padding,
        )
    else:
        layer = nn.Conv2d(
            spec.in_channels,
            spec.out_channels,
            3,
            stride=spec.stride,
            padding=spec.padding,
        )
    if init_std is not None:
        init_weights(layer, init_std)
    return spectral_norm(layer) if use_sn else layer


class FusionGenerator(nn.Module):
    """Executes a `GeneratorManifest` graph."""

    def __init__(
        self,
        manifest: GeneratorManifest,
        init_std: Optional[float] = 0.02,
        use_spectral_norm: bool = True,
    ) -> None:
        """Initializes a new instance of a `FusionGenerator`.

        Args:
            manifest (`GeneratorManifest`): The layer graph.

            init_std (`float`): The weight initialization spread. Layers
                keep the torch defaults when `None`.

            use_spectral_norm (`bool`): Whether every convolution is
                spectral normalized.

        Returns:
            `None`
        """
        super().__init__()
        manifest.validate_graph()
        self.manifest = manifest
        self.layers = nn.ModuleDict(
            {
                _key(spec.name): _make_layer(spec, init_std, use_spectral_norm)
                for spec in manifest.layers
            }
        )

    def module_for(self, spec: LayerSpec) -> nn.Module:
        return self.layers[_key(spec.name)]

    def forward(
        self,
        x: torch.Tensor,
        trace: Optional[Dict[str, torch.Tensor]] = None,
    ) -> torch.Tensor:
        nodes = {INPUT_NODE: x}
        for spec in self.manifest.layers:
            h = nodes[spec.inputs[0]]
            for name in spec.inputs[1:]:
                h = h + nodes[name]
            if spec.pool:
                h = F.max_pool2d(h, 2)
            h = self.module_for(spec)(h)
            if spec.activation == "relu":
                h = F.relu(h)
            elif spec.activation == "leaky_relu":
                h = F.leaky_relu(h, spec.slope)
            elif spec.activation == "tanh":
                h = torch.tanh(h)
            nodes[spec.name] = h
            if trace is not None:
                trace[spec.name] = h
        return nodes[self.manifest.layers[-1].name]


class PatchDiscriminator(nn.Module):
    """Scores overlapping 70x70 patches of an (input, saturation) pair.
    Three strided 4x4 convolutions descend, two unit-stride 4x4
    convolutions follow, every convolution is spectral normalized and
    the output is a grid of logits.
    """

    def __init__(
        self,
        in_channels: int = 4,
        width: int = 64,
        slope: float = 0.2,
        init_std: Optional[float] = 0.02,
        use_spectral_norm: bool = True,
    ) -> None:
        super().__init__()
        widths = [width, width * 2, width * 4, width * 8]
        strides = [2, 2, 2, 1]
        layers, c_in = [], in_channels
        for c_out, stride in zip(widths, strides):
            layers += [
                self._conv(c_in, c_out, stride, init_std, use_spectral_norm),
                nn.LeakyReLU(slope),
            ]
            c_in = c_out
        layers.append(self._conv(c_in, 1, 1, init_std, use_spectral_norm))
        self.net = nn.Sequential(*layers)

    @staticmethod
    def _conv(
        c_in: int,
        c_out: int,
        stride: int,
        init_std: Optional[float],
        use_sn: bool,
    ) -> nn.Module:
        conv = nn.Conv2d(c_in, c_out, 4, stride=stride, padding=1)
        if init_std is not None:
            init_weights(conv, init_std)
        return spectral_norm(conv) if use_sn else conv

    def forward(self, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        return self.net(torch.cat([x, y], dim=1))
