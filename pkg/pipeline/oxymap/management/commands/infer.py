"""Predicts oxygen saturation with the fusion generator.
"""

# Standard library imports
from pathlib import Path

# Third-party imports
from django.core.management.base import CommandParser

# Application imports
from oxymap.core.io import read_stack, write_plane
from oxymap.management.base import PipelineCommand
from oxymap.neural.engine import forward_generator, load_weights
from oxymap.phantom.tensor import InputTensor, build_input_tensor
from oxymap.sfdi.calibration import reference_at


class Command(PipelineCommand):
    """Runs the generator on the CPU engine. The input is either an
    encoded three-channel raster `--input` or two single-phase images
    and their references, which are encoded here. The prediction covers
    the top-left area whose sides are multiples of the network's size
    granularity.
    """

    help = "Computes StO2 from single-snapshot images with the generator."
    name = "Infer"

    def add_arguments(self, parser: CommandParser) -> None:
        """Requires the weight container `--weights` and the output
        raster `--out` along with `--input` or the snapshot flags. With
        snapshots exactly two wavelengths are used; the shorter feeds
        the first channel.

        Args:
            parser (`CommandParser`)

        Returns:
            `None`
        """
        self.add_snapshot_arguments(parser)
        parser.add_argument("--input")
        parser.add_argument("--weights", required=True)
        parser.add_argument("--out", required=True)
        parser.add_argument("--threads", type=int)

    def handle(self, *args, **options) -> None:
        """Executes the command.

        Args:
            `None`

        Returns:
            `None`
        """
        with self.stage("Loading weights"):
            weights = load_weights(options["weights"], self.store)

        if options["input"]:
            with self.stage("Loading network input"):
                data, sidecar = read_stack(options["input"], self.store)
                tensor = InputTensor(data, pitch_mm=sidecar.pitch_mm)
            wavelengths = None
        else:
            with self.stage("Loading snapshots and references"):
                images, refs = self.load_snapshot(options)
                if len(images) != 2:
                    raise ValueError(
                        "The generator takes exactly two wavelengths, "
                        f"received {sorted(images)}."
                    )
                short, long = sorted(images)

            with self.stage("Encoding network input"):
                tensor = build_input_tensor(
                    images[short],
                    images[long],
                    reference_at(refs, short),
                    reference_at(refs, long),
                    weights.manifest.size_multiple,
                )
            wavelengths = [short, long]

        with self.stage("Running generator"):
            sto2 = forward_generator(tensor, weights, options["threads"])

        with self.stage("Writing saturation map"):
            fpath = write_plane(sto2.plane, Path(options["out"]), self.store)

        self.emit(
            {
                "stage": "infer",
                "path": str(fpath),
                "shape": list(sto2.shape),
                "wavelengths": wavelengths,
            }
        )
