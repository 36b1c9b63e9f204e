"""Builds and saves a forward-model reflectance lookup table.
"""

# Third-party imports
from django.core.management.base import CommandParser

# Application imports
from oxymap.management.base import PipelineCommand
from oxymap.photon.lut import build_lut, save_lut


class Command(PipelineCommand):
    """Evaluates the configured forward model over an absorption and
    scattering grid at the DC and AC frequencies and writes the table
    in its binary container.
    """

    help = "Builds a reflectance lookup table for LUT inversion."
    name = "Lut"

    def add_arguments(self, parser: CommandParser) -> None:
        """Requires the output path `--out`. The grid bounds, sizes,
        AC frequency and refractive index default to the settings.

        Args:
            parser (`CommandParser`)

        Returns:
            `None`
        """
        parser.add_argument("--out", required=True)
        parser.add_argument("--mua-range", nargs=2, type=float)
        parser.add_argument("--musp-range", nargs=2, type=float)
        parser.add_argument("--grid", nargs=2, type=int)
        parser.add_argument("--fx-ac", type=float)
        parser.add_argument("--n", type=float)

    def handle(self, *args, **options) -> None:
        """Executes the command.

        Args:
            `None`

        Returns:
            `None`
        """
        with self.stage("Building lookup table"):
            lut = build_lut(
                mua_range=options["mua_range"],
                musp_range=options["musp_range"],
                grid_sizes=options["grid"],
                fx_ac=options["fx_ac"],
                n=options["n"],
            )

        with self.stage("Writing lookup table"):
            fpath = save_lut(lut, options["out"], self.store)

        self.emit(
            {
                "stage": "lut",
                "path": str(fpath),
                "shape": list(lut.shape),
                "fx_ac": lut.fx_ac,
                "refractive_index": lut.refractive_index,
                "mua_range": [lut.mua_grid[0], lut.mua_grid[-1]],
                "musp_range": [lut.musp_grid[0], lut.musp_grid[-1]],
            }
        )
