"""Reduces absorption maps at several wavelengths to oxygen saturation.
"""

# Standard library imports
from pathlib import Path

# Third-party imports
from django.core.management.base import CommandParser

# Application imports
from oxymap.chromophore.basis import load_basis
from oxymap.chromophore.fitting import fit_chromophores, sto2
from oxymap.core.io import read_mask, read_plane, write_plane
from oxymap.management.base import PipelineCommand, parse_keyed


class Command(PipelineCommand):
    """Fits oxy- and deoxyhemoglobin to an absorption stack by
    non-negative least squares and writes the saturation map, plus the
    concentration maps when `--concentrations` is given.
    """

    help = "Computes StO2 from absorption maps by chromophore fitting."
    name = "Sto2"

    def add_arguments(self, parser: CommandParser) -> None:
        """Requires at least two `--mua WAVELENGTH:PATH` maps and the
        output raster `--out`.

        Args:
            parser (`CommandParser`)

        Returns:
            `None`
        """
        parser.add_argument("--mua", action="append", required=True)
        parser.add_argument("--out", required=True)
        parser.add_argument("--basis")
        parser.add_argument("--mask")
        parser.add_argument("--concentrations")
        parser.add_argument("--workers", type=int)

    def handle(self, *args, **options) -> None:
        """Executes the command.

        Args:
            `None`

        Returns:
            `None`
        """
        paths = parse_keyed(options["mua"], "--mua")

        with self.stage("Loading absorption maps and basis"):
            mua_stack = {
                w: read_plane(p, self.store) for w, p in paths.items()
            }
            basis = load_basis(options["basis"], sorted(paths), self.store)
            mask = (
                read_mask(options["mask"], self.store)
                if options["mask"]
                else None
            )

        with self.stage("Fitting chromophores"):
            conc = fit_chromophores(
                mua_stack, basis, mask, options["workers"]
            )
            result = sto2(conc)

        with self.stage("Writing saturation map"):
            fpath = write_plane(result.plane, Path(options["out"]), self.store)
            summary = {
                "stage": "sto2",
                "path": str(fpath),
                "wavelengths": sorted(paths),
                "valid_pixels": int(result.plane.valid.sum()),
            }
            if options["concentrations"]:
                out_dir = Path(options["concentrations"])
                for name in basis.names:
                    write_plane(
                        conc.channel(name),
                        out_dir / f"{name.lower()}.f32",
                        self.store,
                    )
                summary["concentrations"] = str(self.resolve(out_dir))

        self.emit(summary)
