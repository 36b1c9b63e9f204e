"""Maps oxygen saturation from one structured image per wavelength.
"""

# Standard library imports
from pathlib import Path

# Third-party imports
from django.core.management.base import CommandParser

# Application imports
from oxymap.chromophore.basis import load_basis
from oxymap.core.io import read_mask, write_plane
from oxymap.management.base import PipelineCommand
from oxymap.photon.lut import load_lut
from oxymap.ssop.filtering import SsopFilterSpec
from oxymap.ssop.pipeline import ssop_sto2


class Command(PipelineCommand):
    """Runs the Fourier-filtering single-snapshot method on two
    single-phase images and writes the saturation map. The filter's
    low-confidence border is stored as invalid pixels.
    """

    help = "Computes StO2 from single-snapshot structured images."
    name = "Ssop"

    def add_arguments(self, parser: CommandParser) -> None:
        """Requires the lookup table `--lut` and output raster `--out`
        along with the snapshot flags. The filter windows `--lp` and
        `--hpw` default to the settings.

        Args:
            parser (`CommandParser`)

        Returns:
            `None`
        """
        self.add_snapshot_arguments(parser)
        parser.add_argument("--lut", required=True)
        parser.add_argument("--out", required=True)
        parser.add_argument("--basis")
        parser.add_argument("--mask")
        parser.add_argument(
            "--lp", "--lowpass-cutoff", dest="lowpass_cutoff", type=float
        )
        parser.add_argument(
            "--hpw",
            "--highpass-halfwidth",
            dest="highpass_halfwidth",
            type=float,
        )
        parser.add_argument("--border", type=int)
        parser.add_argument("--workers", type=int)

    def handle(self, *args, **options) -> None:
        """Executes the command.

        Args:
            `None`

        Returns:
            `None`
        """
        # Load inputs
        with self.stage("Loading snapshots, references and lookup table"):
            images, refs = self.load_snapshot(options)
            lut = load_lut(options["lut"], self.store)
            basis = load_basis(options["basis"], sorted(images), self.store)
            mask = (
                read_mask(options["mask"], self.store)
                if options["mask"]
                else None
            )
            spec = SsopFilterSpec.from_settings(
                lut.fx_ac,
                lowpass_cutoff=options["lowpass_cutoff"],
                highpass_halfwidth=options["highpass_halfwidth"],
                border_px=options["border"],
            )

        # Map saturation
        with self.stage("Filtering and inverting snapshots"):
            sto2 = ssop_sto2(
                images, refs, lut, basis, spec, mask, options["workers"]
            )

        with self.stage("Writing saturation map"):
            fpath = write_plane(sto2.plane, Path(options["out"]), self.store)

        self.emit(
            {
                "stage": "ssop",
                "path": str(fpath),
                "shape": list(sto2.shape),
                "wavelengths": sorted(images),
                "valid_pixels": int(sto2.plane.valid.sum()),
            }
        )
